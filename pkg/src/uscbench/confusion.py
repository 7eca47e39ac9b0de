"""Exact 3x3 pixel confusion counts between GT and predicted ternary masks.

``counts[g, p]`` is the number of pixels with GT label ``g`` predicted as
``p``, both indexed B=0, S=1, C=2. So ``counts[C, S]`` is P_CS (camouflaged
predicted as salient) and ``counts[S, C]`` is P_SC.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable

import numpy as np

from . import _kernels
from .masks import AttributeLabel, ShapeMismatchError, TernaryMask

_INT64_MAX = np.iinfo(np.int64).max


@dataclass(frozen=True, eq=False)
class ConfusionMatrix3:
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (3, 3):
            raise ValueError(f"confusion counts must be 3x3, got {c.shape}")
        if c.dtype.kind not in "iu" or c.min() < 0:
            raise ValueError("confusion counts must be nonnegative integers")
        c = c.astype(np.int64, copy=True)
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)

    @classmethod
    def zero(cls) -> "ConfusionMatrix3":
        return cls(np.zeros((3, 3), dtype=np.int64))

    def __getitem__(self, key: tuple[AttributeLabel, AttributeLabel]) -> int:
        g, p = key
        return int(self.counts[int(g), int(p)])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_sum(self, attr: AttributeLabel) -> int:
        """GT pixel count of ``attr``."""
        return int(self.counts[int(attr)].sum())

    def col_sum(self, attr: AttributeLabel) -> int:
        """Predicted pixel count of ``attr``."""
        return int(self.counts[:, int(attr)].sum())

    def __eq__(self, other):
        if not isinstance(other, ConfusionMatrix3):
            return NotImplemented
        return bool(np.array_equal(self.counts, other.counts))

    __hash__ = None

    def __add__(self, other: "ConfusionMatrix3") -> "ConfusionMatrix3":
        return merge(self, other)

    def to_nested(self) -> list[list[int]]:
        return [[int(v) for v in row] for row in self.counts]


def accumulate(gt: TernaryMask, pred: TernaryMask) -> ConfusionMatrix3:
    if gt.shape != pred.shape:
        raise ShapeMismatchError("accumulate", gt.shape, pred.shape)
    counts = _kernels.confusion_counts(gt.labels.ravel(), pred.labels.ravel())
    return ConfusionMatrix3(counts)


def merge(a: ConfusionMatrix3, b: ConfusionMatrix3) -> ConfusionMatrix3:
    """Component-wise sum; overflow of the int64 counters is an error."""
    if np.any(a.counts > _INT64_MAX - b.counts):
        raise OverflowError("confusion count overflow in merge")
    return ConfusionMatrix3(a.counts + b.counts)


def merge_all(matrices: Iterable[ConfusionMatrix3]) -> ConfusionMatrix3:
    return reduce(merge, matrices, ConfusionMatrix3.zero())
