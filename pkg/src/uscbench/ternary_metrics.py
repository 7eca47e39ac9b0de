"""CSCS, per-class IoU, mIoU and mAcc from a 3x3 confusion matrix."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

from .confusion import ConfusionMatrix3
from .masks import AttributeLabel

B, S, C = AttributeLabel.BACKGROUND, AttributeLabel.SALIENT, AttributeLabel.CAMOUFLAGED


@dataclass(frozen=True)
class TernaryScores:
    cscs: float
    iou_s: float | None
    iou_c: float | None
    iou_b: float | None
    miou: float
    macc: float

    def as_dict(self) -> dict:
        return asdict(self)


def _ratio(num: int, den: int) -> float:
    # a never-predicted attribute cannot absorb confusion
    return num / den if den else 0.0


def cscs(m: ConfusionMatrix3) -> float:
    """Camouflage-saliency confusion score, in [0, 1], lower is better.

    Half the sum of two fractions: pixels predicted salient that are really
    camouflaged, and pixels predicted camouflaged that are really salient.
    """
    into_s = _ratio(m[C, S], m.col_sum(S))
    into_c = _ratio(m[S, C], m.col_sum(C))
    return 0.5 * (into_s + into_c)


def class_iou(m: ConfusionMatrix3, attr: AttributeLabel) -> float | None:
    """Intersection over union for one class; None when the union is empty."""
    inter = m[attr, attr]
    union = m.row_sum(attr) + m.col_sum(attr) - inter
    if union == 0:
        return None
    return inter / union


def miou_macc(m: ConfusionMatrix3, include_background: bool = True) -> tuple[float, float]:
    """(mIoU, mAcc). Classes with an empty union (IoU) or no GT pixels (Acc)
    are left out of the respective mean."""
    if m.total == 0:
        raise ValueError("empty confusion matrix: no pixels accumulated")
    classes = AttributeLabel if include_background else (S, C)
    ious = [v for v in (class_iou(m, a) for a in classes) if v is not None]
    accs = [m[a, a] / m.row_sum(a) for a in classes if m.row_sum(a)]
    if not ious:
        raise ValueError("no class with a non-empty union among the selected classes")
    miou = math.fsum(ious) / len(ious)
    macc = math.fsum(accs) / len(accs) if accs else 0.0
    return miou, macc


def ternary_scores(m: ConfusionMatrix3, include_background: bool = True) -> TernaryScores:
    miou, macc = miou_macc(m, include_background)
    return TernaryScores(
        cscs=cscs(m),
        iou_s=class_iou(m, S),
        iou_c=class_iou(m, C),
        iou_b=class_iou(m, B),
        miou=miou,
        macc=macc,
    )


def _mean_defined(values) -> float | None:
    vals = [v for v in values if v is not None]
    return math.fsum(vals) / len(vals) if vals else None


def image_averaged_scores(per_image: Sequence[ConfusionMatrix3],
                          include_background: bool = True) -> TernaryScores:
    """Average per-image scores instead of scoring the pooled matrix.

    Undefined per-image IoUs are skipped; sums are compensated and taken in
    the order given.
    """
    if not per_image:
        raise ValueError("no images to average")
    scores = [ternary_scores(m, include_background) for m in per_image]
    n = len(scores)
    return TernaryScores(
        cscs=math.fsum(s.cscs for s in scores) / n,
        iou_s=_mean_defined(s.iou_s for s in scores),
        iou_c=_mean_defined(s.iou_c for s in scores),
        iou_b=_mean_defined(s.iou_b for s in scores),
        miou=math.fsum(s.miou for s in scores) / n,
        macc=math.fsum(s.macc for s in scores) / n,
    )
