"""Ternary label masks, score maps and their PNG codec.

Canonical on-disk form is a single-channel 8-bit PNG with codes
0 (background), 128 (salient) and 255 (camouflaged). Red/green overlays
(pure red = salient, pure green = camouflaged) are accepted on input.
"""
from __future__ import annotations

import enum
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


class AttributeLabel(enum.IntEnum):
    BACKGROUND = 0
    SALIENT = 1
    CAMOUFLAGED = 2

    @property
    def short(self) -> str:
        return "BSC"[self.value]


LABELS = tuple(AttributeLabel)

GRAY_CODES = np.array([0, 128, 255], dtype=np.uint8)
RGB_CODES = np.array([[0, 0, 0], [255, 0, 0], [0, 255, 0]], dtype=np.uint8)


class ShapeMismatchError(ValueError):
    def __init__(self, what: str, shape_a, shape_b):
        self.shape_a = tuple(shape_a)
        self.shape_b = tuple(shape_b)
        super().__init__(f"{what}: shape {self.shape_a} does not match {self.shape_b}")


class MaskDecodeError(ValueError):
    """Raised for malformed images or, in strict mode, non-canonical pixels."""

    def __init__(self, message: str, x: int | None = None, y: int | None = None, value=None):
        self.x, self.y, self.value = x, y, value
        super().__init__(message)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    if a.flags.writeable:
        a = a.copy()
        a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TernaryMask:
    """Per-pixel attribute labels, shape (height, width), dtype uint8."""

    labels: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.labels)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"labels must be a non-empty 2-D array, got shape {a.shape}")
        if a.dtype.kind not in "iub":
            raise ValueError(f"labels must be integer, got {a.dtype}")
        if a.size and (a.min() < 0 or a.max() > 2):
            raise ValueError("labels must lie in {0, 1, 2}")
        object.__setattr__(self, "labels", _frozen(a.astype(np.uint8, copy=False)))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def count(self, attr: AttributeLabel) -> int:
        return int(np.count_nonzero(self.labels == int(attr)))

    def __eq__(self, other):
        if not isinstance(other, TernaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.labels, other.labels))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ScoreMap:
    """Soft prediction in [0, 1], shape (height, width), float64."""

    scores: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.scores, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"scores must be a non-empty 2-D array, got shape {a.shape}")
        if not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("scores must be finite and within [0, 1]")
        object.__setattr__(self, "scores", _frozen(a))

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape


@dataclass(frozen=True, eq=False)
class TernaryProbMap:
    """Per-pixel probabilities over (B, S, C), shape (height, width, 3)."""

    probs: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.probs, dtype=np.float64)
        if a.ndim != 3 or a.shape[2] != 3 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"probs must have shape (H, W, 3), got {a.shape}")
        if not np.all(np.isfinite(a)) or a.min() < 0.0:
            raise ValueError("probs must be finite and nonnegative")
        if np.max(np.abs(a.sum(axis=2) - 1.0)) > 1e-9:
            raise ValueError("each probability vector must sum to 1 within 1e-9")
        object.__setattr__(self, "probs", _frozen(a))

    @property
    def height(self) -> int:
        return self.probs.shape[0]

    @property
    def width(self) -> int:
        return self.probs.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape[:2]


# -- codec ------------------------------------------------------------------

def _open_image(data: bytes) -> Image.Image:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:  # PIL raises a zoo of types for corrupt input
        raise MaskDecodeError(f"malformed image: {exc}") from exc
    if img.mode == "P":
        img = img.convert("RGBA" if "transparency" in img.info else "RGB")
    if img.mode == "RGBA":
        alpha = np.asarray(img)[..., 3]
        if np.any(alpha != 255):
            raise MaskDecodeError("malformed image: RGBA masks must be fully opaque")
        img = img.convert("RGB")
    if img.mode not in ("L", "RGB"):
        raise MaskDecodeError(f"malformed image: unsupported mode {img.mode!r} (need 8-bit L or RGB)")
    return img


def _first_bad(bad: np.ndarray) -> tuple[int, int]:
    y, x = np.argwhere(bad)[0]
    return int(x), int(y)


def _nearest_label(values: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Index of the nearest code per row of ``values``; argmin keeps ties low."""
    diff = values[:, None, :].astype(np.int32) - codes[None, :, :].astype(np.int32)
    return np.argmin(np.einsum("nkc,nkc->nk", diff, diff), axis=1).astype(np.uint8)


_GRAY_LUT = _nearest_label(np.arange(256)[:, None], GRAY_CODES[:, None])
_RGB_KEYS = (RGB_CODES.astype(np.uint32) << np.array([16, 8, 0], dtype=np.uint32)).sum(axis=1)


def decode_mask(data: bytes, mode: str = "strict") -> TernaryMask:
    """Decode PNG bytes into a TernaryMask.

    In strict mode any pixel that is not one of the canonical codes/colours
    raises MaskDecodeError carrying the first offending (x, y) and value.
    Lenient mode snaps every pixel to the nearest canonical code, ties going
    to the lower label.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"mode must be 'strict' or 'lenient', got {mode!r}")
    img = _open_image(data)
    arr = np.asarray(img)
    if arr.ndim == 2:
        labels = np.take(_GRAY_LUT, arr)
        canonical = (arr == GRAY_CODES[0]) | (arr == GRAY_CODES[1]) | (arr == GRAY_CODES[2])
        bad = ~canonical
    else:
        key = (arr[..., 0].astype(np.uint32) << 16) | (arr[..., 1].astype(np.uint32) << 8) | arr[..., 2]
        labels = np.zeros(key.shape, dtype=np.uint8)
        bad = np.ones(key.shape, dtype=bool)
        for lbl, k in enumerate(_RGB_KEYS):
            hit = key == k
            labels[hit] = lbl
            bad &= ~hit
        if mode == "lenient" and bad.any():
            labels[bad] = _nearest_label(arr[bad], RGB_CODES)
    if mode == "strict" and bad.any():
        x, y = _first_bad(bad)
        value = arr[y, x]
        value = int(value) if arr.ndim == 2 else tuple(int(v) for v in value)
        raise MaskDecodeError(
            f"non-canonical pixel value {value} at (x={x}, y={y}); "
            f"{int(bad.sum())} offending pixel(s) in total",
            x=x, y=y, value=value,
        )
    return TernaryMask(labels)


def encode_mask(mask: TernaryMask) -> bytes:
    """Canonical single-channel PNG bytes for ``mask``."""
    buf = io.BytesIO()
    Image.fromarray(GRAY_CODES[mask.labels], mode="L").save(buf, format="PNG")
    return buf.getvalue()


def decode_score_map(data: bytes) -> ScoreMap:
    """8-bit grayscale PNG -> scores in [0, 1] (value / 255)."""
    img = _open_image(data)
    if img.mode != "L":
        img = img.convert("L")
    return ScoreMap(np.asarray(img, dtype=np.float64) / 255.0)


def encode_score_map(score: ScoreMap) -> bytes:
    buf = io.BytesIO()
    q = np.rint(score.scores * 255.0).astype(np.uint8)
    Image.fromarray(q, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def read_mask(path: str | Path, mode: str = "strict") -> TernaryMask:
    return decode_mask(Path(path).read_bytes(), mode=mode)


def write_mask(path: str | Path, mask: TernaryMask) -> None:
    Path(path).write_bytes(encode_mask(mask))


def read_score_map(path: str | Path) -> ScoreMap:
    return decode_score_map(Path(path).read_bytes())


def write_score_map(path: str | Path, score: ScoreMap) -> None:
    Path(path).write_bytes(encode_score_map(score))


# -- label operations ---------------------------------------------------------

def extract_binary(mask: TernaryMask, attr: AttributeLabel) -> np.ndarray:
    """Boolean map of pixels labelled ``attr`` (Salient or Camouflaged)."""
    attr = AttributeLabel(attr)
    if attr is AttributeLabel.BACKGROUND:
        raise ValueError("extract_binary needs Salient or Camouflaged, not Background")
    return mask.labels == int(attr)


def argmax_labels(p: TernaryProbMap) -> TernaryMask:
    # np.argmax returns the first maximum, which is the B < S < C tie-break
    return TernaryMask(np.argmax(p.probs, axis=2).astype(np.uint8))


def merge_binary_predictions(sod: ScoreMap, cod: ScoreMap, threshold: float = 0.5) -> TernaryMask:
    """Fuse a saliency map and a camouflage map into one ternary mask.

    A pixel takes the attribute whose score clears ``threshold``; when both
    do, the higher score wins and an exact tie goes to Salient.
    """
    if sod.shape != cod.shape:
        raise ShapeMismatchError("merge_binary_predictions", sod.shape, cod.shape)
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    s, c = sod.scores, cod.scores
    s_on = s >= threshold
    c_on = c >= threshold
    out = np.zeros(s.shape, dtype=np.uint8)
    out[s_on & ~c_on] = AttributeLabel.SALIENT
    out[c_on & ~s_on] = AttributeLabel.CAMOUFLAGED
    both = s_on & c_on
    out[both & (s >= c)] = AttributeLabel.SALIENT
    out[both & (c > s)] = AttributeLabel.CAMOUFLAGED
    return TernaryMask(out)
