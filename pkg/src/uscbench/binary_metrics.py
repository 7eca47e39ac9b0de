"""Binary foreground-map metrics used by SOD/COD benchmarks.

MAE, threshold-swept precision/recall (mean and max F-measure, ROC AUC),
weighted F-measure, S-measure and mean E-measure. Predictions are scores in
[0, 1]; ground truth is a boolean map.

Thresholds are ``k / levels`` for ``k = 1..levels`` and a pixel counts as
positive when ``score >= threshold``. Threshold 0 is deliberately absent so
that a crisp 0/1 prediction binarizes to itself at every level.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np
from scipy import ndimage

from . import _kernels
from .masks import ScoreMap, ShapeMismatchError

DEFAULT_LEVELS = 256
F_BETA2 = 0.3
WF_BETA2 = 1.0


def _prepare(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    x = pred.scores if isinstance(pred, ScoreMap) else ScoreMap(pred).scores
    g = np.asarray(gt)
    if g.dtype != np.bool_:
        g = g > 0.5
    if x.shape != g.shape:
        raise ShapeMismatchError("prediction vs ground truth", x.shape, g.shape)
    return x, g


def sweep_thresholds(levels: int = DEFAULT_LEVELS) -> np.ndarray:
    if levels < 2:
        raise ValueError(f"levels must be >= 2, got {levels}")
    return np.arange(1, levels + 1, dtype=np.float64) / levels


@dataclass(frozen=True, eq=False)
class PRCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    # context for the empty-GT convention
    n_positive: int = 0
    has_mass: bool = True


@dataclass(frozen=True)
class BinaryScores:
    mae: float
    f_mean: float
    f_max: float
    f_weighted: float
    s_measure: float
    e_measure_mean: float
    auc: float

    def as_dict(self) -> dict:
        return asdict(self)


def mae(pred, gt) -> float:
    x, g = _prepare(pred, gt)
    return float(np.mean(np.abs(x - g)))


def pr_curve(pred, gt, levels: int = DEFAULT_LEVELS) -> PRCurve:
    x, g = _prepare(pred, gt)
    thr = sweep_thresholds(levels)
    tp, fp = _kernels.threshold_counts(x.ravel(), g.ravel(), thr)
    n_pos = int(np.count_nonzero(g))
    n_neg = g.size - n_pos
    predicted = tp + fp
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / np.maximum(predicted, 1), 1.0)
    recall = tp / n_pos if n_pos else np.zeros(levels)
    fpr = fp / n_neg if n_neg else np.zeros(levels)
    return PRCurve(
        thresholds=thr,
        precision=precision,
        recall=recall.astype(np.float64),
        tpr=recall.astype(np.float64),
        fpr=fpr.astype(np.float64),
        n_positive=n_pos,
        has_mass=bool(np.any(x > 0)),
    )


def f_curve(curve: PRCurve, beta2: float = F_BETA2) -> np.ndarray:
    if beta2 <= 0:
        raise ValueError("beta2 must be positive")
    if curve.n_positive == 0:
        # empty GT: perfect only if the prediction is empty too
        return np.full(curve.thresholds.shape, 0.0 if curve.has_mass else 1.0)
    p, r = curve.precision, curve.recall
    num = (1.0 + beta2) * p * r
    den = beta2 * p + r
    return np.where(num > 0, num / np.where(den > 0, den, 1.0), 0.0)


def f_measures(curve: PRCurve, beta2: float = F_BETA2) -> tuple[float, float]:
    """(mean F over thresholds, max F over thresholds)."""
    f = f_curve(curve, beta2)
    top = float(np.max(f))
    # mean as max minus mean shortfall, so a flat curve gives mean == max exactly
    return top - math.fsum(top - f) / f.size, top


def auc(curve: PRCurve) -> float:
    """Trapezoidal ROC area with (0, 0) and (1, 1) added."""
    # fpr/tpr fall as the threshold rises, so reversing sorts them
    xs = np.concatenate(([0.0], curve.fpr[::-1], [1.0]))
    ys = np.concatenate(([0.0], curve.tpr[::-1], [1.0]))
    return float(np.sum(np.diff(xs) * (ys[1:] + ys[:-1]) * 0.5))


# -- weighted F-measure -------------------------------------------------------

def _gauss_kernel(size: int = 7, sigma: float = 5.0) -> np.ndarray:
    """Normalised Gaussian, same construction as MATLAB fspecial('gaussian')."""
    r = (size - 1) / 2
    y, x = np.ogrid[-r:r + 1, -r:r + 1]
    h = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    h[h < np.finfo(h.dtype).eps * h.max()] = 0
    return h / h.sum()


_WF_KERNEL = _gauss_kernel()


def weighted_f(pred, gt, beta2: float = WF_BETA2) -> float:
    """Weighted F-measure (Margolin et al. error weighting).

    Errors on foreground pixels are smoothed with a 7x7 Gaussian using the
    nearest-foreground value outside the object, and background errors are
    amplified with distance to the object.
    """
    x, g = _prepare(pred, gt)
    if not g.any():
        return 0.0 if np.any(x > 0) else 1.0
    err = np.abs(x - g)
    dist, idx = ndimage.distance_transform_edt(~g, return_indices=True)
    err_t = err[idx[0], idx[1]]  # background pixels take nearest GT pixel's error
    # edge-replicate padding: a uniform error field stays uniform at the border
    err_a = ndimage.correlate(err_t, _WF_KERNEL, mode="nearest")
    min_e = np.where(g & (err_a < err), err_a, err)
    importance = np.where(g, 1.0, 2.0 - np.exp(np.log(0.5) / 5.0 * dist))
    ew = min_e * importance
    tp_w = np.count_nonzero(g) - ew[g].sum()
    fp_w = ew[~g].sum()
    recall = 1.0 - ew[g].mean()
    precision = tp_w / (tp_w + fp_w) if tp_w + fp_w > 0 else 0.0
    den = recall + beta2 * precision
    if den <= 0:
        return 0.0
    return float((1.0 + beta2) * recall * precision / den)


# -- S-measure ----------------------------------------------------------------

def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def _object_score(v: np.ndarray) -> float:
    m = v.mean()
    sd = v.std(ddof=1) if v.size > 1 else 0.0
    return 2.0 * m / (m * m + 1.0 + sd)


def _s_object(x: np.ndarray, g: np.ndarray) -> float:
    u = g.mean()
    o_fg = _object_score(x[g])
    o_bg = _object_score(1.0 - x[~g])
    return u * o_fg + (1.0 - u) * o_bg


def _ssim(p: np.ndarray, q: np.ndarray) -> float:
    n = p.size
    if n == 0:
        return 0.0
    mx, my = p.mean(), q.mean()
    if n > 1:
        dx, dy = p - mx, q - my
        vx = np.sum(dx * dx) / (n - 1)
        vy = np.sum(dy * dy) / (n - 1)
        cxy = np.sum(dx * dy) / (n - 1)
    else:
        vx = vy = cxy = 0.0
    num = 4.0 * mx * my * cxy
    den = (mx * mx + my * my) * (vx + vy)
    if num != 0:
        return float(num / den)
    return 1.0 if den == 0 else 0.0


def _centroid(g: np.ndarray) -> tuple[int, int]:
    """1-based (column, row) centre of mass, rounded half up."""
    h, w = g.shape
    total = g.sum()
    if total == 0:
        return _round_half_up(w / 2), _round_half_up(h / 2)
    cols = np.arange(1, w + 1)
    rows = np.arange(1, h + 1)
    cx = _round_half_up(float(np.sum(g.sum(axis=0) * cols)) / total)
    cy = _round_half_up(float(np.sum(g.sum(axis=1) * rows)) / total)
    return cx, cy


def _s_region(x: np.ndarray, gf: np.ndarray) -> float:
    h, w = gf.shape
    cx, cy = _centroid(gf)
    area = h * w
    parts = (
        (slice(0, cy), slice(0, cx), cx * cy),
        (slice(0, cy), slice(cx, w), (w - cx) * cy),
        (slice(cy, h), slice(0, cx), cx * (h - cy)),
        (slice(cy, h), slice(cx, w), (w - cx) * (h - cy)),
    )
    return sum(n / area * _ssim(x[r, c], gf[r, c]) for r, c, n in parts)


def s_measure(pred, gt, alpha: float = 0.5) -> float:
    """Structure measure: alpha-blend of object- and region-aware similarity."""
    x, g = _prepare(pred, gt)
    y = g.mean()
    if y == 0:
        return float(1.0 - x.mean())
    if y == 1:
        return float(x.mean())
    score = alpha * _s_object(x, g) + (1.0 - alpha) * _s_region(x, g.astype(np.float64))
    return float(max(score, 0.0))


# -- E-measure ----------------------------------------------------------------

def _align_enhanced(a, b):
    # b (demeaned GT) is never 0 in the non-degenerate branch
    align = 2.0 * a * b / (a * a + b * b)
    return (align + 1.0) ** 2 / 4.0


def e_measure_curve(pred, gt, levels: int = DEFAULT_LEVELS) -> np.ndarray:
    """Enhanced-alignment score at every sweep threshold.

    Computed from the four (pred, GT) pixel populations, since the bias
    matrices are constant within each of them.
    """
    x, g = _prepare(pred, gt)
    thr = sweep_thresholds(levels)
    tp, fp = _kernels.threshold_counts(x.ravel(), g.ravel(), thr)
    n = g.size
    n_pos = int(np.count_nonzero(g))
    pred_fg = (tp + fp).astype(np.float64)
    if n_pos == 0:
        total = n - pred_fg
    elif n_pos == n:
        total = pred_fg
    else:
        mu_p = pred_fg / n
        mu_g = n_pos / n
        fn = n_pos - tp
        tn = n - pred_fg - fn
        total = (tp * _align_enhanced(1.0 - mu_p, 1.0 - mu_g)
                 + fp * _align_enhanced(1.0 - mu_p, -mu_g)
                 + fn * _align_enhanced(-mu_p, 1.0 - mu_g)
                 + tn * _align_enhanced(-mu_p, -mu_g))
    return np.asarray(total, dtype=np.float64) / n


def e_measure_mean(pred, gt, levels: int = DEFAULT_LEVELS) -> float:
    e = e_measure_curve(pred, gt, levels)
    return math.fsum(e) / e.size


# -- bundle ---------------------------------------------------------------------

def binary_scores(pred, gt, levels: int = DEFAULT_LEVELS) -> BinaryScores:
    x, g = _prepare(pred, gt)
    curve = pr_curve(x, g, levels)
    f_mean, f_max = f_measures(curve)
    return BinaryScores(
        mae=mae(x, g),
        f_mean=f_mean,
        f_max=f_max,
        f_weighted=weighted_f(x, g),
        s_measure=s_measure(x, g),
        e_measure_mean=e_measure_mean(x, g, levels),
        auc=auc(curve),
    )


def mean_binary_scores(scores: Sequence[BinaryScores]) -> BinaryScores:
    """Per-field mean over images, compensated, in the given order."""
    if not scores:
        raise ValueError("no scores to average")
    n = len(scores)
    return BinaryScores(**{
        f.name: math.fsum(getattr(s, f.name) for s in scores) / n for f in fields(BinaryScores)
    })
