"""Class-weighted focal loss with its analytic gradient, and the total loss."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .masks import ShapeMismatchError, TernaryMask, TernaryProbMap

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class FocalParams:
    gamma: float = 2.0
    # indexed by AttributeLabel: background, salient, camouflaged
    alpha: tuple[float, float, float] = (1.0, 4.0, 6.0)

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if len(self.alpha) != 3 or min(self.alpha) <= 0:
            raise ValueError("alpha needs three positive weights (B, S, C)")


@dataclass(frozen=True)
class LossWeights:
    lambda_p: float = 1.0
    lambda_a: float = 0.5

    def __post_init__(self):
        if self.lambda_p < 0 or self.lambda_a < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass(frozen=True, eq=False)
class LossValue:
    value: float
    grad: np.ndarray = field(repr=False)


def focal_term(p, alpha, gamma):
    """Per-pixel ``-alpha (1-p)^gamma log p`` with p clamped to the floor."""
    pc = np.clip(p, PROB_FLOOR, 1.0)
    return -alpha * np.power(1.0 - pc, gamma) * np.log(pc)


def focal_term_grad(p, alpha, gamma):
    """d/dp of :func:`focal_term`; zero below the clamp floor."""
    p = np.asarray(p, dtype=np.float64)
    pc = np.clip(p, PROB_FLOOR, 1.0)
    q = 1.0 - pc
    if gamma == 0:
        mod = np.zeros_like(pc)
    else:
        # the ln p factor vanishes at p = 1, which also covers gamma < 1
        mod = np.where(q > 0, gamma * np.power(np.where(q > 0, q, 1.0), gamma - 1.0) * np.log(pc), 0.0)
    g = alpha * (mod - np.power(q, gamma) / pc)
    return np.where(p < PROB_FLOOR, 0.0, g)


def focal_loss(probs: TernaryProbMap, gt: TernaryMask, params: FocalParams = FocalParams()) -> LossValue:
    """Mean focal loss over pixels; alpha attaches to each pixel's GT class.

    ``grad`` has the shape of ``probs.probs`` and holds dL/dp only on the
    target channel of every pixel.
    """
    if probs.shape != gt.shape:
        raise ShapeMismatchError("focal_loss", probs.shape, gt.shape)
    t = gt.labels.astype(np.intp)
    p_t = np.take_along_axis(probs.probs, t[..., None], axis=2)[..., 0]
    alpha = np.asarray(params.alpha, dtype=np.float64)[t]
    n = t.size
    terms = focal_term(p_t, alpha, params.gamma)
    value = math.fsum(terms.ravel().tolist()) / n
    grad = np.zeros(probs.probs.shape, dtype=np.float64)
    np.put_along_axis(grad, t[..., None], (focal_term_grad(p_t, alpha, params.gamma) / n)[..., None], axis=2)
    return LossValue(value=value, grad=grad)


def focal_grad_check(seed: int, trials: int, gamma: float = 2.0, alpha: float = 1.0,
                     h: float = 1e-6) -> float:
    """Max relative error of the analytic focal gradient vs central differences.

    Probabilities are drawn uniformly from [0.05, 0.95].
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    worst = 0.0
    for p in rng.uniform(0.05, 0.95, size=trials):
        analytic = float(focal_term_grad(p, alpha, gamma))
        numeric = float((focal_term(p + h, alpha, gamma) - focal_term(p - h, alpha, gamma)) / (2 * h))
        scale = max(abs(analytic), abs(numeric), 1e-300)
        worst = max(worst, abs(analytic - numeric) / scale)
    return worst


def total_loss(pred_loss: float, att_loss: float, w: LossWeights = LossWeights()) -> float:
    if pred_loss < 0 or att_loss < 0:
        raise ValueError("losses must be >= 0")
    return w.lambda_p * pred_loss + w.lambda_a * att_loss


def downsample_nearest(mask: TernaryMask, height: int, width: int) -> TernaryMask:
    """Nearest-neighbour resize (pixel-centre sampling) of a label map."""
    rows = np.minimum(((np.arange(height) + 0.5) * mask.height / height).astype(np.intp), mask.height - 1)
    cols = np.minimum(((np.arange(width) + 0.5) * mask.width / width).astype(np.intp), mask.width - 1)
    return TernaryMask(mask.labels[np.ix_(rows, cols)])


def attention_loss(att_logits: np.ndarray, gt: TernaryMask, params: FocalParams = FocalParams()) -> LossValue:
    """Focal loss of an (H, W, 3) attention map against GT.

    The three channels (B, S, C) are softmax-normalised per pixel and the GT
    is resized to the map resolution by nearest neighbour.
    """
    a = np.asarray(att_logits, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError(f"attention map must be (H, W, 3), got {a.shape}")
    z = a - a.max(axis=2, keepdims=True)
    e = np.exp(z)
    probs = TernaryProbMap(e / e.sum(axis=2, keepdims=True))
    target = gt if gt.shape == a.shape[:2] else downsample_nearest(gt, a.shape[0], a.shape[1])
    return focal_loss(probs, target, params)

