"""Hot per-pixel kernels with a numba path and a pure-numpy fallback.

The numba versions are used when numba imports cleanly and the environment
variable ``USCBENCH_DISABLE_JIT`` is unset (or ``0``). Both variants are
always importable under explicit names so tests and the benchmark can
compare them directly.
"""
from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("USCBENCH_DISABLE_JIT", "").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLE:
        raise ImportError("JIT disabled by USCBENCH_DISABLE_JIT")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


BACKEND = "numba" if HAS_NUMBA else "numpy"


# -- confusion counts -------------------------------------------------------

def confusion_counts_numpy(gt: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """3x3 int64 counts; rows are GT labels, columns predicted labels."""
    idx = gt.astype(np.intp) * 3 + pred.astype(np.intp)
    return np.bincount(idx, minlength=9).astype(np.int64).reshape(3, 3)


@njit(cache=True, nogil=True)
def _confusion_counts_loop(gt, pred):
    out = np.zeros((3, 3), dtype=np.int64)
    for i in range(gt.shape[0]):
        out[gt[i], pred[i]] += 1
    return out


def confusion_counts_numba(gt: np.ndarray, pred: np.ndarray) -> np.ndarray:
    return _confusion_counts_loop(np.ascontiguousarray(gt, dtype=np.uint8),
                                  np.ascontiguousarray(pred, dtype=np.uint8))


# -- threshold sweep counts -------------------------------------------------

def threshold_counts_numpy(scores: np.ndarray, positive: np.ndarray,
                           thresholds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Counts of positive / negative pixels with ``score >= t`` for each t.

    ``thresholds`` must be sorted ascending.
    """
    n_thr = thresholds.shape[0]
    # bin b holds pixels passing exactly the first b thresholds
    bins = np.searchsorted(thresholds, scores, side="right")
    pos_hist = np.bincount(bins[positive], minlength=n_thr + 1)
    neg_hist = np.bincount(bins[~positive], minlength=n_thr + 1)
    tp = np.cumsum(pos_hist[::-1])[::-1][1:].astype(np.int64)
    fp = np.cumsum(neg_hist[::-1])[::-1][1:].astype(np.int64)
    return tp, fp


@njit(cache=True, nogil=True)
def _threshold_counts_loop(scores, positive, thresholds):
    n_thr = thresholds.shape[0]
    pos_hist = np.zeros(n_thr + 1, dtype=np.int64)
    neg_hist = np.zeros(n_thr + 1, dtype=np.int64)
    for i in range(scores.shape[0]):
        b = np.searchsorted(thresholds, scores[i], side="right")
        if positive[i]:
            pos_hist[b] += 1
        else:
            neg_hist[b] += 1
    tp = np.zeros(n_thr, dtype=np.int64)
    fp = np.zeros(n_thr, dtype=np.int64)
    run_p = 0
    run_n = 0
    for k in range(n_thr, 0, -1):
        run_p += pos_hist[k]
        run_n += neg_hist[k]
        tp[k - 1] = run_p
        fp[k - 1] = run_n
    return tp, fp


def threshold_counts_numba(scores: np.ndarray, positive: np.ndarray,
                           thresholds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return _threshold_counts_loop(np.ascontiguousarray(scores, dtype=np.float64),
                                  np.ascontiguousarray(positive, dtype=np.bool_),
                                  np.ascontiguousarray(thresholds, dtype=np.float64))


if HAS_NUMBA:
    confusion_counts = confusion_counts_numba
    threshold_counts = threshold_counts_numba
else:
    confusion_counts = confusion_counts_numpy
    threshold_counts = threshold_counts_numpy
