"""Compare the numba and numpy variants of the per-pixel kernels.

    python benchmarks/bench_kernels.py [--size 352] [--repeat 50]

Also times a full ternary evaluation of synthetic 352x352 pairs through the
CLI path when --pairs is given (e.g. --pairs 3600).
"""
import argparse
import io
import tempfile
import time
from contextlib import redirect_stdout
from pathlib import Path

import numpy as np

from uscbench import _kernels
from uscbench.binary_metrics import sweep_thresholds


def best_of(fn, repeat):
    fn()  # warm-up, includes JIT compilation on first call
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_kernels(size, repeat):
    rng = np.random.default_rng(0)
    gt = rng.integers(0, 3, size * size).astype(np.uint8)
    pred = rng.integers(0, 3, size * size).astype(np.uint8)
    scores = np.round(rng.random(size * size) * 255) / 255
    positive = rng.random(size * size) > 0.5
    thr = sweep_thresholds(256)

    assert np.array_equal(_kernels.confusion_counts_numpy(gt, pred), _kernels.confusion_counts_numba(gt, pred))
    a, b = _kernels.threshold_counts_numpy(scores, positive, thr), _kernels.threshold_counts_numba(scores, positive, thr)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))

    print(f"kernel timings, {size}x{size} pixels, best of {repeat} (backend: {_kernels.BACKEND})")
    if not _kernels.HAS_NUMBA:
        # the numba names would run as plain Python loops here
        print("numba unavailable or disabled; timing the numpy variants only")
    print(f"{'kernel':<18}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, np_fn, nb_fn in (
        ("confusion_counts", lambda: _kernels.confusion_counts_numpy(gt, pred),
         lambda: _kernels.confusion_counts_numba(gt, pred)),
        ("threshold_counts", lambda: _kernels.threshold_counts_numpy(scores, positive, thr),
         lambda: _kernels.threshold_counts_numba(scores, positive, thr)),
    ):
        t_np = best_of(np_fn, repeat)
        if not _kernels.HAS_NUMBA:
            print(f"{name:<18}{t_np * 1e3:>10.3f}{'-':>10}{'-':>9}")
            continue
        t_nb = best_of(nb_fn, repeat)
        print(f"{name:<18}{t_np * 1e3:>10.3f}{t_nb * 1e3:>10.3f}{t_np / t_nb:>8.1f}x")


def bench_eval(pairs, jobs):
    from uscbench.cli import main
    from uscbench.manifest import ManifestEntry, SceneTag, generate_fixture, write_manifest
    from uscbench.masks import argmax_labels, encode_mask

    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        (root / "gt").mkdir()
        (root / "pred").mkdir()
        blobs = []
        for k in range(36):
            gt, probs = generate_fixture(k, 352, 352, "ABCD"[k % 4])
            blobs.append((encode_mask(gt), encode_mask(argmax_labels(probs)), SceneTag("ABCD"[k % 4])))
        entries = []
        for i in range(pairs):
            g, p, scene = blobs[i % len(blobs)]
            ident = f"img_{i:05d}"
            (root / "gt" / f"{ident}.png").write_bytes(g)
            (root / "pred" / f"{ident}.png").write_bytes(p)
            entries.append(ManifestEntry(ident, scene, root / "gt" / f"{ident}.png", root / "pred" / f"{ident}.png"))
        write_manifest(root / "manifest.jsonl", entries)
        t = time.perf_counter()
        with redirect_stdout(io.StringIO()):
            code = main(["eval", str(root / "manifest.jsonl"), "-j", str(jobs)])
        elapsed = time.perf_counter() - t
    print(f"eval of {pairs} pairs at 352x352, jobs={jobs}, backend={_kernels.BACKEND}: "
          f"{elapsed:.2f} s (exit {code})")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=352)
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--pairs", type=int, default=0, help="also time an end-to-end eval of this many pairs")
    ap.add_argument("--jobs", type=int, default=8)
    args = ap.parse_args()
    bench_kernels(args.size, args.repeat)
    if args.pairs:
        bench_eval(args.pairs, args.jobs)


if __name__ == "__main__":
    main()
