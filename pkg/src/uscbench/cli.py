"""Command-line front end.

Exit status: 0 success, 1 data violations, 2 I/O or schema errors.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .arm import run_invariant_checks
from .evaluate import (
    EvalError,
    build_leakage_report,
    build_report,
    check_gt_paths,
    evaluate_entries,
    leakage_scores,
    merge_directories,
    per_image_records,
    render_leakage,
    render_report,
    resolve_predictions,
)
from .manifest import (
    ManifestEntry,
    ManifestError,
    SceneTag,
    generate_fixture,
    load_manifest,
    validate_scene_consistency,
    write_manifest,
)
from .masks import AttributeLabel, MaskDecodeError, ScoreMap, argmax_labels, read_mask, write_mask, write_score_map

EXIT_OK, EXIT_VIOLATION, EXIT_IO = 0, 1, 2


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load(manifest: str) -> list[ManifestEntry]:
    try:
        return load_manifest(manifest)
    except OSError as exc:
        raise EvalError(f"cannot read manifest {manifest}: {exc.strerror or exc}") from None
    except ManifestError as exc:
        raise EvalError(f"{manifest}: {exc}") from None


def cmd_validate(args) -> int:
    entries = _load(args.manifest)
    check_gt_paths(entries)
    n_bad = 0
    for e in entries:
        try:
            gt = read_mask(e.gt_path, args.decode)
        except MaskDecodeError as exc:
            raise EvalError(f"{e.id}: {e.gt_path}: {exc}") from None
        for v in validate_scene_consistency(e, gt):
            print(f"{e.id}: {v}")
            n_bad += 1
    return EXIT_VIOLATION if n_bad else EXIT_OK


def cmd_eval(args) -> int:
    entries = _load(args.manifest)
    check_gt_paths(entries)
    preds = resolve_predictions(entries, args.pred_dir)
    results = evaluate_entries(entries, preds, mode=args.decode, with_binary=args.metrics == "all",
                               levels=args.levels, jobs=args.jobs)
    flags = {
        "metrics": args.metrics,
        "aggregate": args.aggregate,
        "include_background": not args.exclude_background,
        "decode": args.decode,
        "levels": args.levels,
    }
    try:
        report = build_report(results, manifest=args.manifest, aggregate=args.aggregate,
                              include_background=not args.exclude_background, flags=flags)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_VIOLATION
    if args.per_image:
        Path(args.per_image).write_text(per_image_records(results, not args.exclude_background), encoding="utf-8")
    _emit(render_report(report, args.format), args.output)
    return EXIT_OK


def cmd_leakage(args) -> int:
    entries = _load(args.manifest)
    check_gt_paths(entries)
    preds = resolve_predictions(entries, args.pred_dir)
    target = AttributeLabel[args.target.upper()]
    values = leakage_scores(entries, preds, target, kind=args.pred_kind, mode=args.decode, jobs=args.jobs)
    report = build_leakage_report(values, entries, manifest=args.manifest, target=target, kind=args.pred_kind)
    _emit(render_leakage(report, args.format), args.output)
    return EXIT_OK


def cmd_merge(args) -> int:
    n = merge_directories(args.sod_dir, args.cod_dir, args.out_dir, args.threshold, jobs=args.jobs)
    print(f"wrote {n} mask(s) to {args.out_dir}")
    return EXIT_OK


def cmd_arm_demo(args) -> int:
    checks = run_invariant_checks(args.seed, args.height, args.width, args.channels, args.queries,
                                  corrupt_weight=args.corrupt_weight)
    print(f"ARM reference seed={args.seed} H={args.height} W={args.width} C={args.channels} N={args.queries}")
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    ok = all(c.passed for c in checks)
    print(f"{sum(c.passed for c in checks)}/{len(checks)} checks passed")
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_gen_fixtures(args) -> int:
    out = Path(args.out_dir)
    for sub in ("gt", "pred", "scores/salient", "scores/camouflaged"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    scenes = [SceneTag(s) for s in args.scenes]
    entries = []
    for i in range(args.count):
        ident = f"img_{i:05d}"
        scene = scenes[i % len(scenes)]
        gt, probs = generate_fixture(args.seed * 1_000_003 + i, args.width, args.height, scene, noise=args.noise)
        gt_path, pred_path = out / "gt" / f"{ident}.png", out / "pred" / f"{ident}.png"
        write_mask(gt_path, gt)
        write_mask(pred_path, argmax_labels(probs))
        write_score_map(out / "scores/salient" / f"{ident}.png", ScoreMap(probs.probs[..., 1]))
        write_score_map(out / "scores/camouflaged" / f"{ident}.png", ScoreMap(probs.probs[..., 2]))
        entries.append(ManifestEntry(ident, scene, gt_path, pred_path))
    write_manifest(out / "manifest.jsonl", entries)
    print(f"wrote {len(entries)} fixture(s) to {out}")
    return EXIT_OK


def _add_common(p, jobs=True, fmt=True):
    if jobs:
        p.add_argument("-j", "--jobs", type=int, default=1,
                       help="worker threads (capped by USCBENCH_MAX_WORKERS); output does not depend on it")
    if fmt:
        p.add_argument("--format", choices=("json", "csv", "md"), default="json")
        p.add_argument("-o", "--output", help="write the report here instead of stdout")
    p.add_argument("--lenient", dest="decode", action="store_const", const="lenient", default="strict",
                   help="snap non-canonical mask pixels to the nearest code instead of failing")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uscbench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check GT files against their scene tags")
    p.add_argument("manifest")
    _add_common(p, jobs=False, fmt=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("eval", help="ternary (and optionally binary) metrics over a manifest")
    p.add_argument("manifest")
    p.add_argument("--pred-dir", help="directory of <id>.png ternary predictions (default: manifest pred_path)")
    p.add_argument("--metrics", choices=("ternary", "all"), default="ternary",
                   help="'all' adds per-attribute binary metrics")
    p.add_argument("--aggregate", choices=("global", "image"), default="global",
                   help="score the pooled confusion matrix, or average per-image scores")
    p.add_argument("--exclude-background", action="store_true", help="leave Background out of mIoU/mAcc")
    p.add_argument("--levels", type=int, default=256, help="threshold levels for binary metrics")
    p.add_argument("--per-image", metavar="FILE", help="also write one JSON-lines record per image")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("leakage", help="weighted-F of predictions against the opposite attribute's GT")
    p.add_argument("manifest")
    p.add_argument("--pred-dir")
    p.add_argument("--target", choices=("salient", "camouflaged"), required=True,
                   help="GT attribute the predictions are scored against")
    p.add_argument("--pred-kind", choices=("score", "ternary"), default="score",
                   help="soft 8-bit maps, or ternary masks (the opposite attribute is extracted)")
    _add_common(p)
    p.set_defaults(func=cmd_leakage)

    p = sub.add_parser("merge", help="fuse SOD and COD score maps into ternary masks")
    p.add_argument("--sod-dir", required=True)
    p.add_argument("--cod-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("-j", "--jobs", type=int, default=1)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("arm-demo", help="run the ARM reference and print its invariant checks")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--height", type=int, default=8)
    p.add_argument("--width", type=int, default=8)
    p.add_argument("--channels", type=int, default=4)
    p.add_argument("--queries", type=int, default=2)
    p.add_argument("--corrupt-weight", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_arm_demo)

    p = sub.add_parser("gen-fixtures", help="write a synthetic manifest with GT, predictions and score maps")
    p.add_argument("out_dir")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--scenes", default="ABCD", help="scene tags assigned round-robin")
    p.add_argument("--noise", type=float, default=1.0)
    p.set_defaults(func=cmd_gen_fixtures)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EvalError as exc:
        _err(str(exc))
        return exc.exit_code
    except MaskDecodeError as exc:
        _err(str(exc))
        return EXIT_IO
    except (ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
