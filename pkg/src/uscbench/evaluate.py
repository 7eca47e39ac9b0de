"""Dataset-level evaluation: pairing, parallel scoring, reports.

Work is fanned out over a thread pool but results are always reduced in
manifest order (integer confusion counts, compensated float sums), so the
report bytes do not depend on the worker count.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .binary_metrics import DEFAULT_LEVELS, BinaryScores, binary_scores, mean_binary_scores, weighted_f
from .confusion import ConfusionMatrix3, accumulate, merge_all
from .manifest import ManifestEntry, SceneTag
from .masks import (
    AttributeLabel,
    MaskDecodeError,
    ScoreMap,
    TernaryMask,
    extract_binary,
    merge_binary_predictions,
    read_mask,
    read_score_map,
    write_mask,
)
from .ternary_metrics import TernaryScores, image_averaged_scores, ternary_scores

SCHEMA_VERSION = 1
WORKER_ENV = "USCBENCH_MAX_WORKERS"

# report layout: scene block -> metrics shown
SCENE_BLOCKS = {
    "A": ("iou_s",),
    "B": ("iou_c",),
    "C": ("iou_s", "iou_c"),
}
OVERALL_METRICS = ("iou_s", "iou_c", "miou", "macc", "cscs")
METRIC_TITLES = {
    "iou_s": "IoU_S", "iou_c": "IoU_C", "miou": "mIoU", "macc": "mAcc", "cscs": "CSCS",
    "mae": "MAE", "f_mean": "F_mean", "f_max": "F_max", "f_weighted": "F_w",
    "s_measure": "S_alpha", "e_measure_mean": "E_mean", "auc": "AUC",
}
BINARY_ATTRS = {"salient": AttributeLabel.SALIENT, "camouflaged": AttributeLabel.CAMOUFLAGED}


class EvalError(Exception):
    exit_code = 2


class MissingPredictionError(EvalError):
    def __init__(self, ids: Sequence[str]):
        self.ids = list(ids)
        super().__init__(f"missing prediction for {len(self.ids)} id(s): {', '.join(self.ids)}")


class DimensionMismatchError(EvalError):
    exit_code = 1

    def __init__(self, ident: str, gt_shape, pred_shape):
        self.id = ident
        super().__init__(f"{ident}: ground truth shape {tuple(gt_shape)} != prediction shape {tuple(pred_shape)}")


def effective_jobs(jobs: int | None) -> int:
    n = jobs if jobs and jobs > 0 else 1
    cap = os.environ.get(WORKER_ENV)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


def _map_ordered(fn: Callable, items: Sequence, jobs: int) -> list:
    jobs = effective_jobs(jobs)
    if jobs == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def resolve_predictions(entries: Sequence[ManifestEntry], pred_dir: str | Path | None) -> list[Path]:
    """``<pred_dir>/<id>.png`` per entry, or the manifest's pred_path when no
    directory is given."""
    paths, missing = [], []
    for e in entries:
        p = Path(pred_dir) / f"{e.id}.png" if pred_dir is not None else e.pred_path
        if p is None or not Path(p).is_file():
            missing.append(e.id)
        else:
            paths.append(Path(p))
    if missing:
        raise MissingPredictionError(missing)
    return paths


def check_gt_paths(entries: Iterable[ManifestEntry]) -> None:
    for e in entries:
        if not Path(e.gt_path).is_file():
            raise EvalError(f"{e.id}: ground truth file not found: {e.gt_path}")


# -- ternary evaluation ---------------------------------------------------------

def _read(ident: str, path: Path, mode: str) -> TernaryMask:
    try:
        return read_mask(path, mode)
    except MaskDecodeError as exc:
        raise EvalError(f"{ident}: {path}: {exc}") from None


@dataclass
class ImageResult:
    id: str
    scene: SceneTag
    confusion: ConfusionMatrix3
    binary: dict[str, BinaryScores] = field(default_factory=dict)


def evaluate_pair(ident: str, scene: SceneTag, gt: TernaryMask, pred: TernaryMask,
                  with_binary: bool = False, levels: int = DEFAULT_LEVELS) -> ImageResult:
    if gt.shape != pred.shape:
        raise DimensionMismatchError(ident, gt.shape, pred.shape)
    res = ImageResult(ident, scene, accumulate(gt, pred))
    if with_binary:
        for name, attr in BINARY_ATTRS.items():
            res.binary[name] = binary_scores(extract_binary(pred, attr).astype(np.float64),
                                             extract_binary(gt, attr), levels)
    return res


def evaluate_entries(entries: Sequence[ManifestEntry], pred_paths: Sequence[Path], *,
                     mode: str = "strict", with_binary: bool = False,
                     levels: int = DEFAULT_LEVELS, jobs: int = 1) -> list[ImageResult]:
    def work(i: int) -> ImageResult:
        e = entries[i]
        gt = _read(e.id, e.gt_path, mode)
        pred = _read(e.id, pred_paths[i], mode)
        return evaluate_pair(e.id, e.scene, gt, pred, with_binary, levels)

    return _map_ordered(work, range(len(entries)), jobs)


def _pct(v: float | None) -> float | None:
    return None if v is None else float(f"{v * 100.0:.2f}")


def _scores_for(results: Sequence[ImageResult], aggregate: str, include_background: bool) -> TernaryScores:
    if aggregate == "image":
        return image_averaged_scores([r.confusion for r in results], include_background)
    return ternary_scores(merge_all(r.confusion for r in results), include_background)


def build_report(results: Sequence[ImageResult], *, manifest: str, aggregate: str = "global",
                 include_background: bool = True, flags: dict | None = None) -> dict:
    """MetricReport as a plain dict; metric values are percentages (2 dp)."""
    if aggregate not in ("global", "image"):
        raise ValueError(f"aggregate must be 'global' or 'image', got {aggregate!r}")
    if not results:
        raise EvalError("no images to evaluate")
    scenes: dict[str, dict] = {}
    for tag, metrics in SCENE_BLOCKS.items():
        subset = [r for r in results if r.scene.value == tag]
        if not subset:
            continue
        sc = _scores_for(subset, aggregate, include_background)
        scenes[tag] = {m: _pct(getattr(sc, m)) for m in metrics}
    overall = _scores_for(results, aggregate, include_background)
    scenes["Overall"] = {m: _pct(getattr(overall, m)) for m in OVERALL_METRICS}
    report = {
        "schema_version": SCHEMA_VERSION,
        "metadata": {
            "manifest": manifest,
            "image_count": len(results),
            "tool_version": __version__,
            "flags": dict(flags or {}),
        },
        "scenes": scenes,
    }
    if results[0].binary:
        report["binary"] = {
            name: {k: _pct(v) for k, v in mean_binary_scores([r.binary[name] for r in results]).as_dict().items()}
            for name in BINARY_ATTRS
        }
    return report


def per_image_records(results: Sequence[ImageResult], include_background: bool = True) -> str:
    """One JSON object per image, manifest order, raw (unrounded) fractions."""
    lines = []
    for r in results:
        sc = ternary_scores(r.confusion, include_background)
        rec = {"id": r.id, "scene": r.scene.value, **sc.as_dict(), "confusion": r.confusion.to_nested()}
        if r.binary:
            rec["binary"] = {k: v.as_dict() for k, v in r.binary.items()}
        lines.append(json.dumps(rec))
    return "".join(line + "\n" for line in lines)


# -- rendering ------------------------------------------------------------------

def _fmt(v: float | None) -> str:
    return "" if v is None else f"{v:.2f}"


def _rows(report: dict) -> list[tuple[str, str, float | None]]:
    rows = [(block, m, v) for block, vals in report["scenes"].items() for m, v in vals.items()]
    for name, vals in report.get("binary", {}).items():
        rows.extend((f"binary:{name}", m, v) for m, v in vals.items())
    return rows


def render_report(report: dict, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["block", "metric", "value"])
        for block, m, v in _rows(report):
            w.writerow([block, m, _fmt(v)])
        return buf.getvalue()
    if fmt == "md":
        return _render_markdown(report)
    raise ValueError(f"unknown format {fmt!r}")


def _render_markdown(report: dict) -> str:
    meta = report["metadata"]
    out = [
        f"<!-- schema_version: {report['schema_version']} -->",
        f"Manifest: `{meta['manifest']}`, images: {meta['image_count']}, "
        f"tool version: {meta['tool_version']}",
        "",
        "All values are percentages (%).",
        "",
    ]
    heads, cells = [], []
    for block, vals in report["scenes"].items():
        label = "Overall" if block == "Overall" else f"Scene {block}"
        for m, v in vals.items():
            heads.append(f"{label} {METRIC_TITLES[m]}")
            cells.append(_fmt(v) or "-")
    out.append("| " + " | ".join(heads) + " |")
    out.append("|" + "---|" * len(heads))
    out.append("| " + " | ".join(cells) + " |")
    if "binary" in report:
        metrics = list(next(iter(report["binary"].values())))
        out += ["", "| Attribute | " + " | ".join(METRIC_TITLES[m] for m in metrics) + " |",
                "|---|" + "---|" * len(metrics)]
        for name, vals in report["binary"].items():
            out.append(f"| {name} | " + " | ".join(_fmt(vals[m]) or "-" for m in metrics) + " |")
    return "\n".join(out) + "\n"


# -- leakage --------------------------------------------------------------------

def opposite(attr: AttributeLabel) -> AttributeLabel:
    if attr is AttributeLabel.SALIENT:
        return AttributeLabel.CAMOUFLAGED
    if attr is AttributeLabel.CAMOUFLAGED:
        return AttributeLabel.SALIENT
    raise ValueError("leakage target must be Salient or Camouflaged")


def load_prediction_scores(path: Path, kind: str, target: AttributeLabel, mode: str = "strict") -> ScoreMap:
    """Soft map as-is, or the opposite-attribute channel of a ternary mask."""
    if kind == "score":
        return read_score_map(path)
    if kind == "ternary":
        return ScoreMap(extract_binary(read_mask(path, mode), opposite(target)).astype(np.float64))
    raise ValueError(f"prediction kind must be 'score' or 'ternary', got {kind!r}")


def leakage_scores(entries: Sequence[ManifestEntry], pred_paths: Sequence[Path], target: AttributeLabel, *,
                   kind: str = "score", mode: str = "strict", jobs: int = 1) -> list[float]:
    target = AttributeLabel(target)
    opposite(target)

    def work(i: int) -> float:
        e = entries[i]
        gt = extract_binary(_read(e.id, e.gt_path, mode), target)
        try:
            pred = load_prediction_scores(pred_paths[i], kind, target, mode)
        except MaskDecodeError as exc:
            raise EvalError(f"{e.id}: {pred_paths[i]}: {exc}") from None
        if pred.shape != gt.shape:
            raise DimensionMismatchError(e.id, gt.shape, pred.shape)
        return weighted_f(pred, gt)

    return _map_ordered(work, range(len(entries)), jobs)


def build_leakage_report(values: Sequence[float], entries: Sequence[ManifestEntry], *, manifest: str,
                         target: AttributeLabel, kind: str) -> dict:
    if not values:
        raise EvalError("no images to evaluate")
    return {
        "schema_version": SCHEMA_VERSION,
        "metadata": {"manifest": manifest, "image_count": len(values), "tool_version": __version__,
                     "flags": {"target": AttributeLabel(target).name.lower(), "pred_kind": kind}},
        "metric": "weighted_f",
        "leakage": math.fsum(values) / len(values),
        "expected_value": 0.0,
        "per_image": {e.id: v for e, v in zip(entries, values)},
    }


def render_leakage(report: dict, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report, indent=2) + "\n"
    meta = report["metadata"]
    if fmt == "csv":
        return ("manifest,target,images,leakage,expected_value\n"
                f"{meta['manifest']},{meta['flags']['target']},{meta['image_count']},"
                f"{report['leakage']:.4f},{report['expected_value']:.4f}\n")
    if fmt == "md":
        return ("| Dataset | Target | Images | F_w leakage | EV |\n|---|---|---|---|---|\n"
                f"| `{meta['manifest']}` | {meta['flags']['target']} | {meta['image_count']} | "
                f"{report['leakage']:.4f} | {report['expected_value']:.4f} |\n")
    raise ValueError(f"unknown format {fmt!r}")


# -- merge ----------------------------------------------------------------------

def merge_directories(sod_dir: str | Path, cod_dir: str | Path, out_dir: str | Path,
                      threshold: float = 0.5, jobs: int = 1) -> int:
    sod = {p.stem: p for p in Path(sod_dir).glob("*.png")}
    cod = {p.stem: p for p in Path(cod_dir).glob("*.png")}
    only = sorted(set(sod) ^ set(cod))
    if only:
        raise EvalError("ids present in only one directory: " + ", ".join(only))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids = sorted(sod)

    def work(ident: str) -> None:
        s, c = read_score_map(sod[ident]), read_score_map(cod[ident])
        if s.shape != c.shape:
            raise DimensionMismatchError(ident, s.shape, c.shape)
        write_mask(out / f"{ident}.png", merge_binary_predictions(s, c, threshold))

    _map_ordered(work, ids, jobs)
    return len(ids)
