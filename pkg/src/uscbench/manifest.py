"""Dataset manifests with scene tags, scene rules and synthetic fixtures.

A manifest is UTF-8 JSON-lines, one object per image::

    {"id": "img_001", "scene": "C", "gt_path": "gt/img_001.png", "pred_path": null}

Relative paths resolve against the manifest's directory.
"""
from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .masks import AttributeLabel, TernaryMask, TernaryProbMap


class SceneTag(str, enum.Enum):
    A = "A"  # salient objects only
    B = "B"  # camouflaged objects only
    C = "C"  # both
    D = "D"  # neither (background only)


# scene -> (salient required present?, camouflaged required present?)
SCENE_RULES = {
    SceneTag.A: (True, False),
    SceneTag.B: (False, True),
    SceneTag.C: (True, True),
    SceneTag.D: (False, False),
}


class ManifestError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    scene: SceneTag
    gt_path: Path
    pred_path: Path | None = None


@dataclass
class DatasetSummary:
    scene_counts: dict[SceneTag, int] = field(default_factory=dict)
    pixel_totals: dict[AttributeLabel, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.scene_counts.values())


def _resolve(base: Path, value) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    """Parse a JSON-lines manifest; entries come back in file order.

    Blank lines are skipped. Raises ManifestError (with the 1-based line
    number) on bad JSON, missing keys, unknown scene tags or duplicate ids.
    """
    path = Path(path)
    base = path.parent
    entries: list[ManifestEntry] = []
    seen: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(rec, dict):
                raise ManifestError("expected a JSON object", lineno)
            for key in ("id", "scene", "gt_path"):
                if key not in rec:
                    raise ManifestError(f"missing key {key!r}", lineno)
            ident = rec["id"]
            if not isinstance(ident, str) or not ident:
                raise ManifestError("id must be a non-empty string", lineno)
            if ident in seen:
                raise ManifestError(f"duplicate id {ident!r} (first seen on line {seen[ident]})", lineno)
            try:
                scene = SceneTag(rec["scene"])
            except ValueError:
                raise ManifestError(f"unknown scene tag {rec['scene']!r}", lineno) from None
            pred = rec.get("pred_path")
            entries.append(ManifestEntry(
                id=ident,
                scene=scene,
                gt_path=_resolve(base, rec["gt_path"]),
                pred_path=_resolve(base, pred) if pred else None,
            ))
            seen[ident] = lineno
    return entries


def write_manifest(path: str | Path, entries: Iterable[ManifestEntry]) -> None:
    """Write entries with paths relative to the manifest directory when possible."""
    path = Path(path)
    base = path.parent.resolve()

    def rel(p: Path | None):
        if p is None:
            return None
        try:
            return Path(p).resolve().relative_to(base).as_posix()
        except ValueError:
            return str(p)

    with path.open("w", encoding="utf-8") as fh:
        for e in entries:
            rec = {"id": e.id, "scene": e.scene.value, "gt_path": rel(e.gt_path), "pred_path": rel(e.pred_path)}
            fh.write(json.dumps(rec) + "\n")


def summarize(entries: Iterable[ManifestEntry], masks: Iterable[TernaryMask] | None = None) -> DatasetSummary:
    counts = Counter(e.scene for e in entries)
    summary = DatasetSummary(scene_counts={s: counts.get(s, 0) for s in SceneTag})
    if masks is not None:
        totals = np.zeros(3, dtype=np.int64)
        for m in masks:
            totals += np.bincount(m.labels.ravel(), minlength=3)
        summary.pixel_totals = {a: int(totals[a]) for a in AttributeLabel}
    return summary


def validate_scene_consistency(entry: ManifestEntry, gt: TernaryMask) -> list[str]:
    """Return every scene rule that ``gt`` breaks (empty list when clean)."""
    need_s, need_c = SCENE_RULES[entry.scene]
    n_s = gt.count(AttributeLabel.SALIENT)
    n_c = gt.count(AttributeLabel.CAMOUFLAGED)
    tag = entry.scene.value
    out = []
    if need_s and n_s == 0:
        out.append(f"salient pixels absent in scene {tag}")
    if not need_s and n_s > 0:
        out.append(f"salient pixels present in scene {tag}")
    if need_c and n_c == 0:
        out.append(f"camouflaged pixels absent in scene {tag}")
    if not need_c and n_c > 0:
        out.append(f"camouflaged pixels present in scene {tag}")
    return out


# -- synthetic fixtures -------------------------------------------------------

def _rect(rng: np.random.Generator, x0: int, x1: int, h: int) -> tuple[slice, slice]:
    """Random non-empty rectangle with columns inside [x0, x1)."""
    w = x1 - x0
    rw = int(rng.integers(1, w + 1))
    rh = int(rng.integers(1, h + 1))
    cx = x0 + int(rng.integers(0, w - rw + 1))
    cy = int(rng.integers(0, h - rh + 1))
    return slice(cy, cy + rh), slice(cx, cx + rw)


def fixture_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def generate_fixture(seed: int, width: int, height: int, scene: SceneTag | str,
                     noise: float = 1.0) -> tuple[TernaryMask, TernaryProbMap]:
    """Deterministic (gt, pred) pair obeying the rules of ``scene``.

    The GT is a background canvas with one rectangle per required attribute;
    in scene C salient sits in the left half and camouflaged in the right so
    neither can erase the other. The prediction is a softmax over a one-hot
    GT embedding plus Gaussian logit noise of scale ``noise``.
    """
    if width < 4 or height < 4:
        raise ValueError("fixtures need width, height >= 4")
    scene = SceneTag(scene)
    rng = fixture_rng(seed)
    labels = np.zeros((height, width), dtype=np.uint8)
    need_s, need_c = SCENE_RULES[scene]
    if need_s and need_c:
        half = width // 2
        labels[_rect(rng, 0, half, height)] = AttributeLabel.SALIENT
        labels[_rect(rng, half, width, height)] = AttributeLabel.CAMOUFLAGED
    elif need_s:
        labels[_rect(rng, 0, width, height)] = AttributeLabel.SALIENT
    elif need_c:
        labels[_rect(rng, 0, width, height)] = AttributeLabel.CAMOUFLAGED
    logits = 2.0 * np.eye(3)[labels] + noise * rng.standard_normal((height, width, 3))
    logits -= logits.max(axis=2, keepdims=True)
    e = np.exp(logits)
    probs = e / e.sum(axis=2, keepdims=True)
    return TernaryMask(labels), TernaryProbMap(probs)
