from pathlib import Path

import numpy as np
import pytest

from uscbench.manifest import ManifestEntry, SceneTag, write_manifest
from uscbench.masks import TernaryMask, write_mask


def random_labels(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    return rng.integers(0, 3, size=(h, w), dtype=np.uint8)


@pytest.fixture
def rng():
    return np.random.default_rng(20241015)


def make_dataset(root: Path, pairs, scenes) -> Path:
    """Write gt/<id>.png, pred/<id>.png and manifest.jsonl; return manifest path."""
    (root / "gt").mkdir(parents=True, exist_ok=True)
    (root / "pred").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, ((gt, pred), scene) in enumerate(zip(pairs, scenes)):
        ident = f"img_{i:04d}"
        write_mask(root / "gt" / f"{ident}.png", TernaryMask(gt))
        if pred is not None:
            write_mask(root / "pred" / f"{ident}.png", TernaryMask(pred))
        entries.append(ManifestEntry(ident, SceneTag(scene), root / "gt" / f"{ident}.png",
                                     root / "pred" / f"{ident}.png"))
    manifest = root / "manifest.jsonl"
    write_manifest(manifest, entries)
    return manifest


# -- acceptance summary ---------------------------------------------------------

_acceptance: dict[str, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): acceptance criterion, reported in the summary")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    label = marker.args[0]
    outcomes = _acceptance.setdefault(label, [])
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        outcomes.append("passed" if call.excinfo is None else "failed")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcomes in _acceptance.items():
        ok = bool(outcomes) and all(o == "passed" for o in outcomes)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}")
