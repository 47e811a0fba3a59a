"""Power prediction from a portable tree-ensemble file, plus energy.

The ensemble format is a plain JSON document: a feature manifest, min-max
scaling bounds, and regression trees whose leaves already include any
learning-rate shrinkage. Inference here is deliberately dependency-free so
a trained model can be shipped and evaluated without the training stack.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Mapping, Sequence

from gpukalc.errors import EnsembleError

ENSEMBLE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TreeEnsemble:
    base_score: float
    feature_manifest: tuple[str, ...]
    scale_min: tuple[float, ...]
    scale_max: tuple[float, ...]
    trees: tuple[tuple[dict, ...], ...]
    gains: tuple[float, ...]

    @property
    def n_features(self) -> int:
        return len(self.feature_manifest)


def _validate_tree(nodes: Sequence[dict], n_features: int, tree_idx: int) -> None:
    if not nodes:
        raise EnsembleError(f"tree {tree_idx} has no nodes")
    n = len(nodes)
    for i, node in enumerate(nodes):
        where = f"tree {tree_idx} node {i}"
        if "value" in node:
            if not isinstance(node["value"], (int, float)):
                raise EnsembleError(f"{where}: leaf value must be a number")
            continue
        for key in ("feature", "threshold", "left", "right"):
            if key not in node:
                raise EnsembleError(f"{where}: missing '{key}'")
        f, l, r = node["feature"], node["left"], node["right"]
        if not isinstance(f, int) or not 0 <= f < n_features:
            raise EnsembleError(f"{where}: feature index {f} out of range")
        for child in (l, r):
            if not isinstance(child, int) or not 0 <= child < n:
                raise EnsembleError(f"{where}: child index {child} out of range")
    # Every node must be reached exactly once from the root: a real tree,
    # no cycles, no orphans.
    seen = [False] * n
    stack = [0]
    while stack:
        i = stack.pop()
        if seen[i]:
            raise EnsembleError(f"tree {tree_idx}: node {i} reached twice")
        seen[i] = True
        node = nodes[i]
        if "value" not in node:
            stack.append(node["left"])
            stack.append(node["right"])
    if not all(seen):
        orphan = seen.index(False)
        raise EnsembleError(f"tree {tree_idx}: node {orphan} unreachable")


def load_ensemble(source: str | Path | Mapping) -> TreeEnsemble:
    """Load and validate an ensemble from a JSON file path or parsed dict."""
    if isinstance(source, Mapping):
        doc = source
    else:
        try:
            doc = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise EnsembleError(f"cannot read ensemble: {exc}") from exc
    if doc.get("schema_version") != ENSEMBLE_SCHEMA_VERSION:
        raise EnsembleError(
            f"unsupported ensemble schema_version {doc.get('schema_version')!r}, "
            f"expected {ENSEMBLE_SCHEMA_VERSION}"
        )
    manifest = doc.get("feature_manifest")
    if not isinstance(manifest, list) or not manifest:
        raise EnsembleError("feature_manifest must be a non-empty list")
    if any(not isinstance(m, str) for m in manifest):
        raise EnsembleError("feature_manifest entries must be strings")
    if len(set(manifest)) != len(manifest):
        raise EnsembleError("feature_manifest has duplicate names")
    k = len(manifest)
    scaling = doc.get("scaling")
    if not isinstance(scaling, Mapping) or "min" not in scaling or "max" not in scaling:
        raise EnsembleError("scaling must provide 'min' and 'max' arrays")
    lo, hi = list(scaling["min"]), list(scaling["max"])
    if len(lo) != k or len(hi) != k:
        raise EnsembleError(
            f"scaling arrays must have {k} entries to match the manifest"
        )
    for i, (a, b) in enumerate(zip(lo, hi)):
        if b < a:
            raise EnsembleError(f"scaling for '{manifest[i]}' has max < min")
    trees = doc.get("trees")
    if not isinstance(trees, list):
        raise EnsembleError("trees must be a list")
    for t, tree in enumerate(trees):
        if not isinstance(tree, Mapping) or "nodes" not in tree:
            raise EnsembleError(f"tree {t} must be an object with 'nodes'")
        _validate_tree(tree["nodes"], k, t)
    gains = doc.get("gains", [0.0] * k)
    if len(gains) != k:
        raise EnsembleError(f"gains must have {k} entries to match the manifest")
    if any(g < 0 for g in gains):
        raise EnsembleError("gains must be >= 0")
    return TreeEnsemble(
        base_score=float(doc.get("base_score", 0.0)),
        feature_manifest=tuple(manifest),
        scale_min=tuple(float(v) for v in lo),
        scale_max=tuple(float(v) for v in hi),
        trees=tuple(tuple(dict(n) for n in tree["nodes"]) for tree in trees),
        gains=tuple(float(g) for g in gains),
    )


def _scaled_input(
    ensemble: TreeEnsemble, features: Mapping[str, float] | Sequence[float]
) -> list[float]:
    if isinstance(features, Mapping):
        missing = [n for n in ensemble.feature_manifest if n not in features]
        if missing:
            raise EnsembleError(f"features missing from input: {', '.join(missing)}")
        raw = [float(features[n]) for n in ensemble.feature_manifest]
    else:
        raw = [float(v) for v in features]
        if len(raw) != ensemble.n_features:
            raise EnsembleError(
                f"expected {ensemble.n_features} feature values, got {len(raw)}"
            )
    out = []
    for v, lo, hi in zip(raw, ensemble.scale_min, ensemble.scale_max):
        out.append((v - lo) / (hi - lo) if hi > lo else 0.0)
    return out


def predict_power(
    ensemble: TreeEnsemble, features: Mapping[str, float] | Sequence[float]
) -> float:
    """Evaluate the ensemble on one feature vector; returns watts.

    Mapping inputs are selected by manifest name, sequences must already be
    in manifest order. Splits send x <= threshold left.
    """
    x = _scaled_input(ensemble, features)
    total = ensemble.base_score
    for tree in ensemble.trees:
        i = 0
        for _ in range(len(tree)):
            node = tree[i]
            if "value" in node:
                total += node["value"]
                break
            i = node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]
        else:
            raise EnsembleError("tree walk did not reach a leaf")
    return total


def predict_energy(power_w: float, time_us: float) -> float:
    """Energy in microjoules: watts times microseconds.

    The product is taken in decimal so reported watt and microsecond values
    multiply to exactly the figure a reader would compute by hand.
    """
    if power_w < 0:
        raise EnsembleError("power must be >= 0")
    if time_us < 0:
        raise EnsembleError("time must be >= 0")
    return float(Decimal(repr(power_w)) * Decimal(repr(time_us)))


@dataclass(frozen=True)
class EnergyReport:
    kernel: str
    time_us: float
    power_w: float
    energy_uj: float

    @classmethod
    def build(cls, kernel: str, time_us: float, power_w: float) -> "EnergyReport":
        return cls(
            kernel=kernel,
            time_us=time_us,
            power_w=power_w,
            energy_uj=predict_energy(power_w, time_us),
        )


def importance_report(ensemble: TreeEnsemble) -> list[tuple[str, float]]:
    """(feature, gain) pairs, highest gain first; ties keep manifest order."""
    pairs = list(zip(ensemble.feature_manifest, ensemble.gains))
    order = sorted(range(len(pairs)), key=lambda i: (-pairs[i][1], i))
    return [pairs[i] for i in order]
