"""Export trained models to the portable tree-ensemble JSON format.

The file is self-contained: feature manifest, the min-max bounds the model
was trained under, trees with any learning-rate shrinkage already folded
into the leaf values, and per-feature split gains. Anything that can walk
a binary tree can reproduce the predictions bit-for-bit; this module also
carries its own reader/walker so the round trip can be checked without the
inference side installed.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from gpukalc_trainer.errors import TrainerError
from gpukalc_trainer.training import TrainResult

ENSEMBLE_SCHEMA_VERSION = 1
VECTOR_SCHEMA_VERSION = 1


def _tree_nodes(tree, leaf_scale: float) -> list[dict]:
    """sklearn tree arrays -> node dicts (x <= threshold goes left)."""
    nodes: list[dict] = []
    for i in range(tree.node_count):
        if tree.children_left[i] == -1:
            nodes.append({"value": float(tree.value[i][0][0]) * leaf_scale})
        else:
            nodes.append({
                "feature": int(tree.feature[i]),
                "threshold": float(tree.threshold[i]),
                "left": int(tree.children_left[i]),
                "right": int(tree.children_right[i]),
            })
    return nodes


def _accumulate_gains(tree, gains: np.ndarray) -> None:
    """Add each split's weighted impurity decrease to its feature's total."""
    w, imp = tree.weighted_n_node_samples, tree.impurity
    for i in range(tree.node_count):
        left, right = tree.children_left[i], tree.children_right[i]
        if left == -1:
            continue
        decrease = w[i] * imp[i] - w[left] * imp[left] - w[right] * imp[right]
        gains[tree.feature[i]] += max(float(decrease), 0.0)


def ensemble_document(result: TrainResult) -> dict:
    """Build the ensemble JSON document from a training result."""
    if result.family == "gradient_boosted":
        estimators = [est[0] for est in result.model.estimators_]
        leaf_scale = float(result.model.learning_rate)
        probe = np.zeros((1, len(result.manifest)))
        base_score = float(result.model.init_.predict(probe)[0])
    elif result.family == "random_forest":
        estimators = list(result.model.estimators_)
        leaf_scale = 1.0 / len(estimators)
        base_score = 0.0
    else:
        raise TrainerError(f"unsupported model family '{result.family}'")

    gains = np.zeros(len(result.manifest))
    trees = []
    for est in estimators:
        trees.append({"nodes": _tree_nodes(est.tree_, leaf_scale)})
        _accumulate_gains(est.tree_, gains)

    return {
        "schema_version": ENSEMBLE_SCHEMA_VERSION,
        "base_score": base_score,
        "feature_manifest": list(result.manifest),
        "scaling": {
            "min": [float(v) for v in result.scaler.data_min_],
            "max": [float(v) for v in result.scaler.data_max_],
        },
        "trees": trees,
        "gains": [float(g) for g in gains],
    }


def load_ensemble_doc(path: str | Path) -> dict:
    """Read an ensemble file back for the trainer-side round-trip check."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise TrainerError(f"cannot read ensemble: {exc}") from exc
    if doc.get("schema_version") != ENSEMBLE_SCHEMA_VERSION:
        raise TrainerError(
            f"unsupported ensemble schema_version {doc.get('schema_version')!r}"
        )
    for key in ("feature_manifest", "scaling", "trees"):
        if key not in doc:
            raise TrainerError(f"ensemble file missing '{key}'")
    return doc


def predict_ensemble(doc: Mapping, features: Mapping[str, float] | Sequence[float]) -> float:
    """Walk the exported trees: min-max scale, x <= threshold goes left,
    leaves sum onto the base score."""
    manifest = doc["feature_manifest"]
    if isinstance(features, Mapping):
        missing = [n for n in manifest if n not in features]
        if missing:
            raise TrainerError(
                "features missing from input: " + ", ".join(missing)
            )
        raw = [float(features[n]) for n in manifest]
    else:
        raw = [float(v) for v in features]
        if len(raw) != len(manifest):
            raise TrainerError(
                f"expected {len(manifest)} feature values, got {len(raw)}"
            )
    lo, hi = doc["scaling"]["min"], doc["scaling"]["max"]
    x = [(v - a) / (b - a) if b > a else 0.0 for v, a, b in zip(raw, lo, hi)]

    total = float(doc.get("base_score", 0.0))
    for tree in doc["trees"]:
        nodes = tree["nodes"]
        node = nodes[0]
        while "value" not in node:
            node = nodes[node["left"] if x[node["feature"]] <= node["threshold"]
                         else node["right"]]
        total += node["value"]
    return total


def _sample_vectors(result: TrainResult, doc: dict, n_vectors: int) -> list[dict]:
    pool = result.holdout_indices
    if pool.size < n_vectors:
        pool = np.arange(result.X.shape[0])
    rng = np.random.default_rng(result.seed)
    picked = np.sort(rng.choice(pool, size=min(n_vectors, pool.size),
                                replace=False))
    vectors = []
    for i in picked:
        inputs = {name: float(v) for name, v in zip(result.manifest, result.X[i])}
        vectors.append({
            "inputs": inputs,
            "prediction": predict_ensemble(doc, inputs),
        })
    return vectors


def export_ensemble(
    result: TrainResult, out_dir: str | Path, *, n_vectors: int = 20
) -> tuple[Path, Path]:
    """Write ensemble.json and test_vectors.json; returns both paths.

    The test vectors are (raw input, prediction) pairs sampled from rows that
    were held out during cross-validation, so any other implementation of the
    format can be checked against them.
    """
    if n_vectors < 1:
        raise TrainerError("need at least one test vector")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    doc = ensemble_document(result)
    ensemble_path = out_dir / "ensemble.json"
    ensemble_path.write_text(json.dumps(doc, indent=2) + "\n")

    vectors_path = out_dir / "test_vectors.json"
    vectors_path.write_text(json.dumps({
        "schema_version": VECTOR_SCHEMA_VERSION,
        "ensemble_file": ensemble_path.name,
        "vectors": _sample_vectors(result, doc, n_vectors),
    }, indent=2) + "\n")

    return ensemble_path, vectors_path
