"""Command line for the training pipeline: prune, train+export, check."""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import pandas as pd

from gpukalc_trainer.dataset import (
    PRUNE_METHODS,
    load_dataset,
    prune_correlated,
    prune_two_stage,
)
from gpukalc_trainer.errors import TrainerError
from gpukalc_trainer.export import export_ensemble, load_ensemble_doc, predict_ensemble
from gpukalc_trainer.training import FAMILIES, train


def _domain_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except TrainerError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
@click.version_option(package_name="gpukalc-trainer")
def main():
    """Train power models from feature CSVs and export portable ensembles."""


@main.command("train")
@click.option("--csv", "csv_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Feature CSV.")
@click.option("--target", default="power_w", show_default=True,
              help="Measured target column.")
@click.option("--family", type=click.Choice(FAMILIES), default="gradient_boosted",
              show_default=True)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False),
              help="Directory for ensemble.json, test_vectors.json, metrics.json.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--n-estimators", default=500, show_default=True,
              type=click.IntRange(min=1))
@click.option("--learning-rate", default=0.05, show_default=True, type=float)
@click.option("--max-depth", default=None, type=click.IntRange(min=1),
              help="Tree depth limit (default: family default).")
@click.option("--pearson", default=0.85, show_default=True, type=float,
              help="Linear-correlation prune threshold.")
@click.option("--kendall", default=0.85, show_default=True, type=float,
              help="Rank-correlation prune threshold.")
@click.option("--no-prune", is_flag=True, help="Skip correlation pruning.")
@click.option("--vectors", default=20, show_default=True,
              type=click.IntRange(min=1), help="Test vectors to export.")
@_domain_errors
def train_cmd(csv_path, target, family, out_dir, seed, n_estimators,
              learning_rate, max_depth, pearson, kendall, no_prune, vectors):
    """Train on a feature CSV and export the model plus its reports."""
    dataset = load_dataset(csv_path, target=target)
    drop_log = []
    if not no_prune:
        dataset, drops = prune_two_stage(dataset, pearson=pearson, kendall=kendall)
        drop_log = [d.as_dict() for d in drops]
        for d in drops:
            click.echo(f"dropped {d.dropped} ({d.method}"
                       + (f", kept {d.kept}" if d.kept else "") + ")", err=True)

    result = train(dataset, family, n_estimators=n_estimators,
                   learning_rate=learning_rate, max_depth=max_depth, seed=seed)
    ensemble_path, vectors_path = export_ensemble(result, out_dir,
                                                  n_vectors=vectors)

    metrics = result.metrics_doc()
    metrics["dropped_features"] = drop_log
    metrics_path = Path(out_dir) / "metrics.json"
    metrics_path.write_text(json.dumps(metrics, indent=2) + "\n")

    for i, fold in enumerate(result.fold_metrics, 1):
        click.echo(f"fold {i}: r2={fold.r2:.4f} rmse={fold.rmse:.4f} "
                   f"mae={fold.mae:.4f}")
    m = result.mean_metrics
    click.echo(f"mean:   r2={m.r2:.4f} rmse={m.rmse:.4f} mae={m.mae:.4f}")
    click.echo(f"wrote {ensemble_path}, {vectors_path}, {metrics_path}")


@main.command("prune")
@click.option("--csv", "csv_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--target", default="power_w", show_default=True)
@click.option("--method", type=click.Choice(PRUNE_METHODS + ("both",)),
              default="both", show_default=True)
@click.option("--threshold", default=0.85, show_default=True, type=float)
@click.option("--output", "-o", required=True,
              type=click.Path(dir_okay=False), help="Pruned CSV path.")
@_domain_errors
def prune_cmd(csv_path, target, method, threshold, output):
    """Drop correlated/constant feature columns; print the drop log as JSON."""
    dataset = load_dataset(csv_path, target=target)
    if method == "both":
        pruned, drops = prune_two_stage(dataset, pearson=threshold,
                                        kendall=threshold)
    else:
        pruned, drops = prune_correlated(dataset, method, threshold)

    frame = pd.concat([pruned.provenance, pruned.X,
                       pruned.y.rename(target)], axis=1)
    frame.to_csv(output, index=False)
    click.echo(json.dumps({"dropped": [d.as_dict() for d in drops],
                           "kept": list(pruned.manifest)}, indent=2))


@main.command("check")
@click.option("--run-dir", required=True, type=click.Path(file_okay=False,
              exists=True), help="Directory written by 'train'.")
@_domain_errors
def check_cmd(run_dir):
    """Re-verify the exported test vectors against the exported ensemble."""
    run_dir = Path(run_dir)
    vectors_path = run_dir / "test_vectors.json"
    try:
        spec = json.loads(vectors_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise TrainerError(f"cannot read test vectors: {exc}") from exc
    doc = load_ensemble_doc(run_dir / spec["ensemble_file"])

    worst = 0.0
    for vec in spec["vectors"]:
        got = predict_ensemble(doc, vec["inputs"])
        want = vec["prediction"]
        rel = abs(got - want) / max(abs(want), 1e-12)
        worst = max(worst, rel)
        if rel > 1e-9:
            raise TrainerError(
                f"vector mismatch: predicted {got!r}, recorded {want!r}"
            )
    click.echo(f"ok: {len(spec['vectors'])} vectors match "
               f"(max relative error {worst:.3g})")
