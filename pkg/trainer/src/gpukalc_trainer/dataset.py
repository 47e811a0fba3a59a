"""Feature-CSV ingestion and correlation-based feature pruning.

The training data is the feature CSV emitted by the analysis CLI, with a
measured ``power_w`` column appended. Non-numeric columns (the kernel label,
any benchmark/config annotations) are carried along as provenance but never
enter the model.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import pandas as pd

from gpukalc_trainer.errors import TrainerError

log = logging.getLogger(__name__)

# When two features correlate above the threshold, the one listed here wins;
# these are the features the power model is meant to be built on (derived
# quantities such as inst_issue_cycles stay, their raw correlates go).
PREFERRED_FEATURES = frozenset({
    "avg_comp_lat",
    "avg_glob_lat",
    "avg_shar_lat",
    "branch",
    "comp_inst_kernel",
    "glob_inst_kernel",
    "glob_load_sm",
    "glob_store_sm",
    "misc_inst_kernel",
    "inst_issue_cycles",
    "cache_penalty",
    "occupancy",
    "reg_thread",
    "shmem_block",
    "block_size",
})

PRUNE_METHODS = ("pearson", "kendall")


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, target vector, and row provenance, aligned by index."""

    X: pd.DataFrame
    y: pd.Series
    provenance: pd.DataFrame
    source: str | None = None

    def __post_init__(self):
        if self.X.shape[0] != self.y.shape[0]:
            raise TrainerError("feature matrix and target have different lengths")
        if self.X.isna().any().any() or self.y.isna().any():
            raise TrainerError("dataset contains missing values")

    @property
    def manifest(self) -> tuple[str, ...]:
        return tuple(self.X.columns)

    @property
    def n_rows(self) -> int:
        return int(self.X.shape[0])


@dataclass(frozen=True)
class DropEntry:
    """One pruning decision: why a column left the dataset."""

    dropped: str
    kept: str | None  # the correlate that survived; None for constant columns
    method: str  # "pearson", "kendall", or "constant"
    coefficient: float | None

    def as_dict(self) -> dict:
        return {
            "dropped": self.dropped,
            "kept": self.kept,
            "method": self.method,
            "coefficient": self.coefficient,
        }


def load_dataset(path: str | Path, target: str = "power_w") -> Dataset:
    """Read a feature CSV with a measured target column.

    Rows with missing values are dropped (logged); non-numeric columns become
    provenance.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except (OSError, ValueError) as exc:
        raise TrainerError(f"cannot read dataset: {exc}") from exc
    if frame.empty:
        raise TrainerError(f"dataset {path} has no rows")
    if target not in frame.columns:
        raise TrainerError(
            f"target column '{target}' not in {path.name}; columns: "
            + ", ".join(frame.columns)
        )

    numeric = frame.select_dtypes(include="number")
    prov_cols = [c for c in frame.columns if c not in numeric.columns]
    feat_cols = [c for c in numeric.columns if c != target]
    if not feat_cols:
        raise TrainerError("dataset has no numeric feature columns")

    complete = frame[feat_cols + [target]].notna().all(axis=1)
    if not complete.all():
        log.warning("dropping %d rows with missing values", int((~complete).sum()))
        frame = frame[complete]
    if frame.empty:
        raise TrainerError("no complete rows left after dropping missing values")

    frame = frame.reset_index(drop=True)
    return Dataset(
        X=frame[feat_cols].astype(float),
        y=frame[target].astype(float),
        provenance=frame[prov_cols],
        source=str(path),
    )


def _prefer(a: str, b: str, order: dict[str, int]) -> tuple[str, str]:
    """Return (kept, dropped) for a correlated pair: preferred features win,
    then the earlier column."""

    def rank(name: str) -> tuple[int, int]:
        return (0 if name in PREFERRED_FEATURES else 1, order[name])

    return (a, b) if rank(a) <= rank(b) else (b, a)


def prune_correlated(
    dataset: Dataset, method: str = "pearson", threshold: float = 0.85
) -> tuple[Dataset, list[DropEntry]]:
    """Drop one column of every pair whose |correlation| exceeds the threshold.

    Pairs are examined in column order against the surviving set, so the
    result is deterministic; constant columns are dropped first (their
    correlation is undefined).
    """
    if method not in PRUNE_METHODS:
        raise TrainerError(f"unknown correlation method '{method}'")
    if not 0.0 < threshold < 1.0:
        raise TrainerError("correlation threshold must be in (0, 1)")

    drops: list[DropEntry] = []
    survivors: list[str] = []
    for col in dataset.X.columns:
        if dataset.X[col].nunique(dropna=False) <= 1:
            drops.append(DropEntry(col, None, "constant", None))
            log.info("dropping constant column %s", col)
        else:
            survivors.append(col)

    corr = dataset.X[survivors].corr(method=method)
    order = {name: i for i, name in enumerate(dataset.X.columns)}
    alive = dict.fromkeys(survivors, True)
    for i, a in enumerate(survivors):
        if not alive[a]:
            continue
        for b in survivors[i + 1:]:
            if not alive[b]:
                continue
            coef = float(corr.at[a, b])
            if abs(coef) > threshold:
                kept, dropped = _prefer(a, b, order)
                alive[dropped] = False
                drops.append(DropEntry(dropped, kept, method, coef))
                log.info("dropping %s (|%s|=%.4f with %s)", dropped, method,
                         abs(coef), kept)
                if dropped == a:
                    break

    kept_cols = [c for c in survivors if alive[c]]
    if not kept_cols:
        raise TrainerError("pruning removed every feature column")
    return replace(dataset, X=dataset.X[kept_cols]), drops


def prune_two_stage(
    dataset: Dataset, pearson: float = 0.85, kendall: float = 0.85
) -> tuple[Dataset, list[DropEntry]]:
    """Linear-correlation pass first, then a rank-correlation pass on the
    survivors to catch monotone but non-linear redundancy."""
    after_pearson, log1 = prune_correlated(dataset, "pearson", pearson)
    after_kendall, log2 = prune_correlated(after_pearson, "kendall", kendall)
    return after_kendall, log1 + log2
