"""Tree-ensemble training with 5-fold cross-validation.

Rows are put into a canonical order (sorted lexicographically by feature
values, then target) before anything touches the data, so metrics and the
fitted model depend only on the dataset contents and the seed — never on the
row order the CSV happened to arrive in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from sklearn.ensemble import GradientBoostingRegressor, RandomForestRegressor
from sklearn.metrics import mean_absolute_error, mean_squared_error, r2_score
from sklearn.model_selection import KFold
from sklearn.preprocessing import MinMaxScaler

from gpukalc_trainer.dataset import Dataset
from gpukalc_trainer.errors import TrainerError

FAMILIES = ("random_forest", "gradient_boosted")
N_FOLDS = 5
MIN_ROWS = 50


@dataclass(frozen=True)
class FoldMetrics:
    r2: float
    rmse: float
    mae: float

    def as_dict(self) -> dict:
        return {"r2": self.r2, "rmse": self.rmse, "mae": self.mae}


@dataclass
class TrainResult:
    family: str
    seed: int
    hyperparameters: dict[str, Any]
    manifest: tuple[str, ...]
    model: Any  # the final estimator, fit on all (scaled) rows
    scaler: MinMaxScaler  # fit on all rows; its bounds ship with the model
    fold_metrics: list[FoldMetrics]
    mean_metrics: FoldMetrics
    X: np.ndarray = field(repr=False)  # canonical row order
    y: np.ndarray = field(repr=False)
    holdout_indices: np.ndarray = field(repr=False)  # last CV fold's test rows

    def metrics_doc(self) -> dict:
        return {
            "family": self.family,
            "seed": self.seed,
            "hyperparameters": self.hyperparameters,
            "n_rows": int(self.X.shape[0]),
            "n_features": len(self.manifest),
            "feature_manifest": list(self.manifest),
            "folds": [m.as_dict() for m in self.fold_metrics],
            "mean": self.mean_metrics.as_dict(),
        }


def _make_model(family: str, n_estimators: int, learning_rate: float,
                max_depth: int | None, seed: int):
    if family == "gradient_boosted":
        kwargs = {} if max_depth is None else {"max_depth": max_depth}
        return GradientBoostingRegressor(
            n_estimators=n_estimators, learning_rate=learning_rate,
            random_state=seed, **kwargs,
        )
    if family == "random_forest":
        return RandomForestRegressor(
            n_estimators=n_estimators, max_depth=max_depth, random_state=seed,
        )
    raise TrainerError(
        f"unsupported model family '{family}'; choose from {', '.join(FAMILIES)}"
    )


def _canonical_rows(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    frame = dataset.X.copy()
    target = "__target__"
    frame[target] = dataset.y.to_numpy()
    frame = frame.sort_values(by=list(dataset.manifest) + [target],
                              kind="mergesort")
    return (
        frame[list(dataset.manifest)].to_numpy(dtype=float),
        frame[target].to_numpy(dtype=float),
    )


def train(
    dataset: Dataset,
    family: str = "gradient_boosted",
    *,
    n_estimators: int = 500,
    learning_rate: float = 0.05,
    max_depth: int | None = None,
    seed: int = 0,
) -> TrainResult:
    """5-fold CV (min-max scaling fit per training fold), then a final fit on
    the full dataset."""
    if family not in FAMILIES:
        raise TrainerError(
            f"unsupported model family '{family}'; choose from "
            + ", ".join(FAMILIES)
        )
    if dataset.n_rows < MIN_ROWS:
        raise TrainerError(
            f"need at least {MIN_ROWS} rows for {N_FOLDS}-fold CV, "
            f"got {dataset.n_rows}"
        )
    X, y = _canonical_rows(dataset)
    if np.ptp(y) == 0.0:
        raise TrainerError("degenerate target: every row has the same value")

    folds: list[FoldMetrics] = []
    holdout = np.empty(0, dtype=int)
    kf = KFold(n_splits=N_FOLDS, shuffle=True, random_state=seed)
    for train_idx, test_idx in kf.split(X):
        scaler = MinMaxScaler().fit(X[train_idx])
        model = _make_model(family, n_estimators, learning_rate, max_depth, seed)
        model.fit(scaler.transform(X[train_idx]), y[train_idx])
        pred = model.predict(scaler.transform(X[test_idx]))
        folds.append(FoldMetrics(
            r2=float(r2_score(y[test_idx], pred)),
            rmse=float(np.sqrt(mean_squared_error(y[test_idx], pred))),
            mae=float(mean_absolute_error(y[test_idx], pred)),
        ))
        holdout = test_idx

    mean = FoldMetrics(
        r2=float(np.mean([m.r2 for m in folds])),
        rmse=float(np.mean([m.rmse for m in folds])),
        mae=float(np.mean([m.mae for m in folds])),
    )

    final_scaler = MinMaxScaler().fit(X)
    final_model = _make_model(family, n_estimators, learning_rate, max_depth, seed)
    final_model.fit(final_scaler.transform(X), y)

    return TrainResult(
        family=family,
        seed=seed,
        hyperparameters={
            "n_estimators": n_estimators,
            "learning_rate": learning_rate,
            "max_depth": max_depth,
        },
        manifest=dataset.manifest,
        model=final_model,
        scaler=final_scaler,
        fold_metrics=folds,
        mean_metrics=mean,
        X=X,
        y=y,
        holdout_indices=holdout,
    )
