"""Training pipeline for GPU power models: ingest feature CSVs, prune
correlated features, train tree ensembles with cross-validation, and export
them in the portable ensemble JSON format the prediction side consumes."""

from gpukalc_trainer.dataset import (
    Dataset,
    DropEntry,
    PREFERRED_FEATURES,
    load_dataset,
    prune_correlated,
    prune_two_stage,
)
from gpukalc_trainer.errors import TrainerError
from gpukalc_trainer.export import (
    ensemble_document,
    export_ensemble,
    load_ensemble_doc,
    predict_ensemble,
)
from gpukalc_trainer.training import FAMILIES, FoldMetrics, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DropEntry",
    "FAMILIES",
    "FoldMetrics",
    "PREFERRED_FEATURES",
    "TrainResult",
    "TrainerError",
    "ensemble_document",
    "export_ensemble",
    "load_dataset",
    "load_ensemble_doc",
    "predict_ensemble",
    "prune_correlated",
    "prune_two_stage",
    "train",
]
