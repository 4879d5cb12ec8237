"""Convolutional autoencoder ensembles for time series outlier detection."""

from ._caee import (
    ConfigError,
    DataError,
    DivergenceError,
    Ensemble,
    evaluate,
    mas_scores,
    pr_auc,
    roc_auc,
    run,
    synth_generate,
    topk_threshold,
    train,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DivergenceError",
    "Ensemble",
    "evaluate",
    "mas_scores",
    "pr_auc",
    "roc_auc",
    "run",
    "synth_generate",
    "topk_threshold",
    "train",
]
