"""Measure and reduce negative flips when a classifier is retrained."""

from ._refit import (
    Classifier,
    Corpus,
    Example,
    FeaturizerConfig,
    PredictionSet,
    RefitError,
    UpdateConfig,
    centric_from_matrix,
    compare,
    flip_matrix,
    gen_synthetic,
    kl_divergence,
    run_behavior,
    run_experiment,
    split,
    top2_pca,
    train,
)

__all__ = [
    "Classifier",
    "Corpus",
    "Example",
    "FeaturizerConfig",
    "PredictionSet",
    "RefitError",
    "UpdateConfig",
    "centric_from_matrix",
    "compare",
    "flip_matrix",
    "gen_synthetic",
    "kl_divergence",
    "run_behavior",
    "run_experiment",
    "split",
    "top2_pca",
    "train",
]
