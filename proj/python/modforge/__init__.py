"""Neuron-sample dual partitioning of activation matrices."""

from ._core import (
    ConstraintError,
    DataError,
    UsageError,
    adjusted_rand_index,
    block_heatmap,
    discover,
    evaluate,
    extract_features,
    load_matrix,
    run_cli,
    synth,
    train_eval_classifier,
    zscore,
)

__all__ = [
    "ConstraintError",
    "DataError",
    "UsageError",
    "adjusted_rand_index",
    "block_heatmap",
    "discover",
    "evaluate",
    "extract_features",
    "load_matrix",
    "run_cli",
    "synth",
    "train_eval_classifier",
    "zscore",
]
