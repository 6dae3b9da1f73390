"""Selective joint multitask training on synthetic emotion and AU data."""

from ._core import (
    ArtifactError,
    ConfigError,
    ContractError,
    DataError,
    DivergenceError,
    ShapeError,
    accuracy_per_class,
    coherence_score,
    default_config,
    full_bce,
    generate,
    gradcheck,
    lr_schedule,
    run_cli,
    selective_bce,
    softmax_cross_entropy,
    train_and_evaluate,
)

__all__ = [
    "ArtifactError",
    "ConfigError",
    "ContractError",
    "DataError",
    "DivergenceError",
    "ShapeError",
    "accuracy_per_class",
    "coherence_score",
    "default_config",
    "full_bce",
    "generate",
    "gradcheck",
    "lr_schedule",
    "run_cli",
    "selective_bce",
    "softmax_cross_entropy",
    "train_and_evaluate",
]
