"""Learnable-path neural controlled differential equations."""

from ._core import (
    ConfigError,
    DataError,
    Experiment,
    LeapError,
    Model,
    NumericError,
    RunConfig,
    auroc,
    natural_cubic,
    paired_ttest,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Experiment",
    "LeapError",
    "Model",
    "NumericError",
    "RunConfig",
    "auroc",
    "natural_cubic",
    "paired_ttest",
]
