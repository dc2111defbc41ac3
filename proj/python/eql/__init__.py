"""Gradient-driven equalization losses (Sigmoid-EQL, Softmax-EQL, EFL, EQFL) and a
small long-tailed training harness, backed by a C++ core."""

from ._eql import (
    DimensionError,
    Error,
    GradStats,
    IngestionError,
    LossConfig,
    LossVariant,
    MappingFn,
    MappingKind,
    NumericError,
    ParameterError,
    Reduction,
    compare,
    compose_objectness,
    decay_for_imbalance,
    grad_check,
    grouped_accuracy,
    loss,
    map_ratio,
    run,
    sigmoid,
    synth_longtail,
)

__all__ = [
    "DimensionError",
    "Error",
    "GradStats",
    "IngestionError",
    "LossConfig",
    "LossVariant",
    "MappingFn",
    "MappingKind",
    "NumericError",
    "ParameterError",
    "Reduction",
    "compare",
    "compose_objectness",
    "decay_for_imbalance",
    "grad_check",
    "grouped_accuracy",
    "loss",
    "map_ratio",
    "run",
    "sigmoid",
    "synth_longtail",
]
