"""Sublinear-memory optimizer states through resampled random projections.

Gradient accumulation and momentum for an ``n x m`` weight are stored as
``n x r`` sketches plus a seed. ``loradyn`` holds the closed-form LoRA
trajectory and the update variants (LoRA, LoRA(B), RP, RRP) it motivates.
"""

from ._backend import BACKEND
from .accum import CompressedAccumulator, NaiveAccumulator
from .data import Dataset, load_fashion_mnist, load_idx, synth_blobs
from .errors import (
    CompressionWarning,
    ConfigError,
    DataError,
    FloraError,
    FormatError,
    RegimeError,
    ShapeError,
    StateError,
)
from .matcore import GaussStream, derive_seed, numerical_rank
from .momentum import CompressedMomentum, NaiveMomentum
from .optim import FloraOptimizer, Mode, OptimizerConfig, ParamGroup, Policy, make_optimizer, report_for
from .projector import ProjectionSpec, down_project, materialize, up_project
from .trainer import MlpModel, PilotConfig, forward_backward, run_pilot, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CompressedAccumulator",
    "CompressedMomentum",
    "CompressionWarning",
    "ConfigError",
    "DataError",
    "Dataset",
    "FloraError",
    "FloraOptimizer",
    "FormatError",
    "GaussStream",
    "MlpModel",
    "Mode",
    "NaiveAccumulator",
    "NaiveMomentum",
    "OptimizerConfig",
    "ParamGroup",
    "PilotConfig",
    "Policy",
    "ProjectionSpec",
    "RegimeError",
    "ShapeError",
    "StateError",
    "derive_seed",
    "down_project",
    "forward_backward",
    "load_fashion_mnist",
    "load_idx",
    "make_optimizer",
    "materialize",
    "numerical_rank",
    "report_for",
    "run_pilot",
    "synth_blobs",
    "train",
    "up_project",
]
