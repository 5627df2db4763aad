"""Gradient accumulation in a randomly down-projected space.

The compressed accumulator keeps an ``n x r`` buffer instead of ``n x m``.
Each gradient is projected with the cycle's matrix ``A`` on arrival; at the
end of a cycle of ``tau`` steps the buffer is decompressed once and the
projection is resampled for the next cycle.
"""

import warnings

import numpy as np

from . import projector
from .errors import CompressionWarning, ConfigError, DataError, ShapeError, StateError
from .projector import ProjectionSpec

SCALINGS = ("mean", "sum")


def _check_grad(g, n, m):
    if g.shape != (n, m):
        raise ShapeError(f"gradient shape {g.shape} does not match parameter shape {(n, m)}")
    if not np.isfinite(g).all():
        raise DataError("gradient contains NaN or Inf")


class CompressedAccumulator:
    """Arithmetic-mean accumulator with O(n*r) state.

    Parameters
    ----------
    n, m : int
        Shape of the parameter; the second dimension ``m`` is compressed.
    rank : int
        Projection rank ``r``.
    tau : int
        Number of gradients per accumulation cycle.
    seed : int
        Root seed; cycle ``k`` uses ``derive_seed(seed, param_index, k)``.
    """

    def __init__(self, n, m, rank, tau, seed, param_index=0):
        if rank < 1:
            raise ConfigError("rank must be >= 1")
        if tau < 1:
            raise ConfigError("tau must be >= 1")
        if rank > m:
            warnings.warn(f"rank {rank} exceeds dim {m}: no memory saving", CompressionWarning, stacklevel=2)
        self.n, self.m, self.rank, self.tau = n, m, rank, tau
        self.seed = seed
        self.param_index = param_index
        self.cycle = 0
        self.spec = ProjectionSpec.derived(seed, param_index, 0, rank, m)
        self.c = np.zeros((n, rank))
        self.steps_seen = 0

    @property
    def state_size(self):
        return self.c.size

    def accumulate(self, g):
        if self.steps_seen >= self.tau:
            raise StateError("accumulation cycle is full; reconstruct and reset first")
        _check_grad(g, self.n, self.m)
        self.c += projector.down_project(g, self.spec)
        self.steps_seen += 1
        return self

    def reconstruct(self, scaling="mean"):
        if scaling not in SCALINGS:
            raise ConfigError(f"scaling must be one of {SCALINGS}")
        if self.steps_seen != self.tau:
            raise StateError(f"cycle incomplete: {self.steps_seen}/{self.tau} gradients")
        total = projector.up_project(self.c, self.spec)
        return total / self.tau if scaling == "mean" else total

    def reset(self):
        """Zero the buffer and resample the projection for the next cycle."""
        self.cycle += 1
        self.spec = ProjectionSpec.derived(self.seed, self.param_index, self.cycle, self.rank, self.m)
        self.c[...] = 0.0
        self.steps_seen = 0
        return self


class NaiveAccumulator:
    """Uncompressed baseline with the same interface (O(n*m) state)."""

    def __init__(self, shape, tau):
        if tau < 1:
            raise ConfigError("tau must be >= 1")
        self.shape = tuple(shape)
        self.tau = tau
        self.c = np.zeros(self.shape)
        self.steps_seen = 0

    @property
    def state_size(self):
        return self.c.size

    def accumulate(self, g):
        if self.steps_seen >= self.tau:
            raise StateError("accumulation cycle is full; reconstruct and reset first")
        if g.shape != self.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match {self.shape}")
        if not np.isfinite(g).all():
            raise DataError("gradient contains NaN or Inf")
        self.c += g
        self.steps_seen += 1
        return self

    def reconstruct(self, scaling="mean"):
        if scaling not in SCALINGS:
            raise ConfigError(f"scaling must be one of {SCALINGS}")
        if self.steps_seen != self.tau:
            raise StateError(f"cycle incomplete: {self.steps_seen}/{self.tau} gradients")
        return self.c / self.tau if scaling == "mean" else self.c.copy()

    def reset(self):
        self.c[...] = 0.0
        self.steps_seen = 0
        return self
