"""Exponential-moving-average momentum kept in a projected space.

The state ``M`` is ``n x r``. Every ``kappa`` steps the projection is
resampled and the state is carried to the new basis by
``M <- M @ A_old @ A_new.T``. The yielded update direction is the
decompressed state ``M @ A``; applying a learning rate is the caller's job.
"""

import math
import warnings

import numpy as np

from . import projector
from .errors import CompressionWarning, ConfigError, DataError, ShapeError
from .projector import ProjectionSpec

DEFAULT_KAPPA = 1000


def _never(kappa):
    return kappa is None or (isinstance(kappa, float) and math.isinf(kappa))


def _check_grad(g, shape):
    if g.shape != tuple(shape):
        raise ShapeError(f"gradient shape {g.shape} does not match parameter shape {tuple(shape)}")
    if not np.isfinite(g).all():
        raise DataError("gradient contains NaN or Inf")


def _check_beta(beta):
    if not 0.0 <= beta <= 1.0:
        raise ConfigError(f"beta must lie in [0, 1], got {beta}")


class CompressedMomentum:
    """Momentum with O(n*r) state and interval-``kappa`` resampling.

    ``kappa=None`` (or ``math.inf``) keeps the initial projection forever.
    ``transfer=False`` skips the basis change at resampling events; it exists
    only so the verification suite can prove it detects a broken transfer.
    """

    def __init__(self, n, m, rank, kappa=DEFAULT_KAPPA, beta=0.9, seed=0, param_index=0, transfer=True):
        if rank < 1:
            raise ConfigError("rank must be >= 1")
        if not _never(kappa) and (int(kappa) != kappa or kappa < 1):
            raise ConfigError(f"kappa must be a positive integer or None, got {kappa}")
        _check_beta(beta)
        if rank > m:
            warnings.warn(f"rank {rank} exceeds dim {m}: no memory saving", CompressionWarning, stacklevel=2)
        self.n, self.m, self.rank = n, m, rank
        self.kappa = None if _never(kappa) else int(kappa)
        self.beta = float(beta)
        self.seed = seed
        self.param_index = param_index
        self.transfer = transfer
        self.epoch = 0
        self.spec = ProjectionSpec.derived(seed, param_index, 0, rank, m)
        self.m_state = np.zeros((n, rank))
        self.t = 0

    @property
    def state_size(self):
        return self.m_state.size

    def _resample_due(self):
        return self.kappa is not None and self.t > 0 and self.t % self.kappa == 0

    def step(self, g):
        """Fold gradient ``g`` into the state and return the update direction."""
        _check_grad(g, (self.n, self.m))
        a = projector.materialize(self.spec)
        if self._resample_due():
            self.epoch += 1
            new_spec = ProjectionSpec.derived(self.seed, self.param_index, self.epoch, self.rank, self.m)
            a_new = projector.materialize(new_spec)
            if self.transfer:
                self.m_state = (self.m_state @ a) @ a_new.T
            self.spec, a = new_spec, a_new
        self.m_state = self.beta * self.m_state + (1.0 - self.beta) * (g @ a.T)
        self.t += 1
        return self.m_state @ a


class NaiveMomentum:
    """Uncompressed EMA baseline (O(n*m) state)."""

    def __init__(self, shape, beta=0.9):
        _check_beta(beta)
        self.shape = tuple(shape)
        self.beta = float(beta)
        self.m_state = np.zeros(self.shape)
        self.t = 0

    @property
    def state_size(self):
        return self.m_state.size

    def step(self, g):
        _check_grad(g, self.shape)
        self.m_state = self.beta * self.m_state + (1.0 - self.beta) * g
        self.t += 1
        return self.m_state.copy()


def transfer_distortion(spec_old, spec_new, m_state):
    """Relative loss from moving ``m_state`` between two projections.

    Measures how far ``M A_old A_new^T A_new`` is from ``M A_old``; zero means
    the decompressed momentum survives the basis change untouched.
    """
    if spec_old.dim != spec_new.dim:
        raise ShapeError("projections must share the same dim")
    x = projector.up_project(m_state, spec_old)
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        return 0.0
    a_new = projector.materialize(spec_new)
    y = (x @ a_new.T) @ a_new
    return float(np.linalg.norm(y - x)) / norm
