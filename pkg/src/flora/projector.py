"""Seeded Gaussian random projections.

A projection ``A`` of shape ``(rank, dim)`` has i.i.d. N(0, 1/rank) entries,
so ``E[A.T @ A] = I`` and decompression needs no extra scale factor. Only the
:class:`ProjectionSpec` (three integers) is ever stored; the matrix is
regenerated from its seed whenever it is needed.
"""

import contextlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .matcore import MASK64, GaussStream, derive_seed

_override = None


@dataclass(frozen=True)
class ProjectionSpec:
    seed: int
    rank: int
    dim: int

    def __post_init__(self):
        if self.rank < 1 or self.dim < 1:
            raise ConfigError(f"rank and dim must be >= 1, got rank={self.rank}, dim={self.dim}")
        object.__setattr__(self, "seed", int(self.seed) & MASK64)

    @classmethod
    def derived(cls, run_seed, param_index, epoch, rank, dim):
        """Spec for parameter ``param_index`` in resampling epoch ``epoch``."""
        return cls(derive_seed(run_seed, param_index, epoch), rank, dim)


@contextlib.contextmanager
def injected_projection(factory):
    """Replace :func:`materialize` with ``factory(spec)`` inside the block.

    Test-only hook: it lets identity or hand-built projections flow through
    the accumulator, momentum and optimizer code paths unchanged.
    """
    global _override
    prev, _override = _override, factory
    try:
        yield
    finally:
        _override = prev


def identity_projection():
    """Inject ``A = I``; only valid for specs with ``rank == dim``."""

    def factory(spec):
        if spec.rank != spec.dim:
            raise ShapeError("identity projection requires rank == dim")
        return np.eye(spec.dim)

    return injected_projection(factory)


def materialize(spec):
    if _override is not None:
        a = np.asarray(_override(spec), dtype=np.float64)
        if a.shape != (spec.rank, spec.dim):
            raise ShapeError(f"injected projection has shape {a.shape}, expected {(spec.rank, spec.dim)}")
        return a
    z = GaussStream(spec.seed).next(spec.rank * spec.dim)
    return z.reshape(spec.rank, spec.dim) / np.sqrt(spec.rank)


def down_project(g, spec, a=None):
    """Compress ``g`` (n x dim) to ``g @ A.T`` (n x rank)."""
    if g.ndim != 2 or g.shape[1] != spec.dim:
        raise ShapeError(f"down_project: gradient shape {g.shape} does not match dim {spec.dim}")
    if a is None:
        a = materialize(spec)
    return g @ a.T


def up_project(c, spec, a=None):
    """Decompress ``c`` (n x rank) to ``c @ A`` (n x dim)."""
    if c.ndim != 2 or c.shape[1] != spec.rank:
        raise ShapeError(f"up_project: state shape {c.shape} does not match rank {spec.rank}")
    if a is None:
        a = materialize(spec)
    return c @ a


def reconstruction_error(spec):
    """Largest entry of ``|A.T @ A - I|``."""
    a = materialize(spec)
    e = a.T @ a
    e[np.diag_indices_from(e)] -= 1.0
    return float(np.max(np.abs(e)))
