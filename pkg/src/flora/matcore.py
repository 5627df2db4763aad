"""Dense float64 matrix helpers and a seed-keyed Gaussian stream.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. The
functions here add the shape and finiteness checks the rest of the package
relies on; the arithmetic itself is numpy's.
"""

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import DataError, ShapeError

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def as_matrix(x, name="matrix"):
    """Validate external input as a finite float64 2-D array."""
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise DataError(f"{name} contains NaN or Inf")
    return a


def _check_same(a, b, op):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def matmul(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def transpose(a):
    return np.ascontiguousarray(a.T)


def add(a, b):
    _check_same(a, b, "add")
    return a + b


def sub(a, b):
    _check_same(a, b, "sub")
    return a - b


def scale(a, c):
    return a * float(c)


def frobenius_norm(a):
    return float(np.sqrt(np.sum(a * a)))


def max_abs(a):
    return float(np.max(np.abs(a))) if a.size else 0.0


def mix64(z):
    """SplitMix64 finalizer on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(root, *parts):
    """Hash a root seed and integer path components into a child seed.

    ``derive_seed(run_seed, param_index, epoch)`` gives every parameter and
    resampling epoch its own independent, reproducible seed.
    """
    h = mix64(root + _GOLDEN)
    for p in parts:
        h = ((h << 1) | (h >> 63)) & MASK64
        h = mix64(h ^ mix64((int(p) & MASK64) + _GOLDEN))
    return h


@dataclass
class GaussStream:
    """Counter-based stream of standard normals.

    The samples are a pure function of ``(seed, counter)``: saving those two
    integers and rebuilding the stream resumes the exact same sequence.
    ``counter`` counts consumed uniforms; each call to :meth:`next` consumes
    ``2 * ceil(count / 2)`` of them (one Box-Muller pair per two samples).
    """

    seed: int
    counter: int = 0

    def __post_init__(self):
        self.seed = int(self.seed) & MASK64
        self.counter = int(self.counter)
        if self.counter < 0:
            raise ValueError("counter must be non-negative")
        self._key = mix64(self.seed)

    def next(self, count):
        if count < 0:
            raise ValueError("count must be non-negative")
        out = np.empty(int(count), dtype=np.float64)
        self.counter += _backend.gauss_fill(self._key, self.counter, out)
        return out

    def state(self):
        return self.seed, self.counter


def gauss_next(stream, count):
    """Draw ``count`` i.i.d. N(0, 1) samples from ``stream`` and advance it."""
    return stream.next(count)


def numerical_rank(a, rel_tol=1e-8):
    """Number of singular values above ``rel_tol * sigma_max``."""
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))
