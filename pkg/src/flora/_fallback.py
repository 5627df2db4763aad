"""Vectorized numpy implementation of the Gaussian sample kernel.

This is the reference the Cython kernel in ``_kernels.pyx`` must match
bit-for-bit. Only IEEE basic operations (+, -, *, /, sqrt) and exact
integer/frexp manipulations are used, so the output does not depend on
the platform's libm or on numpy's SIMD transcendental routines.

Layout of the stream: uniform number ``k`` of a stream with key ``K`` is
``mix64(K + (k + 1) * GOLDEN)`` (the SplitMix64 sequence, indexed directly).
Uniforms ``2j`` and ``2j + 1`` feed one Box-Muller pair, producing
samples ``2j`` (cosine branch) and ``2j + 1`` (sine branch).
"""

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

_TWO_M53 = 2.0**-53
_TWO_53 = np.uint64(1 << 53)
_HALF_TURN_BIAS = np.uint64(1 << 50)
_LOW51 = np.uint64((1 << 51) - 1)
_ANGLE_STEP = 6.975736996017264e-16  # 2*pi / 2**53
_LN2 = 0.6931471805599453
_SQRT_HALF = 0.7071067811865476

# Taylor coefficients, highest order first (Horner order).
_SIN = (
    2.8114572543455206e-15,
    -7.647163731819816e-13,
    1.6059043836821613e-10,
    -2.505210838544172e-08,
    2.7557319223985893e-06,
    -0.0001984126984126984,
    0.008333333333333333,
    -0.16666666666666666,
    1.0,
)
_COS = (
    -1.5619206968586225e-16,
    4.779477332387385e-14,
    -1.1470745597729725e-11,
    2.08767569878681e-09,
    -2.755731922398589e-07,
    2.48015873015873e-05,
    -0.001388888888888889,
    0.041666666666666664,
    -0.5,
    1.0,
)
# 1 / (2k + 1) for the atanh series of log.
_LOG = (
    0.043478260869565216,
    0.047619047619047616,
    0.05263157894736842,
    0.058823529411764705,
    0.06666666666666667,
    0.07692307692307693,
    0.09090909090909091,
    0.1111111111111111,
    0.14285714285714285,
    0.2,
    0.3333333333333333,
    1.0,
)


def mix64(z):
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)."""
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _horner(coeffs, x):
    acc = np.full_like(x, coeffs[0])
    for c in coeffs[1:]:
        acc = acc * x + c
    return acc


def _log_unit(u):
    """Natural log for u in (0, 1]."""
    f, e = np.frexp(u)
    small = f < _SQRT_HALF
    f = np.where(small, f * 2.0, f)
    e = np.where(small, e - 1, e).astype(np.float64)
    s = (f - 1.0) / (f + 1.0)
    return e * _LN2 + 2.0 * s * _horner(_LOG, s * s)


def _sincos_turn(bits):
    """(cos, sin) of 2*pi*bits/2**53 for 53-bit integer ``bits``."""
    t = (bits + _HALF_TURN_BIAS) & (_TWO_53 - np.uint64(1))
    quadrant = (t >> np.uint64(51)).astype(np.int64)
    rem = (t & _LOW51).astype(np.int64) - (1 << 50)
    theta = rem.astype(np.float64) * _ANGLE_STEP
    th2 = theta * theta
    s = theta * _horner(_SIN, th2)
    c = _horner(_COS, th2)
    cos_out = np.select([quadrant == 0, quadrant == 1, quadrant == 2], [c, -s, -c], s)
    sin_out = np.select([quadrant == 0, quadrant == 1, quadrant == 2], [s, c, -s], -c)
    return cos_out, sin_out


def gauss_fill(key, counter, out):
    """Fill the float64 vector ``out`` with standard normals.

    Samples start at uniform index ``counter`` (must be even) of the stream
    keyed by ``key``. Returns the number of uniforms consumed.
    """
    count = out.shape[0]
    pairs = (count + 1) // 2
    if pairs == 0:
        return 0
    with np.errstate(over="ignore"):
        idx = np.arange(pairs, dtype=np.uint64) * np.uint64(2) + np.uint64(counter)
        base = np.uint64(key) + (idx + np.uint64(1)) * GOLDEN
        b1 = mix64(base) >> np.uint64(11)
        b2 = mix64(base + GOLDEN) >> np.uint64(11)
    u1 = (_TWO_53 - b1).astype(np.float64) * _TWO_M53
    radius = np.sqrt(-2.0 * _log_unit(u1))
    cos_t, sin_t = _sincos_turn(b2)
    z = np.empty(2 * pairs)
    z[0::2] = radius * cos_t
    z[1::2] = radius * sin_t
    out[:] = z[:count]
    return 2 * pairs
