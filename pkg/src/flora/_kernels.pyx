# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Gaussian sample kernel.

Must stay bit-identical to ``flora._fallback.gauss_fill``; every floating
point expression below is written in the same evaluation order as the
numpy version. Build with ``-ffp-contract=off`` so no FMA is fused in.
"""

from libc.math cimport sqrt, frexp
from libc.stdint cimport uint64_t, int64_t

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t M2 = 0x94D049BB133111EBULL
cdef uint64_t TWO_53 = 1ULL << 53
cdef uint64_t HALF_TURN_BIAS = 1ULL << 50
cdef uint64_t LOW51 = (1ULL << 51) - 1
cdef double TWO_M53 = 1.1102230246251565e-16
cdef double ANGLE_STEP = 6.975736996017264e-16
cdef double LN2 = 0.6931471805599453
cdef double SQRT_HALF = 0.7071067811865476


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    return z ^ (z >> 31)


cdef inline double log_unit(double u) nogil:
    cdef int e
    cdef double f = frexp(u, &e)
    if f < SQRT_HALF:
        f = f * 2.0
        e = e - 1
    cdef double s = (f - 1.0) / (f + 1.0)
    cdef double x = s * s
    cdef double p = 0.043478260869565216
    p = p * x + 0.047619047619047616
    p = p * x + 0.05263157894736842
    p = p * x + 0.058823529411764705
    p = p * x + 0.06666666666666667
    p = p * x + 0.07692307692307693
    p = p * x + 0.09090909090909091
    p = p * x + 0.1111111111111111
    p = p * x + 0.14285714285714285
    p = p * x + 0.2
    p = p * x + 0.3333333333333333
    p = p * x + 1.0
    return <double>e * LN2 + 2.0 * s * p


cdef inline void sincos_turn(uint64_t bits, double* cos_out, double* sin_out) nogil:
    cdef uint64_t t = (bits + HALF_TURN_BIAS) & (TWO_53 - 1)
    cdef int quadrant = <int>(t >> 51)
    cdef int64_t rem = <int64_t>(t & LOW51) - (1LL << 50)
    cdef double theta = <double>rem * ANGLE_STEP
    cdef double th2 = theta * theta
    cdef double ps = 2.8114572543455206e-15
    ps = ps * th2 + -7.647163731819816e-13
    ps = ps * th2 + 1.6059043836821613e-10
    ps = ps * th2 + -2.505210838544172e-08
    ps = ps * th2 + 2.7557319223985893e-06
    ps = ps * th2 + -0.0001984126984126984
    ps = ps * th2 + 0.008333333333333333
    ps = ps * th2 + -0.16666666666666666
    ps = ps * th2 + 1.0
    cdef double s = theta * ps
    cdef double c = -1.5619206968586225e-16
    c = c * th2 + 4.779477332387385e-14
    c = c * th2 + -1.1470745597729725e-11
    c = c * th2 + 2.08767569878681e-09
    c = c * th2 + -2.755731922398589e-07
    c = c * th2 + 2.48015873015873e-05
    c = c * th2 + -0.001388888888888889
    c = c * th2 + 0.041666666666666664
    c = c * th2 + -0.5
    c = c * th2 + 1.0
    if quadrant == 0:
        cos_out[0] = c
        sin_out[0] = s
    elif quadrant == 1:
        cos_out[0] = -s
        sin_out[0] = c
    elif quadrant == 2:
        cos_out[0] = -c
        sin_out[0] = -s
    else:
        cos_out[0] = s
        sin_out[0] = -c


def gauss_fill(uint64_t key, uint64_t counter, double[::1] out):
    """Fill ``out`` with standard normals starting at uniform index ``counter``.

    Returns the number of uniforms consumed (always even).
    """
    cdef Py_ssize_t count = out.shape[0]
    cdef Py_ssize_t pairs = (count + 1) // 2
    cdef Py_ssize_t j
    cdef uint64_t base, b1, b2
    cdef double radius, cs, sn
    with nogil:
        for j in range(pairs):
            base = key + (counter + 2 * <uint64_t>j + 1) * GOLDEN
            b1 = mix64(base) >> 11
            b2 = mix64(base + GOLDEN) >> 11
            radius = sqrt(-2.0 * log_unit(<double>(TWO_53 - b1) * TWO_M53))
            sincos_turn(b2, &cs, &sn)
            out[2 * j] = radius * cs
            if 2 * j + 1 < count:
                out[2 * j + 1] = radius * sn
    return 2 * pairs
