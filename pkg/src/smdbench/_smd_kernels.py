"""Compiled SMD1-SMD12 formulas.

Each problem provides ``upper_parts`` / ``lower_parts`` returning the three
additive components ``(F1, F2, F3)`` / ``(f1, f2, f3)`` and, for SMD9-SMD12,
``upper_cons`` / ``lower_cons`` returning constraint values (feasible iff
``>= 0``). All kernels share the signature ``(xu, xl, dims, theta)`` where
``dims = (p, q, r, s)`` and ``theta`` holds problem parameters.
"""

import math

import numpy as np
from numba import njit

from ._types import cons_kernel, parts_kernel

_jit = njit(cache=True, fastmath=False)

TWO_PI = 2.0 * math.pi


# -- building blocks ---------------------------------------------------------

@_jit
def _sq(x, lo, hi, shift):
    acc = 0.0
    for i in range(lo, hi):
        d = x[i] - shift
        acc += d * d
    return acc


@_jit
def _rastrigin(x, lo, hi):
    acc = float(hi - lo)
    for i in range(lo, hi):
        acc += x[i] * x[i] - math.cos(TWO_PI * x[i])
    return acc


@_jit
def _rosenbrock(x, lo, hi):
    # first difference squared; see notes on the banana term
    acc = 0.0
    for i in range(lo, hi - 1):
        a = x[i + 1] - x[i] * x[i]
        b = x[i] - 1.0
        acc += a * a + b * b
    return acc


@_jit
def _cubic_cons(out, offset, x, lo, hi, extra):
    # x_j - sum_{i != j} x_i^3 - extra, for j in [lo, hi)
    tot = 0.0
    for i in range(lo, hi):
        tot += x[i] ** 3
    for j in range(lo, hi):
        out[offset + j - lo] = x[j] - (tot - x[j] ** 3) - extra


@_jit
def _cube_sum(x, lo, hi):
    acc = 0.0
    for i in range(lo, hi):
        acc += x[i] ** 3
    return acc


@cons_kernel
def no_cons(xu, xl, dims, theta):
    return np.empty(0)


# -- SMD1 ----------------------------------------------------------------------

@parts_kernel
def smd1_upper(xu, xl, dims, theta):
    p, q, r, s = dims
    t = 0.0
    for i in range(r):
        d = xu[p + i] - math.tan(xl[q + s + i])
        t += d * d
    return _sq(xu, 0, p, 0.0), _sq(xl, 0, q, 0.0), _sq(xu, p, p + r, 0.0) + t


@parts_kernel
def smd1_lower(xu, xl, dims, theta):
    p, q, r, s = dims
    t = 0.0
    for i in range(r):
        d = xu[p + i] - math.tan(xl[q + s + i])
        t += d * d
    return _sq(xu, 0, p, 0.0), _sq(xl, 0, q, 0.0), t


# -- SMD2 ----------------------------------------------------------------------

@_jit
def _smd2_inter(xu, xl, p, q, r):
    t = 0.0
    for i in range(r):
        d = xu[p + i] - math.log(xl[q + i])
        t += d * d
    return t


@parts_kernel
def smd2_upper(xu, xl, dims, theta):
    p, q, r, s = dims
    return (_sq(xu, 0, p, 0.0), -_sq(xl, 0, q, 0.0),
            _sq(xu, p, p + r, 0.0) - _smd2_inter(xu, xl, p, q, r))


@parts_kernel
def smd2_lower(xu, xl, dims, theta):
    p, q, r, s = dims
    return _sq(xu, 0, p, 0.0), _sq(xl, 0, q, 0.0), _smd2_inter(xu, xl, p, q, r)


# -- SMD3 ----------------------------------------------------------------------

@_jit
def _smd3_inter(xu, xl, p, q, r):
    t = 0.0
    for i in range(r):
        d = xu[p + i] * xu[p + i] - math.tan(xl[q + i])
        t += d * d
    return t


@parts_kernel
def smd3_upper(xu, xl, dims, theta):
    p, q, r, s = dims
    return (_sq(xu, 0, p, 0.0), _sq(xl, 0, q, 0.0),
            _sq(xu, p, p + r, 0.0) + _smd3_inter(xu, xl, p, q, r))


@parts_kernel
def smd3_lower(xu, xl, dims, theta):
    p, q, r, s = dims
    return _sq(xu, 0, p, 0.0), _rastrigin(xl, 0, q), _smd3_inter(xu, xl, p, q, r)


# -- SMD4 ----------------------------------------------------------------------

@_jit
def _smd4_inter(xu, xl, p, q, r):
    t = 0.0
    for i in range(r):
        d = abs(xu[p + i]) - math.log1p(xl[q + i])
        t += d * d
    return t


@parts_kernel
def smd4_upper(xu, xl, dims, theta):
    p, q, r, s = dims
    return (_sq(xu, 0, p, 0.0), -_sq(xl, 0, q, 0.0),
            _sq(xu, p, p + r, 0.0) - _smd4_inter(xu, xl, p, q, r))


@parts_kernel
def smd4_lower(xu, xl, dims, theta):
    p, q, r, s = dims
    return _sq(xu, 0, p, 0.0), _rastrigin(xl, 0, q), _smd4_inter(xu, xl, p, q, r)


# -- SMD5 ----------------------------------------------------------------------

@_jit
def _smd5_inter(xu, xl, p, q, r):
    t = 0.0
    for i in range(r):
        d = abs(xu[p + i]) - xl[q + i] * xl[q + i]
        t += d * d
    return t


@parts_kernel
def smd5_upper(xu, xl, dims, theta):
    p, q, r, s = dims
    return (_sq(xu, 0, p, 0.0), -_rosenbrock(xl, 0, q),
            _sq(xu, p, p + r, 0.0) - _smd5_inter(xu, xl, p, q, r))


@parts_kernel
def smd5_lower(xu, xl, dims, theta):
    p, q, r, s = dims
    return _sq(xu, 0, p, 0.0), _rosenbrock(xl, 0, q), _smd5_inter(xu, xl, p, q, r)


# -- SMD6 ----------------------------------------------------------------------

@_jit
def _smd6_inter(xu, xl, p, q, r, s):
    t = 0.0
    for i in range(r):
        d = xu[p + i] - xl[q + s + i]
        t += d * d
    return t


@_jit
def _valley(xl, q, s):
    # consecutive pairs of the extra block: (q, q+1), (q+2, q+3), ...
    acc = 0.0
    for i in range(q, q + s - 1, 2):
        d = xl[i + 1] - xl[i]
        acc += d * d
    return acc


@parts_kernel
def smd6_upper(xu, xl, dims, theta):
    p, q, r, s = dims
    return (_sq(xu, 0, p, 0.0), -_sq(xl, 0, q, 0.0) + _sq(xl, q, q + s, 0.0),
            _sq(xu, p, p + r, 0.0) - _smd6_inter(xu, xl, p, q, r, s))


@parts_kernel
def smd6_lower(xu, xl, dims, theta):
    p, q, r, s = dims
    return (_sq(xu, 0, p, 0.0), _sq(xl, 0, q, 0.0) + _valley(xl, q, s),
            _smd6_inter(xu, xl, p, q, r, s))


# -- SMD7 ----------------------------------------------------------------------

@parts_kernel
def smd7_upper(xu, xl, dims, theta):
    p, q, r, s = dims
    prod = 1.0
    for i in range(p):
        prod *= math.cos(xu[i] / math.sqrt(i + 1.0))
    f1 = 1.0 + _sq(xu, 0, p, 0.0) / 400.0 - prod
    return (f1, -_sq(xl, 0, q, 0.0),
            _sq(xu, p, p + r, 0.0) - _smd2_inter(xu, xl, p, q, r))


@parts_kernel
def smd7_lower(xu, xl, dims, theta):
    p, q, r, s = dims
    return _cube_sum(xu, 0, p), _sq(xl, 0, q, 0.0), _smd2_inter(xu, xl, p, q, r)


# -- SMD8 ----------------------------------------------------------------------

@_jit
def _smd8_inter(xu, xl, p, q, r):
    t = 0.0
    for i in range(r):
        d = xu[p + i] - xl[q + i] ** 3
        t += d * d
    return t


@parts_kernel
def smd8_upper(xu, xl, dims, theta):
    p, q, r, s = dims
    c = 0.0
    for i in range(p):
        c += math.cos(TWO_PI * xu[i])
    ackley = (20.0 + math.e - 20.0 * math.exp(-0.2 * math.sqrt(_sq(xu, 0, p, 0.0) / p))
              - math.exp(c / p))
    return (ackley, -_rosenbrock(xl, 0, q),
            _sq(xu, p, p + r, 0.0) - _smd8_inter(xu, xl, p, q, r))


@parts_kernel
def smd8_lower(xu, xl, dims, theta):
    p, q, r, s = dims
    a = 0.0
    for i in range(p):
        a += abs(xu[i])
    return a, _rosenbrock(xl, 0, q), _smd8_inter(xu, xl, p, q, r)


# -- SMD9 ----------------------------------------------------------------------

@_jit
def _smd9_inter(xu, xl, p, q, r):
    t = 0.0
    for i in range(r):
        d = xu[p + i] - math.log1p(xl[q + i])
        t += d * d
    return t


@parts_kernel
def smd9_upper(xu, xl, dims, theta):
    p, q, r, s = dims
    return (_sq(xu, 0, p, 0.0), -_sq(xl, 0, q, 0.0),
            _sq(xu, p, p + r, 0.0) - _smd9_inter(xu, xl, p, q, r))


@parts_kernel
def smd9_lower(xu, xl, dims, theta):
    p, q, r, s = dims
    return _sq(xu, 0, p, 0.0), _sq(xl, 0, q, 0.0), _smd9_inter(xu, xl, p, q, r)


@_jit
def annulus(radius_sq, a, b):
    # feasible iff radius_sq / a lies in [k, k + 1 - 0.5 / b) for some integer k
    u = radius_sq / a
    return u - math.floor(u + 0.5 / b)


@cons_kernel
def smd9_upper_cons(xu, xl, dims, theta):
    out = np.empty(1)
    out[0] = annulus(_sq(xu, 0, xu.size, 0.0), theta[0], theta[1])
    return out


@cons_kernel
def smd9_lower_cons(xu, xl, dims, theta):
    out = np.empty(1)
    out[0] = annulus(_sq(xl, 0, xl.size, 0.0), theta[0], theta[1])
    return out


# -- SMD10 ---------------------------------------------------------------------

@parts_kernel
def smd10_upper(xu, xl, dims, theta):
    p, q, r, s = dims
    t = 0.0
    for i in range(r):
        d = xu[p + i] - math.tan(xl[q + i])
        t += d * d
    return _sq(xu, 0, p, 2.0), _sq(xl, 0, q, 0.0), _sq(xu, p, p + r, 2.0) - t


@parts_kernel
def smd10_lower(xu, xl, dims, theta):
    p, q, r, s = dims
    t = 0.0
    for i in range(r):
        d = xu[p + i] - math.tan(xl[q + i])
        t += d * d
    return _sq(xu, 0, p, 0.0), _sq(xl, 0, q, 2.0), t


@_jit
def _upper_cubic_block(out, offset, xu, p, r):
    _cubic_cons(out, offset, xu, 0, p, _cube_sum(xu, p, p + r))
    _cubic_cons(out, offset + p, xu, p, p + r, _cube_sum(xu, 0, p))


@cons_kernel
def smd10_upper_cons(xu, xl, dims, theta):
    p, q, r, s = dims
    out = np.empty(p + r)
    _upper_cubic_block(out, 0, xu, p, r)
    return out


@cons_kernel
def smd10_lower_cons(xu, xl, dims, theta):
    p, q, r, s = dims
    out = np.empty(q)
    _cubic_cons(out, 0, xl, 0, q, 0.0)
    return out


# -- SMD11 ---------------------------------------------------------------------

@parts_kernel
def smd11_upper(xu, xl, dims, theta):
    return smd2_upper(xu, xl, dims, theta)


@parts_kernel
def smd11_lower(xu, xl, dims, theta):
    return smd2_lower(xu, xl, dims, theta)


@cons_kernel
def smd11_upper_cons(xu, xl, dims, theta):
    p, q, r, s = dims
    out = np.empty(r)
    c = 1.0 / math.sqrt(r)
    for j in range(r):
        out[j] = xu[p + j] - c - math.log(xl[q + j])
    return out


@cons_kernel
def smd11_lower_cons(xu, xl, dims, theta):
    p, q, r, s = dims
    out = np.empty(1)
    out[0] = _smd2_inter(xu, xl, p, q, r) - 1.0
    return out


# -- SMD12 ---------------------------------------------------------------------

@parts_kernel
def smd12_upper(xu, xl, dims, theta):
    p, q, r, s = dims
    t = 0.0
    ta = 0.0
    for i in range(r):
        d = xu[p + i] - math.tan(xl[q + i])
        t += d * d
        ta += math.tan(abs(xl[q + i]))
    return _sq(xu, 0, p, 2.0), _sq(xl, 0, q, 0.0), _sq(xu, p, p + r, 2.0) + ta - t


@parts_kernel
def smd12_lower(xu, xl, dims, theta):
    return smd10_lower(xu, xl, dims, theta)


@cons_kernel
def smd12_upper_cons(xu, xl, dims, theta):
    p, q, r, s = dims
    out = np.empty(p + 2 * r)
    for i in range(r):
        out[i] = xu[p + i] - math.tan(xl[q + i])
    _upper_cubic_block(out, r, xu, p, r)
    return out


@cons_kernel
def smd12_lower_cons(xu, xl, dims, theta):
    p, q, r, s = dims
    out = np.empty(1 + q)
    t = 0.0
    for i in range(r):
        d = xu[p + i] - math.tan(xl[q + i])
        t += d * d
    out[0] = t - 1.0
    _cubic_cons(out, 1, xl, 0, q, 0.0)
    return out


KERNELS = {
    1: (smd1_upper, smd1_lower, no_cons, no_cons),
    2: (smd2_upper, smd2_lower, no_cons, no_cons),
    3: (smd3_upper, smd3_lower, no_cons, no_cons),
    4: (smd4_upper, smd4_lower, no_cons, no_cons),
    5: (smd5_upper, smd5_lower, no_cons, no_cons),
    6: (smd6_upper, smd6_lower, no_cons, no_cons),
    7: (smd7_upper, smd7_lower, no_cons, no_cons),
    8: (smd8_upper, smd8_lower, no_cons, no_cons),
    9: (smd9_upper, smd9_lower, smd9_upper_cons, smd9_lower_cons),
    10: (smd10_upper, smd10_lower, smd10_upper_cons, smd10_lower_cons),
    11: (smd11_upper, smd11_lower, smd11_upper_cons, smd11_lower_cons),
    12: (smd12_upper, smd12_lower, smd12_upper_cons, smd12_lower_cons),
}
