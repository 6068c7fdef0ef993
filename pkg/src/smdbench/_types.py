"""Numba signatures shared by problem kernels and the GA engine."""

import numpy as np
from numba import njit, typeof, types

ARRAY = types.float64[::1]
DIMS = types.UniTuple(types.int64, 4)
PARTS_SIG = types.UniTuple(types.float64, 3)(ARRAY, ARRAY, DIMS, ARRAY)
CONS_SIG = ARRAY(ARRAY, ARRAY, DIMS, ARRAY)
PARTS_FN = types.FunctionType(PARTS_SIG)
CONS_FN = types.FunctionType(CONS_SIG)
RNG = typeof(np.random.default_rng(0))

# problem kernels: objective parts and constraint vectors
parts_kernel = njit(PARTS_SIG, cache=True)
cons_kernel = njit(CONS_SIG, cache=True)

# closures over other kernels must not share a disk cache entry
dynamic_parts_kernel = njit(PARTS_SIG)
