"""Compiled steady-state GA used at both levels of the nested solver.

Problem callbacks are numba-compiled functions with the signature
``fn(xu, xl, dims, theta)``: ``*_parts`` return a 3-tuple of objective
components, ``*_cons`` return constraint values (feasible iff ``>= 0``).

Integer and float settings travel as two small arrays indexed by the
constants below, so a single compiled specialisation serves every config.
"""

import math

import numpy as np
from numba import njit, types

from ._types import ARRAY, CONS_FN, DIMS, PARTS_FN, RNG

_jit = njit(cache=True)

# integer settings
I_NPOP_UPPER = 0
I_NPOP_LOWER = 1
I_MU = 2
I_LAMBDA = 3
I_REPLACE = 4
I_MAX_LL_CALLS = 5
I_MAX_LL_EVALS = 6
I_MAX_UL_GENS = 7
I_MAX_LL_GENS = 8
I_PCX_MODE = 9
I_ALPHA_RAW = 10
I_REFLECT = 11
N_INT = 12

# float settings
F_P_CROSS = 0
F_P_MUT = 1
F_ETA_M = 2
F_OMEGA_XI = 3
F_ALPHA_UPPER = 4
F_ALPHA_LOWER = 5
F_SIGMA_ETA = 6
F_SIGMA_ETA_UPPER = 7
N_FLOAT = 8

PCX_AS_PRINTED = 0
PCX_MEAN_ABS = 1
PCX_GAUSSIAN = 2

STOP_ALPHA = 0
STOP_BUDGET = 1

VAR_FLOOR = 1e-12
PCX_FLOOR = 1e-10

TRACE_COLS = 5


@_jit
def violation(cons):
    acc = 0.0
    for c in cons:
        if c < 0.0:
            acc -= c
    return acc


@_jit
def precedes(va, fa, vb, fb):
    """True when (va, fa) is strictly better than (vb, fb)."""
    if va <= 0.0 and vb <= 0.0:
        return fa < fb
    return va < vb


@_jit
def evaluate(parts, cons, xu, xl, dims, theta):
    a, b, c = parts(xu, xl, dims, theta)
    return a + b + c, violation(cons(xu, xl, dims, theta))


@_jit
def sample_indices(n, k, scratch, rng):
    for i in range(n):
        scratch[i] = i
    for i in range(k):
        j = i + int(rng.random() * (n - i))
        scratch[i], scratch[j] = scratch[j], scratch[i]
    return scratch[:k]


@_jit
def alpha(var_now, var_init, raw):
    acc = 0.0
    cnt = 0
    for i in range(var_init.size):
        if var_init[i] > VAR_FLOOR:
            acc += var_now[i] / var_init[i]
            cnt += 1
    if cnt == 0:
        return 0.0
    return acc if raw else acc / cnt


@_jit
def column_variance(pop, out):
    n, m = pop.shape
    for j in range(m):
        mean = 0.0
        for i in range(n):
            mean += pop[i, j]
        mean /= n
        acc = 0.0
        for i in range(n):
            d = pop[i, j] - mean
            acc += d * d
        out[j] = acc / n
    return out


@_jit
def pcx(parents, index, first, second, omega_xi, mode, floor, sigma_eta, rng, out):
    mu, m = parents.shape
    eta = 0.0
    for i in range(m):
        w = 0.0
        for k in range(mu):
            w += parents[k, i]
        w /= mu
        d = abs(parents[index, i] - w)
        if mode == PCX_AS_PRINTED:
            eta += m / max(d, floor[i])
        elif mode == PCX_MEAN_ABS:
            eta += d / m
    if mode == PCX_GAUSSIAN:
        eta = sigma_eta * rng.standard_normal()
    for i in range(m):
        w = 0.0
        for k in range(mu):
            w += parents[k, i]
        w /= mu
        out[i] = (parents[index, i] + omega_xi * (parents[index, i] - w)
                  + eta * (parents[second, i] - parents[first, i]) / 2.0)
    return out


@_jit
def poly_mutate(x, lo, hi, p_mut, eta_m, rng):
    mpow = 1.0 / (eta_m + 1.0)
    for i in range(x.size):
        if rng.random() >= p_mut:
            continue
        u = rng.random()
        width = hi[i] - lo[i]
        if u < 0.5:
            d1 = (x[i] - lo[i]) / width
            val = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta_m + 1.0)
            dq = val ** mpow - 1.0
        else:
            d2 = (hi[i] - x[i]) / width
            val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta_m + 1.0)
            dq = 1.0 - val ** mpow
        x[i] += dq * width
    return clip(x, lo, hi)


@_jit
def reflect(x, lo, hi):
    for i in range(x.size):
        if x[i] < lo[i]:
            x[i] = lo[i] + (lo[i] - x[i])
        elif x[i] > hi[i]:
            x[i] = hi[i] - (x[i] - hi[i])
    return clip(x, lo, hi)


@_jit
def clip(x, lo, hi):
    for i in range(x.size):
        if x[i] < lo[i]:
            x[i] = lo[i]
        elif x[i] > hi[i]:
            x[i] = hi[i]
    return x


@_jit
def tournament(pop_v, pop_f, ip, scratch, rng):
    mu = ip[I_MU]
    picked = sample_indices(pop_f.size, 2 * mu, scratch, rng)
    winners = np.empty(mu, dtype=np.int64)
    for k in range(mu):
        a = picked[2 * k]
        b = picked[2 * k + 1]
        if precedes(pop_v[b], pop_f[b], pop_v[a], pop_f[a]):
            winners[k] = b
        elif precedes(pop_v[a], pop_f[a], pop_v[b], pop_f[b]):
            winners[k] = a
        else:
            winners[k] = min(a, b)
    return winners


@_jit
def make_children(pop, winners, lo, hi, floor, sigma_eta, ip, fp, rng):
    mu = ip[I_MU]
    lam = ip[I_LAMBDA]
    m = pop.shape[1]
    parents = np.empty((mu, m))
    for k in range(mu):
        parents[k] = pop[winners[k]]
    kids = np.empty((lam, m))
    for k in range(lam):
        index = k % mu
        # the other two parents, in selection order
        first = 1 if index == 0 else 0
        second = first + 1
        if second == index:
            second += 1
        if rng.random() < fp[F_P_CROSS]:
            pcx(parents, index, first, second, fp[F_OMEGA_XI], ip[I_PCX_MODE], floor,
                sigma_eta, rng, kids[k])
            if ip[I_REFLECT]:
                reflect(kids[k], lo, hi)
            else:
                clip(kids[k], lo, hi)
        else:
            kids[k] = parents[index]
        poly_mutate(kids[k], lo, hi, fp[F_P_MUT], fp[F_ETA_M], rng)
    return kids


@_jit
def replacement_order(pool_v, pool_f):
    # stable insertion sort; ties keep pool order (incumbents first)
    n = pool_f.size
    order = np.arange(n)
    for i in range(1, n):
        j = i
        while j > 0 and precedes(pool_v[order[j]], pool_f[order[j]],
                                 pool_v[order[j - 1]], pool_f[order[j - 1]]):
            order[j], order[j - 1] = order[j - 1], order[j]
            j -= 1
    return order


@_jit
def best_index(pop_v, pop_f, n):
    best = 0
    for i in range(1, n):
        if precedes(pop_v[i], pop_f[i], pop_v[best], pop_f[best]):
            best = i
    return best


@njit((PARTS_FN, CONS_FN, ARRAY, ARRAY, ARRAY, DIMS, ARRAY, ARRAY, types.boolean,
       types.int64[::1], ARRAY, RNG), cache=True)
def lower_ga(parts, cons, xu, lo, hi, dims, theta, warm, use_warm, ip, fp, rng):
    """Optimise the lower level for fixed ``xu``.

    Returns ``(xl_best, f_best, v_best, evaluations, generations)``.
    """
    n = ip[I_NPOP_LOWER]
    m = lo.size
    pop = np.empty((n, m))
    pop_f = np.empty(n)
    pop_v = np.empty(n)
    n_random = n - 1 if use_warm else n
    for k in range(n):
        if k < n_random:
            for i in range(m):
                pop[k, i] = lo[i] + rng.random() * (hi[i] - lo[i])
        else:
            pop[k] = warm
        pop_f[k], pop_v[k] = evaluate(parts, cons, xu, pop[k], dims, theta)
    evals = n

    floor = (hi - lo) * PCX_FLOOR
    var0 = column_variance(pop, np.empty(m))
    var_now = np.empty(m)
    scratch = np.empty(n, dtype=np.int64)
    r = ip[I_REPLACE]
    lam = ip[I_LAMBDA]
    raw = ip[I_ALPHA_RAW] != 0
    gens = 0
    while gens < ip[I_MAX_LL_GENS]:
        winners = tournament(pop_v, pop_f, ip, scratch, rng)
        kids = make_children(pop, winners, lo, hi, floor, fp[F_SIGMA_ETA], ip, fp, rng)
        kid_f = np.empty(lam)
        kid_v = np.empty(lam)
        for k in range(lam):
            kid_f[k], kid_v[k] = evaluate(parts, cons, xu, kids[k], dims, theta)
        evals += lam

        chosen = sample_indices(n, r, scratch, rng).copy()
        pool = np.empty((r + lam, m))
        pool_f = np.empty(r + lam)
        pool_v = np.empty(r + lam)
        for k in range(r):
            pool[k] = pop[chosen[k]]
            pool_f[k] = pop_f[chosen[k]]
            pool_v[k] = pop_v[chosen[k]]
        for k in range(lam):
            pool[r + k] = kids[k]
            pool_f[r + k] = kid_f[k]
            pool_v[r + k] = kid_v[k]
        order = replacement_order(pool_v, pool_f)
        for k in range(r):
            pop[chosen[k]] = pool[order[k]]
            pop_f[chosen[k]] = pool_f[order[k]]
            pop_v[chosen[k]] = pool_v[order[k]]
        gens += 1
        if alpha(column_variance(pop, var_now), var0, raw) < fp[F_ALPHA_LOWER]:
            break

    b = best_index(pop_v, pop_f, n)
    return pop[b].copy(), pop_f[b], pop_v[b], evals, gens


@_jit
def _keep_best(best_u, best_l, best_vals, xu, xl, F, f, vG, vg):
    # best_vals = (F, f, vG, vg, seen); ranks on vG + vg, then F
    if best_vals[4] == 0.0 or precedes(vG + vg, F, best_vals[2] + best_vals[3], best_vals[0]):
        best_u[:] = xu
        best_l[:] = xl
        best_vals[0] = F
        best_vals[1] = f
        best_vals[2] = vG
        best_vals[3] = vg
        best_vals[4] = 1.0


@_jit
def _nearest(pop_u, n, x):
    best = 0
    best_d = np.inf
    for k in range(n):
        d = 0.0
        for i in range(x.size):
            t = pop_u[k, i] - x[i]
            d += t * t
        if d < best_d:
            best_d = d
            best = k
    return best


@njit((PARTS_FN, CONS_FN, PARTS_FN, CONS_FN, ARRAY, ARRAY, ARRAY, ARRAY, DIMS, ARRAY,
       types.int64[::1], ARRAY, RNG), cache=True)
def nested_ga(up_parts, up_cons, lo_parts, lo_cons, ulo, uhi, llo, lhi, dims, theta,
              ip, fp, rng):
    """Run the full nested algorithm.

    Returns population arrays, the best pair ever evaluated, evaluation
    counters, the stop reason and a per-generation trace ``(gen, best F,
    best f, alpha, cumulative LL FE)`` of that best pair.
    """
    N = ip[I_NPOP_UPPER]
    mu_dim = ulo.size
    ml_dim = llo.size
    pop_u = np.empty((N, mu_dim))
    pop_l = np.empty((N, ml_dim))
    pop_F = np.empty(N)
    pop_f = np.empty(N)
    pop_vG = np.empty(N)
    pop_vg = np.empty(N)
    pop_v = np.empty(N)  # vG + vg: a member is bilevel feasible only if both are zero

    trace = np.zeros((ip[I_MAX_UL_GENS] + 1, TRACE_COLS))
    n_trace = 0
    ll_calls = 0
    ll_fe = 0
    gens = 0
    stop = STOP_BUDGET
    dummy = np.empty(ml_dim)
    best_u = np.zeros(mu_dim)
    best_l = np.zeros(ml_dim)
    best_vals = np.zeros(5)

    n_init = 0
    for k in range(N):
        if ll_calls >= ip[I_MAX_LL_CALLS] or ll_fe >= ip[I_MAX_LL_EVALS]:
            break
        for i in range(mu_dim):
            pop_u[k, i] = ulo[i] + rng.random() * (uhi[i] - ulo[i])
        xl, fl, vl, ev, _ = lower_ga(lo_parts, lo_cons, pop_u[k], llo, lhi, dims, theta,
                                     dummy, False, ip, fp, rng)
        ll_calls += 1
        ll_fe += ev
        pop_l[k] = xl
        pop_f[k] = fl
        pop_vg[k] = vl
        pop_F[k], pop_vG[k] = evaluate(up_parts, up_cons, pop_u[k], xl, dims, theta)
        pop_v[k] = pop_vG[k] + pop_vg[k]
        _keep_best(best_u, best_l, best_vals, pop_u[k], xl, pop_F[k], fl, pop_vG[k], vl)
        n_init += 1

    if n_init < N:
        return (pop_u, pop_l, pop_F, pop_f, pop_vG, pop_vg, n_init, best_u, best_l, best_vals,
                ll_calls, ll_fe, gens, stop, trace, n_trace)

    floor = (uhi - ulo) * PCX_FLOOR
    var0 = column_variance(pop_u, np.empty(mu_dim))
    var_now = np.empty(mu_dim)
    scratch = np.empty(N, dtype=np.int64)
    r = ip[I_REPLACE]
    lam = ip[I_LAMBDA]
    raw = ip[I_ALPHA_RAW] != 0

    trace[0, 0] = 0
    trace[0, 1] = best_vals[0]
    trace[0, 2] = best_vals[1]
    trace[0, 3] = 1.0
    trace[0, 4] = ll_fe
    n_trace = 1

    while True:
        if ll_calls >= ip[I_MAX_LL_CALLS] or ll_fe >= ip[I_MAX_LL_EVALS]:
            stop = STOP_BUDGET
            break
        if gens >= ip[I_MAX_UL_GENS]:
            stop = STOP_BUDGET
            break
        winners = tournament(pop_v, pop_F, ip, scratch, rng)
        kids = make_children(pop_u, winners, ulo, uhi, floor, fp[F_SIGMA_ETA_UPPER], ip, fp, rng)
        kid_l = np.empty((lam, ml_dim))
        kid_F = np.empty(lam)
        kid_f = np.empty(lam)
        kid_vG = np.empty(lam)
        kid_vg = np.empty(lam)
        n_kids = 0
        for k in range(lam):
            if ll_calls >= ip[I_MAX_LL_CALLS] or ll_fe >= ip[I_MAX_LL_EVALS]:
                break
            near = _nearest(pop_u, N, kids[k])
            xl, fl, vl, ev, _ = lower_ga(lo_parts, lo_cons, kids[k], llo, lhi, dims, theta,
                                         pop_l[near], True, ip, fp, rng)
            ll_calls += 1
            ll_fe += ev
            kid_l[k] = xl
            kid_f[k] = fl
            kid_vg[k] = vl
            kid_F[k], kid_vG[k] = evaluate(up_parts, up_cons, kids[k], xl, dims, theta)
            _keep_best(best_u, best_l, best_vals, kids[k], xl, kid_F[k], fl, kid_vG[k], vl)
            n_kids += 1

        chosen = sample_indices(N, r, scratch, rng).copy()
        size = r + n_kids
        pool_u = np.empty((size, mu_dim))
        pool_l = np.empty((size, ml_dim))
        pool_F = np.empty(size)
        pool_f = np.empty(size)
        pool_vG = np.empty(size)
        pool_vg = np.empty(size)
        for k in range(r):
            c = chosen[k]
            pool_u[k] = pop_u[c]
            pool_l[k] = pop_l[c]
            pool_F[k] = pop_F[c]
            pool_f[k] = pop_f[c]
            pool_vG[k] = pop_vG[c]
            pool_vg[k] = pop_vg[c]
        for k in range(n_kids):
            pool_u[r + k] = kids[k]
            pool_l[r + k] = kid_l[k]
            pool_F[r + k] = kid_F[k]
            pool_f[r + k] = kid_f[k]
            pool_vG[r + k] = kid_vG[k]
            pool_vg[r + k] = kid_vg[k]
        order = replacement_order(pool_vG + pool_vg, pool_F)
        for k in range(r):
            c = chosen[k]
            o = order[k]
            pop_u[c] = pool_u[o]
            pop_l[c] = pool_l[o]
            pop_F[c] = pool_F[o]
            pop_f[c] = pool_f[o]
            pop_vG[c] = pool_vG[o]
            pop_vg[c] = pool_vg[o]
            pop_v[c] = pool_vG[o] + pool_vg[o]
        gens += 1

        a = alpha(column_variance(pop_u, var_now), var0, raw)
        trace[n_trace, 0] = gens
        trace[n_trace, 1] = best_vals[0]
        trace[n_trace, 2] = best_vals[1]
        trace[n_trace, 3] = a
        trace[n_trace, 4] = ll_fe
        n_trace += 1
        if a < fp[F_ALPHA_UPPER]:
            stop = STOP_ALPHA
            break

    return (pop_u, pop_l, pop_F, pop_f, pop_vG, pop_vg, N, best_u, best_l, best_vals,
            ll_calls, ll_fe, gens, stop, trace, n_trace)
