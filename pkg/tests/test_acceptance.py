"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line shown in the terminal summary, then
asserts. The 5-variable campaign is solved once per session and shared.
"""

import math

import numpy as np
import pytest

import oracle
from smdbench.bench import RunSpec, run_suite, summarize
from smdbench.construction import StackelbergParams, stackelberg_optimum, stackelberg_problem
from smdbench.core import Dims
from smdbench.smd import ProblemId, evaluate, instantiate, known_optimum, psi_reference
from smdbench.solver import GAConfig, solve

# median total LL FE of the 5-variable runs, as published
PUBLISHED_LL_FE = {1: 375488, 2: 332197, 3: 315598, 4: 366294, 5: 457265, 6: 427114,
                   7: 333629, 8: 582583, 9: 284648, 10: 277696, 11: 13408524, 12: 12950512}


def five(n):
    return Dims(1, 0, 1, 2) if n == 6 else Dims(1, 2, 1)


def report(criteria, name, failures, detail):
    ok = not failures
    criteria[name] = (ok, detail if ok else f"{detail}; failing: {'; '.join(failures)}")
    assert ok, criteria[name][1]


@pytest.fixture(scope="session")
def campaign():
    spec = RunSpec(problems=tuple(ProblemId), dims=5, runs=11, base_seed=1, audit=True)
    records = run_suite(spec)
    return records, summarize(records, spec.solved_threshold)


# -- optimum reproduction ------------------------------------------------------------

def _expected_optimum(n, d):
    """Optimum point and values built from the closed-form statements alone."""
    if n in (10, 12):
        t = 1 / math.sqrt(d.p + d.r - 1)
        xu = np.full(d.p + d.r, t)
        xl1 = np.full(d.q, 1 / math.sqrt(d.q - 1))
        shift = 1 / math.sqrt(d.r) if n == 12 else 0.0
        xl = np.concatenate([xl1, np.arctan(np.full(d.r, t - shift))])
        F, f, _, _ = oracle.evaluate(n, xu, xl, d.as_tuple())
        return xu, xl, sum(F), sum(f)
    F_star, f_star = (-1.0, 1.0) if n == 11 else (0.0, 0.0)
    return None, None, F_star, f_star


def test_optimum_reproduction(criteria):
    failures = []
    for n in range(1, 13):
        d = five(n)
        inst = instantiate(n, d)
        opt = known_optimum(inst)
        out = evaluate(inst, opt.x_star)
        xu, xl, F_star, f_star = _expected_optimum(n, d)
        if xu is not None and not (np.allclose(opt.x_star.upper, xu, atol=1e-12)
                                   and np.allclose(opt.x_star.lower, xl, atol=1e-12)):
            failures.append(f"SMD{n} x*")
        if abs(out.F - F_star) > 1e-9 or abs(out.f - f_star) > 1e-9:
            failures.append(f"SMD{n} got ({out.F:.3g}, {out.f:.3g}) want ({F_star}, {f_star})")
    report(criteria, "optimum reproduction", failures,
           "evaluate(known optimum) matches (F*, f*) within 1e-9 for SMD1-SMD12")


# -- lower-level reference against brute force -----------------------------------------

MINIMAL = {n: (Dims(1, 0, 1, 2) if n == 6 else Dims(1, 2, 1) if n in (5, 10, 12)
               else Dims(1, 1, 1)) for n in range(1, 13)}


def _grid(lo, hi, n_points):
    per_axis = int(math.ceil(n_points ** (1 / lo.size)))
    axes = [np.linspace(a, b, per_axis) for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.size)


def _compass(n, xu, x, fx, lo, hi, dims, step0):
    # feasible-only pattern search, every neighbour scored in one batch
    m = x.size
    dirs = np.vstack([np.eye(m), -np.eye(m)])
    step = step0.copy()
    while np.max(step / (hi - lo)) > 1e-12:
        cand = np.clip(x + dirs * step, lo, hi)
        f, v = oracle.lower(n, xu, cand, dims)
        f = np.where(v > 0, np.inf, f)
        k = int(np.argmin(f))
        if f[k] < fx:
            x, fx = cand[k], f[k]
        else:
            step = step / 2
    return x, fx


def brute_force_lower(n, inst, xu, n_points=10_000, starts=3):
    lo, hi = inst.lower_bounds.inner_lower, inst.lower_bounds.inner_upper
    d = inst.dims.as_tuple()
    pts = _grid(lo, hi, n_points)
    f, v = oracle.lower(n, xu, pts, d)
    f = np.where(v > 0, np.inf, f)
    best = np.inf
    spacing = (hi - lo) / (round(len(pts) ** (1 / lo.size)) - 1)
    for k in np.argsort(f)[:starts]:
        if not np.isfinite(f[k]):
            break
        _, fx = _compass(n, xu, pts[k], f[k], lo, hi, d, spacing)
        best = min(best, fx)
    return best


def test_psi_reference_matches_brute_force(criteria):
    failures = []
    worst = 0.0
    for n in range(1, 13):
        inst = instantiate(n, MINIMAL[n])
        rng = np.random.default_rng(100 + n)
        d = inst.dims.as_tuple()
        for _ in range(100):
            xu = inst.upper_bounds.sample(rng)
            ref = psi_reference(inst, xu)
            f_ref, v_ref = oracle.lower(n, xu, ref.xl_star, d)
            brute = brute_force_lower(n, inst, xu)
            gap = f_ref - brute
            worst = max(worst, gap)
            if v_ref > 0 or gap > 1e-4:
                failures.append(f"SMD{n} xu={np.round(xu, 4).tolist()} gap={gap:.2e} "
                                f"violation={v_ref:.1e}")
                break
    report(criteria, "lower-level reference vs brute force", failures,
           f"100 upper points per problem; largest excess of reference over search {worst:.2e}")


# -- leader/follower equilibrium -----------------------------------------------------

STACKELBERG_SETS = [StackelbergParams(10, 1, 1, 3, 0, 1, 3, 0),
                    StackelbergParams(20, 2, 0.5, 4, 1, 1.5, 2, 0.5),
                    StackelbergParams(8, 0.5, 2, 1, 0, 0.5, 2, 0)]


def test_stackelberg_recovery(criteria):
    cfg = GAConfig(alpha_stop_upper=1e-7, alpha_stop_lower=1e-7)
    failures, counts = [], []
    for params in STACKELBERG_SETS:
        opt = stackelberg_optimum(params)
        inst = stackelberg_problem(params)
        hits = 0
        for seed in range(1, 12):
            best = solve(inst, cfg, seed).best
            hits += bool(abs(best.upper[0] - opt.q_l) <= 1e-2 and abs(best.lower[0] - opt.q_f) <= 1e-2
                         and best.feasible)
        counts.append(hits)
        if hits < 9:
            failures.append(f"{tuple(params)}: {hits}/11")
    report(criteria, "leader/follower equilibrium", failures,
           f"successes per parameter set {counts}/11, need >= 9")


# -- campaign ------------------------------------------------------------------------

def test_campaign_unconstrained(criteria, campaign):
    records, table = campaign
    failures, detail = [], []
    for n in range(1, 9):
        row = table.row(n)
        solved = sum(r.solved for r in records if r.problem == f"SMD{n}")
        ratio = row.median_ll_fe / PUBLISHED_LL_FE[n]
        detail.append(f"SMD{n} {solved}/11 acc={row.median_ul_accuracy:.1e} fe x{ratio:.2f}")
        if solved < 9:
            failures.append(f"SMD{n} solved {solved}/11")
        if row.median_ul_accuracy > 1e-2:
            failures.append(f"SMD{n} median accuracy {row.median_ul_accuracy:.3g}")
        if not 1 / 5 <= ratio <= 5:
            failures.append(f"SMD{n} LL FE ratio {ratio:.2f}")
    report(criteria, "5-variable campaign SMD1-SMD8", failures, ", ".join(detail))


def test_campaign_constrained(criteria, campaign):
    records, table = campaign
    limits = {9: 0.05, 10: 0.1, 11: 0.1, 12: 0.1}
    failures, detail = [], []
    for n, limit in limits.items():
        runs = [r for r in records if r.problem == f"SMD{n}"]
        feasible = sum(r.feasible for r in runs)
        acc = table.row(n).median_ul_accuracy
        detail.append(f"SMD{n} feasible {feasible}/11 acc={acc:.2e}")
        if feasible < 11:
            failures.append(f"SMD{n} feasible in {feasible}/11")
        if acc > limit:
            failures.append(f"SMD{n} median accuracy {acc:.3g} > {limit}")
    report(criteria, "5-variable constrained SMD9-SMD12", failures, ", ".join(detail))


def test_accounting_identity(criteria, campaign):
    records, _ = campaign
    failures = [f"{r.problem} seed {r.seed}" for r in records
                if not (r.ul_fe == r.ll_calls == r.audit_ul_fe and r.ll_fe == r.audit_ll_fe
                        and not r.error)]
    report(criteria, "accounting identity", failures,
           f"{len(records)} runs, ul_fe = ll_calls and audited counts agree")


# -- deterministic structure -----------------------------------------------------------

COOPERATIVE = {1, 3}


def test_interaction_signs(criteria):
    failures = []
    for n in range(1, 13):
        d = Dims(1, 2, 1, 2) if n == 6 else Dims(1, 2, 1)
        inst = instantiate(n, d)
        if inst.properties.cooperative != (n in COOPERATIVE):
            failures.append(f"SMD{n} property flag")
        rng = np.random.default_rng(n)
        for _ in range(20):
            xu = inst.upper_bounds.sample(rng)
            xl = np.array(psi_reference(inst, xu).xl_star)
            step = rng.normal(size=d.q)
            step *= 1e-3 / np.linalg.norm(step)
            (_, F2a, _), (_, f2a, _) = inst.components(xu, xl)
            moved = xl.copy()
            moved[:d.q] += step  # only the first q entries; SMD6 pairs are a separate block
            if inst.components(xu, moved)[1][1] < f2a:
                # xl1 can sit off the f2 minimum (SMD9 ring, SMD10/12 caps), so move uphill
                moved[:d.q] -= 2 * step
            (_, F2b, _), (_, f2b, _) = inst.components(xu, moved)
            if not f2b > f2a:
                failures.append(f"SMD{n} f2 did not increase")
                break
            if (F2b > F2a) != (n in COOPERATIVE):
                failures.append(f"SMD{n} F2 moved the wrong way")
                break
    report(criteria, "co-operation and conflict signs", failures,
           "SMD1, SMD3 co-operate; the other ten conflict")


def test_smd6_valley(criteria):
    failures = []
    rng = np.random.default_rng(6)
    for d in (Dims(1, 0, 1, 2), Dims(2, 1, 2, 4)):
        inst = instantiate(6, d)
        xu = inst.upper_bounds.sample(rng)
        rep = np.array(psi_reference(inst, xu).xl_star)
        out_rep = inst.evaluate_flat(xu, rep)
        Fs = []
        for _ in range(1000):
            xl = rep.copy()
            t = rng.uniform(-5, 10, d.s // 2)
            xl[d.q:d.q + d.s] = np.repeat(t, 2)
            out = inst.evaluate_flat(xu, xl)
            if abs(out.f - out_rep.f) > 1e-12:
                failures.append(f"dims {d.as_tuple()} f gap {abs(out.f - out_rep.f):.1e}")
                break
            Fs.append(out.F)
        if np.ptp(Fs) <= 0:
            failures.append(f"dims {d.as_tuple()} F constant along the valley")
        if out_rep.F > min(Fs):
            failures.append(f"dims {d.as_tuple()} representative not F-minimal")
    report(criteria, "SMD6 multiple lower optima", failures,
           "1000 valley points per configuration share f; the origin pair has the least F")
