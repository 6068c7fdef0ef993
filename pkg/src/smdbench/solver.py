"""Nested bilevel genetic algorithm.

A steady-state real-coded GA runs at the upper level; every new upper vector
gets its own complete lower-level GA run. Both levels share the same loop:
tournament selection of ``mu`` parents from ``2 mu`` members, parent-centric
crossover plus polynomial mutation for ``lambda`` children, and replacement of
``r_repl`` random members by the best of the pooled members and children.
Runs stop on variance contraction or on a budget.

>>> from smdbench.smd import instantiate
>>> from smdbench.core import Dims
>>> res = solve(instantiate("SMD1", Dims(1, 2, 1)), seed=3)
>>> res.ul_fe == res.ll_calls
True
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import _engine as E
from .core import DimensionError, DomainError, total_violation

__all__ = [
    "GAConfig",
    "Individual",
    "SolveResult",
    "solve",
    "lower_optimize",
    "pcx",
    "poly_mutate",
    "compare",
    "alpha",
    "NestedBilevelGA",
    "PCX_MODES",
]

PCX_MODES = {"as_printed": E.PCX_AS_PRINTED, "mean_abs_distance": E.PCX_MEAN_ABS,
             "gaussian": E.PCX_GAUSSIAN}
ALPHA_MODES = ("raw", "normalized")
BOUNDARY_MODES = ("clip", "reflect")
TRACE_HEADER = ("generation", "best_F", "best_f", "alpha_upper", "ll_fe")


@dataclass(frozen=True)
class GAConfig:
    """Settings of the nested GA.

    Parameters
    ----------
    N_p, n_p : int
        Upper and lower population sizes.
    mu, lam, r_repl : int
        Parents per step, children per step and members replaced per step.
    p_cross, p_mut : float
        Crossover probability and per-coordinate mutation probability.
    eta_m : float
        Polynomial mutation distribution index.
    omega_xi : float
        Weight of the index parent's offset from the parent mean.
    pcx_omega_eta : {"gaussian", "as_printed", "mean_abs_distance"}
        How the weight of the difference vector ``(p2 - p1) / 2`` is set.
        ``"gaussian"`` draws it from ``N(0, sigma_eta^2)`` per child;
        ``"as_printed"`` uses ``sum_i m / |x_p^i - w^i|`` with a floored
        denominator; ``"mean_abs_distance"`` uses ``mean_i |x_p^i - w^i|``.
    sigma_eta_upper, sigma_eta_lower : float
        Spread of the gaussian weight at each level.
    alpha_stop_upper, alpha_stop_lower : float
        Variance-contraction thresholds.
    alpha_mode : {"raw", "normalized"}
        ``"raw"`` sums the per-variable variance ratios, ``"normalized"``
        averages them.
    boundary : {"clip", "reflect"}
        How crossover children outside the box are repaired. Mutation always
        clips.
    max_ll_calls, max_ll_evals, max_ul_gens : int
        Run budgets.
    max_ll_gens : int
        Generation cap of a single lower-level run.
    """

    N_p: int = 30
    n_p: int = 30
    mu: int = 3
    lam: int = 3
    r_repl: int = 2
    p_cross: float = 0.9
    p_mut: float = 0.1
    eta_m: float = 20.0
    omega_xi: float = 0.1
    pcx_omega_eta: str = "gaussian"
    sigma_eta_upper: float = 1.5
    sigma_eta_lower: float = 1.0
    alpha_stop_upper: float = 1e-4
    alpha_stop_lower: float = 1e-5
    alpha_mode: str = "raw"
    boundary: str = "reflect"
    max_ll_calls: int = 10_000
    max_ll_evals: int = 25_000_000
    max_ul_gens: int = 5_000
    max_ll_gens: int = 2_000

    def __post_init__(self):
        for name in ("N_p", "n_p", "mu", "lam", "r_repl", "max_ll_calls", "max_ll_evals",
                     "max_ul_gens", "max_ll_gens"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise TypeError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.mu < 3:
            raise ValueError("mu must be >= 3 (crossover uses three parents)")
        if self.lam < 1:
            raise ValueError("lam must be >= 1")
        for pop, name in ((self.N_p, "N_p"), (self.n_p, "n_p")):
            if pop < 2 * self.mu:
                raise ValueError(f"{name} must be >= 2 * mu = {2 * self.mu} for tournament selection")
        if not 0 < self.r_repl <= min(self.N_p, self.n_p):
            raise ValueError("r_repl must satisfy 0 < r_repl <= population size")
        for name in ("p_cross", "p_mut"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("alpha_stop_upper", "alpha_stop_lower", "eta_m"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("sigma_eta_upper", "sigma_eta_lower"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.pcx_omega_eta not in PCX_MODES:
            raise ValueError(f"pcx_omega_eta must be one of {sorted(PCX_MODES)}")
        if self.alpha_mode not in ALPHA_MODES:
            raise ValueError(f"alpha_mode must be one of {ALPHA_MODES}")
        if self.boundary not in BOUNDARY_MODES:
            raise ValueError(f"boundary must be one of {BOUNDARY_MODES}")
        for name in ("max_ll_calls", "max_ll_evals", "max_ul_gens", "max_ll_gens"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def with_overrides(self, **kw) -> "GAConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    def _arrays(self):
        ip = np.zeros(E.N_INT, dtype=np.int64)
        ip[E.I_NPOP_UPPER] = self.N_p
        ip[E.I_NPOP_LOWER] = self.n_p
        ip[E.I_MU] = self.mu
        ip[E.I_LAMBDA] = self.lam
        ip[E.I_REPLACE] = self.r_repl
        ip[E.I_MAX_LL_CALLS] = self.max_ll_calls
        ip[E.I_MAX_LL_EVALS] = self.max_ll_evals
        ip[E.I_MAX_UL_GENS] = self.max_ul_gens
        ip[E.I_MAX_LL_GENS] = self.max_ll_gens
        ip[E.I_PCX_MODE] = PCX_MODES[self.pcx_omega_eta]
        ip[E.I_ALPHA_RAW] = self.alpha_mode == "raw"
        ip[E.I_REFLECT] = self.boundary == "reflect"
        fp = np.zeros(E.N_FLOAT)
        fp[E.F_P_CROSS] = self.p_cross
        fp[E.F_P_MUT] = self.p_mut
        fp[E.F_ETA_M] = self.eta_m
        fp[E.F_OMEGA_XI] = self.omega_xi
        fp[E.F_ALPHA_UPPER] = self.alpha_stop_upper
        fp[E.F_ALPHA_LOWER] = self.alpha_stop_lower
        fp[E.F_SIGMA_ETA] = self.sigma_eta_lower
        fp[E.F_SIGMA_ETA_UPPER] = self.sigma_eta_upper
        return ip, fp


@dataclass(frozen=True, eq=False)
class Individual:
    """A solved pair: upper block plus the lower block found for it."""

    upper: np.ndarray
    lower: np.ndarray
    F: float
    f: float
    vG: float
    vg: float
    valid: bool = True

    @property
    def violation(self) -> float:
        """Upper-level ranking violation: a pair is feasible only if both levels are."""
        return self.vG + self.vg

    @property
    def feasible(self) -> bool:
        return self.violation == 0.0


@dataclass(frozen=True, eq=False)
class SolveResult:
    """Outcome of one nested run.

    ``ul_fe`` counts upper evaluations, which equals ``ll_calls`` because each
    upper evaluation follows exactly one lower-level run.
    """

    best: Optional[Individual]
    ul_fe: int
    ll_fe: int
    ll_calls: int
    generations: int
    terminated_by: str
    seed: Optional[int]
    trace: np.ndarray = field(repr=False, default=None)
    population_upper: np.ndarray = field(repr=False, default=None)
    population_lower: np.ndarray = field(repr=False, default=None)

    @property
    def feasible(self) -> bool:
        return self.best is not None and self.best.feasible

    def write_trace(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_HEADER)
            for row in self.trace:
                w.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2])),
                            repr(float(row[3])), int(row[4])])


def _engine_args(inst):
    up, lo, ucons, lcons = inst.kernels
    ub, lb = inst.upper_bounds, inst.lower_bounds
    return (up, ucons, lo, lcons, ub.inner_lower.copy(), ub.inner_upper.copy(),
            lb.inner_lower.copy(), lb.inner_upper.copy(), inst.dims.as_tuple(),
            np.array(inst.theta, dtype=float))


def solve(inst, cfg: Optional[GAConfig] = None, seed: Optional[int] = None) -> SolveResult:
    """Run the nested GA on ``inst``.

    Identical ``(inst, cfg, seed)`` give identical results. When no feasible
    pair was found the least-violating one is returned as ``best``; ``best``
    is None only when the budget allowed no evaluation at all.
    """
    cfg = GAConfig() if cfg is None else cfg
    ip, fp = cfg._arrays()
    rng = np.random.default_rng(seed)
    (pop_u, pop_l, _, _, _, _, n_eval, best_u, best_l, best_vals, ll_calls, ll_fe, gens, stop,
     trace, n_trace) = E.nested_ga(*_engine_args(inst), ip, fp, rng)
    best = None
    if best_vals[4] > 0:
        best = Individual(best_u, best_l, float(best_vals[0]), float(best_vals[1]),
                          float(best_vals[2]), float(best_vals[3]))
    return SolveResult(
        best=best, ul_fe=int(ll_calls), ll_fe=int(ll_fe), ll_calls=int(ll_calls),
        generations=int(gens), terminated_by="alpha" if stop == E.STOP_ALPHA else "budget",
        seed=seed, trace=trace[:n_trace].copy(),
        population_upper=pop_u[:n_eval].copy(), population_lower=pop_l[:n_eval].copy(),
    )


def lower_optimize(inst, xu, warm=None, cfg: Optional[GAConfig] = None, rng=None):
    """Solve the lower level for a fixed upper block.

    Parameters
    ----------
    warm : array_like, optional
        A lower block inserted as the last initial member; all other members
        are random.

    Returns
    -------
    xl : ndarray
    f : float
    vg : float
        Lower-level violation of ``xl``.
    evals : int
        Lower objective evaluations used.
    """
    cfg = GAConfig() if cfg is None else cfg
    rng = np.random.default_rng(rng)
    xu = np.array(xu, dtype=float).ravel()
    if xu.size != inst.n_upper:
        raise DimensionError(f"upper block has length {xu.size}, expected {inst.n_upper}")
    if not np.all(inst.upper_bounds.contains(xu)):
        raise DomainError("upper block lies outside the upper bounds")
    if warm is None:
        warm_arr, use_warm = np.zeros(inst.n_lower), False
    else:
        warm_arr = np.array(warm, dtype=float).ravel()
        if warm_arr.size != inst.n_lower:
            raise DimensionError(f"warm block has length {warm_arr.size}, expected {inst.n_lower}")
        use_warm = True
    ip, fp = cfg._arrays()
    _, _, lo, lcons, _, _, llo, lhi, dims, theta = _engine_args(inst)
    xl, f, vg, evals, _ = E.lower_ga(lo, lcons, xu, llo, lhi, dims, theta, warm_arr, use_warm,
                                     ip, fp, rng)
    return xl, float(f), float(vg), int(evals)


# -- operators, exposed for inspection and testing ---------------------------------

def pcx(parents, index: int = 0, omega_xi: float = 0.1, mode: str = "as_printed",
        bounds=None, sigma_eta: float = 1.0, rng=None) -> np.ndarray:
    """One parent-centric child of ``parents[index]``.

    The difference vector uses the two other parents in their given order.
    Coordinates where the index parent sits on the mean use a floored
    distance in ``"as_printed"`` mode. With ``bounds`` the child is clamped.
    """
    par = np.array(parents, dtype=float)
    if par.ndim != 2 or par.shape[0] < 3:
        raise DimensionError("parents must be a (mu >= 3, m) array")
    if not 0 <= index < par.shape[0]:
        raise IndexError(f"index {index} out of range for {par.shape[0]} parents")
    first = 1 if index == 0 else 0
    second = first + 1 if first + 1 != index else first + 2
    if bounds is not None:
        if len(bounds) != par.shape[1]:
            raise DimensionError(f"bounds have {len(bounds)} entries, parents {par.shape[1]}")
        lo, hi = bounds.inner_lower.copy(), bounds.inner_upper.copy()
    else:
        span = np.ptp(par, axis=0)
        lo, hi = np.full(par.shape[1], -np.inf), np.full(par.shape[1], np.inf)
    floor = (hi - lo) * E.PCX_FLOOR if bounds is not None else np.maximum(span, 1.0) * E.PCX_FLOOR
    out = np.empty(par.shape[1])
    E.pcx(par, index, first, second, float(omega_xi), PCX_MODES[mode], floor, float(sigma_eta),
          np.random.default_rng(rng), out)
    if bounds is not None:
        E.clip(out, lo, hi)
    return out


def poly_mutate(x, bounds, p_mut: float = 0.1, eta_m: float = 20.0, rng=None) -> np.ndarray:
    """Polynomial mutation of each coordinate with probability ``p_mut``; stays in bounds."""
    out = np.array(x, dtype=float).ravel()
    if out.size != len(bounds):
        raise DimensionError(f"x has {out.size} entries, bounds {len(bounds)}")
    return E.poly_mutate(out, bounds.inner_lower.copy(), bounds.inner_upper.copy(), float(p_mut),
                         float(eta_m), np.random.default_rng(rng))


def compare(a: Individual, b: Individual, level: str = "upper") -> int:
    """-1 if ``a`` is better, 1 if ``b`` is better, 0 on an exact tie.

    Feasible beats infeasible, smaller violation beats larger, then the
    level's objective decides.
    """
    if not (a.valid and b.valid):
        raise ValueError("both individuals must be evaluated")
    if level == "upper":
        va, fa, vb, fb = a.violation, a.F, b.violation, b.F
    elif level == "lower":
        va, fa, vb, fb = a.vg, a.f, b.vg, b.f
    else:
        raise ValueError("level must be 'upper' or 'lower'")
    if E.precedes(va, fa, vb, fb):
        return -1
    if E.precedes(vb, fb, va, fa):
        return 1
    return 0


def alpha(var_now, var_init, mode: str = "normalized") -> float:
    """Variance-contraction measure; coordinates with no initial spread are skipped."""
    now = np.array(var_now, dtype=float).ravel()
    init = np.array(var_init, dtype=float).ravel()
    if now.shape != init.shape:
        raise DimensionError("variance vectors differ in length")
    if mode not in ALPHA_MODES:
        raise ValueError(f"mode must be one of {ALPHA_MODES}")
    return float(E.alpha(now, init, mode == "raw"))


# -- estimator -------------------------------------------------------------------------

class NestedBilevelGA(BaseEstimator):
    """Estimator wrapper around :func:`solve`.

    ``fit`` takes a problem instance; ``predict`` maps upper blocks to the
    lower blocks found by a fresh lower-level run.

    Examples
    --------
    >>> from smdbench.smd import instantiate
    >>> from smdbench.core import Dims
    >>> est = NestedBilevelGA(random_state=0).fit(instantiate("SMD2", Dims(1, 2, 1)))
    >>> est.predict([[0.0, 0.0]]).shape
    (1, 3)
    """

    def __init__(self, N_p=30, n_p=30, mu=3, lam=3, r_repl=2, p_cross=0.9, p_mut=0.1,
                 eta_m=20.0, omega_xi=0.1, pcx_omega_eta="gaussian", sigma_eta_upper=1.5,
                 sigma_eta_lower=1.0, alpha_stop_upper=1e-4, alpha_stop_lower=1e-5,
                 alpha_mode="raw", boundary="reflect", max_ll_calls=10_000,
                 max_ll_evals=25_000_000, max_ul_gens=5_000, max_ll_gens=2_000,
                 random_state=None):
        self.N_p = N_p
        self.n_p = n_p
        self.mu = mu
        self.lam = lam
        self.r_repl = r_repl
        self.p_cross = p_cross
        self.p_mut = p_mut
        self.eta_m = eta_m
        self.omega_xi = omega_xi
        self.pcx_omega_eta = pcx_omega_eta
        self.sigma_eta_upper = sigma_eta_upper
        self.sigma_eta_lower = sigma_eta_lower
        self.alpha_stop_upper = alpha_stop_upper
        self.alpha_stop_lower = alpha_stop_lower
        self.alpha_mode = alpha_mode
        self.boundary = boundary
        self.max_ll_calls = max_ll_calls
        self.max_ll_evals = max_ll_evals
        self.max_ul_gens = max_ul_gens
        self.max_ll_gens = max_ll_gens
        self.random_state = random_state

    def _config(self) -> GAConfig:
        return GAConfig(**{f.name: getattr(self, f.name) for f in fields(GAConfig)})

    def fit(self, problem, y=None):
        self.problem_ = problem
        self.result_ = solve(problem, self._config(), self.random_state)
        best = self.result_.best
        self.best_ = best
        if best is not None:
            self.upper_ = best.upper
            self.lower_ = best.lower
            self.F_ = best.F
            self.f_ = best.f
        self.n_ll_calls_ = self.result_.ll_calls
        self.n_ll_evals_ = self.result_.ll_fe
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.problem_.n_upper:
            raise ValueError(f"X has {X.shape[1]} columns, the problem has "
                             f"{self.problem_.n_upper} upper variables")
        rng = np.random.default_rng(self.random_state)
        cfg = self._config()
        return np.vstack([lower_optimize(self.problem_, row, cfg=cfg, rng=rng)[0] for row in X])
