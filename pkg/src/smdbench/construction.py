"""Build bilevel problems from component functions.

Each level's objective is a sum of three terms with fixed block access:

=====  ==============  =====  ==============
term   reads           term   reads
=====  ==============  =====  ==============
F1     xu1             f1     xu1, xu2
F2     xl1             f2     xl1
F3     xu2, xl2        f3     xu2, xl2
=====  ==============  =====  ==============

Component functions are compiled with numba so composed problems run on the
same solver engine as the built-in suite. Also provides the leader/follower
quantity-competition model, whose equilibrium is known in closed form.
"""

from __future__ import annotations

import enum
import math
import warnings
from typing import NamedTuple, Optional, Sequence

import numpy as np
from numba import njit
from numba.core.registry import CPUDispatcher

from ._smd_kernels import no_cons
from ._types import cons_kernel, dynamic_parts_kernel, parts_kernel
from .core import Bounds, DimensionError, Dims, split
from .smd import OptimumRecord, ProblemInstance

__all__ = [
    "BLOCKS",
    "CompositionError",
    "ComponentFunction",
    "InteractionMode",
    "compose",
    "apply_interaction",
    "multi_global_lower",
    "StackelbergParams",
    "StackelbergOptimum",
    "StackelbergWarning",
    "stackelberg_problem",
    "stackelberg_optimum",
]

BLOCKS = ("xu1", "xu2", "xl1", "xl2")

ROLES = {
    "F1": ("xu1",), "F2": ("xl1",), "F3": ("xu2", "xl2"),
    "f1": ("xu1", "xu2"), "f2": ("xl1",), "f3": ("xu2", "xl2"),
}


class CompositionError(ValueError):
    """A component reads blocks its role does not allow."""


class StackelbergWarning(UserWarning):
    """The closed-form equilibrium has a non-positive production level."""


def _as_dispatcher(fn):
    return fn if isinstance(fn, CPUDispatcher) else njit(fn)


def _full_form(fn, reads):
    # uniform four-block wrapper that forwards only the declared blocks
    src = "def full(xu1, xu2, xl1, xl2):\n    return float(fn({}))\n".format(", ".join(reads))
    scope = {"fn": fn}
    exec(src, scope)
    return njit(scope["full"])


def _negate(full):
    @njit
    def neg(xu1, xu2, xl1, xl2):
        return -full(xu1, xu2, xl1, xl2)
    return neg


def _add(a, b):
    @njit
    def total(xu1, xu2, xl1, xl2):
        return a(xu1, xu2, xl1, xl2) + b(xu1, xu2, xl1, xl2)
    return total


_EMPTY = np.empty(0)


class ComponentFunction:
    """A real-valued term that reads a declared subset of the four blocks.

    Parameters
    ----------
    fn : callable
        Takes the declared blocks, in ``xu1, xu2, xl1, xl2`` order, as 1-D
        float arrays and returns a float. Must compile in numba nopython mode;
        a plain Python function is compiled on first use.
    reads : sequence of str
        Blocks passed to ``fn``. Undeclared blocks are never passed, so
        ``fn`` cannot depend on them.
    minimizer : optional
        Any user record of the term's known minimizer; carried, not checked.
    name : str, optional

    Examples
    --------
    >>> sq = ComponentFunction(lambda xl1: (xl1 ** 2).sum(), ("xl1",), name="sq")
    >>> sq(xl1=np.array([1.0, 2.0]))
    5.0
    """

    def __init__(self, fn, reads: Sequence[str], minimizer=None, name: Optional[str] = None):
        reads = tuple(reads)
        unknown = [b for b in reads if b not in BLOCKS]
        if unknown:
            raise ValueError(f"unknown block names {unknown}; expected a subset of {BLOCKS}")
        if len(set(reads)) != len(reads):
            raise ValueError("reads lists a block twice")
        self.reads = tuple(b for b in BLOCKS if b in reads)
        self.minimizer = minimizer
        self.name = name or getattr(fn, "__name__", "component")
        self._full = None if fn is None else _full_form(_as_dispatcher(fn), self.reads)

    @classmethod
    def _from_full(cls, full, reads, name, minimizer=None):
        out = cls(None, reads, minimizer, name)
        out._full = full
        return out

    def __call__(self, xu1=None, xu2=None, xl1=None, xl2=None) -> float:
        blocks = dict(xu1=xu1, xu2=xu2, xl1=xl1, xl2=xl2)
        missing = [b for b in self.reads if blocks[b] is None]
        if missing:
            raise TypeError(f"{self.name} reads {missing} but they were not given")
        args = [_EMPTY if blocks[b] is None else np.ascontiguousarray(blocks[b], dtype=float).ravel()
                for b in BLOCKS]
        return float(self._full(*args))

    def __neg__(self) -> "ComponentFunction":
        return ComponentFunction._from_full(_negate(self._full), self.reads, f"-{self.name}")

    def __add__(self, other: "ComponentFunction") -> "ComponentFunction":
        if not isinstance(other, ComponentFunction):
            return NotImplemented
        reads = tuple(b for b in BLOCKS if b in self.reads or b in other.reads)
        return ComponentFunction._from_full(_add(self._full, other._full), reads,
                                            f"({self.name} + {other.name})")

    def __sub__(self, other: "ComponentFunction") -> "ComponentFunction":
        if not isinstance(other, ComponentFunction):
            return NotImplemented
        return self + (-other)

    def probe(self, sizes: dict, n_trials: int = 20, rng=None) -> bool:
        """True if redrawing undeclared blocks never changes the value.

        ``sizes`` maps each block name to its length.
        """
        rng = np.random.default_rng(rng)
        for _ in range(n_trials):
            base = {b: rng.normal(size=sizes.get(b, 0)) for b in BLOCKS}
            ref = self(**base)
            moved = {b: (base[b] if b in self.reads else rng.normal(size=sizes.get(b, 0)) * 10)
                     for b in BLOCKS}
            out = self(**moved)
            if not (out == ref or (math.isnan(out) and math.isnan(ref))):
                return False
        return True

    def __repr__(self):
        return f"ComponentFunction({self.name!r}, reads={self.reads})"


def _check_role(role: str, comp: ComponentFunction):
    if not isinstance(comp, ComponentFunction):
        raise CompositionError(f"{role} must be a ComponentFunction, got {type(comp).__name__}")
    extra = [b for b in comp.reads if b not in ROLES[role]]
    if extra:
        raise CompositionError(
            f"{role} ({comp.name}) reads {extra}; {role} may read only {list(ROLES[role])}")


def _level_kernel(a, b, c):
    @dynamic_parts_kernel
    def parts(xu, xl, dims, theta):
        p, q, r, s = dims
        nl1 = q + s
        xu1, xu2, xl1, xl2 = xu[:p], xu[p:], xl[:nl1], xl[nl1:]
        return (a(xu1, xu2, xl1, xl2), b(xu1, xu2, xl1, xl2), c(xu1, xu2, xl1, xl2))
    return parts


def compose(F1, F2, F3, f1, f2, f3, bounds, dims: Dims, name: str = "composed") -> ProblemInstance:
    """Assemble an unconstrained instance with ``F = F1 + F2 + F3`` and ``f = f1 + f2 + f3``.

    Parameters
    ----------
    bounds : Bounds or (Bounds, Bounds)
        Either the ``(upper, lower)`` pair or one box over the upper
        variables followed by the lower ones.
    dims : Dims

    Raises
    ------
    CompositionError
        If a component reads a block its role does not allow.
    """
    comps = dict(F1=F1, F2=F2, F3=F3, f1=f1, f2=f2, f3=f3)
    for role, comp in comps.items():
        _check_role(role, comp)
    if isinstance(bounds, Bounds):
        if len(bounds) != dims.n_upper + dims.n_lower:
            raise DimensionError(f"bounds have {len(bounds)} entries, expected "
                                 f"{dims.n_upper + dims.n_lower}")
        k = dims.n_upper
        upper = Bounds(bounds.lower[:k], bounds.upper[:k], bounds.open_lower[:k],
                       bounds.open_upper[:k])
        lower = Bounds(bounds.lower[k:], bounds.upper[k:], bounds.open_lower[k:],
                       bounds.open_upper[k:])
    else:
        upper, lower = bounds
    if len(upper) != dims.n_upper or len(lower) != dims.n_lower:
        raise DimensionError(f"bounds of length ({len(upper)}, {len(lower)}) do not match "
                             f"({dims.n_upper}, {dims.n_lower})")
    up = _level_kernel(F1._full, F2._full, F3._full)
    lo = _level_kernel(f1._full, f2._full, f3._full)
    return ProblemInstance(name=name, dims=dims, upper_bounds=upper, lower_bounds=lower,
                           kernels=(up, lo, no_cons, no_cons), theta=np.zeros(1))


class InteractionMode(enum.Enum):
    """Sign layout of the terms coupling the two levels.

    ``COOPERATIVE`` keeps both signs, ``CONFLICTING`` flips both, the two
    mixed modes flip one.
    """

    COOPERATIVE = "cooperative"
    CONFLICTING = "conflicting"
    MIXED_A = "mixed_a"
    MIXED_B = "mixed_b"


_SIGNS = {
    InteractionMode.COOPERATIVE: (1, 1),
    InteractionMode.CONFLICTING: (-1, -1),
    InteractionMode.MIXED_A: (1, -1),
    InteractionMode.MIXED_B: (-1, 1),
}


def apply_interaction(f2: ComponentFunction, f3: ComponentFunction, F4: ComponentFunction,
                      mode: InteractionMode):
    """Upper terms ``(F2, F3)`` derived from the lower terms.

    ``F2 = s2 * f2`` and ``F3 = F4 + s3 * f3`` with the signs ``(s2, s3)``
    of ``mode``. ``F4`` should read ``xu2`` only.
    """
    mode = InteractionMode(mode)
    _check_role("f2", f2)
    _check_role("f3", f3)
    if any(b != "xu2" for b in F4.reads):
        raise CompositionError(f"F4 ({F4.name}) may read only ['xu2'], reads {list(F4.reads)}")
    s2, s3 = _SIGNS[mode]
    F2 = f2 if s2 > 0 else -f2
    F3 = F4 + f3 if s3 > 0 else F4 - f3
    return F2, F3


def _pair_form(base):
    @njit
    def f(xl1, n_base):
        if xl1.size - n_base < 2:
            raise ValueError("the paired part of xl1 needs at least 2 components")
        if (xl1.size - n_base) % 2:
            raise ValueError("the paired part of xl1 needs an even number of components")
        total = base(_EMPTY, _EMPTY, xl1[:n_base], _EMPTY) if n_base > 0 else 0.0
        for i in range(n_base, xl1.size, 2):
            d = xl1[i] - xl1[i + 1]
            total += d * d
        return total
    return f


def multi_global_lower(base_f2: Optional[ComponentFunction] = None,
                       n_base: int = 0) -> ComponentFunction:
    """A lower term whose minimizers form a continuum.

    The first ``n_base`` entries of ``xl1`` go to ``base_f2``; the rest are
    taken in consecutive pairs and contribute ``(a - b)^2``, which vanishes
    on every point with ``a = b``. Pairing with an upper term ``sum xl1^2``
    makes the origin the preferred minimizer.

    Examples
    --------
    >>> g = multi_global_lower()
    >>> g(xl1=np.array([3.0, 3.0])), g(xl1=np.array([1.0, -1.0]))
    (0.0, 4.0)
    """
    if base_f2 is not None:
        _check_role("f2", base_f2)
    if n_base < 0:
        raise ValueError("n_base must be >= 0")
    if n_base > 0 and base_f2 is None:
        raise ValueError("n_base > 0 needs a base_f2")
    base = base_f2._full if base_f2 is not None else _zero_full
    pair = _pair_form(base)
    nb = int(n_base)

    @njit
    def f2(xl1):
        return pair(xl1, nb)

    label = "paired" if base_f2 is None else f"{base_f2.name} + paired"
    return ComponentFunction(f2, ("xl1",), minimizer="any xl1 with equal pairs", name=label)


@njit
def _zero_full(xu1, xu2, xl1, xl2):
    return 0.0


# -- leader/follower quantity competition -------------------------------------------

class StackelbergParams(NamedTuple):
    """Linear inverse demand ``P(Q) = alpha - beta Q`` and quadratic costs
    ``C_i(q) = delta_i q^2 + gamma_i q + c_i``."""

    alpha: float
    beta: float
    delta_l: float
    gamma_l: float
    c_l: float
    delta_f: float
    gamma_f: float
    c_f: float

    def validate(self) -> "StackelbergParams":
        for name in ("alpha", "beta", "delta_l", "gamma_l", "delta_f", "gamma_f"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("c_l", "c_f"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        return self


class StackelbergOptimum(NamedTuple):
    q_l: float
    q_f: float
    Q: float


def stackelberg_optimum(params: StackelbergParams) -> StackelbergOptimum:
    """Closed-form equilibrium production levels and demand.

    A non-positive level is returned as computed, with a
    :class:`StackelbergWarning`.
    """
    a, b, dl, gl, _, df, gf, _ = (float(v) for v in params)
    den = 4 * (b + df) * (b + dl) - 2 * b * b
    q_l = (2 * (b + df) * (a - gl) - b * (a - gf)) / den
    q_f = (a - gf) / (2 * (b + df)) - (b * (a - gl) - b * b * (a - gf) / (2 * (b + df))) / den
    if q_l <= 0 or q_f <= 0:
        warnings.warn(f"equilibrium has a non-positive production level (q_l={q_l}, q_f={q_f})",
                      StackelbergWarning, stacklevel=2)
    return StackelbergOptimum(q_l, q_f, q_l + q_f)


# theta = (alpha, beta, delta_l, gamma_l, c_l, delta_f, gamma_f, c_f); xu = (q_l, Q), xl = (q_f,)

@parts_kernel
def _leader_parts(xu, xl, dims, theta):
    q_l, demand = xu[0], xu[1]
    profit = (theta[0] - theta[1] * demand) * q_l - (theta[2] * q_l * q_l + theta[3] * q_l + theta[4])
    return (-profit, 0.0, 0.0)


@parts_kernel
def _follower_parts(xu, xl, dims, theta):
    q_l, q_f = xu[0], xl[0]
    profit = (theta[0] - theta[1] * (q_l + q_f)) * q_f - (theta[5] * q_f * q_f + theta[6] * q_f
                                                          + theta[7])
    return (-profit, 0.0, 0.0)


@cons_kernel
def _leader_cons(xu, xl, dims, theta):
    out = np.empty(3)
    out[0] = xu[1] - xu[0] - xl[0]
    out[1] = xu[0]
    out[2] = xu[1]
    return out


@cons_kernel
def _follower_cons(xu, xl, dims, theta):
    out = np.empty(1)
    out[0] = xl[0]
    return out


def _follower_response(inst, xu):
    a, b, _, _, _, df, gf, _ = inst.theta
    q_f = min(max((a - gf - b * xu[0]) / (2 * (b + df)), 0.0), a / b)
    return np.array([q_f]), True, "profit-maximizing follower output"


def stackelberg_problem(params: StackelbergParams) -> ProblemInstance:
    """Leader chooses ``(q_l, Q)``, follower chooses ``q_f``; both minimize negated profit.

    The leader sells at ``P(Q)`` subject to ``Q >= q_l + q_f``, the follower
    at ``P(q_l + q_f)``. All variables lie in ``[0, alpha / beta]`` where
    the price is non-negative. Non-negativity is also stated as constraints.
    """
    params = StackelbergParams(*(float(v) for v in params)).validate()
    hi = params.alpha / params.beta
    dims = Dims(2, 1, 0)
    theta = np.array(params, dtype=float)
    inst = ProblemInstance(
        name="Stackelberg", dims=dims, upper_bounds=Bounds.uniform(2, 0.0, hi),
        lower_bounds=Bounds.uniform(1, 0.0, hi),
        kernels=(_leader_parts, _follower_parts, _leader_cons, _follower_cons), theta=theta,
        G_tags=("c", "a", "a"), g_tags=("b",),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StackelbergWarning)
        opt = stackelberg_optimum(params)
    if 0 <= opt.q_l <= hi and 0 <= opt.q_f <= hi and opt.Q <= hi:
        xu, xl = np.array([opt.q_l, opt.Q]), np.array([opt.q_f])
        out = inst.evaluate_flat(xu, xl)
        object.__setattr__(inst, "optimum", OptimumRecord(split(xu, xl, dims), out.F, out.f))
    object.__setattr__(inst, "psi", _follower_response)
    return inst
