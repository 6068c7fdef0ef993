"""The SMD1-SMD12 bilevel test problems.

>>> inst = instantiate("SMD1", Dims(1, 2, 1))
>>> out = evaluate(inst, known_optimum(inst).x_star)
>>> out.F, out.f
(0.0, 0.0)
"""

from __future__ import annotations

import csv
import enum
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from . import _smd_kernels as K
from .core import (BilevelVector, Bounds, Dims, DimensionError, DomainError, EvalOutcome,
                   split, total_violation)

__all__ = [
    "ProblemId",
    "Properties",
    "ProblemInstance",
    "OptimumRecord",
    "PsiReference",
    "ContourGrid",
    "check_dims",
    "instantiate",
    "evaluate",
    "psi_reference",
    "known_optimum",
    "contour_grid",
    "catalog",
    "dump_catalog",
]


class ProblemId(enum.IntEnum):
    SMD1 = 1
    SMD2 = 2
    SMD3 = 3
    SMD4 = 4
    SMD5 = 5
    SMD6 = 6
    SMD7 = 7
    SMD8 = 8
    SMD9 = 9
    SMD10 = 10
    SMD11 = 11
    SMD12 = 12

    @classmethod
    def parse(cls, value) -> "ProblemId":
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        text = str(value).strip().upper()
        if text.isdigit():
            return cls(int(text))
        try:
            return cls[text]
        except KeyError:
            raise ValueError(f"unknown problem {value!r}; expected SMD1..SMD12") from None

    @property
    def constrained(self) -> bool:
        return self.value >= 9


@dataclass(frozen=True)
class Properties:
    """Qualitative difficulty flags of a problem."""

    cooperative: bool
    lower_multimodal: bool
    upper_multimodal: bool
    multiple_global_lower: bool

    @property
    def conflict(self) -> bool:
        return not self.cooperative

    def to_dict(self) -> dict:
        return {"cooperative": self.cooperative, "conflict": self.conflict,
                "lower_multimodal": self.lower_multimodal,
                "upper_multimodal": self.upper_multimodal,
                "multiple_global_lower": self.multiple_global_lower}


_PROPS = {
    1: Properties(True, False, False, False),
    2: Properties(False, False, False, False),
    3: Properties(True, True, False, False),
    4: Properties(False, True, False, False),
    5: Properties(False, True, False, False),
    6: Properties(False, False, False, True),
    7: Properties(False, False, True, False),
    8: Properties(False, False, True, False),
    9: Properties(False, False, False, False),
    10: Properties(False, False, False, False),
    11: Properties(False, False, False, True),
    12: Properties(False, False, False, True),
}

_HALF_PI = math.pi / 2
# (xu2 range, xl2 range, xl2 open_lower, xl2 open_upper); xu1 and xl1 are always [-5, 10]
_RANGES = {
    1: ((-5, 10), (-_HALF_PI, _HALF_PI), True, True),
    2: ((-5, 1), (0, math.e), True, False),
    3: ((-5, 10), (-_HALF_PI, _HALF_PI), True, True),
    4: ((-1, 1), (0, math.e), False, False),
    5: ((-5, 10), (-5, 10), False, False),
    6: ((-5, 10), (-5, 10), False, False),
    7: ((-5, 1), (0, math.e), True, False),
    8: ((-5, 10), (-5, 10), False, False),
    9: ((-5, 1), (-1, -1 + math.e), True, False),
    10: ((-5, 10), (-_HALF_PI, _HALF_PI), True, True),
    11: ((-1, 1), (1 / math.e, math.e), False, False),
    12: ((-14.10, 14.10), (-1.5, 1.5), True, True),
}


@dataclass(frozen=True)
class OptimumRecord:
    x_star: BilevelVector
    F_star: float
    f_star: float


@dataclass(frozen=True, eq=False)
class PsiReference:
    """Lower-level optimal response to a fixed upper block.

    Attributes
    ----------
    xl_star : ndarray
        A representative optimal lower block.
    is_unique : bool
        False when the optimal set holds more than one point.
    f_star : float
        Lower objective value on the optimal set.
    description : str
        Human-readable characterisation of the optimal set.
    residual : callable
        ``residual(xl) >= 0``, zero exactly on the optimal set (objective gap
        plus lower-level violation).
    """

    xl_star: np.ndarray
    is_unique: bool
    f_star: float
    description: str
    residual: Callable[[np.ndarray], float]


def _kernel_array(x):
    # compiled kernels take writeable contiguous float64 vectors only
    x = np.ascontiguousarray(x, dtype=float).ravel()
    return x if x.flags.writeable else x.copy()


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """A concrete bilevel problem backed by compiled kernels.

    ``kernels`` holds ``(upper_parts, lower_parts, upper_cons, lower_cons)``,
    all with signature ``fn(xu, xl, dims, theta)``.
    """

    name: str
    dims: Dims
    upper_bounds: Bounds
    lower_bounds: Bounds
    kernels: tuple
    theta: np.ndarray
    G_tags: tuple = ()
    g_tags: tuple = ()
    properties: Optional[Properties] = None
    problem_id: Optional[ProblemId] = None
    optimum: Optional[OptimumRecord] = None
    psi: Optional[Callable] = field(default=None, repr=False)

    @property
    def n_upper(self) -> int:
        return self.dims.n_upper

    @property
    def n_lower(self) -> int:
        return self.dims.n_lower

    def _check(self, xu, xl):
        xu, xl = _kernel_array(xu), _kernel_array(xl)
        if xu.size != self.n_upper:
            raise DimensionError(f"upper block has length {xu.size}, expected {self.n_upper}")
        if xl.size != self.n_lower:
            raise DimensionError(f"lower block has length {xl.size}, expected {self.n_lower}")
        for x, b, label in ((xu, self.upper_bounds, "upper"), (xl, self.lower_bounds, "lower")):
            ok = b.contains(x)
            if not np.all(ok):
                i = int(np.flatnonzero(~ok)[0])
                raise DomainError(f"{label} component {i} = {x[i]!r} outside "
                                  f"{'(' if b.open_lower[i] else '['}{b.lower[i]}, "
                                  f"{b.upper[i]}{')' if b.open_upper[i] else ']'}")
        return xu, xl

    def components(self, xu, xl):
        """Return ``((F1, F2, F3), (f1, f2, f3))`` without bound checks."""
        xu, xl = _kernel_array(xu), _kernel_array(xl)
        dims = self.dims.as_tuple()
        up, lo = self.kernels[0], self.kernels[1]
        return (tuple(float(v) for v in up(xu, xl, dims, self.theta)),
                tuple(float(v) for v in lo(xu, xl, dims, self.theta)))

    def evaluate_flat(self, xu, xl) -> EvalOutcome:
        xu, xl = self._check(xu, xl)
        dims = self.dims.as_tuple()
        up, lo, ucons, lcons = self.kernels
        return EvalOutcome(
            F=float(sum(up(xu, xl, dims, self.theta))),
            f=float(sum(lo(xu, xl, dims, self.theta))),
            G=np.array(ucons(xu, xl, dims, self.theta)),
            g=np.array(lcons(xu, xl, dims, self.theta)),
            G_tags=self.G_tags,
            g_tags=self.g_tags,
        )

    def lower_value(self, xu, xl) -> tuple[float, float]:
        """Lower objective and violation, without bound checks."""
        xu, xl = _kernel_array(xu), _kernel_array(xl)
        dims = self.dims.as_tuple()
        f = float(sum(self.kernels[1](xu, xl, dims, self.theta)))
        return f, total_violation(self.kernels[3](xu, xl, dims, self.theta))

    def describe(self) -> dict:
        return {
            "name": self.name,
            "dims": dict(zip("pqrs", self.dims.as_tuple())),
            "upper_bounds": self.upper_bounds.to_dict(),
            "lower_bounds": self.lower_bounds.to_dict(),
            "n_upper_constraints": len(self.G_tags),
            "n_lower_constraints": len(self.g_tags),
            "upper_constraint_tags": list(self.G_tags),
            "lower_constraint_tags": list(self.g_tags),
            "properties": None if self.properties is None else self.properties.to_dict(),
        }


def _validate(pid: ProblemId, dims: Dims):
    n = pid.value
    if dims.r < 1:
        raise ValueError(f"{pid.name} needs r >= 1 (interaction terms), got r={dims.r}")
    if n == 6:
        if dims.s < 2 or dims.s % 2:
            raise ValueError(f"SMD6 needs an even s >= 2, got s={dims.s}")
        return
    if dims.s != 0:
        raise ValueError(f"{pid.name} does not use s, got s={dims.s}")
    if n in (5, 10, 12) and dims.q < 2:
        raise ValueError(f"{pid.name} needs q >= 2, got q={dims.q}")
    if dims.q < 1:
        raise ValueError(f"{pid.name} needs q >= 1, got q={dims.q}")
    if n == 8 and dims.p < 1:
        raise ValueError("SMD8 needs p >= 1 (its leading term averages over xu1)")
    if n in (10, 12) and dims.p + dims.r < 2:
        raise ValueError(f"{pid.name} needs p + r >= 2, got p + r = {dims.p + dims.r}")


def check_dims(problem, dims: Dims):
    """Raise ValueError if ``dims`` is not a valid partition for ``problem``."""
    _validate(ProblemId.parse(problem), dims)


def _tags(pid: ProblemId, d: Dims):
    n = pid.value
    if n == 9:
        return ("a",), ("b",)
    if n == 10:
        return ("a",) * (d.p + d.r), ("b",) * d.q
    if n == 11:
        return ("c",) * d.r, ("c",)
    if n == 12:
        return ("c",) * d.r + ("a",) * (d.p + d.r), ("c",) + ("b",) * d.q
    return (), ()


def instantiate(problem, dims: Dims, a: float = 1.0, b: float = 1.0) -> ProblemInstance:
    """Build an SMD instance.

    Parameters
    ----------
    problem : ProblemId, str or int
        ``"SMD3"``, ``3`` or ``ProblemId.SMD3``.
    dims : Dims
    a, b : float
        Ring-constraint parameters, used by SMD9 only.
    """
    pid = ProblemId.parse(problem)
    if not isinstance(dims, Dims):
        dims = Dims(*dims)
    _validate(pid, dims)
    if pid == ProblemId.SMD9 and (a <= 0 or b <= 0.5):
        raise ValueError("SMD9 needs a > 0 and b > 0.5")
    xu2, xl2, ol, ou = _RANGES[pid.value]
    upper = Bounds.concat(Bounds.uniform(dims.p, -5, 10), Bounds.uniform(dims.r, *xu2))
    lower = Bounds.concat(Bounds.uniform(dims.q + dims.s, -5, 10),
                          Bounds.uniform(dims.r, *xl2, open_lower=ol, open_upper=ou))
    G_tags, g_tags = _tags(pid, dims)
    inst = ProblemInstance(
        name=pid.name, dims=dims, upper_bounds=upper, lower_bounds=lower,
        kernels=K.KERNELS[pid.value], theta=np.array([float(a), float(b)]),
        G_tags=G_tags, g_tags=g_tags, properties=_PROPS[pid.value], problem_id=pid,
    )
    object.__setattr__(inst, "optimum", _optimum(inst))
    object.__setattr__(inst, "psi", _psi_for(pid))
    return inst


def evaluate(inst: ProblemInstance, v: BilevelVector) -> EvalOutcome:
    """Objectives and constraints at ``v``.

    Raises
    ------
    DomainError
        If ``v`` leaves the box (open endpoints included).
    """
    if not v.matches(inst.dims):
        raise DimensionError(f"vector blocks do not match dims {inst.dims.as_tuple()}")
    return inst.evaluate_flat(v.upper, v.lower)


# -- optimal lower responses --------------------------------------------------

def _relation(pid: ProblemId, xu2):
    n = pid.value
    if n in (1, 10):
        return np.arctan(xu2)
    if n in (2, 7):
        return np.exp(xu2)
    if n == 3:
        return np.arctan(xu2 ** 2)
    if n == 4:
        return np.expm1(np.abs(xu2))
    if n == 5:
        return np.sqrt(np.abs(xu2))
    if n == 6:
        return np.array(xu2, dtype=float)
    if n == 8:
        return np.cbrt(xu2)
    if n == 9:
        return np.expm1(xu2)
    raise AssertionError(n)


def _sphere_point(xu2, transform_inv, hi, widen=0.0):
    # shift each xu2 component by 1/sqrt(r) below; flip to above when that leaves the range
    c = (1.0 + widen) / math.sqrt(xu2.size)
    t = xu2 - c
    t = np.where(t < -hi, xu2 + c, t)
    return transform_inv(t)


def _psi_smd(inst: ProblemInstance, xu):
    pid = inst.problem_id
    d = inst.dims
    xu = np.asarray(xu, dtype=float)
    xu2 = xu[d.p:]
    n = pid.value
    unique = True
    if n in (5, 8):
        xl1 = np.ones(d.q)
    elif n in (10, 12):
        xl1 = np.full(d.q, 1.0 / math.sqrt(d.q - 1))
    else:
        xl1 = np.zeros(d.q + d.s)
    if n in (11, 12):
        inv, hi = (np.exp, 1.0) if n == 11 else (np.arctan, math.tan(1.5 - 1e-6))
        # rounding can land a hair inside the unit sphere; widen by a few ulps until feasible
        for widen in (0.0, 1e-15, 1e-13, 1e-11):
            xl2 = _sphere_point(xu2, inv, hi, widen)
            if inst.lower_value(xu, np.concatenate([xl1, xl2]))[1] == 0.0:
                break
        desc = ("xl1 = 0 and sum((xu2 - log xl2)^2) = 1" if n == 11
                else "xl1 = 1/sqrt(q-1) and sum((xu2 - tan xl2)^2) = 1")
        unique = False
    else:
        xl2 = _relation(pid, xu2)
        desc = {
            1: "xl1 = 0, xl2 = arctan(xu2)",
            2: "xl1 = 0, xl2 = exp(xu2)",
            3: "xl1 = 0, xl2 = arctan(xu2^2)",
            4: "xl1 = 0, xl2 = exp(|xu2|) - 1",
            5: "xl1 = 1, xl2 = +/- sqrt(|xu2|) per component",
            6: "first q of xl1 = 0, extra xl1 pairs equal (any common value), xl2 = xu2",
            7: "xl1 = 0, xl2 = exp(xu2)",
            8: "xl1 = 1, xl2 = cbrt(xu2)",
            9: "xl1 = 0, xl2 = exp(xu2) - 1 when that point satisfies the ring constraint",
            10: "xl1 = 1/sqrt(q-1), xl2 = arctan(xu2)",
        }[n]
        # the sign of each sqrt is free, and so is the common value of every extra SMD6 pair
        if n == 5:
            unique = not np.any(xu2 != 0)
        elif n == 6:
            unique = False
    xl = np.concatenate([xl1, xl2])
    if n == 9:
        f, v = inst.lower_value(xu, xl)
        if v > 0:
            xl = _smd9_ring_response(inst, xu)
            desc = "ring constraint active: nearest admissible shell of the unconstrained optimum"
    return xl, unique, desc


def _smd9_ring_response(inst: ProblemInstance, xu):
    """Constrained lower optimum of SMD9 when the unconstrained one is cut off.

    The unconstrained point sits in a forbidden band ``[k+1-0.5/b, k+1)``;
    the optimum lies on one of the two band edges. With ``A = sum(xl1^2)``
    the problem reduces to ``min A + sum((xu2 - log(1+y))^2)`` subject to
    ``(A + sum(y^2)) / a`` equal to the edge value.
    """
    d = inst.dims
    a, b = inst.theta
    xu2 = np.asarray(xu, dtype=float)[d.p:]
    target = np.expm1(xu2)
    u0 = float(np.sum(target ** 2)) / a
    k = math.floor(u0 + 0.5 / b) - 1
    ylo = inst.lower_bounds.inner_lower[d.q:]
    yhi = inst.lower_bounds.inner_upper[d.q:]
    amax = float(np.sum(inst.lower_bounds.upper[:d.q] ** 2)) if d.q else 0.0
    edges = [k + 1.0, k + 1.0 - 0.5 / b - 1e-9]
    rng = np.random.default_rng(0)

    def obj(z):
        return z[0] + float(np.sum((xu2 - np.log1p(z[1:])) ** 2))

    best, best_val = None, np.inf
    for edge in edges:
        if edge < 0:
            continue
        radius = edge * a

        def on_edge(z, rad=radius):
            return z[0] + np.sum(z[1:] ** 2) - rad

        starts = [np.concatenate([[0.0], target])]
        starts += [np.concatenate([[rng.uniform(0, min(amax, radius))], rng.uniform(ylo, yhi)])
                   for _ in range(8)]
        for z0 in starts:
            with warnings.catch_warnings():
                # SLSQP clips its own trial steps to the bounds and says so
                warnings.filterwarnings("ignore", "Values in x were outside bounds",
                                        RuntimeWarning)
                res = minimize(obj, z0, method="SLSQP",
                               bounds=[(0.0, amax)] + list(zip(ylo, yhi)),
                               constraints=[{"type": "eq", "fun": on_edge}],
                               options={"ftol": 1e-14, "maxiter": 500})
            z = res.x
            xl = np.concatenate([np.zeros(d.q), np.clip(z[1:], ylo, yhi)])
            if d.q:
                xl[0] = math.sqrt(max(z[0], 0.0))
            f, v = inst.lower_value(xu, xl)
            if v == 0 and f < best_val:
                best, best_val = xl, f
    if best is None:
        raise RuntimeError("no admissible lower point found on the ring edges")
    return best


def _psi_for(pid):
    return _psi_smd


def psi_reference(inst: ProblemInstance, xu) -> PsiReference:
    """Analytic lower-level optimum for a fixed upper block ``xu``."""
    xu = np.asarray(xu, dtype=float).ravel()
    if xu.size != inst.n_upper:
        raise DimensionError(f"upper block has length {xu.size}, expected {inst.n_upper}")
    ok = inst.upper_bounds.contains(xu)
    if not np.all(ok):
        raise DomainError(f"upper component {int(np.flatnonzero(~ok)[0])} outside bounds")
    if inst.psi is None:
        raise ValueError(f"{inst.name} has no lower-level reference")
    xl, unique, desc = inst.psi(inst, xu)
    xl = np.asarray(xl, dtype=float)
    xl.setflags(write=False)
    f_star, _ = inst.lower_value(xu, xl)

    def residual(candidate, _xu=xu, _f=f_star):
        f, v = inst.lower_value(_xu, candidate)
        return abs(f - _f) + v

    return PsiReference(xl, unique, f_star, desc, residual)


# -- optima ---------------------------------------------------------------------

def _optimum(inst: ProblemInstance) -> OptimumRecord:
    d = inst.dims
    n = inst.problem_id.value
    if n in (10, 12):
        t = 1.0 / math.sqrt(d.p + d.r - 1)
        w = 1.0 / math.sqrt(d.q - 1)
        xu = np.full(d.n_upper, t)
        xl1 = np.full(d.q, w)
        c = 1.0 / math.sqrt(d.r)
        if n == 10:
            xl2 = np.full(d.r, math.atan(t))
            F = (d.p + d.r) * (t - 2) ** 2 + d.q * w * w
            f = d.p * t * t + d.q * (w - 2) ** 2
        else:
            xl2 = np.full(d.r, math.atan(t - c))
            F = (d.p + d.r) * (t - 2) ** 2 + d.q * w * w + d.r * abs(t - c) - 1.0
            f = d.p * t * t + d.q * (w - 2) ** 2 + 1.0
    else:
        xu = np.zeros(d.n_upper)
        xl, _, _ = _psi_smd(inst, xu)
        xl1, xl2 = xl[:d.q + d.s], xl[d.q + d.s:]
        F, f = (-1.0, 1.0) if n == 11 else (0.0, 0.0)
    return OptimumRecord(split(xu, np.concatenate([xl1, xl2]), d), float(F), float(f))


def known_optimum(inst: ProblemInstance) -> OptimumRecord:
    if inst.optimum is None:
        raise ValueError(f"{inst.name} has no known optimum")
    return inst.optimum


# -- grids and catalog ----------------------------------------------------------

_BLOCKS = ("xu1", "xu2", "xl1", "xl2")


def _axis_index(inst: ProblemInstance, axis: str):
    """Map ``"xu2"`` / ``"xl1[2]"`` (1-based component) to ``(level, flat index)``."""
    text = axis.strip()
    comp = 1
    if "[" in text:
        text, rest = text.split("[", 1)
        comp = int(rest.rstrip("]"))
    if text not in _BLOCKS:
        raise ValueError(f"unknown axis {axis!r}; expected one of {_BLOCKS} with optional [k]")
    d = inst.dims
    sizes = {"xu1": d.p, "xu2": d.r, "xl1": d.q + d.s, "xl2": d.r}
    offset = {"xu1": 0, "xu2": d.p, "xl1": 0, "xl2": d.q + d.s}
    if not 1 <= comp <= sizes[text]:
        raise IndexError(f"axis {axis!r} out of range: {text} has {sizes[text]} components")
    return ("upper" if text.startswith("xu") else "lower"), offset[text] + comp - 1


@dataclass(frozen=True, eq=False)
class ContourGrid:
    axes: tuple
    axis1: np.ndarray
    axis2: np.ndarray
    F: np.ndarray
    f: np.ndarray
    valid: np.ndarray

    def rows(self):
        for i, a in enumerate(self.axis1):
            for j, b in enumerate(self.axis2):
                yield float(a), float(b), float(self.F[i, j]), float(self.f[i, j])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["axis1", "axis2", "F", "f"])
            for row in self.rows():
                w.writerow([repr(v) for v in row])


def contour_grid(inst: ProblemInstance, axes, resolution: int, xu=None, xl=None,
                 lower="psi") -> ContourGrid:
    """Evaluate ``F`` and ``f`` on a grid over two free variables.

    Parameters
    ----------
    axes : pair of str
        Axis names such as ``("xu1", "xu2")`` or ``("xl1[1]", "xl2")``.
    resolution : int
        Points per axis, at least 2; the grid spans each axis's effective box.
    xu, xl : array_like, optional
        Values of the fixed variables; default to the known optimum.
    lower : {"psi", "fixed"}
        With ``"psi"`` and only upper axes free, the lower block follows the
        optimal response at each cell.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if len(axes) != 2:
        raise ValueError("exactly two axes are required")
    idx = [_axis_index(inst, a) for a in axes]
    if idx[0] == idx[1]:
        raise ValueError("the two axes must differ")
    opt = inst.optimum
    base_u = np.array(opt.x_star.upper if xu is None else xu, dtype=float)
    base_l = np.array(opt.x_star.lower if xl is None else xl, dtype=float)
    follow = lower == "psi" and all(level == "upper" for level, _ in idx) and inst.psi is not None

    def line(level, i):
        b = inst.upper_bounds if level == "upper" else inst.lower_bounds
        return np.linspace(b.inner_lower[i], b.inner_upper[i], resolution)

    g1, g2 = line(*idx[0]), line(*idx[1])
    F = np.full((resolution, resolution), np.nan)
    f = np.full((resolution, resolution), np.nan)
    valid = np.zeros((resolution, resolution), dtype=bool)
    for i, a in enumerate(g1):
        for j, c in enumerate(g2):
            u, l = base_u.copy(), base_l.copy()
            for (level, k), val in zip(idx, (a, c)):
                (u if level == "upper" else l)[k] = val
            try:
                if follow:
                    l = psi_reference(inst, u).xl_star
                out = inst.evaluate_flat(u, l)
            except DomainError:
                continue
            F[i, j], f[i, j], valid[i, j] = out.F, out.f, True
    return ContourGrid(tuple(axes), g1, g2, F, f, valid)


def catalog(dims_for=None) -> list:
    """Describe all twelve problems at the 5-variable configuration (or ``dims_for(pid)``)."""
    out = []
    for pid in ProblemId:
        if dims_for is not None:
            d = dims_for(pid)
        elif pid == ProblemId.SMD6:
            d = Dims(1, 0, 1, 2)
        else:
            d = Dims(1, 2, 1)
        inst = instantiate(pid, d)
        entry = {"id": pid.name, **inst.describe()}
        entry.pop("name")
        out.append(entry)
    return out


def dump_catalog(path, dims_for=None):
    with open(path, "w") as fh:
        json.dump(catalog(dims_for), fh, indent=2)
