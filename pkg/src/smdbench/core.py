"""Shared value types for bilevel problems.

Every decision point is split into four blocks: ``xu1`` and ``xu2`` at the
upper level, ``xl1`` and ``xl2`` at the lower level. ``xu2``/``xl2`` carry the
interaction between the levels and always have the same length ``r``.
Constraints follow the ``c(x) >= 0`` convention throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "EPS_OPEN",
    "DimensionError",
    "DomainError",
    "Dims",
    "Bounds",
    "BilevelVector",
    "EvalOutcome",
    "split",
    "total_violation",
    "clamp_to_bounds",
]

#: Interior margin kept inside open endpoints (absolute, capped at a quarter of the width).
EPS_OPEN = 1e-6

CONSTRAINT_TAGS = ("a", "b", "c")


class DimensionError(ValueError):
    """A vector does not have the length its partition requires."""


class DomainError(ValueError):
    """A point lies outside the box on which a problem is defined."""


@dataclass(frozen=True)
class Dims:
    """Partition sizes of a bilevel problem.

    Parameters
    ----------
    p : int
        Length of ``xu1``.
    q : int
        Length of ``xl1`` (without the SMD6 extra block).
    r : int
        Length of ``xu2`` and of ``xl2``.
    s : int, default 0
        Extra ``xl1`` components, used only by SMD6.
    """

    p: int
    q: int
    r: int
    s: int = 0

    def __post_init__(self):
        for name in ("p", "q", "r", "s"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise TypeError(f"{name} must be an integer, got {value!r}")
            if value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")
            object.__setattr__(self, name, int(value))
        if self.n_upper < 1:
            raise ValueError("at least one upper level variable is required (p + r >= 1)")
        if self.n_lower < 1:
            raise ValueError("at least one lower level variable is required (q + s + r >= 1)")

    @property
    def n_upper(self) -> int:
        return self.p + self.r

    @property
    def n_lower(self) -> int:
        return self.q + self.s + self.r

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.p, self.q, self.r, self.s)

    @classmethod
    def parse(cls, text: str) -> "Dims":
        """Build from ``"p,q,r"`` or ``"p,q,r,s"``."""
        parts = [int(tok) for tok in text.replace(" ", "").split(",") if tok]
        if len(parts) not in (3, 4):
            raise ValueError(f"expected 'p,q,r' or 'p,q,r,s', got {text!r}")
        return cls(*parts)


@dataclass(frozen=True, eq=False)
class Bounds:
    """Box limits with per-endpoint open/closed flags.

    Open endpoints are pulled inside by ``EPS_OPEN``; :attr:`inner_lower` /
    :attr:`inner_upper` hold the resulting effective box used for sampling and
    clamping.
    """

    lower: np.ndarray
    upper: np.ndarray
    open_lower: np.ndarray = None
    open_upper: np.ndarray = None
    inner_lower: np.ndarray = field(init=False, repr=False)
    inner_upper: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).ravel()
        hi = np.array(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise DimensionError(f"lower has {lo.size} entries but upper has {hi.size}")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ValueError("bounds must be finite")
        if np.any(lo >= hi):
            bad = int(np.flatnonzero(lo >= hi)[0])
            raise ValueError(f"lower < upper violated at index {bad}: [{lo[bad]}, {hi[bad]}]")
        ol = self._flags(self.open_lower, lo.size, "open_lower")
        ou = self._flags(self.open_upper, lo.size, "open_upper")
        margin = np.minimum(EPS_OPEN, 0.25 * (hi - lo))
        for name, value in (("lower", lo), ("upper", hi), ("open_lower", ol), ("open_upper", ou),
                            ("inner_lower", np.where(ol, lo + margin, lo)),
                            ("inner_upper", np.where(ou, hi - margin, hi))):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @staticmethod
    def _flags(flags, n, name):
        if flags is None:
            return np.zeros(n, dtype=bool)
        out = np.array(flags, dtype=bool).ravel()
        if out.size == 1 and n != 1:
            out = np.full(n, bool(out[0]))
        if out.size != n:
            raise DimensionError(f"{name} has {out.size} entries, expected {n}")
        return out

    def __len__(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @classmethod
    def concat(cls, *parts: "Bounds") -> "Bounds":
        return cls(
            np.concatenate([b.lower for b in parts]),
            np.concatenate([b.upper for b in parts]),
            np.concatenate([b.open_lower for b in parts]),
            np.concatenate([b.open_upper for b in parts]),
        )

    @classmethod
    def uniform(cls, n: int, lower: float, upper: float,
                open_lower: bool = False, open_upper: bool = False) -> "Bounds":
        return cls(np.full(n, float(lower)), np.full(n, float(upper)),
                   np.full(n, open_lower), np.full(n, open_upper))

    def contains(self, x) -> np.ndarray:
        """Per-component membership, honouring open endpoints."""
        x = np.asarray(x, dtype=float)
        above = np.where(self.open_lower, x > self.lower, x >= self.lower)
        below = np.where(self.open_upper, x < self.upper, x <= self.upper)
        return above & below

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        shape = (len(self),) if size is None else (size, len(self))
        return self.inner_lower + rng.random(shape) * (self.inner_upper - self.inner_lower)

    def to_dict(self) -> dict:
        return {
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "open_lower": self.open_lower.tolist(),
            "open_upper": self.open_upper.tolist(),
        }

    def __eq__(self, other):
        if not isinstance(other, Bounds):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("lower", "upper", "open_lower", "open_upper"))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class BilevelVector:
    """A decision point split into its four blocks."""

    xu1: np.ndarray
    xu2: np.ndarray
    xl1: np.ndarray
    xl2: np.ndarray

    def __post_init__(self):
        for name in ("xu1", "xu2", "xl1", "xl2"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.xu2.size != self.xl2.size:
            raise DimensionError(
                f"xu2 and xl2 must have equal length, got {self.xu2.size} and {self.xl2.size}")

    @property
    def upper(self) -> np.ndarray:
        return np.concatenate([self.xu1, self.xu2])

    @property
    def lower(self) -> np.ndarray:
        return np.concatenate([self.xl1, self.xl2])

    def matches(self, dims: Dims) -> bool:
        return (self.xu1.size, self.xu2.size, self.xl1.size, self.xl2.size) == (
            dims.p, dims.r, dims.q + dims.s, dims.r)

    def __eq__(self, other):
        if not isinstance(other, BilevelVector):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("xu1", "xu2", "xl1", "xl2"))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class EvalOutcome:
    """Objective and constraint values at one point.

    ``G`` and ``g`` are feasible where ``>= 0``. ``G_tags``/``g_tags`` give the
    dependence class of each constraint: ``"a"`` upper variables only, ``"b"``
    lower variables only, ``"c"`` both.
    """

    F: float
    f: float
    G: np.ndarray
    g: np.ndarray
    G_tags: tuple[str, ...] = ()
    g_tags: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("G", "g"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for cons, tags, label in ((self.G, self.G_tags, "G"), (self.g, self.g_tags, "g")):
            if len(tags) != cons.size:
                raise DimensionError(f"{label} has {cons.size} values but {len(tags)} tags")
            if any(t not in CONSTRAINT_TAGS for t in tags):
                raise ValueError(f"unknown constraint tag in {tags!r}")

    @property
    def upper_violation(self) -> float:
        return total_violation(self.G)

    @property
    def lower_violation(self) -> float:
        return total_violation(self.g)

    @property
    def feasible(self) -> bool:
        return self.upper_violation == 0.0 and self.lower_violation == 0.0


def split(upper_flat: Sequence[float], lower_flat: Sequence[float], dims: Dims) -> BilevelVector:
    """Partition flat upper/lower vectors into a :class:`BilevelVector`.

    >>> v = split([1, 2], [3, 4, 5], Dims(1, 2, 1))
    >>> v.xu1.tolist(), v.xu2.tolist(), v.xl1.tolist(), v.xl2.tolist()
    ([1.0], [2.0], [3.0, 4.0], [5.0])
    """
    up = np.asarray(upper_flat, dtype=float).ravel()
    lo = np.asarray(lower_flat, dtype=float).ravel()
    if up.size != dims.n_upper:
        raise DimensionError(f"upper vector has length {up.size}, expected p + r = {dims.n_upper}")
    if lo.size != dims.n_lower:
        raise DimensionError(
            f"lower vector has length {lo.size}, expected q + s + r = {dims.n_lower}")
    nl1 = dims.q + dims.s
    return BilevelVector(up[:dims.p], up[dims.p:], lo[:nl1], lo[nl1:])


def total_violation(constraints) -> float:
    """Sum of ``max(0, -c_j)``; zero iff every ``c_j >= 0``."""
    c = np.asarray(constraints, dtype=float)
    if c.size == 0:
        return 0.0
    return float(np.sum(np.maximum(0.0, -c)))


def clamp_to_bounds(v, bounds: Bounds) -> np.ndarray:
    """Project onto the box, keeping a margin inside open endpoints."""
    x = np.asarray(v, dtype=float)
    if x.shape[-1] != len(bounds):
        raise DimensionError(f"vector has length {x.shape[-1]}, bounds have {len(bounds)}")
    return np.clip(x, bounds.inner_lower, bounds.inner_upper)
