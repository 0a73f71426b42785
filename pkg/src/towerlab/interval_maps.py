"""Piecewise-monotone interval maps with a neutral fixed point at the origin.

Three families are provided: the "lsv" family x -> x(1 + c1^g x^g) on [0,1/2)
with an affine right branch, the "thaler" family x -> x(1 + c2 x^g) mod 1, and
the plain doubling map as a uniformly expanding control case.  Maps are
immutable; all operations are pure functions of (map, point).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Branch",
    "IntermittentMap",
    "make_lsv",
    "make_thaler",
    "make_doubling",
    "map_from_name",
    "evaluate",
    "derivative",
    "branch_inverse",
    "orbit",
]

_INV_TOL = 1e-13


class DomainError(ValueError):
    """Point outside the domain of the requested operation."""


@dataclass(frozen=True)
class Branch:
    """One monotone branch of the map: strictly increasing on [lo, hi)."""

    id: int
    lo: float
    hi: float
    forward: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    image_lo: float
    image_hi: float

    def contains(self, x: float) -> bool:
        return self.lo <= x < self.hi

    def inverse(self, y):
        """Preimage of y under this branch, bracketed bisection + Newton polish.

        Accepts scalars or arrays; absolute tolerance 1e-13.
        """
        y_arr = np.asarray(y, dtype=float)
        scalar = y_arr.ndim == 0
        y_arr = np.atleast_1d(y_arr)
        if np.any(y_arr < self.image_lo - 1e-12) or np.any(y_arr > self.image_hi + 1e-12):
            raise DomainError(
                f"value outside branch {self.id} image [{self.image_lo}, {self.image_hi})"
            )
        lo = np.full_like(y_arr, self.lo)
        hi = np.full_like(y_arr, self.hi)
        for _ in range(48):
            mid = 0.5 * (lo + hi)
            below = self.forward(mid) < y_arr
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        x = 0.5 * (lo + hi)
        for _ in range(3):
            x = x - (self.forward(x) - y_arr) / self.derivative(x)
            x = np.clip(x, self.lo, self.hi)
        if scalar:
            return float(x[0])
        return x


@dataclass(frozen=True)
class IntermittentMap:
    """A piecewise increasing map of [0,1) with ordered branch list."""

    family: str
    branches: tuple[Branch, ...]
    gamma: float | None = None
    c1: float | None = None
    c2: float | None = None
    params: dict = field(default_factory=dict)

    @property
    def beta(self) -> float:
        """Tail exponent 1/gamma of the return time; inf for gap maps."""
        if self.gamma is None or self.gamma == 0:
            return math.inf
        return 1.0 / self.gamma

    def branch_of(self, x: float) -> Branch:
        if not (0.0 <= x < 1.0):
            raise DomainError(f"x={x} outside [0,1)")
        for b in self.branches:
            if b.contains(x):
                return b
        raise DomainError(f"no branch contains x={x}")

    def branch_index_array(self, x: np.ndarray) -> np.ndarray:
        los = np.array([b.lo for b in self.branches])
        idx = np.searchsorted(los, x, side="right") - 1
        return np.clip(idx, 0, len(self.branches) - 1)

    def __call__(self, x: float) -> float:
        return evaluate(self, x)


def _mp():
    import mpmath

    return mpmath


def evaluate(imap: IntermittentMap, x):
    """Apply the map; accepts scalars (with domain checking) or arrays."""
    if np.isscalar(x) or (isinstance(x, np.ndarray) and x.ndim == 0):
        b = imap.branch_of(float(x))
        y = float(b.forward(np.asarray(float(x))))
        # guard against roundoff pushing a value onto the right endpoint
        return min(y, np.nextafter(1.0, 0.0)) if y >= 1.0 else max(y, 0.0)
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    idx = imap.branch_index_array(x)
    for i, b in enumerate(imap.branches):
        sel = idx == i
        if np.any(sel):
            out[sel] = b.forward(x[sel])
    return np.clip(out, 0.0, np.nextafter(1.0, 0.0))


def derivative(imap: IntermittentMap, x: float) -> float:
    """One-sided-free derivative; branch boundary points are rejected.

    Use branch.derivative directly for an explicit one-sided value.
    """
    b = imap.branch_of(float(x))
    if x == b.lo:
        raise DomainError(
            f"x={x} is a branch boundary; request branch {b.id} explicitly for a one-sided value"
        )
    return float(b.derivative(np.asarray(float(x))))


def branch_inverse(imap: IntermittentMap, branch_id: int, y):
    return imap.branches[branch_id].inverse(y)


def orbit(imap: IntermittentMap, x0: float, n: int) -> np.ndarray:
    """The forward orbit (x0, f x0, ..., f^n x0)."""
    out = np.empty(n + 1)
    out[0] = x0
    x = x0
    for j in range(n):
        x = evaluate(imap, x)
        out[j + 1] = x
    return out


# ---------------------------------------------------------------- families


def make_lsv(gamma: float, c1: float = 2.0) -> IntermittentMap:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if not (0.0 < c1 <= 2.0):
        raise ValueError("c1 must lie in (0, 2]")
    cg = c1**gamma

    def left(x):
        return x * (1.0 + cg * x**gamma)

    def dleft(x):
        return 1.0 + (1.0 + gamma) * cg * x**gamma

    def right(x):
        return 2.0 * x - 1.0

    def dright(x):
        return np.full_like(np.asarray(x, dtype=float), 2.0)

    left_top = 0.5 * (1.0 + cg * 0.5**gamma)
    branches = (
        Branch(0, 0.0, 0.5, left, dleft, 0.0, left_top),
        Branch(1, 0.5, 1.0, right, dright, 0.0, 1.0),
    )
    return IntermittentMap("lsv", branches, gamma=gamma, c1=c1)


def make_thaler(gamma: float, c2: float = 1.0) -> IntermittentMap:
    if gamma <= 0 or c2 <= 0:
        raise ValueError("gamma and c2 must be positive")

    def g(x):
        return x * (1.0 + c2 * x**gamma)

    def dg(x):
        return 1.0 + (1.0 + gamma) * c2 * x**gamma

    # branch points solve g(x) = j for integer thresholds j = 1, ..., floor-ish
    top = 1.0 + c2
    nfull = int(math.floor(top - 1e-12))
    cuts = [0.0]
    for j in range(1, nfull + 1):
        lo, hi = cuts[-1], 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if g(mid) < j:
                lo = mid
            else:
                hi = mid
        cuts.append(0.5 * (lo + hi))
    cuts.append(1.0)
    branches = []
    for j in range(len(cuts) - 1):
        shift = float(j)

        def fwd(x, shift=shift):
            return g(x) - shift

        img_hi = min(top - shift, 1.0) if j == len(cuts) - 2 else 1.0
        branches.append(Branch(j, cuts[j], cuts[j + 1], fwd, dg, 0.0, img_hi))
    return IntermittentMap("thaler", tuple(branches), gamma=gamma, c2=c2)


def make_doubling() -> IntermittentMap:
    def low(x):
        return 2.0 * x

    def high(x):
        return 2.0 * x - 1.0

    def d2(x):
        return np.full_like(np.asarray(x, dtype=float), 2.0)

    branches = (
        Branch(0, 0.0, 0.5, low, d2, 0.0, 1.0),
        Branch(1, 0.5, 1.0, high, d2, 0.0, 1.0),
    )
    return IntermittentMap("doubling", branches, gamma=None)


def map_from_name(name: str, **params) -> IntermittentMap:
    name = name.lower()
    if name == "lsv":
        return make_lsv(params.get("gamma", 0.5), params.get("c1", 2.0))
    if name == "thaler":
        return make_thaler(params.get("gamma", 0.5), params.get("c2", 1.0))
    if name == "doubling":
        return make_doubling()
    raise ValueError(f"unknown map preset {name!r}; expected lsv, thaler or doubling")


# ------------------------------------------------- extended precision hooks


def mp_forward(imap: IntermittentMap, branch_id: int, x):
    """Branch map evaluated in mpmath arithmetic (periodic-point probes)."""
    mp = _mp()
    x = mp.mpf(x)
    if imap.family == "lsv":
        if branch_id == 0:
            return x * (1 + mp.mpf(imap.c1) ** imap.gamma * x**imap.gamma)
        return 2 * x - 1
    if imap.family == "thaler":
        return x * (1 + mp.mpf(imap.c2) * x**imap.gamma) - branch_id
    if imap.family == "doubling":
        return 2 * x - branch_id
    raise ValueError(imap.family)


def mp_derivative(imap: IntermittentMap, branch_id: int, x):
    mp = _mp()
    x = mp.mpf(x)
    if imap.family == "lsv":
        if branch_id == 0:
            return 1 + (1 + imap.gamma) * mp.mpf(imap.c1) ** imap.gamma * x**imap.gamma
        return mp.mpf(2)
    if imap.family == "thaler":
        return 1 + (1 + imap.gamma) * mp.mpf(imap.c2) * x**imap.gamma
    if imap.family == "doubling":
        return mp.mpf(2)
    raise ValueError(imap.family)


def mp_branch_inverse(imap: IntermittentMap, branch_id: int, y, x0=None):
    """Branch preimage in mpmath arithmetic; Newton from a float64 seed."""
    mp = _mp()
    b = imap.branches[branch_id]
    if x0 is None:
        x0 = b.inverse(float(y))
    x = mp.mpf(x0)
    y = mp.mpf(y)
    for _ in range(mp.mp.dps // 10 + 6):
        x = x - (mp_forward(imap, branch_id, x) - y) / mp_derivative(imap, branch_id, x)
    return x
