"""First-return inducing scheme on a reference branch Y.

The return map G = f^phi on Y is full-branch for the Markov parameter choices
(lsv with c1 = 2, thaler with integer c2, doubling).  Cylinders of constant
return time are enumerated by pulling Y back through words of off-Y branches.
The same pullback tree transports quadrature payloads for the operator
modules: for a payload array u of points in [0,1), the walk delivers
G_a^{-1}(u) together with the accumulated cocycle and log-derivative sums
along the forward orbit, at O(1) vector operations per cylinder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .interval_maps import Branch, DomainError, IntermittentMap, evaluate

__all__ = [
    "Cylinder",
    "SymbolicMetric",
    "InducingScheme",
    "EscapeError",
    "NonMarkovError",
    "build_scheme",
    "first_return",
    "first_return_batch",
    "pullback_walk",
    "PullbackRecord",
    "tail_distribution",
    "tail_monte_carlo",
    "fit_tail_exponent",
    "TailFit",
    "separation_time",
    "SeparationTime",
    "estimate_distortion",
    "DistortionEstimate",
    "kac_partial_sums",
]


class EscapeError(RuntimeError):
    """No return to Y within the iteration cap."""


class NonMarkovError(ValueError):
    """Parameters for which Y is not a union of full branches."""


@dataclass(frozen=True)
class Cylinder:
    id: int
    lo: float
    hi: float
    phi: int
    itinerary: tuple[int, ...]  # branch ids along the orbit, length phi


@dataclass(frozen=True)
class SymbolicMetric:
    """d_theta(z, z') = theta^(separation time); epsilon is recorded only."""

    theta: float = 0.75
    epsilon: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.theta < 1.0):
            raise ValueError("theta must lie in (0,1)")


@dataclass(frozen=True)
class InducingScheme:
    imap: IntermittentMap
    y_lo: float
    y_hi: float
    phi_max: int
    alpha: tuple[Cylinder, ...]
    y_branch_id: int
    offy_branch_ids: tuple[int, ...]
    unaccounted_length: float
    metric: SymbolicMetric = field(default_factory=SymbolicMetric)
    rho: int = 1  # single inducing scheme: G coincides with the first return map

    @property
    def y_length(self) -> float:
        return self.y_hi - self.y_lo

    @property
    def beta(self) -> float:
        return self.imap.beta

    def cylinder_lows(self) -> np.ndarray:
        return np.array([c.lo for c in self.alpha])

    def cylinder_index(self, x: float) -> int:
        """Index into alpha, or -1 when x falls in the unpartitioned residual."""
        j = int(np.searchsorted(self._sorted_lows, x, side="right")) - 1
        if j < 0 or x >= self._sorted_his[j]:
            return -1
        return int(self._sorted_idx[j])

    def __post_init__(self):
        # spatial index: alpha is ordered by (phi, lo), not by position
        order = np.argsort([c.lo for c in self.alpha]) if self.alpha else np.array([], int)
        object.__setattr__(self, "_sorted_idx", order.astype(int))
        object.__setattr__(self, "_sorted_lows", np.array([self.alpha[i].lo for i in order]))
        object.__setattr__(self, "_sorted_his", np.array([self.alpha[i].hi for i in order]))

    def g_apply(self, cyl: Cylinder, z: float) -> float:
        """G on the given cylinder by following its itinerary."""
        x = z
        for b in cyl.itinerary:
            x = float(self.imap.branches[b].forward(np.asarray(x)))
        return min(max(x, 0.0), np.nextafter(1.0, 0.0))

    def g_derivative(self, cyl: Cylinder, z: float) -> float:
        x = z
        out = 1.0
        for b in cyl.itinerary:
            br = self.imap.branches[b]
            out *= float(br.derivative(np.asarray(x)))
            x = float(br.forward(np.asarray(x)))
        return out

    def cyl_inverse(self, cyl: Cylinder, y):
        """G_a^{-1}(y): branch inverses composed along the reversed itinerary."""
        x = np.asarray(y, dtype=float)
        for b in reversed(cyl.itinerary):
            x = self.imap.branches[b].inverse(x)
        return x

    def d_theta(self, z: float, zp: float, depth: int = 64) -> float:
        s = separation_time(z, zp, self, depth)
        return self.metric.theta ** s.value

    def phi_gcd(self) -> int:
        g = 0
        for c in self.alpha:
            g = math.gcd(g, c.phi)
            if g == 1:
                break
        return g


# ------------------------------------------------------------- construction


def _default_y(imap: IntermittentMap) -> Branch:
    if imap.family in ("lsv", "doubling"):
        return imap.branches[-1]
    if imap.family == "thaler":
        return imap.branches[-1]
    raise ValueError(imap.family)


def _validate_markov(imap: IntermittentMap, y_branch: Branch) -> None:
    if imap.family == "lsv":
        if abs(imap.c1 - 2.0) > 1e-12:
            raise NonMarkovError(
                f"lsv with c1={imap.c1} is not Markov; cylinder endpoints would not "
                "align with branch boundaries (only c1=2 is accepted)"
            )
    elif imap.family == "thaler":
        if abs(imap.c2 - round(imap.c2)) > 1e-12:
            raise NonMarkovError(
                f"thaler with c2={imap.c2} is not Markov (integer c2 required)"
            )
    for b in imap.branches:
        if not (abs(b.image_lo) < 1e-12 and abs(b.image_hi - 1.0) < 1e-10):
            raise NonMarkovError(
                f"branch {b.id} is not full (image [{b.image_lo},{b.image_hi}))"
            )


@dataclass
class PullbackRecord:
    """One cylinder plus pulled-back payload data.

    z holds G_a^{-1}(payload); h_sum and logdg are the full orbit sums
    sum_{l=0}^{phi-1} h(f^l z) and sum log f'(f^l z) at those points.
    """

    phi: int
    word: tuple[int, ...]
    lo: float
    hi: float
    cont_lo: float
    cont_hi: float
    z: np.ndarray | None = None
    h_sum: np.ndarray | None = None
    logdg: np.ndarray | None = None


def pullback_walk(
    imap: IntermittentMap,
    y_branch_id: int,
    offy_ids: Sequence[int],
    phi_max: int,
    payload: np.ndarray | None = None,
    hfun: Callable[[np.ndarray], np.ndarray] | None = None,
    want_logdg: bool = False,
    min_len: float = 0.0,
    pruned_widths: list | None = None,
) -> Iterator[PullbackRecord]:
    """Walk the word tree of off-Y branches, deepest return time phi_max.

    Yields one record per kept cylinder.  Continuation mass lost to pruning
    (in Y coordinates) is appended to ``pruned_widths`` when provided;
    depth-capped residuals are visible to the caller via cont_lo/cont_hi of
    records with phi == phi_max.
    """
    yb = imap.branches[y_branch_id]
    base = np.array([0.0, np.nextafter(1.0, 0.0), yb.lo, yb.hi])
    npay = 0
    if payload is not None:
        payload = np.asarray(payload, dtype=float)
        npay = len(payload)
        base = np.concatenate([base, payload])

    def emit(depth, word, arr, hacc, dacc):
        z_all = yb.inverse(arr)
        rec = PullbackRecord(
            phi=depth + 1,
            word=word,
            lo=float(z_all[2]),
            hi=float(z_all[3]),
            cont_lo=float(z_all[0]),
            cont_hi=float(z_all[1]),
        )
        if npay:
            zp = z_all[4:]
            rec.z = zp
            if hfun is not None:
                rec.h_sum = hfun(zp) + (hacc[..., 4:] if hacc is not None else 0.0)
            if want_logdg:
                with np.errstate(divide="ignore"):
                    rec.logdg = np.log(yb.derivative(zp)) + (dacc[4:] if dacc is not None else 0.0)
        return rec

    single = len(offy_ids) == 1
    hacc0 = None if hfun is None else np.zeros_like(hfun(base))
    dacc0 = np.zeros_like(base) if want_logdg else None
    yield emit(0, (), base, hacc0, dacc0)
    if phi_max == 1:
        return

    if single:
        b = imap.branches[offy_ids[0]]
        arr, hacc, dacc = base, hacc0, dacc0
        word: tuple[int, ...] = ()
        for depth in range(1, phi_max):
            arr = b.inverse(arr)
            word = (b.id,) + word
            if hfun is not None:
                hacc = hacc + hfun(arr)
            if want_logdg:
                dacc = dacc + np.log(b.derivative(arr))
            rec = emit(depth, word, arr, hacc, dacc)
            yield rec
            if depth > 1 and rec.hi - rec.lo <= min_len:
                return  # ladder below resolution; deeper cylinders are void
        return

    # general tree (several off-Y branches), explicit DFS stack
    stack = [(0, (), base, hacc0, dacc0, list(offy_ids))]
    while stack:
        depth, word, arr, hacc, dacc, letters = stack[-1]
        if not letters or depth + 1 >= phi_max:
            stack.pop()
            continue
        bid = letters.pop(0)
        b = imap.branches[bid]
        carr = b.inverse(arr)
        cword = (bid,) + word
        chacc = None if hfun is None else hacc + hfun(carr)
        cdacc = None if dacc is None else dacc + np.log(b.derivative(carr))
        rec = emit(depth + 1, cword, carr, chacc, cdacc)
        if rec.hi - rec.lo < min_len:
            if pruned_widths is not None:
                pruned_widths.append(rec.cont_hi - rec.cont_lo)
            continue
        yield rec
        stack.append((depth + 1, cword, carr, chacc, cdacc, list(offy_ids)))


def build_scheme(
    imap: IntermittentMap,
    phi_max: int = 4096,
    y: tuple[float, float] | None = None,
    metric: SymbolicMetric | None = None,
    min_cylinder_length: float = 0.0,
) -> InducingScheme:
    """Construct the first-return partition of Y into constant-phi cylinders."""
    if phi_max < 1:
        raise ValueError("phi_max must be >= 1")
    yb = _default_y(imap)
    if y is not None:
        cand = [b for b in imap.branches if abs(b.lo - y[0]) < 1e-12 and abs(b.hi - y[1]) < 1e-12]
        if not cand:
            raise NonMarkovError(f"Y={y} is not a full branch domain of the map")
        yb = cand[0]
    _validate_markov(imap, yb)
    offy = tuple(b.id for b in imap.branches if b.id != yb.id)

    cylinders = []
    unaccounted = 0.0
    pruned: list[float] = []
    last_rec: PullbackRecord | None = None
    for rec in pullback_walk(
        imap, yb.id, offy, phi_max, min_len=min_cylinder_length, pruned_widths=pruned
    ):
        cylinders.append(
            Cylinder(
                id=len(cylinders),
                lo=rec.lo,
                hi=rec.hi,
                phi=rec.phi,
                itinerary=(yb.id,) + rec.word,
            )
        )
        last_rec = rec
        if rec.phi == phi_max:
            unaccounted += (rec.cont_hi - rec.cont_lo) - (rec.hi - rec.lo)
    if len(offy) == 1 and last_rec is not None and last_rec.phi < phi_max:
        # ladder stopped early (resolution floor); account for the remainder
        unaccounted += (last_rec.cont_hi - last_rec.cont_lo) - (last_rec.hi - last_rec.lo)
    unaccounted += sum(pruned)

    scheme = InducingScheme(
        imap=imap,
        y_lo=yb.lo,
        y_hi=yb.hi,
        phi_max=phi_max,
        alpha=tuple(sorted(cylinders, key=lambda c: (c.phi, c.lo))),
        y_branch_id=yb.id,
        offy_branch_ids=offy,
        unaccounted_length=unaccounted,
        metric=metric or SymbolicMetric(),
    )
    if scheme.phi_gcd() != 1 and phi_max > 1:
        raise ValueError("gcd of represented return times is not 1")
    return scheme


# ------------------------------------------------------------ first returns


def first_return(scheme: InducingScheme, x: float, cap: int = 100000) -> tuple[int, float]:
    """Least n >= 1 with f^n x back in Y, and the return point."""
    if not (scheme.y_lo <= x < scheme.y_hi):
        raise DomainError(f"x={x} not in Y=[{scheme.y_lo},{scheme.y_hi})")
    z = x
    for n in range(1, cap + 1):
        z = evaluate(scheme.imap, z)
        if scheme.y_lo <= z < scheme.y_hi:
            return n, z
    raise EscapeError(f"no return within {cap} iterations from x={x}")


def first_return_batch(
    scheme: InducingScheme, xs: np.ndarray, cap: int = 100000
) -> tuple[np.ndarray, np.ndarray]:
    xs = np.asarray(xs, dtype=float)
    tau = np.zeros(len(xs), dtype=np.int64)
    out = xs.copy()
    active = np.ones(len(xs), dtype=bool)
    z = xs.copy()
    for n in range(1, cap + 1):
        if not active.any():
            break
        z[active] = evaluate(scheme.imap, z[active])
        back = active & (z >= scheme.y_lo) & (z < scheme.y_hi)
        tau[back] = n
        out[back] = z[back]
        active &= ~back
    if active.any():
        raise EscapeError(f"{active.sum()} samples did not return within {cap} steps")
    return tau, out


# ------------------------------------------------------------------- tails


def tail_distribution(
    scheme: InducingScheme,
    n_max: int,
    cylinder_masses: np.ndarray | None = None,
) -> np.ndarray:
    """mu_Z(phi > n) for n = 1..n_max.

    With no mass vector the Lebesgue weighting on Y is used; pass per-cylinder
    stationary masses (aligned with scheme.alpha) for the mu_Z version.  The
    truncation residual stays in the tail rather than being renormalised away.
    """
    if n_max > scheme.phi_max:
        raise ValueError("tail horizon exceeds the built partition depth")
    if cylinder_masses is None:
        masses = np.array([(c.hi - c.lo) for c in scheme.alpha]) / scheme.y_length
    else:
        masses = np.asarray(cylinder_masses, dtype=float)
    phis = np.array([c.phi for c in scheme.alpha])
    by_n = np.zeros(n_max + 1)
    sel = phis <= n_max
    np.add.at(by_n, phis[sel], masses[sel])
    tail = 1.0 - np.cumsum(by_n)[1:]
    return np.maximum(tail, 0.0)


def tail_monte_carlo(
    scheme: InducingScheme,
    n_max: int,
    samples: int = 100000,
    cap: int = 1 << 20,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Sampled tail estimate and binomial standard errors."""
    rng = rng or np.random.default_rng(0)
    xs = scheme.y_lo + scheme.y_length * rng.random(samples)
    tau, _ = first_return_batch(scheme, xs, cap=cap)
    tail = np.empty(n_max)
    for n in range(1, n_max + 1):
        tail[n - 1] = np.mean(tau > n)
    stderr = np.sqrt(np.maximum(tail * (1 - tail), 0.0) / samples)
    return tail, stderr


@dataclass(frozen=True)
class TailFit:
    beta_hat: float
    c_hat: float
    r2: float
    curvature: float
    non_power_law: bool


def fit_tail_exponent(tail: np.ndarray, window: tuple[int, int] = (8, 512)) -> TailFit:
    """Least-squares slope of log tail against log n over the index window."""
    lo, hi = window
    tail = np.asarray(tail, dtype=float)
    hi = min(hi, len(tail))
    ns = np.arange(lo, hi + 1)
    ys = tail[ns - 1]
    keep = ys > 0
    ns, ys = ns[keep], ys[keep]
    if len(ns) < 8:
        raise ValueError("window must contain at least 8 positive tail points")
    L, Y = np.log(ns), np.log(ys)
    if np.ptp(L) == 0:
        raise ValueError("degenerate window (zero variance in log n)")
    A = np.vstack([L, np.ones_like(L)]).T
    (slope, intercept), res, *_ = np.linalg.lstsq(A, Y, rcond=None)
    ss_tot = np.sum((Y - Y.mean()) ** 2)
    r2 = 1.0 - (res[0] / ss_tot if len(res) and ss_tot > 0 else 0.0)
    # curvature diagnostic: quadratic coefficient in centered log-log coords
    Lc = L - L.mean()
    q = np.polyfit(Lc, Y, 2)
    curvature = float(q[0])
    return TailFit(
        beta_hat=float(-slope),
        c_hat=float(np.exp(intercept)),
        r2=float(r2),
        curvature=curvature,
        non_power_law=bool(abs(curvature) > 0.15),
    )


def kac_partial_sums(tail: np.ndarray, checkpoints: Sequence[int]) -> np.ndarray:
    """Partial sums of E[phi] = 1 + sum_n mu(phi>n) at the given horizons."""
    csum = np.concatenate([[0.0], np.cumsum(tail)])
    return np.array([1.0 + csum[min(n, len(tail))] for n in checkpoints])


# -------------------------------------------------------------- separation


@dataclass(frozen=True)
class SeparationTime:
    value: int
    capped: bool


def separation_time(z: float, zp: float, scheme: InducingScheme, depth: int = 64) -> SeparationTime:
    """Largest n with z, z' in the same n-cylinder of G, capped at depth."""
    s = 0
    x, xp = z, zp
    while s < depth:
        i, ip = scheme.cylinder_index(x), scheme.cylinder_index(xp)
        if i < 0 or ip < 0 or i != ip:
            return SeparationTime(s, False)
        cyl = scheme.alpha[i]
        x, xp = scheme.g_apply(cyl, x), scheme.g_apply(cyl, xp)
        s += 1
    return SeparationTime(depth, True)


# -------------------------------------------------------------- distortion


@dataclass(frozen=True)
class DistortionEstimate:
    c3_hat: float
    sup_part: float
    lip_part: float
    per_depth: dict


def estimate_distortion(
    scheme: InducingScheme,
    depth: int = 3,
    density: Callable[[np.ndarray], np.ndarray] | None = None,
    max_cyls_per_level: int = 10,
    word_samples: int = 400,
    pair_samples: int = 5,
    rng: np.random.Generator | None = None,
) -> DistortionEstimate:
    """Empirical Gibbs-Markov distortion constant over words up to the depth.

    For an n-cylinder a the transfer weight is
    e^{g_n(z)} = rho(z) / (rho(G^n z) |(G^n)'(z)|); the estimate is the larger
    of max e^{g_n}/mu_Z(a) and the Lipschitz quotient against
    mu_Z(a) d_theta(G^n z, G^n z').  Cumulative over depths 1..depth.
    """
    rng = rng or np.random.default_rng(7)
    if density is None:
        dens = lambda x: np.full_like(np.asarray(x, dtype=float), 1.0 / scheme.y_length)
    else:
        dens = density
    base = list(scheme.alpha[: max_cyls_per_level])
    sup_part = 0.0
    lip_part = 0.0
    per_depth = {}
    theta = scheme.metric.theta
    for n in range(1, depth + 1):
        words: list[tuple[Cylinder, ...]] = []
        total = len(base) ** n
        if total <= word_samples:
            idx = np.stack(np.meshgrid(*[np.arange(len(base))] * n, indexing="ij"), -1).reshape(-1, n)
        else:
            idx = rng.integers(0, len(base), size=(word_samples, n))
        for row in idx:
            words.append(tuple(base[i] for i in row))
        for word in words:
            # pull Y back through the word to get the n-cylinder interval
            pts = np.array([scheme.y_lo, scheme.y_hi])
            for cyl in reversed(word):
                pts = scheme.cyl_inverse(cyl, pts)
            lo, hi = float(pts[0]), float(pts[1])
            if hi - lo <= 1e-14:
                continue
            # mu_Z(a) by 4-point quadrature of the density
            qs = lo + (hi - lo) * np.array([0.0694318, 0.3300095, 0.6699905, 0.9305682])
            mu_a = float(np.mean(dens(qs))) * (hi - lo)
            if mu_a <= 0:
                continue
            t = rng.random(pair_samples + 2)
            t[0], t[1] = 0.02, 0.98
            zs = lo + (hi - lo) * np.sort(t)
            egs = np.empty(len(zs))
            ends = np.empty(len(zs))
            for i, z in enumerate(zs):
                x = z
                dtot = 1.0
                for cyl in word:
                    dtot *= scheme.g_derivative(cyl, x)
                    x = scheme.g_apply(cyl, x)
                egs[i] = float(dens(np.asarray(z))) / (float(dens(np.asarray(x))) * dtot)
                ends[i] = x
            sup_part = max(sup_part, float(np.max(egs)) / mu_a)
            for i in range(len(zs) - 1):
                st = separation_time(ends[i], ends[i + 1], scheme, depth=40)
                dth = theta ** st.value
                lip = abs(egs[i] - egs[i + 1]) / (mu_a * dth)
                lip_part = max(lip_part, lip)
        per_depth[n] = max(sup_part, lip_part)
    return DistortionEstimate(
        c3_hat=max(sup_part, lip_part),
        sup_part=sup_part,
        lip_part=lip_part,
        per_depth=per_depth,
    )
