"""Correlation functions of the torus extension, mode by mode.

The operator estimator computes each Fourier mode through the renewal
sequence on Y (observables supported in Y x T^d); the Monte Carlo estimator
simulates the skew product directly and is the independent cross-check in the
finite measure regime.  Asymptotic checks compare the measured series against
the leading tail-sum term (finite measure) or the arcsine-scaled limit
(infinite measure).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cocycles import ToralCocycle, ToralObservable, wrap_angle
from .fitting import loglog_slope
from .inducing import InducingScheme
from .interval_maps import evaluate
from .operators import UlamGrid, UlamPieceFactory
from .renewal_tower import RenewalSequence, Tower, direct_tower_operator, renewal_recursion

__all__ = [
    "CorrelationSeries",
    "RegimeError",
    "d_beta",
    "mode_correlation",
    "correlation_series",
    "tower_correlation_series",
    "theorem_check_finite",
    "theorem_check_infinite",
    "upper_bound_check",
    "FiniteMeasureReport",
    "InfiniteMeasureReport",
    "UpperBoundReport",
]


class RegimeError(ValueError):
    """Check invoked in the wrong measure regime."""


def d_beta(beta: float) -> float:
    """Arcsine-law constant: sin(beta pi)/pi on (0,1), and 1 at beta = 1."""
    if beta == 1.0:
        return 1.0
    if 0.0 < beta < 1.0:
        return math.sin(beta * math.pi) / math.pi
    raise ValueError("d_beta is defined for beta in (0, 1]")


@dataclass
class CorrelationSeries:
    ns: np.ndarray
    rho: np.ndarray
    mode_terms: dict[tuple[int, ...], np.ndarray]
    vbar: float
    wbar: float
    mu_Y: float
    beta: float
    estimator: str
    support: str = "Y"
    stderr: np.ndarray | None = None
    tail: np.ndarray | None = None
    flags: list[str] = field(default_factory=list)

    @property
    def finite_measure(self) -> bool:
        return self.beta > 1.0


def mode_correlation(
    ren: RenewalSequence, w_k: np.ndarray, n: int, mu_Y: float = 1.0
) -> complex:
    """mu(Y) < w_k, T_{k,n} v_{-k} >_{mu_Z} with v_{-k} the sequence's probe."""
    pi = ren.piece_set.stationary
    t_n = ren.vector(n)
    return mu_Y * complex(np.sum(np.asarray(w_k) * t_n * pi))


def _mode_pairs(v: ToralObservable, w: ToralObservable):
    """Frequencies k with v_{-k} and w_k both present."""
    ks = []
    for k in w.mode_keys:
        mk = tuple(-ki for ki in k)
        if mk in v.modes:
            ks.append(k)
    return ks


def correlation_series(
    v: ToralObservable,
    w: ToralObservable,
    h: ToralCocycle,
    scheme: InducingScheme,
    N: int,
    estimator: str = "operator",
    factory: UlamPieceFactory | None = None,
    grid_m: int = 128,
    phi_max: int | None = None,
    mc_samples: int = 1_000_000,
    mc_burn: int = 10_000,
    mc_shards: int = 1024,
    seed: int = 2024,
    threads: int = 1,
) -> CorrelationSeries:
    """Correlation of observables supported in Y x T^d against the horizon N."""
    beta = scheme.beta
    flags = []
    if h.is_zero:
        flags.append("non-mixing extension (zero cocycle)")
    if estimator == "operator":
        if factory is None:
            grid = UlamGrid(scheme.y_lo, scheme.y_hi, grid_m)
            factory = UlamPieceFactory(scheme, h, grid, phi_max)
        tail = factory.tail(scheme.phi_max)
        mu_Y = 1.0 / factory.mean_return_time() if beta > 1 else 1.0
        grid = factory.grid
        ks = _mode_pairs(v, w)
        mode_terms = {}
        total = np.zeros(N + 1, dtype=complex)
        for k in ks:
            mk = tuple(-ki for ki in k)
            v_mk = grid.cell_average(lambda x: v.mode_values(mk, x))
            w_k = grid.cell_average(lambda x: w.mode_values(k, x))
            tset = factory.twisted_set(k)
            ren = renewal_recursion(tset, N, mode="vector", probe=v_mk)
            term = mu_Y * (ren.values @ (w_k * factory.stationary))
            mode_terms[k] = term
            total += term
        zero = (0,) * v.dim
        v0 = grid.cell_average(lambda x: v.mode_values(zero, x))
        w0 = grid.cell_average(lambda x: w.mode_values(zero, x))
        vbar = float(mu_Y * np.sum(v0.real * factory.stationary))
        wbar = float(mu_Y * np.sum(w0.real * factory.stationary))
        imag = float(np.max(np.abs(total.imag))) if len(total) else 0.0
        if imag > 1e-10:
            flags.append(f"imaginary residue {imag:.2e} above 1e-10")
        return CorrelationSeries(
            ns=np.arange(N + 1),
            rho=total.real,
            mode_terms=mode_terms,
            vbar=vbar,
            wbar=wbar,
            mu_Y=mu_Y,
            beta=beta,
            estimator="operator",
            support="Y",
            tail=tail,
            flags=flags,
        )
    if estimator == "monte_carlo":
        if beta <= 1:
            raise RegimeError(
                "the infinite measure regime has no probability to sample; "
                "Monte Carlo needs gamma < 1"
            )
        return _monte_carlo_series(
            v, w, h, scheme, N, mc_samples, mc_burn, mc_shards, seed, flags
        )
    raise ValueError(f"unknown estimator {estimator!r}")


def _restrict_indicator(scheme: InducingScheme, x: np.ndarray) -> np.ndarray:
    return (x >= scheme.y_lo) & (x < scheme.y_hi)


def _monte_carlo_series(
    v: ToralObservable,
    w: ToralObservable,
    h: ToralCocycle,
    scheme: InducingScheme,
    N: int,
    samples: int,
    burn: int,
    shards: int,
    seed: int,
    flags: list[str],
) -> CorrelationSeries:
    """Skew-product simulation: independently seeded shard walkers,
    antithetic psi pairs, compensated shard-mean reduction."""
    import math

    imap = scheme.imap
    per = max(1, samples // shards)
    shard_rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(shards)]
    x = np.array([r.random() for r in shard_rngs])
    for _ in range(burn):
        x = evaluate(imap, x)
    T = per + N
    xs = np.empty((T, shards))
    xs[0] = x
    for t in range(1, T):
        xs[t] = evaluate(imap, xs[t - 1])
    hs = h(xs.ravel()).reshape(h.dim, T, shards)
    hcum = np.concatenate([np.zeros((h.dim, 1, shards)), np.cumsum(hs, axis=1)], axis=1)
    psi = np.stack(
        [r.random((h.dim, per)) for r in shard_rngs], axis=2
    ) * 2.0 * np.pi

    def eval_obs(obs, xv, psiv):
        out = np.zeros(xv.shape, dtype=complex)
        for k, poly in obs.modes.items():
            vk = np.zeros(xv.shape, dtype=complex)
            for f, c in poly.items():
                vk += c * np.exp(2j * np.pi * f * xv)
            out += vk * np.exp(1j * np.tensordot(np.asarray(k, float), psiv, axes=(0, 0)))
        return out.real

    in_y = _restrict_indicator(scheme, xs)
    rho = np.zeros(N + 1)
    stderr = np.zeros(N + 1)
    base_idx = np.arange(per)
    for n in range(N + 1):
        xn = xs[base_idx + n]
        hn = hcum[:, base_idx + n, :] - hcum[:, base_idx, :]
        vals = np.zeros((per, shards))
        for anti in (0.0, np.pi):
            p0 = psi + anti
            vv = eval_obs(v, xs[:per], p0) * in_y[:per]
            ww = eval_obs(w, xn, wrap_angle(p0 + hn)) * in_y[base_idx + n]
            vals += 0.5 * vv * ww
        shard_means = vals.mean(axis=0)
        rho[n] = math.fsum(shard_means) / shards
        stderr[n] = float(shard_means.std(ddof=1) / np.sqrt(shards))
    zero = (0,) * v.dim

    def mean_obs(obs):
        # time average of the zero mode over the equilibrated walkers
        vk = obs.mode_values(zero, xs[:per].ravel()).real * in_y[:per].ravel()
        return float(vk.mean())

    return CorrelationSeries(
        ns=np.arange(N + 1),
        rho=rho,
        mode_terms={},
        vbar=mean_obs(v),
        wbar=mean_obs(w),
        mu_Y=float(in_y[:per].mean()),
        beta=scheme.beta,
        estimator="monte_carlo",
        support="Y",
        stderr=stderr,
        flags=flags,
    )


def tower_correlation_series(
    v: ToralObservable,
    w: ToralObservable,
    tower: Tower,
    N: int,
) -> CorrelationSeries:
    """Full-X correlation through twisted tower powers (finite measure)."""
    scheme = tower.scheme
    beta = scheme.beta
    if beta <= 1:
        raise RegimeError("the tower estimator normalises a finite measure")
    flags = []
    if tower.cocycle.is_zero:
        flags.append("non-mixing extension (zero cocycle)")
    from .interval_maps import evaluate as _ev

    # representatives of every state under the projection to X
    reps = np.empty(tower.nstates)
    mids = 0.5 * (tower.cell_lo + tower.cell_hi)
    for q in range(tower.Q):
        x = mids[q]
        a = int(tower.offsets[q])
        for l in range(int(tower.cell_phi[q])):
            reps[a + l] = x
            if l + 1 < tower.cell_phi[q]:
                x = _ev(scheme.imap, x)
    weights = tower.state_weights()
    total_mass = float(weights.sum())  # E[phi], truncated
    ks = _mode_pairs(v, w)
    mode_terms = {}
    total = np.zeros(N + 1, dtype=complex)
    for k in ks:
        mk = tuple(-ki for ki in k)
        v_mk = v.mode_values(mk, reps)
        w_k = w.mode_values(k, reps)
        L = direct_tower_operator(tower, k)
        vec = v_mk.astype(complex)
        term = np.empty(N + 1, dtype=complex)
        term[0] = np.sum(w_k * vec * weights) / total_mass
        for n in range(1, N + 1):
            vec = L @ vec
            term[n] = np.sum(w_k * vec * weights) / total_mass
        mode_terms[k] = term
        total += term
    zero = (0,) * v.dim
    vbar = float(np.sum(v.mode_values(zero, reps).real * weights) / total_mass)
    wbar = float(np.sum(w.mode_values(zero, reps).real * weights) / total_mass)
    return CorrelationSeries(
        ns=np.arange(N + 1),
        rho=total.real,
        mode_terms=mode_terms,
        vbar=vbar,
        wbar=wbar,
        mu_Y=1.0 / total_mass,
        beta=beta,
        estimator="operator",
        support="X",
        tail=None,
        flags=flags,
    )


# ------------------------------------------------------------------- checks


@dataclass
class FiniteMeasureReport:
    beta: float
    leading: np.ndarray
    excess: np.ndarray
    ratio_checkpoints: list[tuple[int, float]]
    ratio_max_gap: float
    residual_slope: float | None
    residual_r2: float | None
    q_expected: float
    mean_zero: bool
    below_noise_floor: bool
    flags: list[str]


def theorem_check_finite(
    series: CorrelationSeries,
    scheme: InducingScheme,
    fit_window: tuple[int, int] | None = None,
) -> FiniteMeasureReport:
    """Decompose rho(n) - vbar wbar into the tail-sum term plus a remainder."""
    beta = series.beta
    if beta <= 1:
        raise RegimeError("finite-measure check needs gamma < 1 (beta > 1)")
    if series.tail is None:
        raise ValueError("series carries no measured tail")
    tail = series.tail
    N = len(series.rho) - 1
    vw = series.vbar * series.wbar
    mean_zero = abs(series.vbar) < 1e-9 or abs(series.wbar) < 1e-9
    tail_sums = np.concatenate([np.cumsum(tail[::-1])[::-1], [0.0]])
    # sum_{j>n} mu(tau>j) = mu_Y * sum_{j>=n+1} tail_j
    lead = np.array(
        [series.mu_Y * (tail_sums[n] if n < len(tail) else 0.0) * vw for n in range(N + 1)]
    )
    excess = series.rho - vw
    resid = excess - lead
    flags = list(series.flags)
    checkpoints = []
    lo = max(8, N // 10)
    for n in np.unique(np.geomspace(lo, N, 9).astype(int)):
        if lead[n] != 0:
            checkpoints.append((int(n), float(excess[n] / lead[n])))
    ratio_max_gap = (
        max(abs(r - 1.0) for _, r in checkpoints) if checkpoints else float("inf")
    )
    scale = max(np.max(np.abs(series.rho)), abs(vw), 1e-300)
    below = bool(np.all(np.abs(resid[lo:]) < 1e-12 * scale))
    slope = r2 = None
    if not below:
        window = fit_window or (max(16, N // 32), N)
        target = np.abs(resid) if not mean_zero else np.abs(excess)
        ns = np.arange(window[0], min(window[1], N) + 1)
        pos = target[ns] > 1e-14 * scale
        if pos.sum() >= 8:
            fit = loglog_slope(ns[pos].astype(float), target[ns][pos])
            slope, r2 = fit.slope, fit.r2
        else:
            below = True
    q_expected = beta if (beta >= 2 or mean_zero) else 2 * beta - 2
    return FiniteMeasureReport(
        beta=beta,
        leading=lead,
        excess=excess,
        ratio_checkpoints=checkpoints,
        ratio_max_gap=float(ratio_max_gap),
        residual_slope=slope,
        residual_r2=r2,
        q_expected=q_expected,
        mean_zero=mean_zero,
        below_noise_floor=below,
        flags=flags,
    )


@dataclass
class InfiniteMeasureReport:
    beta: float
    ell_hat: float
    d_beta: float
    target: float
    scaled_checkpoints: list[tuple[int, float]]
    gap_at_horizon: float
    gap_decreasing: bool
    mean_zero: bool
    mean_zero_slope: float | None
    flags: list[str]


def theorem_check_infinite(
    series: CorrelationSeries,
    scheme: InducingScheme,
    ell_window: tuple[int, int] = (64, 2048),
) -> InfiniteMeasureReport:
    """Compare ell-tilde(n) n^{1-beta} rho(n) with the arcsine constant."""
    beta = series.beta
    if not (0.5 < beta <= 1.0):
        raise RegimeError("infinite-measure limit check needs beta in (1/2, 1]")
    if series.tail is None:
        raise ValueError("series carries no measured tail")
    tail = series.tail
    N = len(series.rho) - 1
    lo = max(8, min(ell_window[0], len(tail) // 4))
    hi = min(ell_window[1], len(tail))
    ns = np.arange(lo, hi + 1)
    vals = tail[ns - 1] * ns.astype(float) ** beta
    ell_hat = float(np.exp(np.mean(np.log(vals[vals > 0]))))
    db = d_beta(beta)
    target = db * series.vbar * series.wbar
    mean_zero = abs(series.vbar) < 1e-9 or abs(series.wbar) < 1e-9
    flags = list(series.flags)
    flags.append(
        "scaling uses the limit-theorem form elltilde(n) n^(1-beta) rho(n); "
        "the bare Y-restricted statement without the n^(1-beta) factor is "
        "inconsistent for beta < 1 and is not implemented"
    )
    checkpoints = []
    harm = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, N + 1))])
    for n in np.unique(np.geomspace(max(8, N // 10), N, 9).astype(int)):
        elltilde = ell_hat if beta < 1 else ell_hat * harm[n]
        scaled = elltilde * n ** (1.0 - beta) * series.rho[n]
        checkpoints.append((int(n), float(scaled)))
    if mean_zero or target == 0:
        slope = None
        ns_fit = np.arange(max(16, N // 32), N + 1)
        vals_fit = np.abs(series.rho[ns_fit])
        keep = vals_fit > 0
        if keep.sum() >= 8:
            slope = loglog_slope(ns_fit[keep].astype(float), vals_fit[keep]).slope
        return InfiniteMeasureReport(
            beta=beta,
            ell_hat=ell_hat,
            d_beta=db,
            target=target,
            scaled_checkpoints=checkpoints,
            gap_at_horizon=float("nan"),
            gap_decreasing=False,
            mean_zero=True,
            mean_zero_slope=slope,
            flags=flags,
        )
    gaps = [abs(s / target - 1.0) for _, s in checkpoints]
    return InfiniteMeasureReport(
        beta=beta,
        ell_hat=ell_hat,
        d_beta=db,
        target=target,
        scaled_checkpoints=checkpoints,
        gap_at_horizon=float(gaps[-1]),
        gap_decreasing=bool(gaps[-1] < gaps[0]),
        mean_zero=False,
        mean_zero_slope=None,
        flags=flags,
    )


@dataclass
class UpperBoundReport:
    beta: float
    slope: float | None
    bound: float
    rejected: bool
    flags: list[str]


def upper_bound_check(
    series_fullX: CorrelationSeries,
    scheme: InducingScheme,
    fit_window: tuple[int, int] | None = None,
) -> UpperBoundReport:
    """Fit the centered full-X correlation decay against the rate beta - 1."""
    beta = series_fullX.beta
    if beta <= 1:
        raise RegimeError("upper bound check applies to the finite measure case")
    flags = list(series_fullX.flags)
    if any("non-mixing" in f for f in flags):
        return UpperBoundReport(beta=beta, slope=None, bound=-(beta - 1), rejected=True, flags=flags)
    vw = series_fullX.vbar * series_fullX.wbar
    target = np.abs(series_fullX.rho - vw)
    N = len(target) - 1
    window = fit_window or (max(8, N // 8), N)
    ns = np.arange(window[0], min(window[1], N) + 1)
    keep = target[ns] > 1e-14 * max(1.0, abs(vw))
    slope = None
    if keep.sum() >= 8:
        slope = loglog_slope(ns[keep].astype(float), target[ns][keep]).slope
    return UpperBoundReport(
        beta=beta, slope=slope, bound=-(beta - 1), rejected=False, flags=flags
    )
