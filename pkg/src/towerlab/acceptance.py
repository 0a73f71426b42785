"""The one-shot verification suite: twelve desk-scale checks with pinned tolerances.

Each criterion function returns a CheckResult; run_acceptance executes them in
order, sharing expensive artifacts (schemes, operator factories) through the
context.  Budgets assume a single laptop core.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .cocycles import cocycle_from_records, observable_from_records, zero_cocycle
from .config import COS_PSI, GENERIC_OBSERVABLE
from .correlations import (
    correlation_series,
    d_beta,
    theorem_check_finite,
    theorem_check_infinite,
)
from .eigen_probes import fixed_points, good_asymptotics_fit, resonance_defect
from .inducing import build_scheme, estimate_distortion, fit_tail_exponent, tail_distribution
from .interval_maps import map_from_name
from .operators import (
    UlamGrid,
    UlamPieceFactory,
    resolvent_diagnostic,
    spectral_gap,
)
from .renewal_tower import (
    build_tower,
    decay_fit,
    fourier_agreement,
    renewal_recursion,
    renewal_via_fourier,
    tower_identity_report,
)
from .reporting import CheckResult

__all__ = ["AcceptanceContext", "run_acceptance", "CRITERIA"]

H_RECORDS = [[0, 1, 0.3, 0.0]]  # the generic cocycle 0.3 cos(2 pi x)


@dataclass
class AcceptanceContext:
    seed: int = 2024
    schemes: dict = field(default_factory=dict)
    factories: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def scheme(self, gamma: float, phi_max: int = 4096):
        key = (gamma, phi_max)
        if key not in self.schemes:
            t0 = time.time()
            self.schemes[key] = build_scheme(
                map_from_name("lsv", gamma=gamma, c1=2.0), phi_max=phi_max
            )
            self.timings[f"scheme{key}"] = time.time() - t0
        return self.schemes[key]

    def factory(self, gamma: float, m: int, phi_max: int, twisted: bool = True):
        key = (gamma, m, phi_max, twisted)
        if key not in self.factories:
            sch = self.scheme(gamma, max(4096, phi_max))
            h = cocycle_from_records([tuple(r) for r in H_RECORDS]) if twisted else zero_cocycle(1)
            t0 = time.time()
            self.factories[key] = UlamPieceFactory(
                sch, h, UlamGrid(sch.y_lo, sch.y_hi, m), phi_max=phi_max
            )
            self.timings[f"factory{key}"] = time.time() - t0
        return self.factories[key]


def criterion_01_tail_exponent(ctx: AcceptanceContext) -> CheckResult:
    """Return-time tail exponents recover 1/gamma on both presets."""
    results = {}
    ok = True
    for gamma, window in ((0.5, (1.85, 2.15)), (1.5, (0.57, 0.77))):
        sch = ctx.scheme(gamma)
        tail = tail_distribution(sch, 4096)
        fit = fit_tail_exponent(tail, (8, 512))
        results[gamma] = fit.beta_hat
        ok &= window[0] <= fit.beta_hat <= window[1]
    return CheckResult(
        name="tail-exponent",
        passed=bool(ok),
        value={g: round(b, 4) for g, b in results.items()},
        tolerance="beta_hat in [1.85,2.15] (gamma=0.5) and [0.57,0.77] (gamma=1.5)",
        details="window n in [8,512], Lebesgue-weighted exact tails",
    )


def criterion_02_distortion(ctx: AcceptanceContext) -> CheckResult:
    """Distortion constant finite and stable between word depths 2 and 4."""
    vals = {}
    ok = True
    for gamma in (0.5, 1.5):
        f = ctx.factory(gamma, 128, 1024)
        sch = ctx.scheme(gamma)
        d2 = estimate_distortion(sch, depth=2, density=f.density, rng=np.random.default_rng(ctx.seed))
        d4 = estimate_distortion(sch, depth=4, density=f.density, rng=np.random.default_rng(ctx.seed))
        drift = d4.c3_hat / d2.c3_hat if d2.c3_hat > 0 else math.inf
        vals[gamma] = (round(d2.c3_hat, 4), round(d4.c3_hat, 4), round(drift, 4))
        ok &= math.isfinite(d4.c3_hat) and drift < 2.0 and drift >= 1.0 - 1e-9
    return CheckResult(
        name="distortion-stability",
        passed=bool(ok),
        value=vals,
        tolerance="depth-4 over depth-2 drift < 2x, both presets",
        details="(C3_depth2, C3_depth4, drift) per gamma",
    )


def criterion_03_spectral_gap(ctx: AcceptanceContext) -> CheckResult:
    """Perron data of the induced operator at m=256."""
    f = ctx.factory(0.5, 256, 1024)
    lam2 = spectral_gap(f.twisted_set((0,)))
    resid = f.fixed_point_residual
    ok = resid <= 1e-8 and lam2 < 0.99
    return CheckResult(
        name="spectral-gap",
        passed=bool(ok),
        value={"perron_residual": float(resid), "lambda2": round(lam2, 6)},
        tolerance="residual <= 1e-8, |lambda2| < 0.99",
        details="lsv gamma=0.5, m=256",
    )


def criterion_04_renewal_fourier(ctx: AcceptanceContext) -> CheckResult:
    """Convolution recursion against DFT inversion of the resolvent."""
    f = ctx.factory(0.5, 128, 1024)
    ts = f.twisted_set((1,))
    ren = renewal_recursion(ts, 256, mode="matrix")
    fr = renewal_via_fourier(ts, 256, 4096, mode="matrix", chunk=128)
    ag = fourier_agreement(ren, fr, 256)
    worst = float(np.max(ag))
    ok = worst <= 1e-6 and not fr.singular_omegas
    return CheckResult(
        name="renewal-fourier-identity",
        passed=bool(ok),
        value={"max_rel_discrepancy": worst, "singular_points": len(fr.singular_omegas)},
        tolerance="<= 1e-6 relative for n <= 256 (k=1, m=128, 4096 frequencies)",
        details="",
    )


def criterion_05_tower_identity(ctx: AcceptanceContext) -> CheckResult:
    """Climb/renewal/entry decomposition equals direct tower powers."""
    sch = ctx.scheme(0.5)
    h = cocycle_from_records([tuple(r) for r in H_RECORDS])
    tower = build_tower(sch, h, m_base=64, phi_max=64)
    worst = {}
    ok = True
    for k in (0, 1, 2):
        rep = tower_identity_report(tower, k, 64)
        worst[k] = rep["max_abs_error"]
        ok &= rep["max_abs_error"] <= 1e-10 and rep["restriction_error"] <= 1e-10
    return CheckResult(
        name="tower-identity",
        passed=bool(ok),
        value={k: float(v) for k, v in worst.items()},
        tolerance="entrywise <= 1e-10 for n <= 64, m=64, phi_max=64, k in {0,1,2}",
        details=f"tower states: {tower.nstates}",
    )


def criterion_06_renewal_decay(ctx: AcceptanceContext) -> CheckResult:
    """Two-sided slope window around -beta for the twisted renewal norms.

    The measured decay is generically faster than the asserted window: after a
    twist-dependent transient the coefficient norms track the return-time
    piece masses mu(phi = n) ~ n^{-(beta+1)}, not n^{-beta}; the window treats
    an upper bound as a rate.  Reported honestly either way.
    """
    vals = {}
    ok = True
    for gamma in (0.5, 1.5):
        beta = 1.0 / gamma
        f = ctx.factory(gamma, 128, 1024)
        ts = f.twisted_set((1,))
        probe = f.grid.cell_average(lambda x: np.exp(2j * np.pi * x))
        probe = probe / np.max(np.abs(probe))
        ren = renewal_recursion(ts, 512, mode="vector", probe=probe)
        fit = decay_fit(ren.norms, (16, 512))
        tail_fit = decay_fit(ren.norms, (256, 512))
        vals[gamma] = {
            "slope": round(fit.slope, 3),
            "window": (round(-beta - 0.4, 3), round(-beta + 0.4, 3)),
            "late_slope": round(tail_fit.slope, 3),
        }
        ok &= (-beta - 0.4) <= fit.slope <= (-beta + 0.4)
    return CheckResult(
        name="renewal-decay-window",
        passed=bool(ok),
        value=vals,
        tolerance="slope in [-beta-0.4, -beta+0.4] over n in [16,512], k=1, vector mode",
        details="late_slope is the [256,512] sub-window diagnostic",
    )


def criterion_07_mode_decay(ctx: AcceptanceContext) -> CheckResult:
    """Nonzero-mode correlation decays at least at the rate beta - 1/2."""
    sch = ctx.scheme(0.5)
    f = ctx.factory(0.5, 128, 1024)
    h = cocycle_from_records([tuple(r) for r in H_RECORDS])
    v = observable_from_records([tuple(r) for r in COS_PSI], dim=1)
    series = correlation_series(v, v, h, sch, 512, estimator="operator", factory=f)
    vals = np.abs(series.rho)
    ns = np.arange(16, 513)
    keep = vals[ns] > 0
    from .fitting import loglog_slope

    fit = loglog_slope(ns[keep].astype(float), vals[ns][keep])
    beta = 2.0
    ok = fit.slope <= -(beta - 0.5)
    return CheckResult(
        name="mode-correlation-decay",
        passed=bool(ok),
        value={"slope": round(fit.slope, 3)},
        tolerance=f"slope <= {-(beta-0.5)} (gamma=0.5, v=w=cos psi on Y, k=+-1)",
        details="window n in [16,512]",
    )


def criterion_08_finite_law(ctx: AcceptanceContext) -> CheckResult:
    """Centered correlation follows the tail-sum term; mean-zero data decay fast.

    The torus twist is set to cos(2 pi x) with unit amplitude here: the
    zero-mode law under test does not involve the twist, and a strong twist
    clears the nonzero-mode transient (which is only O(n^{-beta+eps})
    asymptotically, with a large constant) before the last decade starts.
    """
    gamma, beta = 0.3, 10.0 / 3.0
    sch = ctx.scheme(gamma)
    key = (gamma, 128, 4096, "eps1")
    if key not in ctx.factories:
        ctx.factories[key] = UlamPieceFactory(
            sch,
            cocycle_from_records([(0, 1, 1.0, 0.0)]),
            UlamGrid(sch.y_lo, sch.y_hi, 128),
            phi_max=4096,
        )
    f = ctx.factories[key]
    h = cocycle_from_records([(0, 1, 1.0, 0.0)])
    v = observable_from_records([tuple(r) for r in GENERIC_OBSERVABLE], dim=1)
    series = correlation_series(v, v, h, sch, 1024, estimator="operator", factory=f)
    rep = theorem_check_finite(series, sch)
    ratio_ok = rep.ratio_max_gap <= 0.2
    # mean-zero variant: centered zero-mode observable
    c = float(np.sum(f.grid.cell_average(lambda x: np.cos(2 * np.pi * x)) * f.stationary))
    v0 = observable_from_records([(0, 0, -c, 0.0), (0, 1, 1.0, 0.0)], dim=1)
    series0 = correlation_series(v0, v, h, sch, 1024, estimator="operator", factory=f)
    rep0 = theorem_check_finite(series0, sch)
    mz_ok = rep0.mean_zero and (
        rep0.below_noise_floor or (rep0.residual_slope is not None and rep0.residual_slope <= -(beta - 0.5))
    )
    return CheckResult(
        name="finite-measure-law",
        passed=bool(ratio_ok and mz_ok),
        value={
            "ratio_max_gap": round(rep.ratio_max_gap, 4),
            "mean_zero_slope": None if rep0.residual_slope is None else round(rep0.residual_slope, 3),
        },
        tolerance=f"ratio within 20% over the last decade; mean-zero slope <= {-(beta-0.5):.3f}",
        details=f"gamma=0.3, checkpoints={[(n, round(r,3)) for n, r in rep.ratio_checkpoints[::4]]}",
    )


def criterion_09_infinite_law(ctx: AcceptanceContext) -> CheckResult:
    """Arcsine-scaled correlation approaches d_beta vbar wbar from the tail."""
    gamma, beta = 1.5, 2.0 / 3.0
    sch = ctx.scheme(gamma)
    key = (gamma, 64, 4096, True)
    if key not in ctx.factories:
        h = cocycle_from_records([tuple(r) for r in H_RECORDS])
        ctx.factories[key] = UlamPieceFactory(
            sch, h, UlamGrid(sch.y_lo, sch.y_hi, 64), phi_max=4096
        )
    f = ctx.factories[key]
    h = cocycle_from_records([tuple(r) for r in H_RECORDS])
    v = observable_from_records([tuple(r) for r in GENERIC_OBSERVABLE], dim=1)
    series = correlation_series(v, v, h, sch, 4096, estimator="operator", factory=f)
    rep = theorem_check_infinite(series, sch)
    ok = rep.gap_at_horizon <= 0.15 and rep.gap_decreasing
    return CheckResult(
        name="infinite-measure-law",
        passed=bool(ok),
        value={
            "gap_at_4096": round(rep.gap_at_horizon, 4),
            "decreasing": rep.gap_decreasing,
            "d_beta": round(rep.d_beta, 6),
        },
        tolerance="|scaled/target - 1| <= 0.15 at n=4096 and decreasing over the last decade",
        details=f"d_beta = sin(2 pi/3)/pi = {d_beta(beta):.6f}, ell_hat={rep.ell_hat:.4f}",
    )


def criterion_10_estimator_agreement(ctx: AcceptanceContext) -> CheckResult:
    """Operator and Monte Carlo estimators agree within three standard errors."""
    gamma = 0.3
    sch = ctx.scheme(gamma)
    f = ctx.factory(gamma, 128, 1024)
    h = cocycle_from_records([tuple(r) for r in H_RECORDS])
    v = observable_from_records([tuple(r) for r in GENERIC_OBSERVABLE], dim=1)
    op = correlation_series(v, v, h, sch, 20, estimator="operator", factory=f)
    mc = correlation_series(
        v, v, h, sch, 20, estimator="monte_carlo",
        mc_samples=1_000_000, mc_burn=10_000, mc_shards=1024, seed=ctx.seed,
    )
    z = np.abs(op.rho - mc.rho) / np.maximum(mc.stderr, 1e-300)
    worst = float(np.max(z))
    ok = worst <= 3.0
    return CheckResult(
        name="estimator-cross-validation",
        passed=bool(ok),
        value={"max_z_score": round(worst, 3)},
        tolerance="<= 3 standard errors for every n <= 20 (10^6 samples)",
        details=f"gamma=0.3; worst at n={int(np.argmax(z))}",
    )


def criterion_11_resolvent(ctx: AcceptanceContext) -> CheckResult:
    """Twisted resolvents stay bounded over k; the zero cocycle is flagged."""
    f = ctx.factory(0.5, 128, 1024)
    sups = {}
    ok = True
    for k in range(1, 9):
        scan = resolvent_diagnostic(f.twisted_set((k,)), omega_count=256)
        sups[k] = round(scan.sup, 3)
        ok &= not scan.singular
    f0 = ctx.factory(0.5, 128, 1024, twisted=False)
    scan0 = resolvent_diagnostic(f0.twisted_set((1,)), omega_count=256)
    control = 0.0 in scan0.singular_omegas
    ok &= control
    return CheckResult(
        name="resolvent-diagnostic",
        passed=bool(ok),
        value={"sup_norms": sups, "zero_cocycle_flagged": control},
        tolerance="finite for k=1..8 with the generic cocycle; singular at omega=0 for h=0",
        details="",
    )


def criterion_12_eigen_probes(ctx: AcceptanceContext) -> CheckResult:
    """Resonance defect and geometric residual expansion of the lifted cocycle."""
    sch = ctx.scheme(0.5)
    h = cocycle_from_records([tuple(r) for r in H_RECORDS])
    fps = fixed_points(sch, h, max_count=40)
    interior = [p for p in fps if not p.boundary]
    deepest = sorted(interior, key=lambda p: p.phi)[-2:]
    defect, argk = resonance_defect(sch, h, deepest[0], deepest[1], K=5)
    zero = zero_cocycle(1)
    fps0 = fixed_points(sch, zero, max_count=4)
    int0 = [p for p in fps0 if not p.boundary][:2]
    defect0, _ = resonance_defect(sch, zero, int0[0], int0[1], K=5)
    fit = good_asymptotics_fit(sch, h, base_cyl=interior[0].cyl_id, excursion_cyl=interior[1].cyl_id, N_max=25)
    ok = (
        defect0 == 0.0
        and defect > 0.01
        and fit.r2 is not None
        and fit.r2 >= 0.9
        and not fit.fit_failure
        and not any("not constant" in fl for fl in fit.flags)
    )
    return CheckResult(
        name="eigen-probes",
        passed=bool(ok),
        value={
            "resonance_defect": round(defect, 5),
            "zero_cocycle_defect": defect0,
            "good_asymptotics_r2": None if fit.r2 is None else round(fit.r2, 4),
            "gamma_hat": None if fit.gamma_hat is None else round(fit.gamma_hat, 4),
            "kappa_prime": fit.kappa_prime,
        },
        tolerance="defect 0 for h=0, > 0.01 generic (|k|<=5); residual fit r2 >= 0.9 to N=25",
        details=f"argmin k={argk}; phi offsets constant: {not any('not constant' in fl for fl in fit.flags)}",
    )


CRITERIA = [
    criterion_01_tail_exponent,
    criterion_02_distortion,
    criterion_03_spectral_gap,
    criterion_04_renewal_fourier,
    criterion_05_tower_identity,
    criterion_06_renewal_decay,
    criterion_07_mode_decay,
    criterion_08_finite_law,
    criterion_09_infinite_law,
    criterion_10_estimator_agreement,
    criterion_11_resolvent,
    criterion_12_eigen_probes,
]


def run_acceptance(
    ctx: AcceptanceContext | None = None,
    echo=print,
    only: list[int] | None = None,
) -> list[CheckResult]:
    """Run the full suite (or a 1-based subset), one summary line per criterion."""
    ctx = ctx or AcceptanceContext()
    results = []
    for i, crit in enumerate(CRITERIA, start=1):
        if only and i not in only:
            continue
        t0 = time.time()
        try:
            res = crit(ctx)
        except Exception as exc:  # present errors as failed checks, keep going
            res = CheckResult(
                name=crit.__name__.replace("criterion_", "").replace("_", "-"),
                passed=False,
                details=f"error: {type(exc).__name__}: {exc}",
            )
        dt = time.time() - t0
        res.details = (res.details + f" [{dt:.1f}s]").strip()
        if echo:
            echo(res.line())
        results.append(res)
    return results
