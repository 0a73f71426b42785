import numpy as np
import pytest

from towerlab.cocycles import cocycle_from_records, observable_from_records, zero_cocycle
from towerlab.correlations import (
    RegimeError,
    correlation_series,
    d_beta,
    mode_correlation,
    theorem_check_finite,
    theorem_check_infinite,
    tower_correlation_series,
    upper_bound_check,
)
from towerlab.inducing import build_scheme
from towerlab.interval_maps import make_lsv
from towerlab.operators import UlamGrid, UlamPieceFactory
from towerlab.renewal_tower import build_tower, renewal_recursion

COS_PSI = [(1, 0, 1.0, 0.0)]
GENERIC = [(0, 0, 1.0, 0.0), (0, 1, 0.5, 0.0), (1, 0, 1.0, 0.0)]


@pytest.fixture(scope="module")
def lsv03_scheme():
    return build_scheme(make_lsv(0.3), phi_max=2048)


@pytest.fixture(scope="module")
def factory03(lsv03_scheme, h03):
    return UlamPieceFactory(
        lsv03_scheme, h03, UlamGrid(0.5, 1.0, 64), phi_max=1024
    )


def test_d_beta_values():
    assert d_beta(0.5) == pytest.approx(1.0 / np.pi)
    assert d_beta(1.0) == 1.0
    assert d_beta(2.0 / 3.0) == pytest.approx(np.sin(2 * np.pi / 3) / np.pi)
    with pytest.raises(ValueError):
        d_beta(1.5)


def test_mode_correlation_at_zero_steps(factory03):
    # T_{k,0} = I: the n=0 value is mu(Y) int v_{-k} w_k dmu_Z
    ts = factory03.twisted_set((1,))
    grid = factory03.grid
    v = grid.cell_average(lambda x: np.exp(-2j * np.pi * x))
    w = grid.cell_average(lambda x: np.exp(2j * np.pi * x))
    ren = renewal_recursion(ts, 2, mode="vector", probe=v)
    got = mode_correlation(ren, w, 0, mu_Y=0.5)
    expect = 0.5 * np.sum(w * v * factory03.stationary)
    assert got == pytest.approx(expect, abs=1e-13)


def test_zero_cocycle_flagged_and_twist_trivial(lsv03_scheme):
    h0 = zero_cocycle(1)
    f = UlamPieceFactory(lsv03_scheme, h0, UlamGrid(0.5, 1.0, 32), phi_max=256)
    v = observable_from_records(COS_PSI, dim=1)
    series = correlation_series(v, v, h0, lsv03_scheme, 16, estimator="operator", factory=f)
    assert any("non-mixing" in fl for fl in series.flags)
    # with H = 0 the twisted pieces coincide with the untwisted ones
    t0 = f.twisted_set((0,))
    t1 = f.twisted_set((1,))
    for n in (1, 4):
        np.testing.assert_allclose(t1.pieces[n].toarray(), t0.pieces[n].toarray(), atol=1e-14)


def test_first_step_value_against_quadrature(lsv03_scheme, factory03, h03):
    # rho(1) for v=w=cos psi equals (mu(Y)/2) int_{phi=1} cos(h) dmu_Z
    v = observable_from_records(COS_PSI, dim=1)
    series = correlation_series(v, v, h03, lsv03_scheme, 2, estimator="operator", factory=factory03)
    a1 = [c for c in lsv03_scheme.alpha if c.phi == 1][0]
    xs = np.linspace(a1.lo, a1.hi, 4001)[:-1] + (a1.hi - a1.lo) / 8000
    dens = factory03.density(xs)
    integral = np.mean(np.cos(h03(xs)[0]) * dens) * (a1.hi - a1.lo)
    expect = 0.5 * series.mu_Y * integral
    assert series.rho[1] == pytest.approx(expect, rel=5e-3)


def test_mode_additivity_and_realness(lsv03_scheme, factory03, h03):
    v = observable_from_records(GENERIC, dim=1)
    series = correlation_series(v, v, h03, lsv03_scheme, 32, estimator="operator", factory=factory03)
    total = np.zeros(33, dtype=complex)
    for term in series.mode_terms.values():
        total += term
    np.testing.assert_allclose(series.rho, total.real, atol=1e-12)
    assert np.max(np.abs(total.imag)) <= 1e-10


def test_monte_carlo_agrees_with_operator(lsv03_scheme, factory03, h03):
    v = observable_from_records(GENERIC, dim=1)
    op = correlation_series(v, v, h03, lsv03_scheme, 10, estimator="operator", factory=factory03)
    mc = correlation_series(
        v, v, h03, lsv03_scheme, 10, estimator="monte_carlo",
        mc_samples=200_000, mc_burn=3000, mc_shards=256, seed=11,
    )
    z = np.abs(op.rho - mc.rho) / np.maximum(mc.stderr, 1e-300)
    assert np.max(z) <= 4.0  # small-sample version of the acceptance gate


def test_monte_carlo_rejected_in_infinite_measure():
    scheme = build_scheme(make_lsv(1.5), phi_max=256)
    v = observable_from_records(GENERIC, dim=1)
    h = cocycle_from_records([(0, 1, 0.3, 0.0)])
    with pytest.raises(RegimeError):
        correlation_series(v, v, h, scheme, 8, estimator="monte_carlo")


def test_leading_term_monotone(lsv03_scheme, factory03, h03):
    v = observable_from_records(GENERIC, dim=1)
    series = correlation_series(v, v, h03, lsv03_scheme, 64, estimator="operator", factory=factory03)
    rep = theorem_check_finite(series, lsv03_scheme)
    assert np.all(np.diff(rep.leading) <= 1e-15)


def test_synthetic_series_below_noise_floor(lsv03_scheme, factory03):
    # a series equal to vbar*wbar + leading term exactly
    from towerlab.correlations import CorrelationSeries

    tail = factory03.tail(lsv03_scheme.phi_max)
    tail_sums = np.concatenate([np.cumsum(tail[::-1])[::-1], [0.0]])
    vw = 0.36
    mu_Y = 1.0 / factory03.mean_return_time()
    N = 256
    lead = np.array([mu_Y * tail_sums[n] * vw for n in range(N + 1)])
    series = CorrelationSeries(
        ns=np.arange(N + 1),
        rho=vw + lead,
        mode_terms={},
        vbar=0.6,
        wbar=0.6,
        mu_Y=mu_Y,
        beta=lsv03_scheme.beta,
        estimator="operator",
        tail=tail,
    )
    rep = theorem_check_finite(series, lsv03_scheme)
    assert rep.below_noise_floor
    assert rep.ratio_max_gap <= 1e-9


def test_finite_check_rejects_infinite_regime():
    scheme = build_scheme(make_lsv(1.5), phi_max=512)
    h = cocycle_from_records([(0, 1, 0.3, 0.0)])
    v = observable_from_records(GENERIC, dim=1)
    f = UlamPieceFactory(scheme, h, UlamGrid(0.5, 1.0, 32), phi_max=256)
    series = correlation_series(v, v, h, scheme, 8, estimator="operator", factory=f)
    with pytest.raises(RegimeError):
        theorem_check_finite(series, scheme)
    # and the infinite check runs
    rep = theorem_check_infinite(series, scheme)
    assert rep.d_beta == pytest.approx(np.sin(2 * np.pi / 3) / np.pi)


def test_infinite_check_rejects_finite_regime(lsv03_scheme, factory03, h03):
    v = observable_from_records(GENERIC, dim=1)
    series = correlation_series(v, v, h03, lsv03_scheme, 8, estimator="operator", factory=factory03)
    with pytest.raises(RegimeError):
        theorem_check_infinite(series, lsv03_scheme)


def test_tower_series_and_upper_bound(lsv03_scheme, h03):
    tower = build_tower(lsv03_scheme, h03, m_base=24, phi_max=192)
    v = observable_from_records(GENERIC, dim=1)
    series = tower_correlation_series(v, v, tower, 160)
    assert series.support == "X"
    rep = upper_bound_check(series, lsv03_scheme, fit_window=(24, 160))
    beta = lsv03_scheme.beta
    assert rep.slope is not None
    assert rep.slope <= -(beta - 1) + 0.4


def test_tower_series_mean_zero_modes(lsv03_scheme, h03):
    tower = build_tower(lsv03_scheme, h03, m_base=24, phi_max=192)
    v = observable_from_records(COS_PSI, dim=1)
    series = tower_correlation_series(v, v, tower, 160)
    rep = upper_bound_check(series, lsv03_scheme, fit_window=(24, 160))
    assert rep.slope is not None
    assert rep.slope <= -(lsv03_scheme.beta - 1)


def test_upper_bound_rejects_zero_cocycle(lsv03_scheme):
    h0 = zero_cocycle(1)
    tower = build_tower(lsv03_scheme, h0, m_base=16, phi_max=64)
    v = observable_from_records(COS_PSI, dim=1)
    series = tower_correlation_series(v, v, tower, 32)
    rep = upper_bound_check(series, lsv03_scheme)
    assert rep.rejected
