import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from towerlab.inducing import (
    NonMarkovError,
    build_scheme,
    estimate_distortion,
    first_return,
    fit_tail_exponent,
    kac_partial_sums,
    separation_time,
    tail_distribution,
    tail_monte_carlo,
)
from towerlab.interval_maps import make_doubling, make_lsv, make_thaler


def test_first_return_immediate(lsv1_scheme):
    assert first_return(lsv1_scheme, 0.9) == (1, pytest.approx(0.8))


def test_first_return_two_steps(lsv1_scheme):
    tau, fx = first_return(lsv1_scheme, 0.7)
    assert tau == 2
    assert fx == pytest.approx(0.72, abs=1e-12)


def test_first_return_doubling(doubling_scheme):
    assert first_return(doubling_scheme, 0.75) == (1, pytest.approx(0.5))


def test_phi_one_cylinder(lsv1_scheme, doubling_scheme):
    for scheme in (lsv1_scheme, doubling_scheme):
        a1 = scheme.alpha[0]
        assert a1.phi == 1
        assert a1.lo == pytest.approx(0.75)
        assert a1.hi == pytest.approx(1.0)


def test_partition_lengths_exhaust_y(lsv05_scheme):
    covered = sum(c.hi - c.lo for c in lsv05_scheme.alpha)
    residual = lsv05_scheme.y_length - covered
    assert residual >= -1e-12
    # residual below the measured tail at the cut
    tail = tail_distribution(lsv05_scheme, lsv05_scheme.phi_max)
    assert residual / lsv05_scheme.y_length <= tail[-2] + 1e-9


def test_partition_midpoint_consistency(lsv05_scheme):
    for cyl in list(lsv05_scheme.alpha[:12]) + [lsv05_scheme.alpha[200]]:
        mid = 0.5 * (cyl.lo + cyl.hi)
        tau, fx = first_return(lsv05_scheme, mid)
        assert tau == cyl.phi
        assert lsv05_scheme.y_lo <= fx < lsv05_scheme.y_hi


def test_phi_gcd_is_one(lsv05_scheme, doubling_scheme, thaler_scheme):
    for scheme in (lsv05_scheme, doubling_scheme, thaler_scheme):
        assert scheme.phi_gcd() == 1


def test_doubling_tail_is_dyadic(doubling_scheme):
    tail = tail_distribution(doubling_scheme, 20)
    np.testing.assert_allclose(tail, 0.5 ** np.arange(1, 21), atol=1e-12)


def test_tail_monotone(lsv05_scheme):
    tail = tail_distribution(lsv05_scheme, 1024)
    assert np.all(np.diff(tail) <= 1e-15)


def test_lsv_tail_slope(lsv05_scheme):
    fit = fit_tail_exponent(tail_distribution(lsv05_scheme, 1024), (8, 512))
    assert 1.85 <= fit.beta_hat <= 2.15


def test_fit_exact_power_law():
    ns = np.arange(1, 2001)
    fit = fit_tail_exponent(ns.astype(float) ** -2.0, (8, 512))
    assert fit.beta_hat == pytest.approx(2.0, abs=1e-10)
    assert not fit.non_power_law


def test_fit_flags_exponential():
    ns = np.arange(1, 600)
    fit = fit_tail_exponent(2.0 ** (-ns.astype(float) / 8), (8, 256))
    assert fit.non_power_law


def test_fit_degenerate_window_rejected():
    with pytest.raises(ValueError):
        fit_tail_exponent(np.ones(600), (8, 8))


def test_tail_monte_carlo_agrees(lsv1_scheme):
    tail = tail_distribution(lsv1_scheme, 32)
    mc, err = tail_monte_carlo(lsv1_scheme, 32, samples=20000, rng=np.random.default_rng(5))
    z = np.abs(mc - tail) / np.maximum(err, 1e-12)
    assert np.median(z) < 4.0


def test_separation_zero_when_different_cylinders(lsv1_scheme):
    s = separation_time(0.8, 0.6, lsv1_scheme, depth=16)
    assert s.value == 0 and not s.capped


def test_separation_cap_for_equal_points(lsv1_scheme):
    s = separation_time(0.9, 0.9, lsv1_scheme, depth=12)
    assert s.value == 12 and s.capped


def test_separation_one(lsv1_scheme):
    # both in the phi=1 cylinder, images in different cylinders
    a, b = 0.9, 0.8124999
    fa, fb = first_return(lsv1_scheme, a)[1], first_return(lsv1_scheme, b)[1]
    ia = lsv1_scheme.cylinder_index(fa)
    ib = lsv1_scheme.cylinder_index(fb)
    assert ia != ib
    s = separation_time(a, b, lsv1_scheme, depth=16)
    assert s.value == 1


def test_distortion_doubling_exact(doubling_scheme):
    est = estimate_distortion(doubling_scheme, depth=2)
    assert est.c3_hat == pytest.approx(1.0, rel=0.05)


def test_distortion_monotone_in_depth(lsv1_scheme):
    e1 = estimate_distortion(lsv1_scheme, depth=1, rng=np.random.default_rng(3))
    e3 = estimate_distortion(lsv1_scheme, depth=3, rng=np.random.default_rng(3))
    assert e3.c3_hat >= e1.c3_hat - 1e-12


def test_distortion_finite_stable(lsv05_scheme):
    e2 = estimate_distortion(lsv05_scheme, depth=2, rng=np.random.default_rng(3))
    e4 = estimate_distortion(lsv05_scheme, depth=4, rng=np.random.default_rng(3))
    assert np.isfinite(e4.c3_hat)
    assert e4.c3_hat < 2.0 * e2.c3_hat


def test_kac_sums_stabilize_or_diverge():
    s05 = build_scheme(make_lsv(0.5), phi_max=2048)
    tail = tail_distribution(s05, 2048)
    partial = kac_partial_sums(tail, [1024, 2048])
    assert abs(partial[1] - partial[0]) / partial[1] < 0.02
    s15 = build_scheme(make_lsv(1.5), phi_max=2048)
    tail15 = tail_distribution(s15, 2048)
    p15 = kac_partial_sums(tail15, [256, 1024, 2048])
    assert p15[2] - p15[1] > 0.01 * p15[1]  # keeps growing


def test_symbolic_metric_dominates_rescaled_distance(lsv1_scheme):
    # d(z,z')/diam(Y) <= theta^(separation) for sampled pairs
    rng = np.random.default_rng(0)
    theta = lsv1_scheme.metric.theta
    diam = lsv1_scheme.y_length
    for _ in range(40):
        z, zp = lsv1_scheme.y_lo + diam * rng.random(2)
        s = separation_time(z, zp, lsv1_scheme, depth=30)
        if not s.capped:
            assert abs(z - zp) / diam <= theta**s.value + 1e-12


def test_nonmarkov_rejected():
    with pytest.raises(NonMarkovError):
        build_scheme(make_lsv(0.5, c1=1.5), phi_max=16)
    with pytest.raises(NonMarkovError):
        build_scheme(make_thaler(0.5, c2=1.5), phi_max=16)


def test_y_override_must_match_branch():
    with pytest.raises(NonMarkovError):
        build_scheme(make_doubling(), phi_max=16, y=(0.4, 1.0))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.51, 0.999))
def test_first_return_lands_in_y(x):
    scheme = build_scheme(make_lsv(1.0), phi_max=64)
    tau, fx = first_return(scheme, x)
    assert tau >= 1
    assert scheme.y_lo <= fx < scheme.y_hi
