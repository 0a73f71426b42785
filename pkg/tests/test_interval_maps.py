import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from towerlab.interval_maps import (
    DomainError,
    branch_inverse,
    derivative,
    evaluate,
    make_doubling,
    make_lsv,
    make_thaler,
    map_from_name,
    orbit,
)


def test_lsv_left_branch_value(lsv1):
    assert evaluate(lsv1, 0.25) == pytest.approx(0.375, abs=1e-15)


def test_lsv_right_branch_value(lsv1):
    assert evaluate(lsv1, 0.75) == pytest.approx(0.5, abs=1e-15)
    assert evaluate(make_lsv(0.7), 0.75) == pytest.approx(0.5, abs=1e-15)


def test_thaler_value_mod_one():
    m = make_thaler(1.0, 1.0)
    assert evaluate(m, 0.8) == pytest.approx(0.44, abs=1e-12)


def test_evaluate_rejects_outside_domain(lsv1):
    with pytest.raises(DomainError):
        evaluate(lsv1, 1.0)
    with pytest.raises(DomainError):
        evaluate(lsv1, -0.1)


def test_derivative_right_branch_constant(lsv1):
    assert derivative(lsv1, 0.9) == pytest.approx(2.0)


def test_derivative_left_branch(lsv1):
    assert derivative(lsv1, 0.25) == pytest.approx(2.0)  # 1 + 4x at x=1/4


def test_derivative_neutral_limit(lsv1):
    assert derivative(lsv1, 1e-12) == pytest.approx(1.0, abs=1e-9)


def test_derivative_boundary_rejected(lsv1):
    with pytest.raises(DomainError):
        derivative(lsv1, 0.5)
    # explicit one-sided value through the branch is allowed
    assert float(lsv1.branches[1].derivative(np.asarray(0.5))) == 2.0


def test_branch_inverse_right(lsv1):
    assert branch_inverse(lsv1, 1, 0.5) == pytest.approx(0.75, abs=1e-13)


def test_branch_inverse_left(lsv1):
    assert branch_inverse(lsv1, 0, 0.375) == pytest.approx(0.25, abs=1e-13)


def test_branch_inverse_doubling():
    assert branch_inverse(make_doubling(), 0, 0.6) == pytest.approx(0.3, abs=1e-13)


def test_branch_inverse_outside_image(lsv1):
    with pytest.raises(DomainError):
        branch_inverse(make_lsv(0.5, 1.0), 0, 0.9)  # c1<2: left image falls short


def test_orbit_doubling():
    np.testing.assert_allclose(orbit(make_doubling(), 0.1, 2), [0.1, 0.2, 0.4], atol=1e-15)


def test_orbit_lsv(lsv1):
    np.testing.assert_allclose(orbit(lsv1, 0.7, 2), [0.7, 0.4, 0.72], atol=1e-14)


def test_orbit_zero_steps(lsv1):
    assert orbit(lsv1, 0.3, 0).tolist() == [0.3]


def test_dyadic_orbit_hits_zero():
    m = make_doubling()
    xs = orbit(m, 0.375, 10)
    assert xs[-1] == 0.0


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-6, 1 - 1e-6))
def test_inverse_roundtrip(y):
    m = make_lsv(0.8, 2.0)
    for b in m.branches:
        if b.image_lo <= y < b.image_hi:
            x = b.inverse(y)
            assert abs(float(b.forward(np.asarray(x))) - y) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-9, 0.5 - 1e-9), st.floats(1e-9, 0.5 - 1e-9))
def test_branch_monotonicity(a, b):
    m = make_lsv(1.3, 2.0)
    lo, hi = min(a, b), max(a, b)
    if lo < hi:
        assert evaluate(m, lo) < evaluate(m, hi)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-9, 0.5 - 1e-6))
def test_neutral_branch_pushes_right(x):
    m = make_lsv(0.5, 2.0)
    assert evaluate(m, x) > x
    b = m.branches[0]
    assert float(b.derivative(np.asarray(x))) >= 1.0


def test_branch_domains_cover_unit_interval():
    for m in (make_lsv(0.5), make_thaler(1.0, 2.0), make_doubling()):
        lows = [b.lo for b in m.branches]
        his = [b.hi for b in m.branches]
        assert lows[0] == 0.0 and his[-1] == 1.0
        for i in range(len(m.branches) - 1):
            assert his[i] == pytest.approx(lows[i + 1])


def test_thaler_integer_c2_has_full_branches():
    m = make_thaler(0.5, 2.0)
    assert len(m.branches) == 3
    for b in m.branches:
        assert b.image_lo == pytest.approx(0.0)
        assert b.image_hi == pytest.approx(1.0, abs=1e-9)


def test_map_from_name_presets():
    assert map_from_name("lsv", gamma=0.5).family == "lsv"
    assert map_from_name("thaler", gamma=1.0, c2=1.0).family == "thaler"
    assert map_from_name("doubling").family == "doubling"
    with pytest.raises(ValueError):
        map_from_name("baker")


def test_beta_derived_exponent():
    assert make_lsv(0.5).beta == pytest.approx(2.0)
    assert make_lsv(1.5).beta == pytest.approx(2.0 / 3.0)
    assert math.isinf(make_doubling().beta)


def test_nonmarkov_parameters_accepted_by_type():
    m = make_lsv(0.5, c1=1.7)
    assert m.c1 == 1.7
    assert evaluate(m, 0.25) > 0.25
