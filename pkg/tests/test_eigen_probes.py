import numpy as np
import pytest

from towerlab.cocycles import cocycle_from_records, zero_cocycle
from towerlab.eigen_probes import (
    FixedPointInfo,
    approx_eigen_defect,
    fixed_points,
    good_asymptotics_fit,
    periodic_point,
    resonance_defect,
)


@pytest.fixture(scope="module")
def fps05(lsv05_scheme, h03):
    return fixed_points(lsv05_scheme, h03, max_count=12)


def test_boundary_fixed_point_flagged(doubling_scheme, lsv1_scheme):
    for scheme in (doubling_scheme, lsv1_scheme):
        fp = fixed_points(scheme, max_count=1)[0]
        assert fp.boundary
        assert fp.point == pytest.approx(1.0, abs=1e-9)


def test_interior_fixed_points(fps05, lsv05_scheme):
    interior = [p for p in fps05 if not p.boundary]
    assert len(interior) >= 10
    for fp in interior[:5]:
        cyl = lsv05_scheme.alpha[fp.cyl_id]
        assert cyl.lo < fp.point < cyl.hi
        # fixed point certificate and contraction certificate
        assert abs(lsv05_scheme.g_apply(cyl, fp.point) - fp.point) < 1e-10
        assert fp.inverse_contraction < 1.0


def test_lsv_gamma1_phi2_fixed_point(lsv1_scheme):
    # interior fixed point of the two-step cylinder: g(2x-1) = x
    fp = [p for p in fixed_points(lsv1_scheme, max_count=4) if not p.boundary][0]
    assert fp.phi == 2
    u = 2 * fp.point - 1
    assert u * (1 + 2 * u) == pytest.approx(fp.point, abs=1e-10)


def test_resonance_zero_for_zero_cocycle(lsv05_scheme):
    fps = fixed_points(lsv05_scheme, zero_cocycle(1), max_count=4)
    interior = [p for p in fps if not p.boundary]
    defect, _ = resonance_defect(lsv05_scheme, zero_cocycle(1), interior[0], interior[1], K=5)
    assert defect == 0.0


def test_resonance_constructed_toy(lsv05_scheme, h03):
    fp1 = FixedPointInfo(0, 0.8, 1, False, 0.5, H=np.array([np.pi]))
    fp2 = FixedPointInfo(1, 0.7, 1, False, 0.5, H=np.array([np.pi]))
    defect, argk = resonance_defect(lsv05_scheme, h03, fp1, fp2, K=3)
    assert defect == pytest.approx(0.0, abs=1e-12)


def test_resonance_scales_with_cocycle(lsv05_scheme):
    vals = []
    for eps in (0.3, 0.03, 0.003):
        h = cocycle_from_records([(0, 1, eps, 0.0)])
        fps = fixed_points(lsv05_scheme, h, max_count=6)
        interior = [p for p in fps if not p.boundary]
        d, _ = resonance_defect(lsv05_scheme, h, interior[0], interior[1], K=2)
        vals.append(d)
    assert vals[0] > vals[1] > vals[2] > 0
    assert vals[1] / vals[2] == pytest.approx(10.0, rel=0.05)


def test_periodic_point_fixed_word(lsv05_scheme, h03):
    # the constant word reproduces the cylinder's fixed point for any N
    fp = [p for p in fixed_points(lsv05_scheme, h03, max_count=4) if not p.boundary][0]
    for N in (1, 3, 5):
        probe = periodic_point(lsv05_scheme, (fp.cyl_id,) * N, h03)
        assert probe.point == pytest.approx(fp.point, abs=1e-9)
        assert probe.certificate <= 1e-11
        assert probe.phi_N == N * fp.phi


def test_periodic_point_additivity(lsv05_scheme, h03):
    itin = (1, 2, 1, 3)
    probe = periodic_point(lsv05_scheme, itin, h03)
    assert probe.phi_N == sum(lsv05_scheme.alpha[i].phi for i in itin)
    assert probe.certificate <= 1e-11


def test_return_time_offset_constant(lsv05_scheme, h03):
    base, exc = 1, 2
    offsets = []
    for N in (3, 5, 8, 12):
        probe = periodic_point(lsv05_scheme, (base,) * (N - 1) + (exc,), h03)
        offsets.append(probe.phi_N - N * lsv05_scheme.alpha[base].phi)
    assert len(set(offsets)) == 1
    assert offsets[0] == lsv05_scheme.alpha[exc].phi - lsv05_scheme.alpha[base].phi


def test_good_asymptotics_zero_cocycle_degenerate(lsv05_scheme):
    fit = good_asymptotics_fit(lsv05_scheme, zero_cocycle(1), 1, 2, N_max=10)
    assert fit.degenerate
    assert np.allclose(fit.kappa_hat, 0.0)


def test_good_asymptotics_constant_cocycle_degenerate(lsv05_scheme):
    c = 0.4
    h = cocycle_from_records([(0, 0, c, 0.0)])
    fit = good_asymptotics_fit(lsv05_scheme, h, 1, 2, N_max=10)
    assert fit.degenerate
    # kappa = kappa' * c is forced by the affine return-time offset
    assert fit.kappa_hat[0] == pytest.approx(fit.kappa_prime * c, abs=1e-20)


def test_good_asymptotics_generic(lsv05_scheme, h03):
    fit = good_asymptotics_fit(lsv05_scheme, h03, 1, 2, N_max=18)
    assert not fit.degenerate and not fit.fit_failure
    assert fit.r2 is not None and fit.r2 >= 0.9
    assert 0.0 < fit.gamma_hat < 1.0
    assert fit.E_liminf_proxy is not None and fit.E_liminf_proxy > 0
    assert fit.kappa_prime == 1


def test_good_asymptotics_rejects_equal_cylinders(lsv05_scheme, h03):
    with pytest.raises(ValueError):
        good_asymptotics_fit(lsv05_scheme, h03, 2, 2, N_max=8)


def test_approx_defect_zero_cocycle(lsv05_scheme):
    out = approx_eigen_defect(
        lsv05_scheme, zero_cocycle(1), (1,), 0.0, 3, [1, 2], trials=1,
        samples_per_cyl=8, rng=np.random.default_rng(0),
    )
    assert out["defect"] <= 1e-12


def test_approx_defect_family_ordering(lsv05_scheme, h03):
    out = approx_eigen_defect(
        lsv05_scheme, h03, (2,), 0.4, 3, [1, 2], trials=3,
        samples_per_cyl=10, rng=np.random.default_rng(1),
    )
    assert out["defect"] <= out["defect_u1"] + 1e-12
    assert out["defect"] >= 0.0
