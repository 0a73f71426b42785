import numpy as np
import pytest
import scipy.sparse as sp

from towerlab.cocycles import zero_cocycle
from towerlab.renewal_tower import (
    band_limited_zero_mode_check,
    build_tower,
    build_tower_operators,
    decay_fit,
    direct_tower_operator,
    fourier_agreement,
    renewal_recursion,
    renewal_via_fourier,
    tower_identity_report,
    tower_pieces,
)
from towerlab.operators import SingularOperatorError


class ScalarPieces:
    """R(omega) = rho e^{i omega}: the renewal coefficients are rho^n."""

    def __init__(self, rho=0.5):
        self.k = (1,)
        self.dim = 1
        self.phi_max = 1
        self.pieces = {1: sp.csr_matrix(np.array([[rho + 0j]]))}
        self.stationary = np.array([1.0])
        self.truncation_mass = 0.5


def test_renewal_identity_coefficient():
    ren = renewal_recursion(ScalarPieces(), 8, mode="matrix")
    vals = [abs(v[0, 0]) for v in ren.values]
    np.testing.assert_allclose(vals, 0.5 ** np.arange(9), atol=1e-14)


def test_renewal_starts_at_identity(factory_small):
    ts = factory_small.twisted_set((1,))
    ren = renewal_recursion(ts, 3, mode="matrix")
    np.testing.assert_allclose(ren.values[0], np.eye(64), atol=0)
    np.testing.assert_allclose(ren.values[1], ts.pieces[1].toarray(), atol=1e-14)
    expect2 = ts.pieces[2].toarray() + ts.pieces[1].toarray() @ ts.pieces[1].toarray()
    np.testing.assert_allclose(ren.values[2], expect2, atol=1e-13)


def test_vector_matches_matrix_mode(factory_small):
    ts = factory_small.twisted_set((1,))
    probe = np.exp(2j * np.pi * factory_small.grid.centers)
    renm = renewal_recursion(ts, 24, mode="matrix")
    renv = renewal_recursion(ts, 24, mode="vector", probe=probe)
    for n in (0, 5, 24):
        np.testing.assert_allclose(renv.values[n], renm.values[n] @ probe, atol=1e-11)


def test_untwisted_mass_stays_bounded(lsv1_scheme):
    from towerlab.operators import UlamGrid, UlamPieceFactory

    f = UlamPieceFactory(lsv1_scheme, zero_cocycle(1), UlamGrid(0.5, 1.0, 16), phi_max=128)
    ren = renewal_recursion(f.twisted_set((0,)), 128, mode="vector",
                            probe=np.ones(16, dtype=complex))
    assert np.max(ren.norms) <= 1.0 + 1e-8


def test_fourier_agreement_small(factory_small):
    ts = factory_small.twisted_set((1,))
    ren = renewal_recursion(ts, 64, mode="matrix")
    fr = renewal_via_fourier(ts, 64, 512, mode="matrix")
    ag = fourier_agreement(ren, fr, 16)
    assert np.max(ag) <= 1e-6
    assert not fr.singular_omegas


def test_fourier_aliasing_grows_when_grid_shrinks(factory_small):
    ts = factory_small.twisted_set((1,))
    ren = renewal_recursion(ts, 32, mode="matrix")
    fine = fourier_agreement(ren, renewal_via_fourier(ts, 32, 512, mode="matrix"), 32)
    coarse = fourier_agreement(ren, renewal_via_fourier(ts, 32, 128, mode="matrix"), 32)
    assert np.max(coarse) > np.max(fine)


def test_fourier_vector_mode(factory_small):
    ts = factory_small.twisted_set((2,))
    probe = np.exp(2j * np.pi * factory_small.grid.centers)
    ren = renewal_recursion(ts, 32, mode="vector", probe=probe)
    fr = renewal_via_fourier(ts, 32, 256, mode="vector", probe=probe)
    ag = fourier_agreement(ren, fr, 8)
    assert np.max(ag) <= 1e-5


def test_fourier_rejects_bad_grid(factory_small):
    ts = factory_small.twisted_set((1,))
    with pytest.raises(ValueError):
        renewal_via_fourier(ts, 64, 100, mode="matrix")  # not a power of two
    with pytest.raises(ValueError):
        renewal_via_fourier(ts, 64, 128, mode="matrix")  # below 4N


def test_fourier_reports_singular_zero_cocycle(factory_zero):
    ts = factory_zero.twisted_set((1,))
    fr = renewal_via_fourier(ts, 16, 64, mode="matrix")
    assert 0.0 in fr.singular_omegas


def test_fourier_refuses_untwisted(factory_small):
    with pytest.raises(SingularOperatorError):
        renewal_via_fourier(factory_small.twisted_set((0,)), 16, 64)


def test_band_limited_zero_mode(factory_small):
    ts = factory_small.twisted_set((0,))
    probe = np.ones(64, dtype=complex)
    disc = band_limited_zero_mode_check(ts, 32, 1024, probe)
    assert disc <= 2e-2  # weaker check: limited by the differenced tail


def test_decay_fit_synthetic():
    norms = np.ones(201)
    norms[1:] = np.arange(1, 201).astype(float) ** -2.0
    fit = decay_fit(norms, (8, 128))
    assert fit.slope == pytest.approx(-2.0, abs=1e-10)
    with pytest.raises(ValueError):
        decay_fit(np.zeros(50), (8, 32))


# ----------------------------------------------------------------- tower


@pytest.fixture(scope="module")
def small_tower(lsv05_scheme, h03):
    return build_tower(lsv05_scheme, h03, m_base=16, phi_max=12)


def test_tower_identity_exact(small_tower):
    for k in (0, 1):
        rep = tower_identity_report(small_tower, k, 16)
        assert rep["max_abs_error"] <= 1e-10
        assert rep["restriction_error"] <= 1e-10


def test_tower_measure_matches_tail(small_tower, factory_small):
    # mu_Delta level masses against the stationary-weighted return tail
    tail = factory_small.tail(12)
    for n in (1, 3, 7):
        assert small_tower.level_mass(n) == pytest.approx(tail[n - 1], abs=0.02)


def test_yhat_is_level_zero(small_tower):
    mask = small_tower.yhat_mask
    assert mask.sum() == small_tower.Q
    assert np.all(small_tower.state_level[mask] == 0)


def test_tower_operator_boundary_blocks(small_tower):
    ops = build_tower_operators(small_tower, 1, 6)
    # A_0 is the level-0 inclusion, B_0 the level-0 restriction
    A0 = ops.A[0].toarray()
    B0 = ops.B[0].toarray()
    lvl0 = small_tower.offsets[:-1]
    assert np.allclose(A0[lvl0, np.arange(small_tower.Q)], 1.0)
    assert A0.sum() == pytest.approx(small_tower.Q)
    assert np.allclose(B0[np.arange(small_tower.Q), lvl0], 1.0)
    # with Z = Y the masked lifts vanish for n >= 1
    for n in (1, 2, 5):
        assert ops.masked_a_nnz(n) == 0
    assert ops.masked_a_nnz(0) == small_tower.Q


def test_tower_norm_decay_tracks_tail(lsv05_scheme, h03):
    tower = build_tower(lsv05_scheme, h03, m_base=32, phi_max=96)
    ops = build_tower_operators(tower, 1, 64)
    ns = np.arange(6, 64)
    a_norms = np.array([ops.a_norm(n) for n in ns])
    fit = decay_fit(np.concatenate([[1.0] * 6, a_norms]), (6, 63))
    beta = 2.0
    assert -beta - 0.4 <= fit.slope <= -beta + 0.4


def test_assemble_matches_direct_single_n(small_tower):
    pieces = tower_pieces(small_tower, 1)
    ren = renewal_recursion(pieces, 8, mode="matrix")
    ops = build_tower_operators(small_tower, 1, 8)
    from towerlab.renewal_tower import assemble_L_k_n

    L = direct_tower_operator(small_tower, 1)
    direct = np.eye(small_tower.nstates, dtype=complex)
    for _ in range(8):
        direct = L @ direct
    asm = assemble_L_k_n(ops, ren, 8)
    assert np.max(np.abs(asm - direct)) <= 1e-11


def test_assemble_n_zero_is_identity(small_tower):
    pieces = tower_pieces(small_tower, 2)
    ren = renewal_recursion(pieces, 2, mode="matrix")
    ops = build_tower_operators(small_tower, 2, 2)
    from towerlab.renewal_tower import assemble_L_k_n

    asm = assemble_L_k_n(ops, ren, 0)
    np.testing.assert_allclose(asm, np.eye(small_tower.nstates), atol=1e-13)


def test_tower_warns_when_truncating(lsv05_scheme, h03):
    tower = build_tower(lsv05_scheme, h03, m_base=8, phi_max=8)
    assert any("truncated" in w for w in tower.warnings)
