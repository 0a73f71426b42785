import pytest

from towerlab.cocycles import preset_cocycle, zero_cocycle
from towerlab.inducing import build_scheme
from towerlab.interval_maps import make_doubling, make_lsv, make_thaler
from towerlab.operators import UlamGrid, UlamPieceFactory


@pytest.fixture(scope="session")
def lsv1():
    return make_lsv(1.0, 2.0)


@pytest.fixture(scope="session")
def lsv05_scheme():
    return build_scheme(make_lsv(0.5), phi_max=2048)


@pytest.fixture(scope="session")
def lsv1_scheme(lsv1):
    return build_scheme(lsv1, phi_max=256)


@pytest.fixture(scope="session")
def doubling_scheme():
    return build_scheme(make_doubling(), phi_max=50)


@pytest.fixture(scope="session")
def thaler_scheme():
    return build_scheme(make_thaler(0.5, 1.0), phi_max=512)


@pytest.fixture(scope="session")
def h03():
    return preset_cocycle(0.3)


@pytest.fixture(scope="session")
def factory_small(lsv05_scheme, h03):
    """Shared small operator factory: gamma=0.5, m=64, phi_max=512."""
    return UlamPieceFactory(
        lsv05_scheme, h03, UlamGrid(lsv05_scheme.y_lo, lsv05_scheme.y_hi, 64), phi_max=512
    )


@pytest.fixture(scope="session")
def factory_zero(lsv05_scheme):
    return UlamPieceFactory(
        lsv05_scheme, zero_cocycle(1), UlamGrid(lsv05_scheme.y_lo, lsv05_scheme.y_hi, 64),
        phi_max=512,
    )
