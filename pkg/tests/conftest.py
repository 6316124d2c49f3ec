import pytest

from covconstraint.constraints import tetrad
from covconstraint.models import equicorrelation_cov, one_factor_cov


@pytest.fixture(scope="session")
def fig_model():
    """Near-singular one-factor benchmark: p=4, loadings 0.2, unit diagonal."""
    return one_factor_cov([0.2] * 4, [0.96] * 4)


@pytest.fixture(scope="session")
def identity4():
    return equicorrelation_cov(4, 0.0)


@pytest.fixture(scope="session")
def tet():
    return tetrad(1, 2, 3, 4)
