import pytest

from resmarket.engine import clear_market, compare_res_reserve
from resmarket.instance import build_two_bus_fixture
from resmarket.solve import SolverOptions


@pytest.fixture(scope="session")
def two_bus():
    return build_two_bus_fixture()


@pytest.fixture(scope="session")
def cleared(two_bus):
    """Two-bus system cleared on the reference backend with pinned tie-breaks."""
    return clear_market(two_bus, SolverOptions(canonicalize_res_reserve=True))


@pytest.fixture(scope="session")
def ab(two_bus):
    """Two-bus system cleared with renewable reserve on (A) and off (B)."""
    return compare_res_reserve(two_bus)
