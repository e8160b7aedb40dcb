"""Scenario-based energy-reserve market clearing with renewable reserve.

The engine solves a two-stage dispatch LP with regional renewable portfolio
targets, derives energy/reserve/deviation prices from the optimal duals,
settles the four-part payments, and mechanically verifies the market
properties (uniform renewable reserve pricing, thermal-renewable
equivalence, individual rationality, cost recovery, revenue adequacy).
"""

from .engine import ClearingResult, clear_market, compare_res_reserve
from .instance import (
    LoadPoint,
    MarketInstance,
    Network,
    Region,
    RenewableUnit,
    Scenario,
    ThermalUnit,
    build_two_bus_fixture,
    load_instance,
    save_instance,
    validate_instance,
)
from .lpbuild import BuildConfig, build_lp, objective_value
from .pricing import PriceBook, price_book
from .properties import finite_difference_oracle, random_instance, run_all
from .settlement import SettlementStatement, settle
from .solve import DispatchSolution, SolverOptions, solve, verify_kkt

__version__ = "0.1.0"

__all__ = [
    "BuildConfig",
    "ClearingResult",
    "DispatchSolution",
    "LoadPoint",
    "MarketInstance",
    "Network",
    "PriceBook",
    "Region",
    "RenewableUnit",
    "Scenario",
    "SettlementStatement",
    "SolverOptions",
    "ThermalUnit",
    "build_lp",
    "build_two_bus_fixture",
    "clear_market",
    "compare_res_reserve",
    "finite_difference_oracle",
    "load_instance",
    "objective_value",
    "price_book",
    "random_instance",
    "run_all",
    "save_instance",
    "settle",
    "solve",
    "validate_instance",
    "verify_kkt",
]
