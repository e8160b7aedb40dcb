"""Orchestration: validate, build, solve, price, settle, compare.

``clear_market`` is the single entry point used by the CLI and the test
suite; every accepted solve is KKT-audited. ``compare_res_reserve`` runs the
engine with renewable reserve enabled and disabled (case A vs. case B).

Disabling renewable reserve can make an instance infeasible outright: any
scenario that needs wind to deploy headroom has no feasible point once
r_up_w is fixed at zero. The fallback construction pins each renewable to
its case-A schedule and re-expresses its scenario deviations relative to
that schedule, which models "renewables supply only energy" while keeping
the scenario data physically consistent.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .instance import MarketInstance, Scenario, validate_instance
from .lpbuild import BuildConfig, ConstraintMap, LpProblem, VariableMap, W, build_lp
from .pricing import PriceBook, price_book
from .settlement import SettlementStatement, settle
from .solve import (
    DispatchSolution,
    KktReport,
    SolverOptions,
    canonicalize_duals,
    solve,
    verify_kkt,
)

__all__ = [
    "ClearingResult",
    "InstanceInvalid",
    "InfeasibleMarket",
    "KktRejected",
    "clear_market",
    "schedule_pinned_variant",
    "compare_res_reserve",
]


class InstanceInvalid(RuntimeError):
    def __init__(self, report):
        super().__init__(str(report))
        self.report = report


class InfeasibleMarket(RuntimeError):
    pass


class KktRejected(RuntimeError):
    pass


@dataclass
class ClearingResult:
    instance: MarketInstance
    problem: LpProblem
    vm: VariableMap
    cm: ConstraintMap
    solution: DispatchSolution
    prices: PriceBook
    statement: SettlementStatement
    kkt: KktReport

    @property
    def objective(self) -> float:
        return self.solution.objective


def clear_market(
    inst: MarketInstance,
    opts: SolverOptions | None = None,
    cfg: BuildConfig | None = None,
    kkt_tol: float = 1e-6,
    validate: bool = True,
) -> ClearingResult:
    """Full clearing pipeline; raises on invalid, infeasible or KKT-rejected runs."""
    opts = opts or SolverOptions(canonicalize_res_reserve=True)
    if validate:
        report = validate_instance(inst)
        if not report.ok:
            raise InstanceInvalid(report)
    problem, vm, cm = build_lp(inst, cfg)
    sol = solve(problem, vm, cm, opts)
    if sol.status != "optimal":
        raise InfeasibleMarket(f"dispatch LP is {sol.status}")
    canonicalize_duals(sol, inst)
    kkt = verify_kkt(problem, sol, kkt_tol)
    if not kkt.passed(kkt_tol):
        raise KktRejected(f"KKT residuals exceed {kkt_tol}: worst {kkt.worst:.3e}")
    book = price_book(sol, inst)
    statement = settle(inst, sol, book)
    return ClearingResult(inst, problem, vm, cm, sol, book, statement, kkt)


def schedule_pinned_variant(inst: MarketInstance, base: ClearingResult) -> MarketInstance:
    """Instance whose renewables follow the given base-case schedule.

    Available output becomes the cleared schedule and each scenario's
    surplus/deficit is re-expressed as the gap between that schedule and the
    scenario availability. With renewable reserve disabled this makes the
    scenario output of every renewable exogenous.
    """
    wstar = {
        u.uid: np.array([base.solution.value(W, u.uid, t) for t in range(inst.periods)])
        for u in inst.renewable_units
    }
    scenarios: list[Scenario] = []
    for s in inst.scenarios:
        pos, neg = {}, {}
        for u in inst.renewable_units:
            avail = u.available + s.res_deviation_pos[u.uid] - s.res_deviation_neg[u.uid]
            pos[u.uid] = np.maximum(avail - wstar[u.uid], 0.0)
            neg[u.uid] = np.maximum(wstar[u.uid] - avail, 0.0)
        scenarios.append(replace(s, res_deviation_pos=pos, res_deviation_neg=neg))
    renewables = tuple(replace(u, available=wstar[u.uid]) for u in inst.renewable_units)
    return replace(inst, renewable_units=renewables, scenarios=tuple(scenarios))


@dataclass
class AbComparison:
    case_a: ClearingResult
    case_b: ClearingResult | None
    b_infeasible_strict: bool  # strict bound-fix was infeasible, fallback used

    @property
    def cost_a(self) -> float:
        return self.case_a.objective

    @property
    def cost_b(self) -> float:
        return self.case_b.objective if self.case_b else float("inf")


def compare_res_reserve(
    inst: MarketInstance,
    opts: SolverOptions | None = None,
    cfg: BuildConfig | None = None,
) -> AbComparison:
    """Clear with renewable reserve enabled (A) and disabled (B).

    B first tries the plain bound fix r_up_w = r_dn_w = 0 on the original
    instance; if that is infeasible the schedule-pinned variant is cleared
    instead.
    """
    cfg = cfg or BuildConfig()
    case_a = clear_market(inst, opts, cfg)
    cfg_b = replace(cfg, res_reserve=False)
    try:
        case_b = clear_market(inst, opts, cfg_b)
        return AbComparison(case_a, case_b, b_infeasible_strict=False)
    except InfeasibleMarket:
        pinned = schedule_pinned_variant(inst, case_a)
        case_b = clear_market(pinned, opts, cfg_b)
        return AbComparison(case_a, case_b, b_infeasible_strict=True)
