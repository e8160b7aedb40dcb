"""Executable market properties and the finite-difference envelope oracle.

Each check returns a PropertyReport with the worst residual and a witness.
The checks are pure post-processing of a cleared market except for the
per-unit rationality LPs and the envelope oracle, which own their solver
calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .engine import ClearingResult
from .instance import (
    LoadPoint,
    MarketInstance,
    Network,
    Region,
    RenewableUnit,
    Scenario,
    ThermalUnit,
)
from .lpbuild import (
    DG_DN,
    DG_UP,
    DW_DN,
    DW_UP,
    G,
    LpProblem,
    R_DN_G,
    R_DN_W,
    R_UP_G,
    R_UP_W,
    W,
    build_lp,
)
from .simplex import solve_simplex
from .solve import SolverOptions, solve

__all__ = [
    "PropertyReport",
    "check_theorem1",
    "check_corollary1",
    "check_theorem2",
    "check_individual_rationality",
    "check_cost_recovery",
    "check_revenue_adequacy",
    "run_all",
    "finite_difference_oracle",
    "PerturbationInfeasible",
    "random_instance",
]

DEFAULT_TOL = 1e-6


@dataclass
class PropertyReport:
    name: str
    passed: bool
    worst: float
    witness: str = ""
    vacuous: bool = False
    details: list[str] = field(default_factory=list)

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        tag = " (vacuous)" if self.vacuous else ""
        tail = f" worst {self.worst:.3e} at {self.witness}" if self.witness else ""
        return f"{self.name}: {status}{tag}{tail}"


class _Tracker:
    def __init__(self, name: str):
        self.name = name
        self.worst = 0.0
        self.witness = ""
        self.count = 0

    def see(self, residual: float, witness: str) -> None:
        self.count += 1
        if abs(residual) > abs(self.worst):
            self.worst = float(abs(residual))
            self.witness = witness

    def report(self, tol: float) -> PropertyReport:
        return PropertyReport(
            name=self.name,
            passed=bool(self.worst <= tol),
            worst=float(self.worst),
            witness=self.witness,
            vacuous=self.count == 0,
        )


def check_theorem1(result: ClearingResult, tol: float = DEFAULT_TOL) -> PropertyReport:
    """Same-bus renewables share one upward and one downward reserve price;
    per scenario, a renewable's fractional up and down reserve prices are
    never both positive."""
    inst, book = result.instance, result.prices
    tr = _Tracker("theorem1_uniform_renewable_reserve")
    by_bus: dict[int, list[str]] = {}
    for u in inst.renewable_units:
        by_bus.setdefault(u.bus, []).append(u.uid)
    for bus, uids in by_bus.items():
        for t in range(inst.periods):
            for a in uids:
                pa = book.renewable[(a, t)]
                for s in inst.scenarios:
                    tr.see(pa.up_k[s.uid] * pa.dn_k[s.uid], f"{a} t{t} {s.uid} exclusivity")
                for b in uids:
                    if b <= a:
                        continue
                    pb = book.renewable[(b, t)]
                    tr.see(pa.up_reserve - pb.up_reserve, f"{a}/{b} t{t} up")
                    tr.see(pa.dn_reserve - pb.dn_reserve, f"{a}/{b} t{t} dn")
    return tr.report(tol)


def check_corollary1(result: ClearingResult, tol: float = DEFAULT_TOL) -> PropertyReport:
    """Renewables price upward reserve no lower, and downward reserve no
    higher, than a thermal unit at the same bus."""
    inst, book = result.instance, result.prices
    tr = _Tracker("corollary1_reserve_priority")
    for w_u in inst.renewable_units:
        for g_u in inst.thermal_units:
            if g_u.bus != w_u.bus:
                continue
            for t in range(inst.periods):
                pw = book.renewable[(w_u.uid, t)]
                pg = book.thermal[(g_u.uid, t)]
                tr.see(max(0.0, pg.up_reserve - pw.up_reserve), f"{w_u.uid}/{g_u.uid} t{t} up")
                tr.see(max(0.0, pw.dn_reserve - pg.dn_reserve), f"{w_u.uid}/{g_u.uid} t{t} dn")
    return tr.report(tol)


def _redispatch_net(result: ClearingResult, kind: str, uid: str, t: int, k: str) -> float:
    up, dn = (DG_UP, DG_DN) if kind == "thermal" else (DW_UP, DW_DN)
    return result.solution.value(up, uid, t, k) - result.solution.value(dn, uid, t, k)


def check_theorem2(result: ClearingResult, tol: float = DEFAULT_TOL) -> PropertyReport:
    """Reserve, re-dispatch and deviation contributions of any unit in any
    scenario combine to its net re-dispatch at the fractional energy price;
    where a bus's scenario RPS dual is zero, thermal and renewable fractional
    energy prices coincide, otherwise they differ by exactly that dual."""
    inst, book, sol = result.instance, result.prices, result.solution
    tr = _Tracker("theorem2_equivalence")
    for u in inst.thermal_units:
        for t in range(inst.periods):
            p = book.thermal[(u.uid, t)]
            g = sol.value(G, u.uid, t)
            r_up, r_dn = sol.value(R_UP_G, u.uid, t), sol.value(R_DN_G, u.uid, t)
            for s in inst.scenarios:
                d_up = sol.value(DG_UP, u.uid, t, s.uid)
                d_dn = sol.value(DG_DN, u.uid, t, s.uid)
                out = u.uid in s.outages
                pi_u = 0.0 if out else p.up_k[s.uid]
                pi_d = 0.0 if out else p.dn_k[s.uid]
                chi = -p.dev_k[s.uid] * g if out else 0.0
                lhs = (pi_u * r_up + s.probability * u.up_redispatch_bid * d_up) \
                    + (pi_d * r_dn - s.probability * u.dn_redispatch_bid * d_dn) + chi
                rhs = p.energy_k[s.uid] * (d_up - d_dn)
                tr.see(lhs - rhs, f"{u.uid} t{t} {s.uid}")
    for u in inst.renewable_units:
        for t in range(inst.periods):
            p = book.renewable[(u.uid, t)]
            r_up, r_dn = sol.value(R_UP_W, u.uid, t), sol.value(R_DN_W, u.uid, t)
            for s in inst.scenarios:
                d_up = sol.value(DW_UP, u.uid, t, s.uid)
                d_dn = sol.value(DW_DN, u.uid, t, s.uid)
                pos = float(s.res_deviation_pos[u.uid][t])
                neg = float(s.res_deviation_neg[u.uid][t])
                lhs = (p.up_k[s.uid] * r_up + p.up_k[s.uid] * pos) \
                    + (p.dn_k[s.uid] * r_dn - p.energy_k[s.uid] * neg)
                rhs = p.energy_k[s.uid] * (d_up - d_dn)
                tr.see(lhs - rhs, f"{u.uid} t{t} {s.uid}")
    # fractional energy component uniformity / green premium
    for w_u in inst.renewable_units:
        for g_u in inst.thermal_units:
            if g_u.bus != w_u.bus:
                continue
            for t in range(inst.periods):
                pw = book.renewable[(w_u.uid, t)]
                pg = book.thermal[(g_u.uid, t)]
                for s in inst.scenarios:
                    nu = sol.row_dual("rps_k", w_u.region, 0, s.uid)
                    gap = pw.energy_k[s.uid] - pg.energy_k[s.uid] - nu
                    tr.see(gap, f"{w_u.uid}/{g_u.uid} t{t} {s.uid} premium")
    return tr.report(tol)


def _unit_profit_lp(c_obj: np.ndarray, a_rows: list[np.ndarray], b_rows: list[float]):
    """max c.x over x >= 0 with a_rows x <= b_rows; returns optimal value."""
    n = c_obj.shape[0]
    m = len(a_rows)
    a = np.zeros((m, n + m))
    for i, row in enumerate(a_rows):
        a[i, :n] = row
        a[i, n + i] = 1.0
    lb = np.zeros(n + m)
    ub = np.full(n + m, np.inf)
    res = solve_simplex(a, np.array(b_rows), np.concatenate([-c_obj, np.zeros(m)]), lb, ub)
    if res.status != "optimal":
        raise RuntimeError(f"per-unit profit LP is {res.status}")
    return -res.objective


def check_individual_rationality(result: ClearingResult, tol: float = 1e-5) -> PropertyReport:
    """Every unit's cleared quantities attain its own profit maximum at the
    posted prices; a renewable earns no more by producing flat out with no
    reserve."""
    inst, book, sol = result.instance, result.prices, result.solution
    T = inst.periods
    tr = _Tracker("theorem3_individual_rationality")
    for u in inst.thermal_units:
        # objective per period: energy margin (net of outage deviation
        # charges, which scale with the schedule), reserve margins
        coef = []
        for t in range(T):
            p = book.thermal[(u.uid, t)]
            outage_charge = sum(p.dev_k[s.uid] for s in inst.scenarios if u.uid in s.outages)
            coef += [p.energy - outage_charge - u.energy_bid,
                     p.up_reserve - u.up_reserve_bid,
                     p.dn_reserve - u.dn_reserve_bid]
        c_obj = np.array(coef)
        rows, rhs = [], []
        for t in range(T):
            g_i, ru_i, rd_i = 3 * t, 3 * t + 1, 3 * t + 2
            row = np.zeros(3 * T); row[g_i] = 1.0; row[ru_i] = 1.0
            rows.append(row); rhs.append(u.g_max)
            row = np.zeros(3 * T); row[g_i] = -1.0; row[rd_i] = 1.0
            rows.append(row); rhs.append(-u.g_min)
            row = np.zeros(3 * T); row[ru_i] = 1.0
            rows.append(row); rhs.append(u.r_up_max)
            row = np.zeros(3 * T); row[rd_i] = 1.0
            rows.append(row); rhs.append(u.r_dn_max)
        for t in range(T - 1):
            if math.isfinite(u.ramp_up):
                row = np.zeros(3 * T)
                row[3 * (t + 1)] = 1.0; row[3 * t] = -1.0; row[3 * t + 1] = 1.0
                rows.append(row); rhs.append(u.ramp_up)
            if math.isfinite(u.ramp_dn):
                row = np.zeros(3 * T)
                row[3 * t] = 1.0; row[3 * (t + 1)] = -1.0; row[3 * t + 2] = 1.0
                rows.append(row); rhs.append(u.ramp_dn)
        best = _unit_profit_lp(c_obj, rows, rhs)
        achieved = sum(
            c_obj[3 * t + j] * sol.value(kind, u.uid, t)
            for t in range(T)
            for j, kind in enumerate((G, R_UP_G, R_DN_G))
        )
        tr.see(max(0.0, best - achieved), f"{u.uid} profit gap")
    for u in inst.renewable_units:
        coef = []
        for t in range(T):
            p = book.renewable[(u.uid, t)]
            coef += [p.energy, p.up_reserve, p.dn_reserve]
        c_obj = np.array(coef)
        rows, rhs = [], []
        for t in range(T):
            w_i, ru_i, rd_i = 3 * t, 3 * t + 1, 3 * t + 2
            row = np.zeros(3 * T); row[w_i] = 1.0; row[ru_i] = 1.0
            rows.append(row); rhs.append(float(u.available[t]))
            row = np.zeros(3 * T); row[w_i] = -1.0; row[rd_i] = 1.0
            rows.append(row); rhs.append(0.0)
        best = _unit_profit_lp(c_obj, rows, rhs)
        achieved = sum(
            c_obj[3 * t + j] * sol.value(kind, u.uid, t)
            for t in range(T)
            for j, kind in enumerate((W, R_UP_W, R_DN_W))
        )
        tr.see(max(0.0, best - achieved), f"{u.uid} profit gap")
        # corollary 2: flat-out production with no reserve earns no more
        flat = sum(book.renewable[(u.uid, t)].energy * float(u.available[t]) for t in range(T))
        tr.see(max(0.0, flat - achieved), f"{u.uid} flat-out")
    return tr.report(tol)


def check_cost_recovery(result: ClearingResult, tol: float = DEFAULT_TOL) -> PropertyReport:
    """Realized bid-in profit of every generator is nonnegative in every
    scenario; the thermal net revenue matches the dual-weighted capacity sum
    and the renewable energy+reserve credit matches the availability dual."""
    inst, stmt, sol = result.instance, result.statement, result.solution
    tr = _Tracker("theorem4_cost_recovery")
    scale = max(1.0, abs(result.objective))
    for u in inst.thermal_units:
        st = stmt.of(u.uid)
        for s in inst.scenarios:
            profit = st.realized_profit(s.uid)
            tr.see(max(0.0, -profit) / scale, f"{u.uid} {s.uid} profit {profit:.6g}")
        rhs = 0.0
        for t in range(inst.periods):
            rhs += sol.row_dual("gen_max", u.uid, t) * u.g_max
            rhs -= sol.row_dual("gen_min", u.uid, t) * u.g_min
            rhs += sol.row_dual("gen_res_up_cap", u.uid, t) * u.r_up_max
            rhs += sol.row_dual("gen_res_dn_cap", u.uid, t) * u.r_dn_max
            if t < inst.periods - 1:
                if math.isfinite(u.ramp_up):
                    rhs += sol.row_dual("ramp_up", u.uid, t) * u.ramp_up
                if math.isfinite(u.ramp_dn):
                    rhs += sol.row_dual("ramp_dn", u.uid, t) * u.ramp_dn
        profit = st.realized_profit(inst.scenarios[0].uid) if inst.scenarios else \
            st.energy + st.reserve + st.deviation - st.bid_cost
        tr.see((profit - rhs) / scale, f"{u.uid} capacity-rent identity")
    for u in inst.renewable_units:
        st = stmt.of(u.uid)
        for s in inst.scenarios:
            tr.see(max(0.0, -st.realized_profit(s.uid)) / scale, f"{u.uid} {s.uid}")
        for t in range(inst.periods):
            p = result.prices.renewable[(u.uid, t)]
            lhs = p.energy * sol.value(W, u.uid, t) \
                + p.up_reserve * sol.value(R_UP_W, u.uid, t) \
                + p.dn_reserve * sol.value(R_DN_W, u.uid, t)
            rhs = sol.row_dual("res_cap_up", u.uid, t) * float(u.available[t])
            tr.see((lhs - rhs) / scale, f"{u.uid} t{t} availability identity")
    return tr.report(tol)


def check_revenue_adequacy(result: ClearingResult, tol: float = DEFAULT_TOL) -> PropertyReport:
    """Merchandise surplus is nonnegative and equals congestion rent, in the
    base case, per scenario, and in total."""
    inst, book, sol, stmt = result.instance, result.prices, result.solution, result.statement
    tr = _Tracker("theorem5_revenue_adequacy")
    caps = inst.network.capacities
    nl = inst.network.line_count
    scale = max(1.0, abs(result.objective))

    base_lhs = 0.0
    base_rhs = 0.0
    for t in range(inst.periods):
        for ld in inst.loads:
            base_lhs += book.load[(ld.uid, t)].energy_base * float(ld.demand[t])
        for u in inst.renewable_units:
            base_lhs -= book.renewable[(u.uid, t)].energy_base * sol.value(W, u.uid, t)
        for u in inst.thermal_units:
            base_lhs -= book.thermal[(u.uid, t)].energy_base * sol.value(G, u.uid, t)
        base_rhs += float(caps @ sol.flow_dual_total(nl, t))
    tr.see((base_lhs - base_rhs) / scale, "base-case identity")

    for s in inst.scenarios:
        lhs = 0.0
        rhs = 0.0
        for t in range(inst.periods):
            for ld in inst.loads:
                dem = float(ld.demand[t] + s.load_deviation[ld.uid][t])
                lhs += book.load[(ld.uid, t)].energy_k[s.uid] * dem
            for u in inst.renewable_units:
                out = sol.value(W, u.uid, t) + _redispatch_net(result, "renewable", u.uid, t, s.uid)
                lhs -= book.renewable[(u.uid, t)].energy_k[s.uid] * out
            for u in inst.thermal_units:
                out = sol.value(G, u.uid, t) + _redispatch_net(result, "thermal", u.uid, t, s.uid)
                lhs -= book.thermal[(u.uid, t)].energy_k[s.uid] * out
            rhs += float(caps @ sol.flow_dual_total(nl, t, s.uid))
        tr.see((lhs - rhs) / scale, f"{s.uid} identity")

    tr.see((stmt.merchandise_surplus - stmt.congestion_rent) / scale, "surplus equals rent")
    tr.see(max(0.0, -stmt.merchandise_surplus) / scale, "surplus nonnegative")
    return tr.report(tol)


def run_all(result: ClearingResult, tol: float = DEFAULT_TOL) -> list[PropertyReport]:
    return [
        check_theorem1(result, tol),
        check_corollary1(result, tol),
        check_theorem2(result, tol),
        check_individual_rationality(result, max(tol, 1e-5)),
        check_cost_recovery(result, tol),
        check_revenue_adequacy(result, tol),
    ]


# ---------------------------------------------------------------------------
# finite-difference envelope oracle
# ---------------------------------------------------------------------------


class PerturbationInfeasible(RuntimeError):
    pass


_FROZEN_ROWS = {
    "thermal": ("gen_min", "gen_max", "gen_res_up_cap", "gen_res_dn_cap", "ramp_up", "ramp_dn"),
    "renewable": ("res_cap_up", "res_cap_dn"),
}
_QUANTITY_KIND = {
    ("thermal", "energy"): G,
    ("thermal", "up_reserve"): R_UP_G,
    ("thermal", "dn_reserve"): R_DN_G,
    ("renewable", "energy"): W,
    ("renewable", "up_reserve"): R_UP_W,
    ("renewable", "dn_reserve"): R_DN_W,
}


def _envelope_problem(result: ClearingResult, kind: str, uid: str):
    """LP with the unit's first-stage quantities turned into parameters.

    The unit's bid costs and own capacity rows are removed; its re-dispatch
    variables, their rows and costs stay. For an outage scenario the unit's
    lost output is held at the optimal base schedule so the parameter only
    moves the network constraints.
    """
    inst = result.instance
    problem, vm, cm = result.problem, result.vm, result.cm
    first_stage = (G, R_UP_G, R_DN_G) if kind == "thermal" else (W, R_UP_W, R_DN_W)
    c = problem.c.copy()
    lb, ub = problem.lb.copy(), problem.ub.copy()
    for q in first_stage:
        for t in range(inst.periods):
            j = vm.index(q, uid, t)
            c[j] = 0.0
            val = float(result.solution.x[j])
            lb[j] = ub[j] = val
    a_ub = problem.a_ub.tolil()
    b_ub = problem.b_ub.copy()
    for i, key in enumerate(cm.ub_keys):
        if key.entity != uid:
            continue
        if key.family in _FROZEN_ROWS[kind]:
            b_ub[i] = 1e13  # row disabled
        elif kind == "thermal" and key.family in ("redisp_dn_floor", "redisp_dn_cap"):
            s = inst.scenario(key.k)
            if uid in s.outages:
                # freeze the outage deficit at the optimal schedule
                gcol = vm.index(G, uid, key.t)
                gstar = float(result.solution.x[gcol])
                sign = 1.0 if key.family == "redisp_dn_floor" else -1.0
                a_ub[i, gcol] = 0.0
                b_ub[i] = -sign * gstar
    return LpProblem(c, problem.a_eq, problem.b_eq, a_ub.tocsr(), b_ub, lb, ub), vm, cm


def _solve_value(problem, vm, cm, opts) -> float:
    sol = solve(problem, vm, cm, opts)
    if sol.status != "optimal":
        raise PerturbationInfeasible(f"perturbed model is {sol.status}")
    return sol.objective


def finite_difference_oracle(
    result: ClearingResult,
    kind: str,
    uid: str,
    quantity: str = "energy",
    t: int = 0,
    h: float = 1e-4,
    opts: SolverOptions | None = None,
) -> tuple[float, float]:
    """One-sided envelope derivatives bracketing the marginal price.

    Returns (lo, hi); the analytic price must lie within the interval up to
    numerical noise. Loads perturb the demand parameter of the full model;
    generator quantities use the parameterized-model construction. A side
    whose perturbation is infeasible contributes an infinite bound (the
    optimum sits on the boundary of the feasible parameter domain); if both
    sides are infeasible the step is reduced and the solve retried.
    """
    opts = opts or SolverOptions()
    inst = result.instance

    if kind == "load":
        def value_at(step: float) -> float:
            ld = inst.load(uid)
            demand = ld.demand.copy()
            demand[t] += step
            loads = tuple(replace(l, demand=demand) if l.uid == uid else l
                          for l in inst.loads)
            p2, vm2, cm2 = build_lp(replace(inst, loads=loads))
            return _solve_value(p2, vm2, cm2, opts)
        f0 = result.objective
        price_sign = 1.0
    else:
        base, vm, cm = _envelope_problem(result, kind, uid)
        j = vm.index(_QUANTITY_KIND[(kind, quantity)], uid, t)
        theta = base.lb[j]
        f0 = _solve_value(base, vm, cm, opts)

        def value_at(step: float) -> float:
            lb, ub = base.lb.copy(), base.ub.copy()
            lb[j] = ub[j] = theta + step
            pert = LpProblem(base.c, base.a_eq, base.b_eq, base.a_ub, base.b_ub, lb, ub)
            return _solve_value(pert, vm, cm, opts)
        # price is the marginal benefit, i.e. minus the cost derivative
        price_sign = -1.0

    for attempt in range(3):
        try:
            d_plus = (value_at(h) - f0) / h
        except PerturbationInfeasible:
            d_plus = math.inf
        try:
            d_minus = (f0 - value_at(-h)) / h
        except PerturbationInfeasible:
            d_minus = -math.inf
        if math.isfinite(d_plus) or math.isfinite(d_minus):
            lo, hi = price_sign * d_minus, price_sign * d_plus
            return min(lo, hi), max(lo, hi)
        h = h / 10.0
    raise PerturbationInfeasible(
        f"both perturbation directions infeasible for {kind} {uid} {quantity}")


# ---------------------------------------------------------------------------
# seeded random instances for the fuzzing harness
# ---------------------------------------------------------------------------


def random_instance(seed: int, max_buses: int = 5, max_scenarios: int = 4) -> MarketInstance:
    """Small feasible-by-construction instance with integer-ish coefficients."""
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 3))
    n_bus = int(rng.integers(1, max_buses + 1))
    congested = rng.random() < 0.35

    line_specs = []
    for b in range(1, n_bus):
        parent = int(rng.integers(0, b))
        line_specs.append((parent, b, float(rng.uniform(0.05, 0.2))))
    if n_bus >= 3 and rng.random() < 0.5:
        a, b = rng.choice(n_bus, size=2, replace=False)
        line_specs.append((int(a), int(b), float(rng.uniform(0.05, 0.2))))

    n_regions = 1 if n_bus == 1 or rng.random() < 0.4 else 2
    if n_regions == 1:
        region_of_bus = {b: "r0" for b in range(n_bus)}
    else:
        cut = int(rng.integers(1, n_bus))
        region_of_bus = {b: ("r0" if b < cut else "r1") for b in range(n_bus)}

    n_gen = int(rng.integers(2, 5))
    thermal = []
    for i in range(n_gen):
        bus = int(rng.integers(0, n_bus))
        gmax = float(rng.integers(4, 21)) * 5.0
        cg = float(rng.integers(2, 17)) * 0.5
        cr = float(rng.integers(1, 7)) * 0.5
        cre = round(float(rng.uniform(0.1, 0.5)) * cg, 2)
        ramp = math.inf if T == 1 or rng.random() < 0.5 else float(rng.integers(2, 8)) * 5.0
        thermal.append(ThermalUnit(
            uid=f"G{i+1}", bus=bus, region=region_of_bus[bus],
            g_min=0.0, g_max=gmax,
            r_up_max=round(float(rng.uniform(0.2, 0.6)) * gmax, 1),
            r_dn_max=round(float(rng.uniform(0.2, 0.6)) * gmax, 1),
            energy_bid=cg, up_reserve_bid=cr, dn_reserve_bid=cr,
            up_redispatch_bid=cre, dn_redispatch_bid=cre,
            ramp_up=ramp, ramp_dn=ramp,
        ))

    n_res = int(rng.integers(1, 4))
    renewable = []
    for j in range(n_res):
        bus = int(rng.integers(0, n_bus))
        level = float(rng.integers(2, 9)) * 5.0
        shape = level * (1.0 + 0.2 * rng.standard_normal(T)).clip(0.3)
        renewable.append(RenewableUnit(
            uid=f"WT{j+1}", bus=bus, region=region_of_bus[bus],
            available=np.round(shape, 1),
        ))

    cap_thermal = sum(u.g_max for u in thermal)
    cap_res_min = sum(float(np.min(u.available)) for u in renewable)
    peak = 0.55 * cap_thermal + 0.5 * cap_res_min
    loads = []
    share = rng.dirichlet(np.ones(n_bus)) if n_bus > 1 else np.ones(1)
    for b in range(n_bus):
        profile = peak * share[b] * (1.0 + 0.1 * rng.standard_normal(T)).clip(0.5)
        loads.append(LoadPoint(
            uid=f"L{b+1}", bus=b, region=region_of_bus[b], demand=np.round(profile, 1),
        ))
    total_load = sum(float(np.sum(l.demand)) for l in loads)

    if congested:
        cap = max(10.0, 0.35 * total_load / max(T, 1))
    else:
        cap = 10.0 * total_load
    network = Network.from_reactances(
        n_bus, [(f, tt, x, cap) for f, tt, x in line_specs], ref_bus=0)

    region_ids = sorted(set(region_of_bus.values()))
    worst_credit = 0.6 * sum(float(np.sum(u.available)) for u in renewable)
    alpha0 = min(0.9, float(rng.uniform(0.0, 0.7)) * worst_credit / max(total_load, 1.0))
    regions = tuple(
        Region(rid, tuple(b for b in range(n_bus) if region_of_bus[b] == rid),
               rps_fraction=round(alpha0, 3),
               partners=tuple(r for r in region_ids if r != rid))
        for rid in region_ids
    )

    n_scen = int(rng.integers(0, max_scenarios + 1))
    probs = rng.dirichlet(np.ones(n_scen + 1)) * 0.9 if n_scen else []
    scenarios = []
    for k in range(n_scen):
        load_dev = {}
        for ld in loads:
            dev = rng.uniform(-0.12, 0.12) * ld.demand
            load_dev[ld.uid] = np.round(np.maximum(dev, -ld.demand), 2)
        pos, neg = {}, {}
        for u in renewable:
            pos[u.uid] = np.round(rng.uniform(0.0, 0.3) * u.available, 2)
            neg[u.uid] = np.round(rng.uniform(0.0, 0.5) * u.available, 2)
        outages: set[str] = set()
        if n_gen >= 3 and rng.random() < 0.3:
            cand = thermal[int(rng.integers(0, n_gen))]
            remaining = cap_thermal - cand.g_max
            if remaining > 1.2 * total_load / max(T, 1):
                outages.add(cand.uid)
        alpha_k = round(min(0.9, alpha0 * float(rng.uniform(0.3, 1.0))), 3)
        scenarios.append(Scenario(
            uid=f"s{k+1}", probability=round(float(probs[k]), 4),
            rps_fractions={rid: alpha_k for rid in region_ids},
            outages=frozenset(outages),
            load_deviation=load_dev, res_deviation_pos=pos, res_deviation_neg=neg,
        ))

    return MarketInstance(
        network=network, thermal_units=tuple(thermal), renewable_units=tuple(renewable),
        loads=tuple(loads), regions=regions, scenarios=tuple(scenarios), periods=T,
    )
