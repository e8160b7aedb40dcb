"""Four-part settlement: energy, reserve, deviation, re-dispatch.

Energy, reserve and deviation payments are ex-ante (scenario independent);
re-dispatch is settled pay-as-bid once a scenario realizes. Loads pay their
energy and deviation charges. Merchandise surplus is load payments minus
expected generator payments and, at the optimum, equals the congestion rent
collected on binding lines.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .instance import MarketInstance
from .lpbuild import DG_DN, DG_UP, G, R_DN_G, R_DN_W, R_UP_G, R_UP_W, W
from .pricing import PriceBook
from .solve import DispatchSolution

__all__ = [
    "EntityStatement",
    "SettlementStatement",
    "settle",
    "merchandise_surplus",
    "write_settlement_csv",
]


@dataclass
class EntityStatement:
    entity: str
    kind: str  # "thermal" | "renewable" | "load"
    energy: float = 0.0
    reserve: float = 0.0
    deviation: float = 0.0
    deviation_by_scenario: dict[str, float] = field(default_factory=dict)
    redispatch_by_scenario: dict[str, float] = field(default_factory=dict)
    expected_redispatch: float = 0.0
    bid_cost: float = 0.0  # ex-ante bid-in cost of energy and reserve

    def realized_total(self, k: str) -> float:
        return self.energy + self.reserve + self.deviation + self.redispatch_by_scenario.get(k, 0.0)

    @property
    def expected_total(self) -> float:
        return self.energy + self.reserve + self.deviation + self.expected_redispatch

    def realized_profit(self, k: str) -> float:
        """Revenue minus bid-in cost in the realized scenario.

        Re-dispatch is paid at bid, so it cancels and the value is the same
        for every realization.
        """
        return self.energy + self.reserve + self.deviation - self.bid_cost


@dataclass
class SettlementStatement:
    entities: dict[str, EntityStatement]
    merchandise_surplus: float
    congestion_rent: float

    def of(self, uid: str) -> EntityStatement:
        return self.entities[uid]

    def total_load_payment(self) -> float:
        return sum(e.expected_total for e in self.entities.values() if e.kind == "load")

    def total_generator_payment(self) -> float:
        return sum(e.expected_total for e in self.entities.values() if e.kind != "load")


def settle(inst: MarketInstance, sol: DispatchSolution, book: PriceBook) -> SettlementStatement:
    """Compute every entity's statement plus system-level surplus and rent."""
    ent: dict[str, EntityStatement] = {}

    for u in inst.thermal_units:
        st = EntityStatement(u.uid, "thermal")
        for t in range(inst.periods):
            p = book.thermal[(u.uid, t)]
            g = sol.value(G, u.uid, t)
            r_up = sol.value(R_UP_G, u.uid, t)
            r_dn = sol.value(R_DN_G, u.uid, t)
            st.energy += p.energy * g
            st.reserve += p.up_reserve * r_up + p.dn_reserve * r_dn
            st.bid_cost += u.energy_bid * g + u.up_reserve_bid * r_up + u.dn_reserve_bid * r_dn
            for s in inst.scenarios:
                d_up = sol.value(DG_UP, u.uid, t, s.uid)
                d_dn = sol.value(DG_DN, u.uid, t, s.uid)
                pay = u.up_redispatch_bid * d_up - u.dn_redispatch_bid * d_dn
                st.redispatch_by_scenario[s.uid] = st.redispatch_by_scenario.get(s.uid, 0.0) + pay
                if u.uid in s.outages:
                    # outage deficit equals the base schedule, charged at the
                    # deviation price
                    chi = -p.dev_k[s.uid] * g
                    st.deviation += chi
                    st.deviation_by_scenario[s.uid] = st.deviation_by_scenario.get(s.uid, 0.0) + chi
        st.expected_redispatch = sum(
            s.probability * st.redispatch_by_scenario.get(s.uid, 0.0) for s in inst.scenarios)
        ent[u.uid] = st

    for u in inst.renewable_units:
        st = EntityStatement(u.uid, "renewable")
        for t in range(inst.periods):
            p = book.renewable[(u.uid, t)]
            st.energy += p.energy * sol.value(W, u.uid, t)
            st.reserve += p.up_reserve * sol.value(R_UP_W, u.uid, t) \
                + p.dn_reserve * sol.value(R_DN_W, u.uid, t)
            for s in inst.scenarios:
                pos = s.res_deviation_pos[u.uid][t]
                neg = s.res_deviation_neg[u.uid][t]
                chi = p.dev_up_k[s.uid] * pos - p.dev_dn_k[s.uid] * neg
                st.deviation += chi
                st.deviation_by_scenario[s.uid] = st.deviation_by_scenario.get(s.uid, 0.0) + chi
        ent[u.uid] = st

    for ld in inst.loads:
        st = EntityStatement(ld.uid, "load")
        for t in range(inst.periods):
            p = book.load[(ld.uid, t)]
            st.energy += p.energy * float(ld.demand[t])
            for s in inst.scenarios:
                chi = p.dev_k[s.uid] * float(s.load_deviation[ld.uid][t])
                st.deviation += chi
                st.deviation_by_scenario[s.uid] = st.deviation_by_scenario.get(s.uid, 0.0) + chi
        ent[ld.uid] = st

    stmt = SettlementStatement(ent, 0.0, 0.0)
    ms, cr = merchandise_surplus(stmt, sol, inst)
    stmt.merchandise_surplus = ms
    stmt.congestion_rent = cr
    return stmt


def merchandise_surplus(stmt: SettlementStatement, sol: DispatchSolution,
                        inst: MarketInstance) -> tuple[float, float]:
    """(load payments - expected generator payments, flow-dual congestion rent)."""
    ms = stmt.total_load_payment() - stmt.total_generator_payment()
    caps = inst.network.capacities
    nl = inst.network.line_count
    cr = 0.0
    for t in range(inst.periods):
        cr += float(caps @ sol.flow_dual_total(nl, t))
        for s in inst.scenarios:
            cr += float(caps @ sol.flow_dual_total(nl, t, s.uid))
    return ms, cr


def write_settlement_csv(stmt: SettlementStatement, inst: MarketInstance, path) -> None:
    """Expected payments per entity plus a per-scenario realized sheet.

    The first block is one wide row of expected payments in entity order
    ending with the congestion rent; the second block itemizes the four
    parts per entity; the last block is the per-scenario realized sheet.
    """
    order = [u.uid for u in inst.thermal_units] + [u.uid for u in inst.renewable_units] \
        + [l.uid for l in inst.loads]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"payment_{uid}" for uid in order] + ["congestion_rent"])
        w.writerow([repr(float(stmt.entities[uid].expected_total)) for uid in order]
                   + [repr(float(stmt.congestion_rent))])
        w.writerow([])
        w.writerow(["entity", "kind", "energy", "reserve", "deviation",
                    "expected_redispatch", "expected_total"])
        for uid in order:
            e = stmt.entities[uid]
            w.writerow([uid, e.kind] + [repr(float(v)) for v in (
                e.energy, e.reserve, e.deviation, e.expected_redispatch, e.expected_total)])
        w.writerow([])
        w.writerow(["system", "merchandise_surplus", repr(float(stmt.merchandise_surplus))])
        w.writerow(["system", "congestion_rent", repr(float(stmt.congestion_rent))])
        w.writerow([])
        w.writerow(["entity", "scenario", "redispatch_payment", "realized_total", "realized_profit"])
        for uid, e in stmt.entities.items():
            if e.kind == "load":
                continue
            for s in inst.scenarios:
                w.writerow([uid, s.uid] + [repr(float(v)) for v in (
                    e.redispatch_by_scenario.get(s.uid, 0.0),
                    e.realized_total(s.uid), e.realized_profit(s.uid))])
