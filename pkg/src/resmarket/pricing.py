"""Marginal prices for energy, reserve and power deviation.

Every price is assembled from the optimal duals: the energy price of an
entity is the balance dual net of flow-dual shift-factor terms (plus the
regional RPS dual for renewables, and the RPS dual scaled by the target
fraction for loads); reserve prices sum the re-dispatch cap duals across
scenarios; deviation prices are the per-scenario fractional components.

Each price keeps its base and per-scenario fractional parts so that the
settlement and the property checks can work scenario by scenario.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .instance import MarketInstance
from .solve import DispatchSolution

__all__ = [
    "EntityPrices",
    "PriceBook",
    "PricingError",
    "MissingDualError",
    "thermal_prices",
    "renewable_prices",
    "load_prices",
    "price_book",
    "write_price_csv",
]

_CHECK_TOL = 1e-6


class PricingError(RuntimeError):
    pass


class MissingDualError(PricingError):
    pass


@dataclass
class EntityPrices:
    """Prices of one entity for one period, with fractional decomposition.

    ``energy_k``/``up_k``/``dn_k`` map scenario id to the scenario's
    fractional component. Deviation prices: thermal units carry ``dev_k``
    only for scenarios where they are on outage (downward deficit charge);
    renewables carry ``dev_up_k`` (surplus credit) and ``dev_dn_k`` (deficit
    charge); loads carry ``dev_k`` equal to the fractional energy component.
    """

    entity: str
    kind: str  # "thermal" | "renewable" | "load"
    t: int
    energy_base: float = 0.0
    energy_k: dict[str, float] = field(default_factory=dict)
    up_k: dict[str, float] = field(default_factory=dict)
    dn_k: dict[str, float] = field(default_factory=dict)
    dev_k: dict[str, float] = field(default_factory=dict)
    dev_up_k: dict[str, float] = field(default_factory=dict)
    dev_dn_k: dict[str, float] = field(default_factory=dict)

    @property
    def energy(self) -> float:
        return self.energy_base + sum(self.energy_k.values())

    @property
    def up_reserve(self) -> float:
        return sum(self.up_k.values())

    @property
    def dn_reserve(self) -> float:
        return sum(self.dn_k.values())


@dataclass
class PriceBook:
    thermal: dict[tuple[str, int], EntityPrices] = field(default_factory=dict)
    renewable: dict[tuple[str, int], EntityPrices] = field(default_factory=dict)
    load: dict[tuple[str, int], EntityPrices] = field(default_factory=dict)

    def of(self, kind: str, uid: str, t: int) -> EntityPrices:
        return getattr(self, kind)[(uid, t)]


def _nodal_component(sol: DispatchSolution, inst: MarketInstance, bus: int, t: int, k=None) -> float:
    """lambda - S(:,bus)' (mu_fwd - mu_rev) for one period/scenario."""
    try:
        lam = sol.row_dual("balance" if k is None else "balance_k", "system", t, k)
    except KeyError as exc:
        raise MissingDualError(f"no balance dual for t={t}, k={k}") from exc
    mu = sol.flow_dual_signed(inst.network.line_count, t, k)
    return lam - float(inst.network.shift_factors[:, bus] @ mu)


def thermal_prices(sol: DispatchSolution, inst: MarketInstance) -> dict[tuple[str, int], EntityPrices]:
    """Energy, reserve and outage-deviation prices for every thermal unit."""
    out: dict[tuple[str, int], EntityPrices] = {}
    for u in inst.thermal_units:
        for t in range(inst.periods):
            p = EntityPrices(u.uid, "thermal", t)
            p.energy_base = _nodal_component(sol, inst, u.bus, t)
            for s in inst.scenarios:
                frac = _nodal_component(sol, inst, u.bus, t, s.uid)
                p.energy_k[s.uid] = frac
                if u.uid in s.outages:
                    # deviation price, with the raw-dual form as cross-check
                    dev = frac - s.probability * u.dn_redispatch_bid
                    beta_up = sol.row_dual("redisp_dn_cap", u.uid, t, s.uid)
                    beta_lo = sol.row_dual("redisp_dn_floor", u.uid, t, s.uid)
                    if abs(dev - (-beta_up + beta_lo)) > _CHECK_TOL:
                        raise PricingError(
                            f"deviation price mismatch for {u.uid} in {s.uid}: "
                            f"{dev} vs {-beta_up + beta_lo}")
                    p.dev_k[s.uid] = dev
                else:
                    p.up_k[s.uid] = sol.row_dual("redisp_up_cap", u.uid, t, s.uid)
                    p.dn_k[s.uid] = sol.row_dual("redisp_dn_cap", u.uid, t, s.uid)
            out[(u.uid, t)] = p
    return out


def renewable_prices(sol: DispatchSolution, inst: MarketInstance) -> dict[tuple[str, int], EntityPrices]:
    """Energy (with RPS premium), reserve and deviation prices for renewables."""
    out: dict[tuple[str, int], EntityPrices] = {}
    for u in inst.renewable_units:
        for t in range(inst.periods):
            p = EntityPrices(u.uid, "renewable", t)
            p.energy_base = _nodal_component(sol, inst, u.bus, t) \
                + sol.row_dual("rps_base", u.region, 0)
            for s in inst.scenarios:
                frac = _nodal_component(sol, inst, u.bus, t, s.uid) \
                    + sol.row_dual("rps_k", u.region, 0, s.uid)
                p.energy_k[s.uid] = frac
                tau = sol.row_dual("res_redisp_up_cap", u.uid, t, s.uid)
                zeta = sol.row_dual("res_redisp_dn_cap", u.uid, t, s.uid)
                p.up_k[s.uid] = tau
                p.dn_k[s.uid] = zeta
                # surplus paid at the fractional upward reserve price,
                # deficit charged at the fractional energy price
                p.dev_up_k[s.uid] = tau
                zeta_lo = sol.row_dual("res_redisp_dn_floor", u.uid, t, s.uid)
                dev_dn = -zeta + zeta_lo
                if abs(dev_dn - frac) > _CHECK_TOL:
                    raise PricingError(
                        f"renewable deficit price mismatch for {u.uid} in {s.uid}: "
                        f"{dev_dn} vs {frac}")
                p.dev_dn_k[s.uid] = frac
            out[(u.uid, t)] = p
    return out


def load_prices(sol: DispatchSolution, inst: MarketInstance) -> dict[tuple[str, int], EntityPrices]:
    """Energy and deviation prices for loads, RPS cost allocation included."""
    out: dict[tuple[str, int], EntityPrices] = {}
    for ld in inst.loads:
        region = inst.region(ld.region)
        for t in range(inst.periods):
            p = EntityPrices(ld.uid, "load", t)
            p.energy_base = _nodal_component(sol, inst, ld.bus, t) \
                + region.rps_fraction * sol.row_dual("rps_base", ld.region, 0)
            for s in inst.scenarios:
                frac = _nodal_component(sol, inst, ld.bus, t, s.uid) \
                    + s.rps_fractions[ld.region] * sol.row_dual("rps_k", ld.region, 0, s.uid)
                p.energy_k[s.uid] = frac
                p.dev_k[s.uid] = frac
            out[(ld.uid, t)] = p
    return out


def price_book(sol: DispatchSolution, inst: MarketInstance) -> PriceBook:
    book = PriceBook(
        thermal=thermal_prices(sol, inst),
        renewable=renewable_prices(sol, inst),
        load=load_prices(sol, inst),
    )
    _check_invariants(book, inst)
    return book


def _check_invariants(book: PriceBook, inst: MarketInstance) -> None:
    for group in (book.thermal, book.renewable, book.load):
        for p in group.values():
            total = p.energy_base + sum(p.energy_k.values())
            if abs(total - p.energy) > _CHECK_TOL:
                raise PricingError(f"energy decomposition broken for {p.entity}")
            for kk, v in list(p.up_k.items()) + list(p.dn_k.items()):
                if v < -_CHECK_TOL:
                    raise PricingError(
                        f"negative reserve price component {v} for {p.entity} in {kk}")


def write_price_csv(book: PriceBook, inst: MarketInstance, path) -> None:
    """Columns: entity, period, scenario (or "base"), price_kind, value."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["entity", "period", "scenario", "price_kind", "value"])
        for group, kinds in (
            (book.thermal, ("energy", "up_reserve", "dn_reserve")),
            (book.renewable, ("energy", "up_reserve", "dn_reserve")),
            (book.load, ("energy",)),
        ):
            for (uid, t), p in sorted(group.items()):
                w.writerow([uid, t, "base", "energy", repr(float(p.energy))])
                w.writerow([uid, t, "base", "energy_base", repr(float(p.energy_base))])
                if "up_reserve" in kinds:
                    w.writerow([uid, t, "base", "up_reserve", repr(float(p.up_reserve))])
                    w.writerow([uid, t, "base", "dn_reserve", repr(float(p.dn_reserve))])
                for s in inst.scenarios:
                    w.writerow([uid, t, s.uid, "energy_component", repr(float(p.energy_k[s.uid]))])
                    for label, store in (("up_reserve_component", p.up_k),
                                         ("dn_reserve_component", p.dn_k),
                                         ("deviation", p.dev_k),
                                         ("deviation_up", p.dev_up_k),
                                         ("deviation_dn", p.dev_dn_k)):
                        if s.uid in store:
                            w.writerow([uid, t, s.uid, label, repr(float(store[s.uid]))])
