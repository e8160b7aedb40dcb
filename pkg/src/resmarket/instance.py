"""Immutable market instance: network, resources, loads, regions, scenarios.

All quantities are in MW, prices in $/MWh, fractions dimensionless. Instances
are treated as immutable after construction; nothing here mutates them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "Line",
    "Network",
    "ThermalUnit",
    "RenewableUnit",
    "LoadPoint",
    "Region",
    "Scenario",
    "MarketInstance",
    "ValidationReport",
    "validate_instance",
    "build_two_bus_fixture",
    "load_instance",
    "save_instance",
    "instance_from_dict",
    "instance_to_dict",
]


def _arr(x, periods: int | None = None) -> np.ndarray:
    a = np.atleast_1d(np.asarray(x, dtype=float))
    if periods is not None and a.shape != (periods,):
        raise ValueError(f"expected a length-{periods} vector, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    capacity: float


@dataclass
class Network:
    """Transmission system under the shift-factor DC approximation.

    ``shift_factors`` has one row per line and one column per bus: entry
    (l, b) is the MW change on line l per MW injected at bus b (withdrawn
    at the reference bus).
    """

    bus_count: int
    lines: tuple[Line, ...]
    shift_factors: np.ndarray

    def __post_init__(self):
        self.lines = tuple(self.lines)
        self.shift_factors = np.asarray(self.shift_factors, dtype=float)
        if self.shift_factors.shape != (len(self.lines), self.bus_count):
            raise ValueError(
                f"shift factor matrix must be ({len(self.lines)}, {self.bus_count}), "
                f"got {self.shift_factors.shape}"
            )

    @property
    def line_count(self) -> int:
        return len(self.lines)

    @property
    def capacities(self) -> np.ndarray:
        return np.array([ln.capacity for ln in self.lines], dtype=float)

    @classmethod
    def from_reactances(
        cls,
        bus_count: int,
        lines: Iterable[tuple[int, int, float, float]],
        ref_bus: int = 0,
    ) -> "Network":
        """Build a network from (from_bus, to_bus, reactance, capacity) tuples.

        Shift factors come from the standard DC PTDF construction with the
        reference-bus column zeroed.
        """
        lines = list(lines)
        n, m = bus_count, len(lines)
        a = np.zeros((m, n))
        bdiag = np.zeros(m)
        caps = []
        for idx, (f, t, x, cap) in enumerate(lines):
            if x <= 0:
                raise ValueError(f"line {idx} reactance must be positive, got {x}")
            a[idx, f] = 1.0
            a[idx, t] = -1.0
            bdiag[idx] = 1.0 / x
            caps.append(cap)
        bbus = a.T @ np.diag(bdiag) @ a
        keep = [b for b in range(n) if b != ref_bus]
        s = np.zeros((m, n))
        if keep:
            red = np.linalg.inv(bbus[np.ix_(keep, keep)])
            s[:, keep] = np.diag(bdiag) @ a[:, keep] @ red
        return cls(
            bus_count=n,
            lines=tuple(Line(f, t, c) for (f, t, _x, _c), c in zip(lines, caps)),
            shift_factors=s,
        )


@dataclass
class ThermalUnit:
    """Conventional generator with energy, reserve and re-dispatch bids."""

    uid: str
    bus: int
    region: str
    g_min: float = 0.0
    g_max: float = 0.0
    r_up_max: float = 0.0
    r_dn_max: float = 0.0
    energy_bid: float = 0.0
    up_reserve_bid: float = 0.0
    dn_reserve_bid: float = 0.0
    up_redispatch_bid: float = 0.0
    dn_redispatch_bid: float = 0.0
    ramp_up: float = math.inf
    ramp_dn: float = math.inf


@dataclass
class RenewableUnit:
    """Renewable producer; bids energy, reserve and re-dispatch at zero."""

    uid: str
    bus: int
    region: str
    available: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        self.available = _arr(self.available)


@dataclass
class LoadPoint:
    uid: str
    bus: int
    region: str
    demand: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        self.demand = _arr(self.demand)


@dataclass
class Region:
    """RPS accounting region; ``partners`` lists regions it may trade credit with."""

    uid: str
    buses: tuple[int, ...]
    rps_fraction: float
    partners: tuple[str, ...] = ()

    def __post_init__(self):
        self.buses = tuple(self.buses)
        self.partners = tuple(self.partners)


@dataclass
class Scenario:
    """Non-base scenario: probability, outages, RPS targets, power deviations.

    ``load_deviation`` is signed; ``res_deviation_pos``/``res_deviation_neg``
    are the nonnegative surplus/deficit magnitudes. Each map must carry one
    length-T vector per load / renewable unit of the instance.
    """

    uid: str
    probability: float
    rps_fractions: dict[str, float]
    outages: frozenset[str] = frozenset()
    load_deviation: dict[str, np.ndarray] = field(default_factory=dict)
    res_deviation_pos: dict[str, np.ndarray] = field(default_factory=dict)
    res_deviation_neg: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.outages = frozenset(self.outages)
        self.load_deviation = {k: _arr(v) for k, v in self.load_deviation.items()}
        self.res_deviation_pos = {k: _arr(v) for k, v in self.res_deviation_pos.items()}
        self.res_deviation_neg = {k: _arr(v) for k, v in self.res_deviation_neg.items()}

    def outage_flags(self, thermal_ids: Iterable[str]) -> np.ndarray:
        """Diagonal of the outage matrix: 1.0 where the unit is down."""
        return np.array([1.0 if uid in self.outages else 0.0 for uid in thermal_ids])


@dataclass
class MarketInstance:
    network: Network
    thermal_units: tuple[ThermalUnit, ...]
    renewable_units: tuple[RenewableUnit, ...]
    loads: tuple[LoadPoint, ...]
    regions: tuple[Region, ...]
    scenarios: tuple[Scenario, ...]
    periods: int = 1

    def __post_init__(self):
        self.thermal_units = tuple(self.thermal_units)
        self.renewable_units = tuple(self.renewable_units)
        self.loads = tuple(self.loads)
        self.regions = tuple(self.regions)
        self.scenarios = tuple(self.scenarios)

    # -- lookup helpers ----------------------------------------------------
    def thermal(self, uid: str) -> ThermalUnit:
        return _by_id(self.thermal_units, uid, "thermal unit")

    def renewable(self, uid: str) -> RenewableUnit:
        return _by_id(self.renewable_units, uid, "renewable unit")

    def load(self, uid: str) -> LoadPoint:
        return _by_id(self.loads, uid, "load")

    def region(self, uid: str) -> Region:
        return _by_id(self.regions, uid, "region")

    def scenario(self, uid: str) -> Scenario:
        return _by_id(self.scenarios, uid, "scenario")

    @property
    def thermal_ids(self) -> list[str]:
        return [u.uid for u in self.thermal_units]

    @property
    def renewable_ids(self) -> list[str]:
        return [u.uid for u in self.renewable_units]

    @property
    def load_ids(self) -> list[str]:
        return [u.uid for u in self.loads]

    def total_demand(self, t: int, scenario: Scenario | None = None) -> float:
        d = sum(ld.demand[t] for ld in self.loads)
        if scenario is not None:
            d += sum(scenario.load_deviation.get(ld.uid, np.zeros(self.periods))[t] for ld in self.loads)
        return float(d)

    def with_scenarios(self, scenarios: Iterable[Scenario]) -> "MarketInstance":
        return replace(self, scenarios=tuple(scenarios))


def _by_id(items, uid, kind):
    for it in items:
        if it.uid == uid:
            return it
    raise KeyError(f"unknown {kind} {uid!r}")


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    violations: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, path: str, message: str) -> None:
        self.violations.append((path, message))

    def __str__(self) -> str:
        if self.ok:
            return "instance valid"
        return "\n".join(f"{p}: {m}" for p, m in self.violations)


def validate_instance(inst: MarketInstance) -> ValidationReport:
    """Check every structural invariant; reports all violations, never raises."""
    rep = ValidationReport()
    net = inst.network
    T = inst.periods

    if T < 1:
        rep.add("periods", f"at least one period required, got {T}")

    for idx, ln in enumerate(net.lines):
        if ln.capacity < 0:
            rep.add(f"network.lines[{idx}]", f"capacity must be nonnegative, got {ln.capacity}")
        for b in (ln.from_bus, ln.to_bus):
            if not 0 <= b < net.bus_count:
                rep.add(f"network.lines[{idx}]", f"bus {b} outside [0, {net.bus_count})")

    region_ids = {r.uid for r in inst.regions}
    covered: dict[int, str] = {}
    for r in inst.regions:
        if not 0.0 <= r.rps_fraction <= 1.0:
            rep.add(f"regions[{r.uid}]", f"base RPS fraction {r.rps_fraction} outside [0, 1]")
        for b in r.buses:
            if not 0 <= b < net.bus_count:
                rep.add(f"regions[{r.uid}]", f"bus {b} outside [0, {net.bus_count})")
            if b in covered:
                rep.add(f"regions[{r.uid}]", f"bus {b} already in region {covered[b]}")
            covered[b] = r.uid
        for p in r.partners:
            if p not in region_ids:
                rep.add(f"regions[{r.uid}]", f"unknown trading partner {p!r}")
    missing = set(range(net.bus_count)) - set(covered)
    if missing:
        rep.add("regions", f"buses {sorted(missing)} not covered by any region")

    seen: set[str] = set()
    for u in inst.thermal_units + inst.renewable_units + inst.loads:
        if u.uid in seen:
            rep.add(f"entities[{u.uid}]", "duplicate entity id")
        seen.add(u.uid)
        if not 0 <= u.bus < net.bus_count:
            rep.add(f"entities[{u.uid}]", f"bus {u.bus} outside [0, {net.bus_count})")
        if u.region not in region_ids:
            rep.add(f"entities[{u.uid}]", f"unknown region {u.region!r}")
        elif u.bus not in inst.region(u.region).buses:
            rep.add(f"entities[{u.uid}]", f"bus {u.bus} not a member of region {u.region!r}")

    for u in inst.thermal_units:
        if not 0 <= u.g_min <= u.g_max:
            rep.add(f"thermal[{u.uid}]", f"need 0 <= G_min <= G_max, got ({u.g_min}, {u.g_max})")
        for name in ("r_up_max", "r_dn_max", "ramp_up", "ramp_dn", "energy_bid",
                     "up_reserve_bid", "dn_reserve_bid", "up_redispatch_bid", "dn_redispatch_bid"):
            if getattr(u, name) < 0:
                rep.add(f"thermal[{u.uid}]", f"{name} must be nonnegative, got {getattr(u, name)}")

    for u in inst.renewable_units:
        if u.available.shape != (T,):
            rep.add(f"renewable[{u.uid}]", f"available output must have length {T}")
        elif np.any(u.available < 0):
            rep.add(f"renewable[{u.uid}]", "available output must be nonnegative")

    for ld in inst.loads:
        if ld.demand.shape != (T,):
            rep.add(f"load[{ld.uid}]", f"demand must have length {T}")
        elif np.any(ld.demand < 0):
            rep.add(f"load[{ld.uid}]", "demand must be nonnegative")

    total_p = 0.0
    for s in inst.scenarios:
        path = f"scenario[{s.uid}]"
        if not 0.0 <= s.probability <= 1.0:
            rep.add(path, f"probability {s.probability} outside [0, 1]")
        total_p += s.probability
        for uid in s.outages:
            if uid not in {u.uid for u in inst.thermal_units}:
                rep.add(path, f"outage of unknown thermal unit {uid!r}")
        for rid in region_ids:
            if rid not in s.rps_fractions:
                rep.add(path, f"missing RPS fraction for region {rid!r}")
            elif not 0.0 <= s.rps_fractions[rid] <= 1.0:
                rep.add(path, f"RPS fraction for {rid!r} outside [0, 1]")
        for ld in inst.loads:
            dev = s.load_deviation.get(ld.uid)
            if dev is None:
                rep.add(path, f"missing load deviation entry for {ld.uid!r}")
            elif dev.shape != (T,):
                rep.add(path, f"load deviation for {ld.uid!r} must have length {T}")
            elif ld.demand.shape == (T,) and np.any(ld.demand + dev < 0):
                rep.add(path, f"deviated demand of {ld.uid!r} goes negative")
        for u in inst.renewable_units:
            for attr, sign in (("res_deviation_pos", "surplus"), ("res_deviation_neg", "deficit")):
                dev = getattr(s, attr).get(u.uid)
                if dev is None:
                    rep.add(path, f"missing {sign} deviation entry for {u.uid!r}")
                elif dev.shape != (T,):
                    rep.add(path, f"{sign} deviation for {u.uid!r} must have length {T}")
                elif np.any(dev < 0):
                    rep.add(path, f"{sign} deviation for {u.uid!r} must be nonnegative")
            dev = s.res_deviation_neg.get(u.uid)
            if dev is not None and dev.shape == (T,) and u.available.shape == (T,) \
                    and np.any(dev > u.available + 1e-12):
                rep.add(path, f"deviation exceeds available output for {u.uid!r}")
    if total_p > 1.0 + 1e-12:
        rep.add("scenarios", f"scenario probabilities exceed 1 (sum {total_p})")

    return rep


# ---------------------------------------------------------------------------
# the 2-bus golden fixture
# ---------------------------------------------------------------------------


def build_two_bus_fixture() -> MarketInstance:
    """Two buses joined by a 25 MW line; three thermal and three wind units.

    Bus 0 carries L1 (80 MW), WT1 (75 MW), G1 and G3; bus 1 carries L2
    (80 MW), WT2 (10 MW), WT3 (15 MW) and G2. Six non-base scenarios cover
    wind/load deviations and a G1 outage; base-case probability is 0.35.
    Each bus is its own RPS region (base target 0.5) and the two regions
    trade RPS credit.
    """
    network = Network(
        bus_count=2,
        lines=(Line(0, 1, 25.0),),
        shift_factors=np.array([[1.0, 0.0]]),
    )

    def th(uid, bus, region, gmax, rmax, cg, cr, credisp):
        return ThermalUnit(
            uid=uid, bus=bus, region=region, g_min=0.0, g_max=gmax,
            r_up_max=rmax, r_dn_max=rmax, energy_bid=cg,
            up_reserve_bid=cr, dn_reserve_bid=cr,
            up_redispatch_bid=credisp, dn_redispatch_bid=credisp,
        )

    thermal = (
        th("G1", 0, "r1", 150.0, 20.0, 2.0, 1.0, 0.5),
        th("G2", 1, "r2", 200.0, 40.0, 4.0, 2.0, 1.0),
        th("G3", 0, "r1", 120.0, 10.0, 6.0, 3.0, 1.5),
    )
    renewable = (
        RenewableUnit("WT1", 0, "r1", available=[75.0]),
        RenewableUnit("WT2", 1, "r2", available=[10.0]),
        RenewableUnit("WT3", 1, "r2", available=[15.0]),
    )
    loads = (
        LoadPoint("L1", 0, "r1", demand=[80.0]),
        LoadPoint("L2", 1, "r2", demand=[80.0]),
    )
    regions = (
        Region("r1", buses=(0,), rps_fraction=0.5, partners=("r2",)),
        Region("r2", buses=(1,), rps_fraction=0.5, partners=("r1",)),
    )

    def scen(uid, prob, rps1, rps2, l1_dev=0.0, wt1_pos=0.0, wt1_neg=0.0, outages=()):
        zeros = [0.0]
        return Scenario(
            uid=uid,
            probability=prob,
            rps_fractions={"r1": rps1, "r2": rps2},
            outages=frozenset(outages),
            load_deviation={"L1": [l1_dev], "L2": zeros},
            res_deviation_pos={"WT1": [wt1_pos], "WT2": zeros, "WT3": zeros},
            res_deviation_neg={"WT1": [wt1_neg], "WT2": zeros, "WT3": zeros},
        )

    scenarios = (
        scen("s1", 0.15, 0.5000, 0.6050, l1_dev=-10.0, wt1_neg=15.0),
        scen("s2", 0.15, 0.5500, 0.6050, l1_dev=-20.0, wt1_neg=15.0),
        scen("s3", 0.10, 0.6050, 0.6050, l1_dev=10.0, wt1_pos=20.0),
        scen("s4", 0.15, 0.6050, 0.6050, l1_dev=20.0, wt1_pos=10.0),
        scen("s5", 0.05, 0.0000, 0.3125, wt1_neg=75.0),
        scen("s6", 0.05, 0.6250, 0.3125, l1_dev=40.0, outages=("G1",)),
    )

    return MarketInstance(
        network=network,
        thermal_units=thermal,
        renewable_units=renewable,
        loads=loads,
        regions=regions,
        scenarios=scenarios,
        periods=1,
    )


# ---------------------------------------------------------------------------
# file format (documented in docs/instance_format.md)
# ---------------------------------------------------------------------------


def instance_to_dict(inst: MarketInstance) -> dict:
    def dev_map(m: Mapping[str, np.ndarray]) -> dict:
        return {k: list(map(float, v)) for k, v in sorted(m.items())}

    return {
        "periods": inst.periods,
        "network": {
            "bus_count": inst.network.bus_count,
            "lines": [
                {"from_bus": ln.from_bus, "to_bus": ln.to_bus, "capacity": ln.capacity}
                for ln in inst.network.lines
            ],
            "shift_factors": inst.network.shift_factors.tolist(),
        },
        "thermal_units": [
            {
                "id": u.uid, "bus": u.bus, "region": u.region,
                "g_min": u.g_min, "g_max": u.g_max,
                "r_up_max": u.r_up_max, "r_dn_max": u.r_dn_max,
                "energy_bid": u.energy_bid,
                "up_reserve_bid": u.up_reserve_bid, "dn_reserve_bid": u.dn_reserve_bid,
                "up_redispatch_bid": u.up_redispatch_bid,
                "dn_redispatch_bid": u.dn_redispatch_bid,
                "ramp_up": None if math.isinf(u.ramp_up) else u.ramp_up,
                "ramp_dn": None if math.isinf(u.ramp_dn) else u.ramp_dn,
            }
            for u in inst.thermal_units
        ],
        "renewable_units": [
            {"id": u.uid, "bus": u.bus, "region": u.region, "available": list(map(float, u.available))}
            for u in inst.renewable_units
        ],
        "loads": [
            {"id": u.uid, "bus": u.bus, "region": u.region, "demand": list(map(float, u.demand))}
            for u in inst.loads
        ],
        "regions": [
            {"id": r.uid, "buses": list(r.buses), "rps_fraction": r.rps_fraction,
             "partners": list(r.partners)}
            for r in inst.regions
        ],
        "scenarios": [
            {
                "id": s.uid, "probability": s.probability,
                "outages": sorted(s.outages),
                "rps_fractions": dict(sorted(s.rps_fractions.items())),
                "load_deviation": dev_map(s.load_deviation),
                "res_deviation_pos": dev_map(s.res_deviation_pos),
                "res_deviation_neg": dev_map(s.res_deviation_neg),
            }
            for s in inst.scenarios
        ],
    }


def instance_from_dict(doc: dict) -> MarketInstance:
    net = doc["network"]
    network = Network(
        bus_count=int(net["bus_count"]),
        lines=tuple(Line(int(l["from_bus"]), int(l["to_bus"]), float(l["capacity"]))
                    for l in net["lines"]),
        shift_factors=np.asarray(net["shift_factors"], dtype=float),
    )
    thermal = tuple(
        ThermalUnit(
            uid=u["id"], bus=int(u["bus"]), region=u["region"],
            g_min=float(u.get("g_min", 0.0)), g_max=float(u["g_max"]),
            r_up_max=float(u["r_up_max"]), r_dn_max=float(u["r_dn_max"]),
            energy_bid=float(u["energy_bid"]),
            up_reserve_bid=float(u["up_reserve_bid"]),
            dn_reserve_bid=float(u["dn_reserve_bid"]),
            up_redispatch_bid=float(u["up_redispatch_bid"]),
            dn_redispatch_bid=float(u["dn_redispatch_bid"]),
            ramp_up=math.inf if u.get("ramp_up") is None else float(u["ramp_up"]),
            ramp_dn=math.inf if u.get("ramp_dn") is None else float(u["ramp_dn"]),
        )
        for u in doc["thermal_units"]
    )
    renewable = tuple(
        RenewableUnit(u["id"], int(u["bus"]), u["region"], available=u["available"])
        for u in doc["renewable_units"]
    )
    loads = tuple(
        LoadPoint(u["id"], int(u["bus"]), u["region"], demand=u["demand"])
        for u in doc["loads"]
    )
    regions = tuple(
        Region(r["id"], tuple(int(b) for b in r["buses"]), float(r["rps_fraction"]),
               tuple(r.get("partners", ())))
        for r in doc["regions"]
    )
    scenarios = tuple(
        Scenario(
            uid=s["id"], probability=float(s["probability"]),
            rps_fractions={k: float(v) for k, v in s["rps_fractions"].items()},
            outages=frozenset(s.get("outages", ())),
            load_deviation=s.get("load_deviation", {}),
            res_deviation_pos=s.get("res_deviation_pos", {}),
            res_deviation_neg=s.get("res_deviation_neg", {}),
        )
        for s in doc["scenarios"]
    )
    return MarketInstance(
        network=network, thermal_units=thermal, renewable_units=renewable,
        loads=loads, regions=regions, scenarios=scenarios,
        periods=int(doc["periods"]),
    )


def load_instance(path) -> MarketInstance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


def save_instance(inst: MarketInstance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(inst), fh, indent=2)
        fh.write("\n")
