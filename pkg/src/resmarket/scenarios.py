"""Scenario construction: deviation scaling, reduction, outage injection.

A ProfileEnsemble holds one profile per member (e.g. one per historical
day) for every stochastic entity. The pipeline normalizes the ensemble to a
target uncertainty level, reduces it to a few probability-weighted
representatives by fast-forward selection on the probability distance, and
converts the survivors into dispatch scenarios whose base case is their
probability-weighted average.

A seeded synthetic generator stands in for year-long historical data and
builds a three-region 118-bus study system at configurable renewable
penetration and deviation levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .instance import (
    LoadPoint,
    MarketInstance,
    Network,
    Region,
    RenewableUnit,
    Scenario,
    ThermalUnit,
)

__all__ = [
    "ProfileEnsemble",
    "scale_deviation",
    "reduce_scenarios",
    "ensemble_to_scenarios",
    "ensemble_from_hourly_csv",
    "scenario_to_dict",
    "inject_outage",
    "remove_outage",
    "synthetic_year_ensemble",
    "build_ieee118_style_instance",
]


@dataclass
class ProfileEnsemble:
    """values[m, e, t]: profile of entity e at hour t in ensemble member m."""

    entities: list[str]
    values: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        m = self.values.shape[0]
        if self.probabilities.shape != (m,):
            raise ValueError("one probability per ensemble member required")
        if np.any(self.probabilities < 0):
            raise ValueError("member probabilities must be nonnegative")
        if self.values.ndim != 3 or self.values.shape[1] != len(self.entities):
            raise ValueError(f"values must be (members, {len(self.entities)}, T)")

    @property
    def mean(self) -> np.ndarray:
        w = self.probabilities / self.probabilities.sum()
        return np.einsum("m,met->et", w, self.values)

    @property
    def std(self) -> np.ndarray:
        w = self.probabilities / self.probabilities.sum()
        mu = self.mean
        return np.sqrt(np.einsum("m,met->et", w, (self.values - mu) ** 2))


def scale_deviation(ensemble: ProfileEnsemble, k_factor: float) -> ProfileEnsemble:
    """Normalize每 per-point spread to k_factor times the per-point mean.

    Each data point maps to mean + k*mean*(x - mean)/std, so that the
    per-point standard deviation afterwards equals k times the mean. Points
    with zero spread pass through unchanged.
    """
    mu = ensemble.mean
    sigma = ensemble.std
    scale = np.zeros_like(mu)
    ok = sigma > 1e-12
    scale[ok] = k_factor * mu[ok] / sigma[ok]
    values = mu[None, :, :] + (ensemble.values - mu[None, :, :]) * scale[None, :, :]
    return ProfileEnsemble(list(ensemble.entities), values, ensemble.probabilities.copy())


def reduce_scenarios(ensemble: ProfileEnsemble, target_count: int) -> ProfileEnsemble:
    """Fast-forward selection under the probability-weighted 2-norm distance.

    Keeps ``target_count`` members; every discarded member's probability
    moves to its nearest kept representative. Deterministic: ties resolve to
    the lowest member index.
    """
    m = ensemble.values.shape[0]
    if target_count > m:
        raise ValueError(f"cannot keep {target_count} of {m} members")
    if target_count == m:
        return ProfileEnsemble(list(ensemble.entities), ensemble.values.copy(),
                               ensemble.probabilities.copy())
    flat = ensemble.values.reshape(m, -1)
    p = ensemble.probabilities
    # pairwise distances once; desk-scale ensembles only
    d = np.sqrt(np.maximum(
        np.sum(flat ** 2, axis=1)[:, None] + np.sum(flat ** 2, axis=1)[None, :]
        - 2.0 * flat @ flat.T, 0.0))
    kept: list[int] = []
    # distance of each member to the closest kept representative
    nearest = np.full(m, np.inf)
    is_kept = np.zeros(m, dtype=bool)
    for _ in range(target_count):
        # expected distance if candidate u joins the kept set
        costs = np.minimum(nearest[None, :], d) @ p
        costs[is_kept] = np.inf
        best_u = int(np.argmin(costs))
        kept.append(best_u)
        is_kept[best_u] = True
        nearest = np.minimum(nearest, d[best_u])
    kept_sorted = sorted(kept)
    new_p = np.zeros(len(kept_sorted))
    for i in range(m):
        dists = [d[i, j] for j in kept_sorted]
        new_p[int(np.argmin(dists))] += p[i]
    return ProfileEnsemble(
        list(ensemble.entities),
        ensemble.values[kept_sorted].copy(),
        new_p,
    )


def ensemble_to_scenarios(
    ensemble: ProfileEnsemble,
    load_ids: list[str],
    res_ids: list[str],
) -> tuple[dict[str, np.ndarray], list[Scenario]]:
    """Base profiles (probability-weighted average) plus deviation scenarios.

    The ensemble's total probability is preserved; RPS fractions and outages
    are left for the caller to fill in.
    """
    base = {e: ensemble.mean[i] for i, e in enumerate(ensemble.entities)}
    scenarios = []
    idx = {e: i for i, e in enumerate(ensemble.entities)}
    for mno in range(ensemble.values.shape[0]):
        load_dev = {uid: ensemble.values[mno, idx[uid]] - base[uid] for uid in load_ids}
        pos, neg = {}, {}
        for uid in res_ids:
            dev = ensemble.values[mno, idx[uid]] - base[uid]
            pos[uid] = np.maximum(dev, 0.0)
            neg[uid] = np.maximum(-dev, 0.0)
        scenarios.append(Scenario(
            uid=f"s{mno+1}",
            probability=float(ensemble.probabilities[mno]),
            rps_fractions={},
            load_deviation=load_dev,
            res_deviation_pos=pos,
            res_deviation_neg=neg,
        ))
    return base, scenarios


def ensemble_from_hourly_csv(path, periods: int) -> ProfileEnsemble:
    """Read columnar (entity, hour, value) rows into an ensemble.

    Hours run over the whole record; consecutive blocks of ``periods`` hours
    form one ensemble member (one day, typically). Members get uniform
    probability. Every entity must cover the same hour range.
    """
    import csv as _csv

    series: dict[str, dict[int, float]] = {}
    with open(path) as fh:
        reader = _csv.reader(fh)
        for row in reader:
            if not row or row[0] == "entity":
                continue
            entity, hour, value = row[0], int(row[1]), float(row[2])
            series.setdefault(entity, {})[hour] = value
    if not series:
        raise ValueError(f"no profile rows in {path}")
    entities = sorted(series)
    hours = sorted(series[entities[0]])
    for e in entities:
        if sorted(series[e]) != hours:
            raise ValueError(f"entity {e!r} does not cover the common hour range")
    if len(hours) % periods:
        raise ValueError(f"{len(hours)} hours do not split into {periods}-hour members")
    members = len(hours) // periods
    values = np.zeros((members, len(entities), periods))
    for i, e in enumerate(entities):
        flat = np.array([series[e][h] for h in hours])
        values[:, i, :] = flat.reshape(members, periods)
    return ProfileEnsemble(entities, values, np.full(members, 1.0 / members))


def scenario_to_dict(s: Scenario) -> dict:
    """Scenario in the instance file's schema (see docs/instance_format.md)."""
    return {
        "id": s.uid,
        "probability": s.probability,
        "outages": sorted(s.outages),
        "rps_fractions": dict(sorted(s.rps_fractions.items())),
        "load_deviation": {k: list(map(float, v)) for k, v in sorted(s.load_deviation.items())},
        "res_deviation_pos": {k: list(map(float, v)) for k, v in sorted(s.res_deviation_pos.items())},
        "res_deviation_neg": {k: list(map(float, v)) for k, v in sorted(s.res_deviation_neg.items())},
    }


def inject_outage(scenario: Scenario, unit_ids, inst: MarketInstance) -> Scenario:
    """Scenario with the given thermal units added to the outage set."""
    known = set(inst.thermal_ids)
    for uid in unit_ids:
        if uid not in known:
            raise KeyError(f"unknown thermal unit {uid!r}")
    return replace(scenario, outages=scenario.outages | frozenset(unit_ids))


def remove_outage(scenario: Scenario, unit_ids) -> Scenario:
    return replace(scenario, outages=scenario.outages - frozenset(unit_ids))


# ---------------------------------------------------------------------------
# synthetic study system (desk-scale stand-in for year-long data)
# ---------------------------------------------------------------------------


def _daily_load_shape(rng, T: int) -> np.ndarray:
    h = np.linspace(0, 2 * np.pi, T, endpoint=False)
    shape = 0.75 + 0.2 * np.sin(h - np.pi / 2) + 0.08 * np.sin(2 * h)
    return shape * (1.0 + 0.05 * rng.standard_normal(T))


def _daily_wind_shape(rng, T: int) -> np.ndarray:
    base = 0.5 + 0.25 * np.sin(np.linspace(0, 2 * np.pi, T, endpoint=False) + rng.uniform(0, 6.28))
    noise = np.convolve(rng.standard_normal(T + 4), np.ones(5) / 5, mode="valid")
    return np.clip(base + 0.25 * noise, 0.05, 1.0)


def _daily_solar_shape(rng, T: int) -> np.ndarray:
    h = np.arange(T) * 24.0 / T
    bell = np.exp(-0.5 * ((h - 12.5) / 3.0) ** 2)
    cloud = np.clip(1.0 - 0.3 * np.abs(rng.standard_normal()), 0.4, 1.0)
    out = bell * cloud
    out[out < 0.02] = 0.0
    return out


def synthetic_year_ensemble(
    load_ids: list[str],
    wind_ids: list[str],
    solar_ids: list[str],
    T: int,
    days: int = 365,
    seed: int = 0,
) -> ProfileEnsemble:
    """Per-unit daily profiles for a year of synthetic weather, in per unit."""
    rng = np.random.default_rng(seed)
    entities = list(load_ids) + list(wind_ids) + list(solar_ids)
    values = np.zeros((days, len(entities), T))
    for d in range(days):
        season = 0.9 + 0.15 * math.sin(2 * math.pi * d / max(days, 1))
        for i, uid in enumerate(load_ids):
            values[d, i] = season * _daily_load_shape(rng, T)
        off = len(load_ids)
        for i, uid in enumerate(wind_ids):
            values[d, off + i] = _daily_wind_shape(rng, T)
        off += len(wind_ids)
        for i, uid in enumerate(solar_ids):
            values[d, off + i] = season * _daily_solar_shape(rng, T)
    return ProfileEnsemble(entities, values, np.full(days, 1.0 / days))


def _ieee118_style_network(rng, congested: bool) -> Network:
    """118-bus, three-area network: a meshed backbone per area plus ties.

    Tie lines get tight limits in the congested configuration; internal
    lines stay wide.
    """
    n = 118
    areas = [range(0, 40), range(40, 80), range(80, 118)]
    specs: list[tuple[int, int, float, float]] = []
    wide = 1000.0
    for area in areas:
        buses = list(area)
        for i in range(1, len(buses)):
            parent = buses[int(rng.integers(0, i))]
            specs.append((parent, buses[i], float(rng.uniform(0.05, 0.25)), wide))
        for _ in range(len(buses) // 3):
            a, b = rng.choice(buses, size=2, replace=False)
            if a != b:
                specs.append((int(a), int(b), float(rng.uniform(0.1, 0.3)), wide))
    tie_cap = 30.0 if congested else 1000.0
    ties = [(20, 55, 0.08), (30, 62, 0.08), (70, 95, 0.08), (75, 100, 0.08), (10, 90, 0.1)]
    for f, t, x in ties:
        specs.append((f, t, x, tie_cap))
    return Network.from_reactances(n, specs, ref_bus=0)


def build_ieee118_style_instance(
    seed: int = 7,
    T: int = 6,
    penetration: float = 1.0,
    deviation_level: float = 0.05,
    load_deviation_level: float = 0.05,
    congested: bool = False,
    scenario_count: int = 10,
    rps_base: float = 0.4,
    rps_scenario: float = 0.2,
    days: int = 120,
) -> MarketInstance:
    """Seeded three-area, 118-bus study instance with reduced scenarios.

    Wind and solar carry fixed unit capacities; the load level is scaled so
    that base-case renewable energy over the horizon is ``penetration``
    times base-case demand. Two scenarios carry one thermal outage each.
    """
    rng = np.random.default_rng(seed)
    network = _ieee118_style_network(rng, congested)
    areas = {"a1": range(0, 40), "a2": range(40, 80), "a3": range(80, 118)}
    region_of_bus = {}
    for rid, rg in areas.items():
        for b in rg:
            region_of_bus[b] = rid

    gen_buses = sorted(rng.choice(118, size=54, replace=False).tolist())
    thermal = []
    for i, bus in enumerate(gen_buses):
        cg = 20.0 + (i % 55)
        gmax = float(rng.integers(6, 25)) * 10.0 * 0.5
        thermal.append(ThermalUnit(
            uid=f"G{i+1}", bus=int(bus), region=region_of_bus[int(bus)],
            g_min=0.0, g_max=gmax,
            r_up_max=0.3 * gmax, r_dn_max=0.3 * gmax,
            energy_bid=cg, up_reserve_bid=0.2 * cg, dn_reserve_bid=0.2 * cg,
            up_redispatch_bid=0.1 * cg, dn_redispatch_bid=0.1 * cg,
            ramp_up=50.0, ramp_dn=50.0,
        ))

    wind_buses = rng.choice(118, size=13, replace=False)
    solar_buses = rng.choice(118, size=9, replace=False)
    wind_ids = [f"W{i+1}" for i in range(13)]
    solar_ids = [f"S{i+1}" for i in range(9)]
    load_buses = sorted(rng.choice(118, size=91, replace=False).tolist())
    load_ids = [f"L{i+1}" for i in range(len(load_buses))]

    ensemble = synthetic_year_ensemble(load_ids, wind_ids, solar_ids, T=T, days=days, seed=seed)
    # normalize at a fixed reference level, reduce once, then rescale the
    # renewable deviations of the representatives; deviation-level sweeps
    # then compare nested uncertainty on one scenario structure
    ref_level = 0.05
    mu, sigma = ensemble.mean, ensemble.std
    factors = np.zeros_like(mu)
    for i, uid in enumerate(ensemble.entities):
        k = load_deviation_level if uid.startswith("L") else ref_level
        ok = sigma[i] > 1e-12
        factors[i, ok] = k * mu[i, ok] / sigma[i, ok]
    values = mu[None] + (ensemble.values - mu[None]) * factors[None]
    scaled = ProfileEnsemble(list(ensemble.entities), values, ensemble.probabilities)

    reduced = reduce_scenarios(scaled, scenario_count)
    base, scen_list = ensemble_to_scenarios(reduced, load_ids, wind_ids + solar_ids)
    res_ratio = deviation_level / ref_level

    wind_cap, solar_cap = 20.0, 40.0
    res_energy = sum(float(np.sum(base[uid])) * wind_cap for uid in wind_ids) \
        + sum(float(np.sum(base[uid])) * solar_cap for uid in solar_ids)
    load_energy_pu = sum(float(np.sum(base[uid])) for uid in load_ids)
    load_scale = res_energy / (penetration * load_energy_pu)

    renewable = tuple(
        RenewableUnit(uid, int(bus), region_of_bus[int(bus)],
                      available=np.round(base[uid] * cap, 4))
        for ids, cap in ((wind_ids, wind_cap), (solar_ids, solar_cap))
        for uid, bus in zip(ids, (wind_buses if cap == wind_cap else solar_buses))
    )
    loads = tuple(
        LoadPoint(uid, int(bus), region_of_bus[int(bus)],
                  demand=np.round(base[uid] * load_scale, 4))
        for uid, bus in zip(load_ids, load_buses)
    )

    scenarios = []
    cap_of = {uid: wind_cap for uid in wind_ids} | {uid: solar_cap for uid in solar_ids}
    for s in scen_list:
        load_dev = {uid: np.round(s.load_deviation[uid] * load_scale, 4) for uid in load_ids}
        pos, neg = {}, {}
        for uid in wind_ids + solar_ids:
            pos[uid] = np.round(s.res_deviation_pos[uid] * cap_of[uid] * res_ratio, 4)
            avail = np.array([base[uid][t] * cap_of[uid] for t in range(T)])
            neg[uid] = np.round(
                np.minimum(s.res_deviation_neg[uid] * cap_of[uid] * res_ratio, avail), 4)
        scenarios.append(replace(
            s,
            probability=round(s.probability * 0.9, 6),  # keep base-case mass
            rps_fractions={rid: rps_scenario for rid in areas},
            load_deviation=load_dev, res_deviation_pos=pos, res_deviation_neg=neg,
        ))
    # one mid-size thermal outage in each of two scenarios, mirroring a
    # study setup with unit failures in different areas
    by_size = sorted(thermal, key=lambda u: u.g_max)
    mid = by_size[len(by_size) // 2]
    small = by_size[len(by_size) // 3]
    inst0 = MarketInstance(
        network=network, thermal_units=tuple(thermal), renewable_units=renewable,
        loads=loads, regions=tuple(
            Region(rid, tuple(areas[rid]), rps_fraction=rps_base,
                   partners=tuple(r for r in areas if r != rid))
            for rid in areas
        ),
        scenarios=tuple(scenarios), periods=T,
    )
    scenarios[-1] = inject_outage(scenarios[-1], [mid.uid], inst0)
    scenarios[len(scenarios) // 2] = inject_outage(scenarios[len(scenarios) // 2], [small.uid], inst0)
    return inst0.with_scenarios(scenarios)
