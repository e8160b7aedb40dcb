from dataclasses import replace

import numpy as np
import pytest

from resmarket.instance import LoadPoint, MarketInstance, Network, Region, ThermalUnit
from resmarket.lpbuild import (
    MULTIPLIER_BY_FAMILY,
    BuildConfig,
    build_lp,
    dump_lp,
    objective_value,
)
import golden


def single_bus_instance(load=10.0, energy_bid=2.0, scenarios=()):
    network = Network(bus_count=1, lines=(), shift_factors=np.zeros((0, 1)))
    return MarketInstance(
        network=network,
        thermal_units=(ThermalUnit("G1", 0, "r0", g_max=100.0, r_up_max=20.0,
                                   r_dn_max=20.0, energy_bid=energy_bid,
                                   up_reserve_bid=1.0, dn_reserve_bid=1.0,
                                   up_redispatch_bid=0.5, dn_redispatch_bid=0.5),),
        renewable_units=(),
        loads=(LoadPoint("L1", 0, "r0", demand=[load]),),
        regions=(Region("r0", buses=(0,), rps_fraction=0.0),),
        scenarios=tuple(scenarios),
        periods=1,
    )


def expected_fixture_row_counts(inst, two_sided=True):
    """Independent recount of every constraint family from the instance."""
    T, K = inst.periods, len(inst.scenarios)
    n_g, n_w = len(inst.thermal_units), len(inst.renewable_units)
    n_l = inst.network.line_count
    m = len(inst.regions)
    directions = 2 if two_sided else 1
    eq = T + K * T  # one balance row per period, base and per scenario
    ramp = sum(
        2 * (T - 1) for u in inst.thermal_units if np.isfinite(u.ramp_up)
    )
    ub = (
        n_l * directions * T          # base flow
        + 2 * n_w * T                 # renewable output+reserve caps
        + 4 * n_g * T                 # thermal capacity and reserve caps
        + ramp
        + m                           # base RPS
        + K * (n_l * directions * T)  # scenario flow
        + K * (3 * n_g * T)           # re-dispatch caps and floors
        + K * (3 * n_w * T)           # renewable re-dispatch caps and floors
        + K * m                       # scenario RPS
    )
    return eq, ub


def test_fixture_row_counts(two_bus):
    problem, vm, cm = build_lp(two_bus)
    eq, ub = expected_fixture_row_counts(two_bus)
    assert problem.a_eq.shape[0] == eq == 7
    assert problem.a_ub.shape[0] == ub
    # scenario balance and directional scenario flow rows, counted by hand:
    # 6 scenarios x 1 period and 6 scenarios x 2 directions x 1 line
    assert len(cm.rows("balance_k")) == 6
    assert len(cm.rows("flow_k")) == 12
    assert len(cm.rows("flow")) == 2


def test_fixture_column_count(two_bus):
    problem, vm, cm = build_lp(two_bus)
    T, K = two_bus.periods, len(two_bus.scenarios)
    n_g, n_w = 3, 3
    pairs = 2  # r1->r2 and r2->r1
    expected = T * (3 * n_g + 3 * n_w + pairs) + K * T * (2 * n_g + 2 * n_w + pairs)
    assert len(vm) == expected == problem.n_cols == 104


def test_variable_map_round_trip(two_bus):
    _, vm, cm = build_lp(two_bus)
    for idx, key in enumerate(vm.keys):
        assert vm.index(key.kind, key.entity, key.t, key.k) == idx
        assert vm.key(idx) == key
    for key in cm.eq_keys + cm.ub_keys:
        side, idx = cm.locate(key)
        keys = cm.eq_keys if side == "eq" else cm.ub_keys
        assert keys[idx] == key


def test_no_scenario_rows_without_scenarios():
    inst = single_bus_instance()
    problem, vm, cm = build_lp(inst)
    for fam in ("redisp_up_cap", "redisp_dn_cap", "redisp_dn_floor",
                "res_redisp_up_cap", "res_redisp_dn_cap", "res_redisp_dn_floor",
                "rps_k", "balance_k", "flow_k"):
        assert cm.rows(fam) == []


def test_one_sided_flow_config(two_bus):
    problem, vm, cm = build_lp(two_bus, BuildConfig(two_sided_flows=False))
    assert len(cm.rows("flow")) == 1
    assert len(cm.rows("flow_k")) == 6
    assert all(k.direction == "fwd" for k in cm.rows("flow") + cm.rows("flow_k"))


def test_multiplier_names_cover_margin_list():
    named = set(MULTIPLIER_BY_FAMILY.values())
    assert named == {
        "lambda", "mu", "iota_bar_U", "iota_bar_D", "imath_lower", "imath_upper",
        "ell_bar_U", "ell_bar_D", "gamma_U", "gamma_D", "nu_0",
        "lambda_k", "mu_k", "eta_bar", "beta_lower", "beta_bar",
        "tau_bar", "zeta_lower", "zeta_bar", "nu_k",
    }
    assert len(MULTIPLIER_BY_FAMILY) == len(named)


def test_missing_deviation_entry_raises(two_bus):
    scenarios = list(two_bus.scenarios)
    bad_dev = dict(scenarios[0].load_deviation)
    del bad_dev["L1"]
    scenarios[0] = replace(scenarios[0], load_deviation=bad_dev)
    with pytest.raises(ValueError, match="lacks a load_deviation entry"):
        build_lp(two_bus.with_scenarios(scenarios))


def test_objective_value_matches_golden(cleared):
    value = objective_value(cleared.instance, cleared.solution.x, cleared.vm)
    assert value == pytest.approx(golden.OBJECTIVE_A, abs=1e-6)
    assert value == pytest.approx(cleared.problem.objective(cleared.solution.x), abs=1e-9)


def test_objective_value_zero_on_zero_instance():
    inst = single_bus_instance(load=0.0)
    problem, vm, cm = build_lp(inst)
    assert objective_value(inst, np.zeros(len(vm)), vm) == 0.0


def test_lp_dump_round_trips_counts(two_bus, tmp_path):
    problem, vm, cm = build_lp(two_bus)
    path = tmp_path / "problem.lp.txt"
    dump_lp(problem, vm, cm, path)
    text = path.read_text().splitlines()
    assert text[0] == f"columns {len(vm)}"
    assert sum(1 for line in text if line.startswith("col ")) == len(vm)
    assert sum(1 for line in text if line.startswith("row eq ")) == problem.a_eq.shape[0]
    assert sum(1 for line in text if line.startswith("row ub ")) == problem.a_ub.shape[0]


def test_objective_value_case_b(ab):
    """Expected cost with renewable reserve disabled, recomputed from data."""
    res = ab.case_b
    value = objective_value(res.instance, res.solution.x, res.vm)
    assert value == pytest.approx(golden.OBJECTIVE_B, abs=1e-6)
