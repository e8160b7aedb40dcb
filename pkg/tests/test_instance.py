import copy
from dataclasses import replace

import numpy as np
import pytest

from resmarket.instance import (
    instance_from_dict,
    instance_to_dict,
    load_instance,
    save_instance,
    validate_instance,
)


def test_fixture_is_valid(two_bus):
    report = validate_instance(two_bus)
    assert report.ok, str(report)
    assert report.violations == []


def test_fixture_matches_reference_parameters(two_bus):
    g1 = two_bus.thermal("G1")
    assert (g1.energy_bid, g1.up_reserve_bid, g1.up_redispatch_bid) == (2.0, 1.0, 0.5)
    assert (g1.g_max, g1.r_up_max) == (150.0, 20.0)
    s6 = two_bus.scenario("s6")
    assert s6.outages == frozenset({"G1"})
    assert s6.probability == 0.05
    assert float(s6.load_deviation["L1"][0]) == 40.0
    assert sum(s.probability for s in two_bus.scenarios) == pytest.approx(0.65)
    assert two_bus.network.lines[0].capacity == 25.0
    assert [u.available[0] for u in two_bus.renewable_units] == [75.0, 10.0, 15.0]


def test_probability_overflow_reported(two_bus):
    scenarios = [replace(s, probability=0.2) for s in two_bus.scenarios]
    bad = two_bus.with_scenarios(scenarios)
    report = validate_instance(bad)
    assert not report.ok
    assert any("exceed 1" in msg for _, msg in report.violations)


def test_deviation_exceeding_available_reported(two_bus):
    scenarios = list(two_bus.scenarios)
    s = scenarios[0]
    neg = dict(s.res_deviation_neg)
    neg["WT1"] = np.array([76.0])  # one above the available 75
    scenarios[0] = replace(s, res_deviation_neg=neg)
    report = validate_instance(two_bus.with_scenarios(scenarios))
    assert any("exceeds available output" in msg for _, msg in report.violations)


def test_validation_is_pure_and_idempotent(two_bus):
    snapshot = instance_to_dict(two_bus)
    r1 = validate_instance(two_bus)
    r2 = validate_instance(two_bus)
    assert r1.violations == r2.violations
    assert instance_to_dict(two_bus) == snapshot


def test_bus_outside_region_reported(two_bus):
    loads = tuple(replace(l, region="r2") if l.uid == "L1" else l for l in two_bus.loads)
    bad = replace(two_bus, loads=loads)
    report = validate_instance(bad)
    assert any("not a member of region" in msg for _, msg in report.violations)


def test_file_round_trip(two_bus, tmp_path):
    path = tmp_path / "inst.json"
    save_instance(two_bus, path)
    back = load_instance(path)
    assert instance_to_dict(back) == instance_to_dict(two_bus)
    assert validate_instance(back).ok


def test_shipped_fixture_file_matches_programmatic(two_bus):
    import resmarket

    path = resmarket.__path__[0] + "/data/two_bus.json"
    shipped = load_instance(path)
    assert instance_to_dict(shipped) == instance_to_dict(two_bus)


def test_dict_form_is_json_stable(two_bus):
    doc = instance_to_dict(two_bus)
    again = instance_to_dict(instance_from_dict(copy.deepcopy(doc)))
    assert doc == again
