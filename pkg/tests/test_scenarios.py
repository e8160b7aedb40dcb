import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resmarket.instance import validate_instance
from resmarket.scenarios import (
    ProfileEnsemble,
    build_ieee118_style_instance,
    ensemble_to_scenarios,
    inject_outage,
    reduce_scenarios,
    remove_outage,
    scale_deviation,
    synthetic_year_ensemble,
)


def small_ensemble(seed=0, members=40, entities=3, T=4):
    rng = np.random.default_rng(seed)
    base = rng.uniform(5.0, 20.0, size=(entities, T))
    values = base[None] * (1.0 + 0.3 * rng.standard_normal((members, entities, T)))
    return ProfileEnsemble([f"e{i}" for i in range(entities)], np.abs(values),
                           np.full(members, 1.0 / members))


def test_scaling_at_the_mean_gives_zero_deviation():
    ens = small_ensemble()
    scaled = scale_deviation(ens, 0.05)
    mu = ens.mean
    # a member equal to the mean maps onto the mean exactly
    np.testing.assert_allclose(scaled.mean, mu, atol=1e-9)


@given(st.floats(min_value=0.01, max_value=0.3))
@settings(max_examples=20, deadline=None)
def test_scaled_std_over_mean_matches_factor(k):
    ens = small_ensemble(seed=3)
    scaled = scale_deviation(ens, k)
    ratio = scaled.std / scaled.mean
    np.testing.assert_allclose(ratio, k, atol=1e-9)


def test_zero_spread_points_pass_through():
    values = np.ones((10, 1, 3)) * 7.0  # no spread at all
    ens = ProfileEnsemble(["e0"], values, np.full(10, 0.1))
    scaled = scale_deviation(ens, 0.15)
    np.testing.assert_allclose(scaled.values, values)


def test_reduction_identity_when_keeping_all():
    ens = small_ensemble(members=12)
    red = reduce_scenarios(ens, 12)
    np.testing.assert_allclose(red.values, ens.values)
    np.testing.assert_allclose(red.probabilities, ens.probabilities)


def test_reduction_conserves_probability():
    ens = small_ensemble(members=365, entities=2, T=3)
    red = reduce_scenarios(ens, 10)
    assert red.values.shape[0] == 10
    assert red.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(red.probabilities >= 0)


def test_reduction_merges_identical_members():
    values = np.array([[[1.0, 2.0]], [[1.0, 2.0]], [[5.0, 6.0]]])
    ens = ProfileEnsemble(["e0"], values, np.array([0.25, 0.25, 0.5]))
    red = reduce_scenarios(ens, 1)
    # the heavier cluster wins; all probability lands on the survivor
    assert red.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
    assert red.values.shape[0] == 1


def test_reduction_is_deterministic():
    ens = small_ensemble(members=50)
    a = reduce_scenarios(ens, 7)
    b = reduce_scenarios(ens, 7)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.probabilities, b.probabilities)


def test_base_profile_is_weighted_average():
    ens = small_ensemble(members=30, entities=4, T=2)
    red = reduce_scenarios(ens, 5)
    base, scenarios = ensemble_to_scenarios(red, ["e0", "e1"], ["e2", "e3"])
    w = red.probabilities / red.probabilities.sum()
    for i, uid in enumerate(red.entities):
        np.testing.assert_allclose(base[uid], np.einsum("m,mt->t", w, red.values[:, i]),
                                   atol=1e-12)
    # deviations reconstruct the members exactly
    for m, s in enumerate(scenarios):
        for uid in ("e0", "e1"):
            np.testing.assert_allclose(base[uid] + s.load_deviation[uid],
                                       red.values[m, red.entities.index(uid)], atol=1e-9)
        for uid in ("e2", "e3"):
            dev = s.res_deviation_pos[uid] - s.res_deviation_neg[uid]
            np.testing.assert_allclose(base[uid] + dev,
                                       red.values[m, red.entities.index(uid)], atol=1e-9)


def test_outage_injection_and_removal(two_bus):
    s1 = two_bus.scenario("s1")
    with_outage = inject_outage(s1, ["G2"], two_bus)
    assert with_outage.outages == frozenset({"G2"})
    assert with_outage.outage_flags(two_bus.thermal_ids).tolist() == [0.0, 1.0, 0.0]
    back = remove_outage(with_outage, ["G2"])
    assert back.outages == s1.outages
    assert inject_outage(s1, [], two_bus).outages == s1.outages


def test_outage_injection_unknown_unit(two_bus):
    with pytest.raises(KeyError, match="G9"):
        inject_outage(two_bus.scenario("s1"), ["G9"], two_bus)


def test_synthetic_study_instance_is_valid():
    inst = build_ieee118_style_instance(seed=7, T=6)
    assert inst.network.bus_count == 118
    assert len(inst.thermal_units) == 54
    assert len(inst.renewable_units) == 22
    assert len(inst.loads) == 91
    assert len(inst.scenarios) == 10
    report = validate_instance(inst)
    assert report.ok, str(report)
    outage_scenarios = [s for s in inst.scenarios if s.outages]
    assert len(outage_scenarios) == 2


def test_synthetic_generator_is_seeded():
    a = build_ieee118_style_instance(seed=11, T=4, days=60)
    b = build_ieee118_style_instance(seed=11, T=4, days=60)
    from resmarket.instance import instance_to_dict

    assert instance_to_dict(a) == instance_to_dict(b)


def test_year_ensemble_shapes():
    ens = synthetic_year_ensemble(["L1", "L2"], ["W1"], ["S1"], T=24, days=50, seed=5)
    assert ens.values.shape == (50, 4, 24)
    assert ens.probabilities.sum() == pytest.approx(1.0)
    solar = ens.values[:, 3]
    assert np.all(solar[:, 0] < 1e-6)  # no solar output at midnight


def test_hourly_csv_round_trip(tmp_path):
    from resmarket.scenarios import ensemble_from_hourly_csv, scenario_to_dict

    ens = small_ensemble(seed=9, members=5, entities=2, T=3)
    path = tmp_path / "profiles.csv"
    with open(path, "w") as fh:
        fh.write("entity,hour,value\n")
        for m in range(5):
            for i, e in enumerate(ens.entities):
                for t in range(3):
                    fh.write(f"{e},{m * 3 + t},{float(ens.values[m, i, t])!r}\n")
    back = ensemble_from_hourly_csv(path, periods=3)
    assert back.entities == ens.entities
    np.testing.assert_allclose(back.values, ens.values)
    # reduced output serializes in the instance scenario schema
    red = reduce_scenarios(back, 2)
    _, scenarios = ensemble_to_scenarios(red, ["e0"], ["e1"])
    doc = scenario_to_dict(scenarios[0])
    assert set(doc) == {"id", "probability", "outages", "rps_fractions",
                        "load_deviation", "res_deviation_pos", "res_deviation_neg"}
    assert len(doc["load_deviation"]["e0"]) == 3
