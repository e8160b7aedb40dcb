import csv

import numpy as np
import pytest

from resmarket.engine import clear_market
from resmarket.settlement import merchandise_surplus, write_settlement_csv
from test_lpbuild import single_bus_instance
import golden


def test_golden_expected_payments(cleared):
    for uid, want in golden.SETTLEMENT_A.items():
        assert cleared.statement.of(uid).expected_total == pytest.approx(want, abs=1e-6), uid


def test_golden_congestion_rent(cleared):
    assert cleared.statement.congestion_rent == pytest.approx(golden.CONGESTION_RENT, abs=1e-6)
    assert cleared.statement.merchandise_surplus == pytest.approx(
        golden.CONGESTION_RENT, abs=1e-6)


def test_surplus_equals_rent_and_nonnegative(cleared):
    ms, cr = merchandise_surplus(cleared.statement, cleared.solution, cleared.instance)
    assert ms == pytest.approx(cr, abs=1e-6)
    assert ms >= -1e-9


def test_statement_identities(cleared):
    """Realized totals differ from the expected total only through the
    re-dispatch part."""
    for uid, st in cleared.statement.entities.items():
        if st.kind == "load":
            continue
        expected = st.energy + st.reserve + st.deviation + st.expected_redispatch
        assert st.expected_total == pytest.approx(expected, abs=1e-9)
        mix = sum(
            s.probability * st.realized_total(s.uid) for s in cleared.instance.scenarios
        ) + (1 - sum(s.probability for s in cleared.instance.scenarios)) * (
            st.energy + st.reserve + st.deviation)
        assert mix == pytest.approx(st.expected_total, abs=1e-9)


def test_realized_profit_scenario_independent_and_nonnegative(cleared):
    for uid, st in cleared.statement.entities.items():
        if st.kind == "load":
            continue
        profits = {st.realized_profit(s.uid) for s in cleared.instance.scenarios}
        assert max(profits) - min(profits) <= 1e-9
        assert min(profits) >= -1e-9


def test_zero_dispatch_zero_payments():
    inst = single_bus_instance(load=0.0)
    res = clear_market(inst)
    for st in res.statement.entities.values():
        assert st.expected_total == pytest.approx(0.0, abs=1e-9)
    assert res.statement.merchandise_surplus == pytest.approx(0.0, abs=1e-9)
    assert res.statement.congestion_rent == 0.0


def test_uncongested_instance_zero_surplus():
    inst = single_bus_instance(load=10.0)
    res = clear_market(inst)
    assert res.statement.congestion_rent == pytest.approx(0.0, abs=1e-9)
    assert res.statement.merchandise_surplus == pytest.approx(0.0, abs=1e-9)


def test_deviation_sign_follows_system_imbalance(cleared):
    """A deviation that offsets the net system imbalance earns a nonnegative
    payment in that scenario."""
    inst = cleared.instance
    for s in inst.scenarios:
        imbalance = 0.0  # positive means shortage (load up / supply down)
        for ld in inst.loads:
            imbalance += float(np.sum(s.load_deviation[ld.uid]))
        for u in inst.renewable_units:
            imbalance -= float(np.sum(s.res_deviation_pos[u.uid]))
            imbalance += float(np.sum(s.res_deviation_neg[u.uid]))
        for u in inst.thermal_units:
            if u.uid in s.outages:
                imbalance += sum(
                    cleared.solution.value("g", u.uid, t) for t in range(inst.periods))
        if abs(imbalance) < 1e-9:
            continue
        for u in inst.renewable_units:
            pos = float(np.sum(s.res_deviation_pos[u.uid]))
            neg = float(np.sum(s.res_deviation_neg[u.uid]))
            chi = cleared.statement.of(u.uid).deviation_by_scenario.get(s.uid, 0.0)
            if imbalance > 0 and pos > 0 and neg == 0:
                assert chi >= -1e-9, (u.uid, s.uid)
            if imbalance < 0 and neg > 0 and pos == 0:
                assert chi >= -1e-9, (u.uid, s.uid)


def test_settlement_csv_layout(cleared, tmp_path):
    path = tmp_path / "settlement.csv"
    write_settlement_csv(cleared.statement, cleared.instance, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    # wide summary row: payments in entity order, congestion rent last
    assert rows[0][0] == "payment_G1" and rows[0][-1] == "congestion_rent"
    wide = dict(zip(rows[0], map(float, rows[1])))
    assert wide["payment_G1"] == pytest.approx(89.6, abs=1e-6)
    assert wide["payment_WT1"] == pytest.approx(312.75, abs=1e-6)
    assert wide["payment_L2"] == pytest.approx(362.35, abs=1e-6)
    assert wide["congestion_rent"] == pytest.approx(50.0, abs=1e-6)
    header = rows.index(["entity", "kind", "energy", "reserve", "deviation",
                         "expected_redispatch", "expected_total"])
    by_entity = {r[0]: r for r in rows[header + 1:header + 9]}
    assert float(by_entity["G1"][6]) == pytest.approx(89.6, abs=1e-6)
    assert float(by_entity["L1"][6]) == pytest.approx(688.125, abs=1e-6)
    # per-scenario realized sheet is present
    assert any(r and r[0] == "entity" and "realized_profit" in r for r in rows)
