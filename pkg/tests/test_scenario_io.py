import json
import math
import tempfile
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from epicontrol.io import (
    RESULT_COLUMNS, emit, parse_cell, read_csv, read_json, result_from_dict, result_rows, write_csv,
)
from epicontrol.model import StateVector
from epicontrol.scenario import (
    ConfigError, Scenario, builtin_scenarios, get_scenario, load_scenario, save_scenario,
)
from epicontrol.sweep import (
    AXIS_RULES, EXTRA_COLUMNS, SWEEP_COLUMNS, SweepSpec, log_fit_r2, parse_number, run_sweep,
)

from conftest import optimized


def test_builtin_scenarios_digits():
    wa, us = builtin_scenarios()
    assert wa.label == "wa-2020-06" and us.label == "us-2021-01"
    assert wa.model.n_pop == 7_600_000 and us.model.n_pop == 328_200_000
    assert tuple(wa.initial.as_array()) == (7_497_705, 7_044, 6_221, 338, 88_692, 0)
    assert tuple(us.initial.as_array()) == (235_682_298, 4_569_525, 4_035_804, 237_589, 83_674_784, 0)
    for sc in (wa, us):
        assert sc.initial.as_array().sum() == sc.model.n_pop
        m, c = sc.model, sc.cost
        assert (m.alpha, m.lambda0, m.gamma0, m.delta0, m.gamma1, m.delta1) == (
            0.192, 0.008, 0.209, 0.000195, 0.1, 0.013)
        assert (c.k, c.b, c.c0, c.c1, c.d) == (100, 0.87, 3500, 1750, 7e6)
        assert sc.dt == 1 and sc.end_time_cap == 6000 and m.vacc_rate == 0


def test_scenario_json_round_trip(tmp_path):
    sc = get_scenario("us-2021-01").with_vaccination(1 / 300)
    path = tmp_path / "us.json"
    save_scenario(sc, path)
    assert json.loads(path.read_text())["schema_version"] == 1
    assert load_scenario(path) == sc
    assert get_scenario(str(path)) == sc


def test_scenario_validation(tmp_path):
    wa = get_scenario("wa-2020-06")
    with pytest.raises(ConfigError):
        Scenario(wa.model, wa.cost, StateVector(1, 0, 0, 0, 0, 0))
    with pytest.raises(ConfigError):
        get_scenario("nowhere")
    bad = tmp_path / "bad.json"
    bad.write_text('{"model": {"n_pop": 10}}')
    with pytest.raises(ConfigError):
        load_scenario(bad)
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_scenario(bad)


def test_result_json_round_trip_is_exact(tmp_path):
    res = optimized("wa-2020-06", "suppression")
    path = tmp_path / "r.json"
    emit(res, "json", path, {"dt": 1.0, "mu": res.mu, "end_time_cap": 6000.0, "seed": 0, "label": res.label,
                             "end_time": res.end_time, "total_cost": res.total_cost, "sigma": res.sigma,
                             "converged": res.converged, "capped": res.capped})
    doc = read_json(path)
    for key in ("schema_version", "dt", "mu", "end_time_cap", "seed"):
        assert key in doc["header"]
    back = result_from_dict(doc)
    np.testing.assert_array_equal(back.policy.beta, res.policy.beta)
    np.testing.assert_array_equal(back.trajectory.states, res.trajectory.states)
    assert back.total_cost == res.total_cost and back.sigma == res.sigma
    assert back.cost_breakdown == res.cost_breakdown and back.label == res.label
    assert back.model == res.model and back.cost == res.cost


def test_result_csv_round_trip_is_exact(tmp_path):
    res = optimized("wa-2020-06", "suppression")
    path = tmp_path / "r.csv"
    emit(res, "csv", path, {"dt": 1.0, "mu": 0.01, "end_time_cap": 6000.0, "seed": None})
    assert path.read_text().startswith("# {")
    header, columns, rows = read_csv(path)
    assert header["schema_version"] == 1 and header["seed"] is None
    assert tuple(columns) == RESULT_COLUMNS
    parsed = [[parse_cell(c) for c in row] for row in rows]
    expected = result_rows(res)
    assert len(parsed) == len(expected) == res.policy.horizon_steps + 1
    for got, want in zip(parsed, expected):
        assert all(g == w or (math.isnan(g) and math.isnan(w)) for g, w in zip(got, want))
    # cumulative cost columns end at the breakdown totals
    last = expected[-1]
    assert last[-3] == pytest.approx(res.cost_breakdown.control)
    assert last[-2] == pytest.approx(res.cost_breakdown.hospitalization)
    assert last[-1] == res.cost_breakdown.death


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=8))
def test_float_cells_round_trip(values):
    with tempfile.TemporaryDirectory() as tmp:
        write_csv(f"{tmp}/x.csv", {"k": 1}, [f"c{i}" for i in range(len(values))], [values])
        _, _, rows = read_csv(f"{tmp}/x.csv")
    assert [parse_cell(c) for c in rows[0]] == values


def test_emit_rejects_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        emit({}, "xml", tmp_path / "x", {})
    with pytest.raises(ValueError):
        emit({}, "csv", tmp_path / "x", {})


def test_parse_number():
    assert parse_number("1/300") == 1 / 300
    assert parse_number(" 2.5 ") == 2.5
    assert parse_number(7) == 7.0
    with pytest.raises(ConfigError):
        parse_number("abc")
    with pytest.raises(ConfigError):
        parse_number("1/0")


def test_sweep_spec_validation():
    with pytest.raises(ConfigError):
        SweepSpec("gamma", (1,))
    with pytest.raises(ConfigError):
        SweepSpec("k", ())
    with pytest.raises(ConfigError):
        SweepSpec("k", (1,), ("greedy",))
    assert SweepSpec("vacc_rate", ("1/300",)).values == (1 / 300,)


def test_axis_rules_recompute_derived_parameters():
    wa = get_scenario("wa-2020-06")
    assert set(AXIS_RULES) == {"n_pop", "k", "i0_scale", "mean_infectious_period", "vacc_rate"}
    big = SweepSpec("n_pop", (7.6e8,)).scenario_at(wa, 7.6e8)
    np.testing.assert_allclose(big.initial.as_array(), 100 * wa.initial.as_array())
    half = SweepSpec("i0_scale", (0.5,)).scenario_at(wa, 0.5)
    np.testing.assert_allclose(half.initial.as_array()[1:4], 0.5 * wa.initial.as_array()[1:4])
    assert half.initial.as_array().sum() == pytest.approx(wa.model.n_pop, rel=1e-15)
    slow = SweepSpec("mean_infectious_period", (10,)).scenario_at(wa, 10)
    m = slow.model
    assert m.lambda0 + m.gamma0 + m.delta0 == pytest.approx(0.1)
    assert m.gamma0 / m.lambda0 == pytest.approx(wa.model.gamma0 / wa.model.lambda0)
    assert m.alpha == wa.model.alpha and m.gamma1 == wa.model.gamma1
    with pytest.raises(ConfigError):
        SweepSpec("i0_scale", (1e4,)).scenario_at(wa, 1e4)


def test_sweep_table_columns_and_failures():
    wa = get_scenario("wa-2020-06")
    table = run_sweep(SweepSpec("k", (100,), ("suppression",), {"max_outer": 5, "max_polish": 20}), wa)
    assert SWEEP_COLUMNS == ("axis", "strategy", "cost_per_person", "end_time", "converged")
    assert "init" in EXTRA_COLUMNS and "error" in EXTRA_COLUMNS
    row = table.rows[0]
    assert row.axis == 100 and row.init == "suppression" and row.error == ""
    assert not table.failed
    broken = run_sweep(SweepSpec("k", (100, 90), ("suppression",)), replace(wa, dt=10.0))
    assert len(broken.failed) == 2 and broken.rows[1].error and not broken.rows[1].converged


@pytest.mark.slow
def test_end_time_grows_with_log_population():
    wa = get_scenario("wa-2020-06")
    values = (1e6, 1e7, 1e8, 1e9, 7.8e9)
    table = run_sweep(SweepSpec("n_pop", values, ("suppression",)), wa)
    assert not table.failed
    assert all(s == "suppression" for s in table.column("strategy"))
    t = table.column("end_time")
    assert np.all(np.diff(t) > 0)
    slope, r2 = log_fit_r2(values, t)
    assert slope > 0 and r2 > 0.95
