import csv

import numpy as np
import pytest

from conftest import feeder_scenarios, random_feeder
from gridkron.assignment import Assignment
from gridkron.metrics import (
    error_report_rows,
    pareto_sweep,
    run_pipeline,
    voltage_error_stats,
    write_error_report,
    write_pareto_csv,
)
from gridkron.optikron import OptiParams
from gridkron.powerflow import Scenario


def flat_scenario(voltages, sid="s"):
    v = np.asarray(voltages, dtype=complex)
    return Scenario(id=sid, injections=np.zeros(len(v), dtype=complex), voltages=v)


def test_identity_assignment_zero_errors(path3):
    scenarios = feeder_scenarios(path3, np.array([0, 0.01, 0.02]), scales=(1.0,))
    stats = voltage_error_stats(scenarios, path3, Assignment.identity(3, 0))
    assert stats[0]["max"] == pytest.approx(0.0, abs=1e-12)
    assert stats[0]["mean"] == pytest.approx(0.0, abs=1e-12)


def test_hand_error_statistics(path3):
    # zero injections give a flat aggregated profile at 1.0; the fabricated
    # reference voltages then put errors of exactly [0, 1e-3, 3e-3]
    sc = flat_scenario([1.0, 0.999, 0.997])
    stats = voltage_error_stats([sc], path3, Assignment(parent=(0, 0, 0), slack_id=0))
    assert stats[0]["max"] == pytest.approx(0.003)
    assert stats[0]["mean"] == pytest.approx(0.004 / 3)
    assert stats[0]["median"] == pytest.approx(0.001)


def test_median_uses_lower_middle():
    net_voltages = [1.0, 0.999, 0.998, 0.996]
    from gridkron.netmodel import Network

    path4 = Network.from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)])
    sc = flat_scenario(net_voltages)
    stats = voltage_error_stats([sc], path4, Assignment(parent=(0, 0, 0, 0), slack_id=0))
    # errors sorted: [0, 1e-3, 2e-3, 4e-3]; lower middle is 1e-3
    assert stats[0]["median"] == pytest.approx(0.001)


def test_error_report_rows_and_csv(tmp_path, path3):
    sc = flat_scenario([1.0, 0.999, 0.997], sid="case")
    rows = error_report_rows([sc], path3, Assignment(parent=(0, 0, 0), slack_id=0))
    assert len(rows) == 3
    assert rows[2]["abs_error"] == pytest.approx(0.003)
    path = tmp_path / "report.csv"
    write_error_report(rows, path)
    with open(path) as fh:
        parsed = list(csv.DictReader(fh))
    assert parsed[0]["node"] == "0"
    assert float(parsed[2]["abs_error"]) == pytest.approx(0.003)


def test_reduction_level_accounting():
    a = Assignment.from_pairs(10, [(3, 2), (4, 2), (9, 8)])
    assert a.reduction_count == 3
    assert 1 - a.n_supers / a.n == pytest.approx(0.3)


def test_pipeline_and_pareto_sweep(tmp_path):
    rng = np.random.default_rng(91)
    net, demands = random_feeder(16, rng, zero_fraction=0.3)
    scenarios = feeder_scenarios(net, demands)
    params = OptiParams(ebar=1e-3, alpha=10.0 / 16, q=1)
    ebars = [1e-3, 3e-3, 8e-3]
    rows = pareto_sweep(net, scenarios, ebars, params)
    assert len(rows) == 3
    assert all("error" not in row for row in rows)
    reductions = [row["reduction_pct_meshed"] for row in rows]
    assert reductions == sorted(reductions)  # nondecreasing in ebar
    for row in rows:
        assert row["reduction_pct_radial"] <= row["reduction_pct_meshed"] + 1e-12
        assert row["max_err_mpu"] <= 1.1 * row["ebar_mpu"] + 1e-9
    path = tmp_path / "pareto.csv"
    write_pareto_csv(rows, path)
    with open(path) as fh:
        parsed = list(csv.DictReader(fh))
    assert len(parsed) == 3
    assert float(parsed[0]["ebar_mpu"]) == pytest.approx(1.0)


def test_pipeline_radial_stats_match_meshed():
    rng = np.random.default_rng(92)
    net, demands = random_feeder(14, rng, zero_fraction=0.3)
    scenarios = feeder_scenarios(net, demands)
    params = OptiParams(ebar=4e-3, alpha=10.0 / 14, q=1)
    result = run_pipeline(net, scenarios, 4e-3, params)
    meshed = voltage_error_stats(scenarios, net, result.assignment)
    radial = voltage_error_stats(scenarios, net, result.recovery.assignment)
    assert meshed == radial


def test_pareto_requires_ascending_list(path3):
    scenarios = feeder_scenarios(path3, np.array([0, 0.01, 0.02]), scales=(1.0,))
    params = OptiParams(ebar=1e-3, alpha=1.0)
    with pytest.raises(ValueError, match="ascending"):
        pareto_sweep(path3, scenarios, [2e-3, 1e-3], params)
    with pytest.raises(ValueError, match="nonempty"):
        pareto_sweep(path3, scenarios, [], params)
