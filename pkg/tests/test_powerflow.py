import numpy as np
import pytest

from conftest import feeder_scenarios, random_feeder
from gridkron.assignment import Assignment
from gridkron.kron import kron_reduce
from gridkron.netmodel import Network, build_admittance
from gridkron.powerflow import (
    LoadCase,
    PowerFlowError,
    Scenario,
    SingularSystemError,
    kron_voltages,
    load_loadcases,
    read_scenarios,
    save_loadcases,
    solve_ac_powerflow,
    solve_current_injection,
    write_scenarios,
)


def test_no_load_flat_start(tree8):
    sc = solve_ac_powerflow(tree8, LoadCase(demands=np.zeros(8, dtype=complex)))
    assert np.allclose(sc.voltages, 1.0)
    assert np.allclose(np.delete(sc.injections, 0), 0.0, atol=1e-12)


def test_two_node_quadratic_hand_case():
    # V (1 - V) = 0.09 with unit conductance has the high-voltage root V = 0.9
    net = Network.from_edges(2, [(0, 1, 1.0)])
    sc = solve_ac_powerflow(net, LoadCase(demands=np.array([0, 0.09 + 0j])))
    assert sc.voltages[1] == pytest.approx(0.9, abs=1e-9)
    assert sc.voltages[1].imag == pytest.approx(0.0, abs=1e-12)


def test_random_tree_self_consistency():
    rng = np.random.default_rng(21)
    net, demands = random_feeder(20, rng)
    sc = solve_ac_powerflow(net, LoadCase(demands=demands, id="x"))
    y = build_admittance(net)
    assert np.max(np.abs(y @ sc.voltages - sc.injections)) <= 1e-9
    s_calc = sc.voltages * np.conj(sc.injections)
    assert np.max(np.abs(s_calc[1:] + demands[1:])) <= 1e-9
    assert sc.voltages[0] == 1 + 0j


def test_nonconvergence_reports_mismatch():
    net = Network.from_edges(2, [(0, 1, 1.0)])
    with pytest.raises(PowerFlowError, match="mismatch"):
        solve_ac_powerflow(net, LoadCase(demands=np.array([0, 40.0 + 0j])))


def test_current_injection_two_node():
    y = build_admittance(Network.from_edges(2, [(0, 1, 1.0)]))
    v = solve_current_injection(y, np.array([0, -0.1 + 0j]), 0, 1 + 0j)
    assert v[1] == pytest.approx(0.9)


def test_current_injection_consistency(tree8):
    y = build_admittance(tree8)
    flat = np.ones(8, dtype=complex)
    v = solve_current_injection(y, y @ flat, 0, 1 + 0j)
    assert np.allclose(v, flat, atol=1e-12)


def test_current_injection_path_hand_case(path3):
    y = build_admittance(path3)
    v = solve_current_injection(y, np.array([99, 0, -0.1 + 0j]), 0, 1 + 0j)
    assert np.allclose(v, [1.0, 0.9, 0.8])


def test_current_injection_singular_block():
    net = Network.from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)])
    y = build_admittance(net)
    with pytest.raises(SingularSystemError):
        solve_current_injection(y, np.zeros(4, dtype=complex), 0, 1 + 0j)


def test_kron_voltages_identity_and_clusters(tree8):
    v = np.linspace(1.0, 0.93, 8) + 0.01j
    ident = Assignment.identity(8, 0)
    assert np.array_equal(kron_voltages(ident, v), v)
    single = Assignment(parent=(0,) * 8, slack_id=0)
    assert np.allclose(kron_voltages(single, v), v[0])
    grouped = Assignment.from_pairs(8, [(2, 1), (3, 1), (5, 4), (7, 6)], slack_id=0)
    out = kron_voltages(grouped, v)
    assert out[2] == out[3] == v[1]
    assert out[5] == v[4]
    assert out[7] == v[6]


def test_linearity_of_current_injection(tree8):
    rng = np.random.default_rng(4)
    y = build_admittance(tree8)
    i1 = rng.normal(size=8) + 1j * rng.normal(size=8)
    i2 = rng.normal(size=8) + 1j * rng.normal(size=8)
    a, b = 0.7, -1.3

    def sol(i):
        return solve_current_injection(y, i, 0, 1 + 0j)

    mixed = sol(a * i1 + b * i2)
    affine = a * sol(i1) + b * sol(i2) + (1 - a - b) * sol(np.zeros(8))
    assert np.max(np.abs(mixed - affine)) <= 1e-10


def test_zero_injection_reduction_is_exact():
    rng = np.random.default_rng(17)
    net, demands = random_feeder(24, rng, zero_fraction=0.4)
    sc = solve_ac_powerflow(net, LoadCase(demands=demands, id="z"))
    zero_nodes = [i for i in range(1, 24) if demands[i] == 0]
    remove = zero_nodes[: max(1, len(zero_nodes) // 2)]
    keep = sorted(set(range(24)) - set(remove))
    y = build_admittance(net)
    y_red = kron_reduce(y, keep)
    v_red = solve_current_injection(
        y_red, sc.injections[keep], keep.index(0), sc.voltages[0]
    )
    assert np.max(np.abs(v_red - sc.voltages[keep])) <= 1e-9


def test_scenario_csv_roundtrip(tmp_path, tree8):
    scenarios = feeder_scenarios(tree8, np.r_[0, np.full(7, 0.004 + 0.001j)])
    path = tmp_path / "scen.csv"
    write_scenarios(scenarios, path)
    again = read_scenarios(path)
    assert [sc.id for sc in again] == [sc.id for sc in scenarios]
    for a, b in zip(again, scenarios):
        assert np.array_equal(a.voltages, b.voltages)
        assert np.array_equal(a.injections, b.injections)


def test_loadcase_json_roundtrip(tmp_path):
    cases = [
        LoadCase(demands=np.array([0, 0.01 + 0.002j, 0]), slack_voltage=1.02 + 0j, id="low"),
        LoadCase(demands=np.array([0, 0.03 + 0.006j, 0.01]), id="high"),
    ]
    path = tmp_path / "loads.json"
    save_loadcases(cases, path)
    again = load_loadcases(path, 3)
    assert [c.id for c in again] == ["low", "high"]
    for a, b in zip(again, cases):
        assert np.allclose(a.demands, b.demands)
        assert a.slack_voltage == b.slack_voltage


def test_loadcase_unknown_field(tmp_path):
    path = tmp_path / "loads.json"
    path.write_text('{"cases": [{"id": "x", "nodes": [{"id": 0, "watts": 1}]}]}')
    with pytest.raises(ValueError, match="watts"):
        load_loadcases(path, 2)
