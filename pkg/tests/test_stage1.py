import numpy as np
import pytest

from conftest import feeder_scenarios, random_feeder
from gridkron.assignment import Assignment
from gridkron.kron import kron_reduce
from gridkron.netmodel import Network, adjacency, build_admittance
from gridkron.powerflow import LoadCase, Scenario, solve_ac_powerflow, solve_current_injection
from gridkron.stage1 import (
    Stage1Error,
    assign_zero_injection,
    candidate_sets,
    run_stage1,
    voltage_distances,
    zero_injection_set,
)


def fake_scenario(voltages, injections, sid="s"):
    return Scenario(
        id=sid,
        injections=np.asarray(injections, dtype=complex),
        voltages=np.asarray(voltages, dtype=complex),
    )


def test_zero_injection_set_all_loaded(tree8):
    demands = np.r_[0, np.full(7, 0.01 + 0.002j)]
    scenarios = feeder_scenarios(tree8, demands, scales=(1.0,))
    assert zero_injection_set(scenarios, tree8.slack_id) == set()


def test_zero_injection_pass_through_node(path3):
    sc = solve_ac_powerflow(path3, LoadCase(demands=np.array([0, 0, 0.05 + 0.01j])))
    zset = zero_injection_set([sc], 0)
    assert 1 in zset
    assert 0 not in zset  # slack never included


def test_zero_injection_threshold_semantics():
    sc = fake_scenario([1, 1, 1], [0.5, 1e-9, 0.2])
    assert zero_injection_set([sc], 0, threshold=1e-8) == {1}
    assert zero_injection_set([sc], 0, threshold=1e-10) == set()


def test_candidate_sets_single_zero_between_loads():
    # nodes: 0 slack(loaded boundary) - 1 zero - 2 loaded
    net = Network.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)])
    cands = candidate_sets(net, {1})
    assert cands[1] == {0, 2}


def test_candidate_sets_zero_chain():
    # 0 loaded - 1 zero - 2 zero - 3 loaded
    net = Network.from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)])
    cands = candidate_sets(net, {1, 2})
    assert cands[1] == {0, 3}
    assert cands[2] == {0, 3}


def test_candidate_sets_unbounded_zero_subtree():
    # a pure zero-injection network has no loaded boundary anywhere
    net = Network.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)])
    cands = candidate_sets(net, {0, 1, 2})
    assert cands[1] == frozenset()


def test_candidate_sets_requires_radial():
    cycle = Network.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)])
    with pytest.raises(Stage1Error, match="radial"):
        candidate_sets(cycle, {1})


def test_assign_flat_voltages_assigns_everything(tree8):
    scenarios = [solve_ac_powerflow(tree8, LoadCase(demands=np.zeros(8, dtype=complex)))]
    zset = zero_injection_set(scenarios, 0)
    assert zset == set(range(1, 8))
    cands = candidate_sets(tree8, zset)
    a = assign_zero_injection(adjacency(tree8), scenarios, 1e-3, cands, zset, 0)
    # only the slack is a loaded boundary, so every node joins its cluster
    assert a.supers == (0,)


def test_assign_zero_ebar_with_distinct_voltages(path3):
    sc = fake_scenario([1.0, 0.99, 0.98], [0.1, 0.0, 0.2])
    zset = {1}
    cands = candidate_sets(path3, zset)
    a = assign_zero_injection(adjacency(path3), [sc], 0.0, cands, zset, 0)
    assert a.is_identity


def test_assign_minimum_distance_rule(path3):
    ebar = 1e-2
    # |V_z - V_L1| = 0.3 ebar, |V_z - V_L2| = 0.7 ebar -> z joins L1 (node 0)
    sc = fake_scenario([1.0, 1.0 - 0.3 * ebar, 1.0 - 1.0 * ebar], [0.1, 0.0, 0.2])
    zset = {1}
    cands = candidate_sets(path3, zset)
    a = assign_zero_injection(adjacency(path3), [sc], ebar, cands, zset, 0)
    assert a.parent[1] == 0


def test_assignment_respects_ebar_and_candidates():
    rng = np.random.default_rng(23)
    for trial in range(10):
        net, demands = random_feeder(int(rng.integers(10, 30)), rng, zero_fraction=0.4)
        scenarios = feeder_scenarios(net, demands)
        ebar = 5e-4
        zset = zero_injection_set(scenarios, 0)
        cands = candidate_sets(net, zset)
        a = assign_zero_injection(adjacency(net), scenarios, ebar, cands, zset, 0)
        d = voltage_distances(scenarios)
        for child, sup in enumerate(a.parent):
            if child == sup:
                continue
            assert child in zset
            assert sup in cands[child]
            assert d[child, sup] <= ebar


def test_rerun_is_identical():
    rng = np.random.default_rng(8)
    net, demands = random_feeder(20, rng, zero_fraction=0.5)
    scenarios = feeder_scenarios(net, demands)
    first = run_stage1(net, scenarios, 1e-3)
    second = run_stage1(net, scenarios, 1e-3)
    assert first == second


def test_stage1_reduction_is_voltage_exact():
    rng = np.random.default_rng(31)
    net, demands = random_feeder(25, rng, zero_fraction=0.4)
    scenarios = feeder_scenarios(net, demands)
    a = run_stage1(net, scenarios, 1e-3)
    keep = list(a.supers)
    y = build_admittance(net)
    y_red = kron_reduce(y, keep)
    for sc in scenarios:
        v_red = solve_current_injection(
            y_red, sc.injections[keep], keep.index(0), sc.voltages[0]
        )
        assert np.max(np.abs(v_red - sc.voltages[keep])) <= 1e-9
