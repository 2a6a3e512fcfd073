import json

import numpy as np
import pytest

from conftest import random_admittance, random_tree_edges
from gridkron.netmodel import (
    Branch,
    Network,
    NetworkFormatError,
    Node,
    adjacency,
    build_admittance,
    load_network,
    network_from_admittance,
    save_network,
    validate_radial,
)


def test_admittance_two_node():
    net = Network.from_edges(2, [(0, 1, 1.0)])
    assert np.allclose(build_admittance(net), [[1, -1], [-1, 1]])


def test_admittance_path_degrees(path3):
    y = build_admittance(path3)
    assert np.allclose(np.diag(y), [1, 2, 1])
    assert y[0, 1] == y[1, 0] == -1
    assert y[0, 2] == 0


def test_admittance_with_shunt():
    net = Network.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)], shunts=[0, 0.1j, 0])
    y = build_admittance(net)
    assert y[1, 1] == 2 + 0.1j
    assert y[0, 0] == 1 and y[2, 2] == 1


def test_duplicate_branch_rejected():
    with pytest.raises(NetworkFormatError, match="duplicate branch between nodes 0 and 1"):
        Network.from_edges(2, [(0, 1, 1.0), (1, 0, 2.0)])


def test_row_sums_equal_shunts():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(2, 30))
        shunts = np.where(rng.random(n) < 0.3, rng.normal(size=n) * 0.01j, 0)
        edges = [(u, v, random_admittance(rng)) for u, v in random_tree_edges(n, rng)]
        net = Network.from_edges(n, edges, shunts=shunts)
        y = build_admittance(net)
        assert np.allclose(y, y.T)
        assert np.allclose(y.sum(axis=1), shunts, atol=1e-9)


def test_adjacency_two_node():
    net = Network.from_edges(2, [(0, 1, 1.0)])
    assert np.array_equal(adjacency(net), [[0, 1], [1, 0]])


def test_adjacency_eight_bus_tree(tree8):
    lam = adjacency(tree8)
    assert np.array_equal(lam, lam.T)
    assert lam.sum() == 2 * 7  # 7 symmetric nonzero pairs
    assert np.all(np.diag(lam) == 0)


def test_isolated_node_zero_row():
    net = Network.from_edges(3, [(0, 1, 1.0)])
    lam = adjacency(net)
    assert lam[2].sum() == 0
    assert not validate_radial(net)


def test_validate_radial_cases(path3):
    assert validate_radial(path3)
    cycle = Network.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)])
    assert not validate_radial(cycle)
    two_edges = Network.from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)])
    assert not validate_radial(two_edges)


def test_random_trees_are_radial_until_an_edge_is_added():
    rng = np.random.default_rng(11)
    for _ in range(15):
        n = int(rng.integers(1, 25))
        edges = random_tree_edges(n, rng)
        net = Network.from_edges(n, edges)
        assert validate_radial(net)
        if n >= 3:
            present = {tuple(sorted(e)) for e in edges}
            extra = next(
                (u, v)
                for u in range(n)
                for v in range(u + 1, n)
                if (u, v) not in present
            )
            assert not validate_radial(Network.from_edges(n, edges + [extra]))


def test_save_load_roundtrip(tmp_path, tree8):
    path = tmp_path / "feeder.json"
    save_network(tree8, path)
    again = load_network(path)
    assert again == tree8


def test_load_minimal_two_node(tmp_path):
    path = tmp_path / "min.json"
    path.write_text(
        json.dumps(
            {
                "base_mva": 1.0,
                "base_kv": 12.47,
                "nodes": [{"id": 0, "slack": True}, {"id": 1}],
                "branches": [{"from": 0, "to": 1, "y_re": 2.0, "y_im": -1.0}],
            }
        )
    )
    net = load_network(path)
    assert net.n == 2
    assert net.slack_id == 0
    assert net.branches[0].admittance == 2 - 1j


def test_load_missing_slack(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"nodes": [{"id": 0}, {"id": 1}], "branches": []}))
    with pytest.raises(NetworkFormatError, match="no slack node"):
        load_network(path)


def test_load_unknown_field_named(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(
        json.dumps(
            {
                "nodes": [{"id": 0, "slack": True, "volts": 1.0}],
                "branches": [],
            }
        )
    )
    with pytest.raises(NetworkFormatError, match=r"nodes\[0\].*'volts'"):
        load_network(path)


def test_load_merges_parallel_branches(tmp_path):
    path = tmp_path / "par.json"
    path.write_text(
        json.dumps(
            {
                "nodes": [{"id": 0, "slack": True}, {"id": 1}],
                "branches": [
                    {"from": 0, "to": 1, "y_re": 1.0, "y_im": 0.0},
                    {"from": 1, "to": 0, "y_re": 2.0, "y_im": -0.5},
                ],
            }
        )
    )
    net = load_network(path)
    assert len(net.branches) == 1
    assert net.branches[0].admittance == 3 - 0.5j


def test_network_from_admittance_roundtrip():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = int(rng.integers(2, 20))
        edges = [(u, v, random_admittance(rng)) for u, v in random_tree_edges(n, rng)]
        net = Network.from_edges(n, edges)
        y = build_admittance(net)
        rebuilt = network_from_admittance(y, 0)
        assert np.allclose(build_admittance(rebuilt), y, atol=1e-12)
        assert len(rebuilt.branches) == len(net.branches)


def test_node_ids_must_be_contiguous():
    with pytest.raises(NetworkFormatError, match="contiguous"):
        Network(
            nodes=(Node(id=0, is_slack=True), Node(id=2)),
            branches=(Branch(0, 2, 1 + 0j),),
        )
