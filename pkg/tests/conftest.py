"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from gridkron.netmodel import Network
from gridkron.powerflow import LoadCase, Scenario, solve_ac_powerflow


def random_tree_edges(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Uniform-attachment tree on nodes 0..n-1."""
    return [(int(rng.integers(0, node)), node) for node in range(1, n)]


def random_admittance(rng: np.random.Generator) -> complex:
    y_mag = rng.uniform(5.0, 40.0)
    xr = rng.uniform(0.5, 2.0)
    r = (1.0 / y_mag) / np.sqrt(1.0 + xr * xr)
    return 1.0 / complex(r, xr * r)


def random_feeder(n: int, rng: np.random.Generator, zero_fraction: float = 0.0) -> tuple[Network, np.ndarray]:
    """Random radial feeder plus a demand vector (zero at a chosen fraction)."""
    edges = [
        (u, v, random_admittance(rng)) for u, v in random_tree_edges(n, rng)
    ]
    network = Network.from_edges(n, edges, slack_id=0)
    demands = np.zeros(n, dtype=complex)
    n_zero = int(round(zero_fraction * n))
    zero_nodes = set(rng.choice(np.arange(1, n), size=min(n_zero, n - 1), replace=False).tolist()) if n_zero else set()
    for node in range(1, n):
        if node in zero_nodes:
            continue
        p = rng.uniform(0.001, 0.008)
        demands[node] = complex(p, 0.35 * p)
    return network, demands


def feeder_scenarios(network: Network, demands: np.ndarray, scales=(0.6, 1.0, 1.4)) -> list[Scenario]:
    return [
        solve_ac_powerflow(network, LoadCase(demands=demands * s, id=f"s{k}"))
        for k, s in enumerate(scales)
    ]


@pytest.fixture
def path3() -> Network:
    return Network.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)])


@pytest.fixture
def tree8() -> Network:
    """8-bus radial feeder used as the desk-scale worked example."""
    edges = [
        (0, 1, 12.0 - 6.0j),
        (1, 2, 15.0 - 9.0j),
        (2, 3, 10.0 - 7.0j),
        (1, 4, 14.0 - 8.0j),
        (4, 5, 11.0 - 6.5j),
        (4, 6, 13.0 - 7.5j),
        (6, 7, 12.5 - 7.0j),
    ]
    return Network.from_edges(8, edges, slack_id=0)
