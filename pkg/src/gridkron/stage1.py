"""Stage-1 reduction: assign eligible zero-injection nodes to super-nodes.

A zero-injection node may be absorbed by a non-zero-injection node when the
tree path between them crosses only zero-injection nodes and their worst-case
voltage magnitude distance over all scenarios stays within the error bound.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .assignment import Assignment
from .netmodel import Network, adjacency, validate_radial

__all__ = [
    "Stage1Error",
    "zero_injection_set",
    "candidate_sets",
    "voltage_distances",
    "assign_zero_injection",
    "run_stage1",
]

DEFAULT_ZERO_THRESHOLD = 1e-8


class Stage1Error(ValueError):
    """Stage-1 preconditions violated."""


def zero_injection_set(scenarios, slack_id: int, threshold: float = DEFAULT_ZERO_THRESHOLD) -> set[int]:
    """Nodes whose injection magnitude stays within ``threshold`` in every scenario.

    The slack node is never included.
    """
    if not scenarios:
        raise Stage1Error("at least one scenario is required")
    mags = np.max(np.abs(np.vstack([sc.injections for sc in scenarios])), axis=0)
    return {int(i) for i in np.nonzero(mags <= threshold)[0] if i != slack_id}


def candidate_sets(network: Network, zset: set[int]) -> dict[int, frozenset[int]]:
    """For each zero-injection node, the loaded nodes reachable through
    zero-injection nodes only (path excluding the endpoint)."""
    if not validate_radial(network):
        raise Stage1Error("candidate sets require a radial network")
    neighbors: dict[int, list[int]] = {i: network.neighbors(i) for i in range(network.n)}
    out: dict[int, frozenset[int]] = {}
    for start in sorted(zset):
        found: set[int] = set()
        seen = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in neighbors[u]:
                if v in seen:
                    continue
                seen.add(v)
                if v in zset:
                    queue.append(v)
                else:
                    found.add(v)
        out[start] = frozenset(found)
    return out


def voltage_distances(scenarios) -> np.ndarray:
    """d[i,j] = max over scenarios of | |V_i| - |V_j| | (p.u. magnitudes)."""
    mags = np.abs(np.vstack([sc.voltages for sc in scenarios]))
    return np.max(np.abs(mags[:, :, None] - mags[:, None, :]), axis=0)


def assign_zero_injection(
    lam: np.ndarray,
    scenarios,
    ebar: float,
    candidates: dict[int, frozenset[int]],
    zset: set[int],
    slack_id: int,
) -> Assignment:
    """Iteratively absorb zero-injection nodes into their closest candidate.

    A node i is assigned to the candidate k minimizing d[i,k] (ties to the
    smallest id), only when k's cluster has grown adjacent to i and d[i,k] is
    within ``ebar``. Passes repeat until no assignment is made.
    """
    if ebar < 0:
        raise Stage1Error("ebar must be nonnegative")
    lam = np.asarray(lam)
    n = lam.shape[0]
    d = voltage_distances(scenarios)

    # closest candidate per zero-injection node, ties to the smallest id
    closest: dict[int, int] = {}
    for i in sorted(zset):
        cands = candidates.get(i, frozenset())
        if cands:
            closest[i] = min(cands, key=lambda k: (d[i, k], k))

    parent = list(range(n))
    unassigned = set(zset)
    changed = True
    while changed:
        changed = False
        for i in sorted(unassigned):
            if i not in closest:
                continue
            kstar = closest[i]
            if d[i, kstar] > ebar:
                continue
            for j in sorted(np.nonzero(lam[i])[0]):
                if j in unassigned:
                    continue
                if parent[int(j)] == kstar:
                    parent[i] = kstar
                    unassigned.discard(i)
                    changed = True
                    break
    return Assignment(parent=tuple(parent), slack_id=slack_id)


def run_stage1(
    network: Network,
    scenarios,
    ebar: float,
    threshold: float = DEFAULT_ZERO_THRESHOLD,
) -> Assignment:
    """Full stage-1 pass: zero-injection set, candidates, assignment."""
    zset = zero_injection_set(scenarios, network.slack_id, threshold=threshold)
    cands = candidate_sets(network, zset)
    return assign_zero_injection(
        adjacency(network), scenarios, ebar, cands, zset, network.slack_id
    )
