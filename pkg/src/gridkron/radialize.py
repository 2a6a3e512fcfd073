"""Radiality recovery for Kron-reduced networks.

Kron reduction of a tree leaves edge-disjoint maximal cliques. Each clique of
three or more super-nodes spans a unique subtree of the original tree; the
subtree's degree-3-or-higher interior nodes are the minimal set of previously
reduced nodes whose reinstatement makes the reduced network radial again.
Reinstated nodes carry no injection (their currents stay assigned to their
super-nodes), so super-node voltages and error statistics are unchanged.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .assignment import Assignment
from .kron import PRUNE_TOL, adjacency_from_admittance, kron_reduce
from .netmodel import Network, build_admittance, network_from_admittance, validate_radial

__all__ = [
    "RadializeError",
    "CliqueSet",
    "Subtree",
    "RadialRecovery",
    "find_maximal_cliques",
    "spanning_subtree",
    "critical_nodes",
    "radialize",
]


class RadializeError(RuntimeError):
    """The reduced graph does not have the structure of a Kron-reduced tree."""


@dataclass(frozen=True)
class CliqueSet:
    cliques: tuple[frozenset[int], ...]  # size >= 3, edge-disjoint, maximal
    edges: tuple[tuple[int, int], ...]  # remaining plain edges (size-2 cliques)


@dataclass(frozen=True)
class Subtree:
    nodes: frozenset[int]
    edges: tuple[tuple[int, int], ...]
    terminals: frozenset[int]  # the clique members the subtree spans

    def degree(self, node: int) -> int:
        return sum(1 for u, v in self.edges if node in (u, v))


def find_maximal_cliques(lam: np.ndarray) -> CliqueSet:
    """Partition the edge set into maximal cliques by greedy growth.

    Works on Kron-reduced trees, where maximal cliques are edge-disjoint; any
    edge claimed twice or non-maximal grown set raises RadializeError.
    """
    lam = np.asarray(lam)
    n = lam.shape[0]
    neighbors = [set(np.nonzero(lam[i])[0].tolist()) for i in range(n)]
    all_edges = [(i, j) for i in range(n) for j in range(i + 1, n) if lam[i, j]]
    claimed: set[tuple[int, int]] = set()
    cliques: list[frozenset[int]] = []
    plain: list[tuple[int, int]] = []
    for u, v in all_edges:
        if (u, v) in claimed:
            continue
        members = {u, v}
        common = (neighbors[u] & neighbors[v]) - members
        while common:
            w = min(common)
            members.add(w)
            common = (common & neighbors[w]) - members
        # verification: clique, maximal, and edge-disjoint
        for a in members:
            missing = members - neighbors[a] - {a}
            if missing:
                raise RadializeError(
                    f"input not a Kron-reduced tree: grown set {sorted(members)} "
                    f"is not a clique ({a} misses {sorted(missing)})"
                )
        outside = set(range(n)) - members
        for w in outside:
            if members <= neighbors[w]:
                raise RadializeError(
                    f"input not a Kron-reduced tree: clique {sorted(members)} "
                    f"is not maximal (extendable by {w})"
                )
        pairs = [
            (a, b) for a in members for b in members if a < b
        ]
        for pair in pairs:
            if pair in claimed:
                raise RadializeError(
                    f"input not a Kron-reduced tree: edge {pair} shared by "
                    "two maximal cliques"
                )
            claimed.add(pair)
        if len(members) >= 3:
            cliques.append(frozenset(int(m) for m in members))
        else:
            plain.append((int(u), int(v)))
    return CliqueSet(cliques=tuple(cliques), edges=tuple(plain))


def spanning_subtree(full_tree: Network, clique_nodes) -> Subtree:
    """The unique minimal subtree of the full tree containing the clique nodes."""
    if not validate_radial(full_tree):
        raise RadializeError("spanning subtrees require a radial full network")
    terminals = sorted(set(int(c) for c in clique_nodes))
    n = full_tree.n
    for c in terminals:
        if not 0 <= c < n:
            raise RadializeError(f"clique node {c} is not in the tree")
    root = terminals[0]
    parent = {root: root}
    order = [root]
    queue = deque([root])
    adj = {i: full_tree.neighbors(i) for i in range(n)}
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in parent:
                parent[v] = u
                order.append(v)
                queue.append(v)
    nodes: set[int] = {root}
    edges: set[tuple[int, int]] = set()
    for c in terminals[1:]:
        walk = c
        while walk not in nodes:
            nodes.add(walk)
            up = parent[walk]
            edges.add((min(walk, up), max(walk, up)))
            walk = up
    return Subtree(
        nodes=frozenset(nodes),
        edges=tuple(sorted(edges)),
        terminals=frozenset(terminals),
    )


def critical_nodes(subtree: Subtree) -> frozenset[int]:
    """Subtree nodes of degree three or more, excluding the clique members."""
    return frozenset(
        node
        for node in subtree.nodes
        if node not in subtree.terminals and subtree.degree(node) >= 3
    )


@dataclass
class RadialRecovery:
    cliques: CliqueSet
    subtrees: tuple[Subtree, ...]
    critical: tuple[int, ...]
    keep: tuple[int, ...]  # original ids, supers plus reinstated nodes
    y_reduced: np.ndarray
    network: Network
    node_map: dict[int, int]  # original id -> radialized id
    assignment: Assignment  # unchanged: injections and reporting stay put


def radialize(
    full_network: Network,
    assignment: Assignment,
    reduced_y: np.ndarray,
) -> RadialRecovery:
    """Reinstate the minimal node set that makes the reduced network radial.

    ``reduced_y`` must be the Kron reduction of the full network onto the
    assignment's super-nodes (indexed by sorted super id). Reinstated critical
    nodes become their own nodes of the rebuilt network but keep their
    injections assigned as before, which leaves super-node voltages and error
    statistics untouched.
    """
    if not validate_radial(full_network):
        raise RadializeError("radialization requires the radial full network")
    supers = assignment.supers
    reduced_y = np.asarray(reduced_y, dtype=complex)
    if reduced_y.shape != (len(supers), len(supers)):
        raise RadializeError(
            f"reduced admittance is {reduced_y.shape}, expected square over "
            f"{len(supers)} super-nodes"
        )
    lam_red = adjacency_from_admittance(reduced_y, tol=PRUNE_TOL)
    clique_set = find_maximal_cliques(lam_red)

    # map reduced indices back to original node ids
    to_orig = {idx: orig for idx, orig in enumerate(supers)}
    cliques_orig = CliqueSet(
        cliques=tuple(
            frozenset(to_orig[m] for m in clique) for clique in clique_set.cliques
        ),
        edges=tuple((to_orig[u], to_orig[v]) for u, v in clique_set.edges),
    )

    subtrees = []
    critical: set[int] = set()
    for clique in cliques_orig.cliques:
        subtree = spanning_subtree(full_network, clique)
        subtrees.append(subtree)
        critical |= critical_nodes(subtree)

    keep = tuple(sorted(set(supers) | critical))
    if critical:
        y_aug = kron_reduce(build_admittance(full_network), keep)
    else:
        y_aug = reduced_y.copy()
    node_map = {orig: idx for idx, orig in enumerate(keep)}
    network = network_from_admittance(y_aug, node_map[full_network.slack_id])
    if not validate_radial(network):
        raise RadializeError(
            "internal error: augmented keep set did not yield a radial network"
        )
    return RadialRecovery(
        cliques=cliques_orig,
        subtrees=tuple(subtrees),
        critical=tuple(sorted(critical)),
        keep=keep,
        y_reduced=y_aug,
        network=network,
        node_map=node_map,
        assignment=assignment,
    )
