"""Radial feeder data model: graph, admittance assembly, radiality, file I/O.

Node ids are contiguous integers 0..n-1 and exactly one node is the slack.
Branch admittances are stored as series admittances in p.u.; all types are
immutable after construction.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Node",
    "Branch",
    "Network",
    "NetworkFormatError",
    "build_admittance",
    "adjacency",
    "validate_radial",
    "load_network",
    "save_network",
    "network_from_admittance",
]


class NetworkFormatError(ValueError):
    """Invalid feeder structure or feeder file content."""


@dataclass(frozen=True)
class Node:
    id: int
    shunt: complex = 0j
    is_slack: bool = False


@dataclass(frozen=True)
class Branch:
    from_node: int
    to_node: int
    admittance: complex

    @property
    def pair(self) -> tuple[int, int]:
        """Unordered endpoint pair, low id first."""
        a, b = self.from_node, self.to_node
        return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class Network:
    """Immutable feeder graph. Validated on construction."""

    nodes: tuple[Node, ...]
    branches: tuple[Branch, ...]

    def __post_init__(self):
        n = len(self.nodes)
        if n == 0:
            raise NetworkFormatError("network has no nodes")
        ids = sorted(node.id for node in self.nodes)
        if ids != list(range(n)):
            raise NetworkFormatError(
                f"node ids must be contiguous 0..{n - 1}, got {ids}"
            )
        if list(node.id for node in self.nodes) != list(range(n)):
            # keep nodes ordered by id so indexing is positional
            object.__setattr__(
                self, "nodes", tuple(sorted(self.nodes, key=lambda nd: nd.id))
            )
        slacks = [node.id for node in self.nodes if node.is_slack]
        if len(slacks) != 1:
            if not slacks:
                raise NetworkFormatError("no slack node")
            raise NetworkFormatError(f"multiple slack nodes: {slacks}")
        seen: set[tuple[int, int]] = set()
        for br in self.branches:
            if not (0 <= br.from_node < n and 0 <= br.to_node < n):
                raise NetworkFormatError(
                    f"branch {br.from_node}-{br.to_node} references unknown node"
                )
            if br.from_node == br.to_node:
                raise NetworkFormatError(f"self-loop branch at node {br.from_node}")
            if br.pair in seen:
                raise NetworkFormatError(
                    f"duplicate branch between nodes {br.pair[0]} and {br.pair[1]}"
                )
            seen.add(br.pair)
        # canonical branch storage (low endpoint first, sorted) so equality and
        # file round-trips are independent of construction order
        canonical = tuple(
            sorted(
                (Branch(br.pair[0], br.pair[1], br.admittance) for br in self.branches),
                key=lambda br: br.pair,
            )
        )
        if canonical != self.branches:
            object.__setattr__(self, "branches", canonical)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def slack_id(self) -> int:
        for node in self.nodes:
            if node.is_slack:
                return node.id
        raise NetworkFormatError("no slack node")

    @property
    def shunts(self) -> np.ndarray:
        return np.array([node.shunt for node in self.nodes], dtype=complex)

    def neighbors(self, i: int) -> list[int]:
        out = []
        for br in self.branches:
            if br.from_node == i:
                out.append(br.to_node)
            elif br.to_node == i:
                out.append(br.from_node)
        return sorted(out)

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges,
        slack_id: int = 0,
        shunts=None,
    ) -> "Network":
        """Build a network from (from, to, admittance) triples.

        ``edges`` entries may omit the admittance, which then defaults to 1+0j.
        """
        shunt_arr = np.zeros(n, dtype=complex) if shunts is None else np.asarray(shunts, dtype=complex)
        nodes = tuple(
            Node(id=i, shunt=complex(shunt_arr[i]), is_slack=(i == slack_id))
            for i in range(n)
        )
        branches = []
        for e in edges:
            if len(e) == 2:
                u, v = e
                y = 1 + 0j
            else:
                u, v, y = e
            branches.append(Branch(int(u), int(v), complex(y)))
        return cls(nodes=nodes, branches=tuple(branches))


def build_admittance(network: Network) -> np.ndarray:
    """Assemble the nodal admittance matrix Y from branches and shunts.

    Y is symmetric with Y[i,j] = -y_ij off the diagonal and diagonal entries
    equal to the sum of incident branch admittances plus the node shunt. Y is
    singular when all shunts are zero; that is expected, not an error.
    """
    n = network.n
    y = np.zeros((n, n), dtype=complex)
    for br in network.branches:
        i, j = br.from_node, br.to_node
        y[i, j] -= br.admittance
        y[j, i] -= br.admittance
        y[i, i] += br.admittance
        y[j, j] += br.admittance
    for node in network.nodes:
        y[node.id, node.id] += node.shunt
    return y


def adjacency(network: Network) -> np.ndarray:
    """Binary symmetric adjacency matrix with zero diagonal."""
    n = network.n
    lam = np.zeros((n, n), dtype=int)
    for br in network.branches:
        lam[br.from_node, br.to_node] = 1
        lam[br.to_node, br.from_node] = 1
    return lam


def validate_radial(network: Network) -> bool:
    """True iff the network is connected with exactly n-1 branches."""
    n = network.n
    if len(network.branches) != n - 1:
        return False
    adj: list[list[int]] = [[] for _ in range(n)]
    for br in network.branches:
        adj[br.from_node].append(br.to_node)
        adj[br.to_node].append(br.from_node)
    seen = [False] * n
    queue = deque([0])
    seen[0] = True
    count = 1
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                count += 1
                queue.append(v)
    return count == n


_NODE_KEYS = {"id", "shunt_re", "shunt_im", "slack"}
_BRANCH_KEYS = {"from", "to", "y_re", "y_im"}
_TOP_KEYS = {"base_mva", "base_kv", "nodes", "branches"}


def load_network(path) -> Network:
    """Load a feeder from JSON, merging parallel branches by summing admittance.

    Raises NetworkFormatError naming the offending location on malformed
    content, unknown fields, or a missing slack node.
    """
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise NetworkFormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise NetworkFormatError(f"{path}: top level must be an object")
    for key in data:
        if key not in _TOP_KEYS:
            raise NetworkFormatError(f"{path}: unknown field '{key}'")
    for key in ("nodes", "branches"):
        if key not in data or not isinstance(data[key], list):
            raise NetworkFormatError(f"{path}: missing or invalid '{key}' list")

    nodes = []
    for idx, raw in enumerate(data["nodes"]):
        loc = f"{path}: nodes[{idx}]"
        if not isinstance(raw, dict):
            raise NetworkFormatError(f"{loc}: must be an object")
        for key in raw:
            if key not in _NODE_KEYS:
                raise NetworkFormatError(f"{loc}: unknown field '{key}'")
        if "id" not in raw:
            raise NetworkFormatError(f"{loc}: missing 'id'")
        nodes.append(
            Node(
                id=int(raw["id"]),
                shunt=complex(float(raw.get("shunt_re", 0.0)), float(raw.get("shunt_im", 0.0))),
                is_slack=bool(raw.get("slack", False)),
            )
        )

    merged: dict[tuple[int, int], complex] = {}
    for idx, raw in enumerate(data["branches"]):
        loc = f"{path}: branches[{idx}]"
        if not isinstance(raw, dict):
            raise NetworkFormatError(f"{loc}: must be an object")
        for key in raw:
            if key not in _BRANCH_KEYS:
                raise NetworkFormatError(f"{loc}: unknown field '{key}'")
        for key in _BRANCH_KEYS:
            if key not in raw:
                raise NetworkFormatError(f"{loc}: missing '{key}'")
        u, v = int(raw["from"]), int(raw["to"])
        if u == v:
            raise NetworkFormatError(f"{loc}: self-loop at node {u}")
        pair = (u, v) if u <= v else (v, u)
        merged[pair] = merged.get(pair, 0j) + complex(float(raw["y_re"]), float(raw["y_im"]))

    branches = tuple(Branch(u, v, y) for (u, v), y in sorted(merged.items()))
    try:
        return Network(nodes=tuple(nodes), branches=branches)
    except NetworkFormatError as exc:
        raise NetworkFormatError(f"{path}: {exc}") from exc


def save_network(network: Network, path, base_mva: float = 1.0, base_kv: float = 1.0) -> None:
    """Write the feeder JSON schema; load_network(save_network(x)) == x."""
    data = {
        "base_mva": base_mva,
        "base_kv": base_kv,
        "nodes": [
            {
                "id": node.id,
                "shunt_re": node.shunt.real,
                "shunt_im": node.shunt.imag,
                "slack": node.is_slack,
            }
            for node in network.nodes
        ],
        "branches": [
            {
                "from": br.from_node,
                "to": br.to_node,
                "y_re": br.admittance.real,
                "y_im": br.admittance.imag,
            }
            for br in network.branches
        ],
    }
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")


def network_from_admittance(y: np.ndarray, slack_index: int, tol: float = 1e-12) -> Network:
    """Reconstruct a Network from an admittance matrix.

    Off-diagonal entries with magnitude below ``tol`` are treated as absent
    edges; each node's shunt is its row sum (pruned to zero below ``tol``).
    """
    y = np.asarray(y, dtype=complex)
    n = y.shape[0]
    if y.shape != (n, n):
        raise NetworkFormatError("admittance matrix must be square")
    asym = np.max(np.abs(y - y.T)) if n else 0.0
    if asym > 1e-9:
        raise NetworkFormatError(f"admittance matrix asymmetric (max dev {asym:.3e})")
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            yij = 0.5 * (y[i, j] + y[j, i])
            if abs(yij) > tol:
                edges.append((i, j, -yij))
    row_sums = y.sum(axis=1)
    shunts = np.where(np.abs(row_sums) > tol, row_sums, 0j)
    return Network.from_edges(n, edges, slack_id=slack_index, shunts=shunts)
