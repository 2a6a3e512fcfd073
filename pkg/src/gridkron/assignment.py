"""Node-to-super-node assignment: the binary matrix A as a parent map.

A[i,j] = 1 means node j's injection is carried by super-node i. Each node has
exactly one super-node (column sums are 1), super-nodes map to themselves, and
the slack node is always a super-node. The parent-map representation makes
those invariants structural: ``parent[j]`` is the super of node j and any
parent must be its own parent.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = ["Assignment", "AssignmentError", "write_assignment", "read_assignment"]


class AssignmentError(ValueError):
    """Invalid assignment structure."""


@dataclass(frozen=True)
class Assignment:
    parent: tuple[int, ...]
    slack_id: int

    def __post_init__(self):
        n = len(self.parent)
        if n == 0:
            raise AssignmentError("empty assignment")
        if not 0 <= self.slack_id < n:
            raise AssignmentError(f"slack id {self.slack_id} out of range")
        for j, p in enumerate(self.parent):
            if not 0 <= p < n:
                raise AssignmentError(f"node {j}: parent {p} out of range")
            if self.parent[p] != p:
                raise AssignmentError(
                    f"node {j} assigned to {p}, which is not a super-node"
                )
        if self.parent[self.slack_id] != self.slack_id:
            raise AssignmentError("slack node must be a super-node")

    @classmethod
    def identity(cls, n: int, slack_id: int = 0) -> "Assignment":
        return cls(parent=tuple(range(n)), slack_id=slack_id)

    @classmethod
    def from_pairs(cls, n: int, pairs, slack_id: int = 0) -> "Assignment":
        """Build from (child, super) pairs; unlisted nodes map to themselves."""
        parent = list(range(n))
        for child, sup in pairs:
            parent[int(child)] = int(sup)
        return cls(parent=tuple(parent), slack_id=slack_id)

    @property
    def n(self) -> int:
        return len(self.parent)

    @property
    def supers(self) -> tuple[int, ...]:
        return tuple(i for i, p in enumerate(self.parent) if p == i)

    @property
    def n_supers(self) -> int:
        return sum(1 for i, p in enumerate(self.parent) if p == i)

    @property
    def reduction_count(self) -> int:
        return self.n - self.n_supers

    @property
    def is_identity(self) -> bool:
        return all(p == i for i, p in enumerate(self.parent))

    def clusters(self) -> dict[int, list[int]]:
        """Map each super-node to the sorted list of its members (itself included)."""
        out: dict[int, list[int]] = {i: [] for i in self.supers}
        for j, p in enumerate(self.parent):
            out[p].append(j)
        return out

    def matrix(self) -> np.ndarray:
        """Dense binary A with A[parent[j], j] = 1."""
        n = self.n
        a = np.zeros((n, n), dtype=int)
        a[np.array(self.parent), np.arange(n)] = 1
        return a

    def aggregate(self, vec: np.ndarray) -> np.ndarray:
        """A @ vec: sum each cluster's entries onto its super-node."""
        vec = np.asarray(vec)
        out = np.zeros(self.n, dtype=vec.dtype)
        np.add.at(out, np.array(self.parent), vec)
        return out

    def expand(self, vec: np.ndarray) -> np.ndarray:
        """A.T @ vec: each node reports its super-node's entry."""
        return np.asarray(vec)[np.array(self.parent)]

    def absorb(self, receiver_of: dict[int, int]) -> "Assignment":
        """Compose with a per-super merge map (absorbed super -> receiver).

        Receivers must be super-nodes that are not themselves absorbed.
        """
        for k, i in receiver_of.items():
            if self.parent[k] != k:
                raise AssignmentError(f"{k} is not a super-node")
            if i in receiver_of:
                raise AssignmentError(f"receiver {i} is absorbed in the same step")
        parent = tuple(
            receiver_of.get(p, p) for p in self.parent
        )
        return Assignment(parent=parent, slack_id=self.slack_id)


def write_assignment(assignment: Assignment, path) -> None:
    """CSV of child_id,super_id rows; identity rows are omitted."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["child_id", "super_id"])
        for child, sup in enumerate(assignment.parent):
            if child != sup:
                writer.writerow([child, sup])


def read_assignment(path, n: int, slack_id: int) -> Assignment:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["child_id", "super_id"]:
            raise AssignmentError(f"{path}: expected header child_id,super_id")
        pairs = []
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise AssignmentError(f"{path}: malformed row {row!r}")
            pairs.append((int(row[0]), int(row[1])))
    try:
        return Assignment.from_pairs(n, pairs, slack_id=slack_id)
    except (AssignmentError, IndexError) as exc:
        raise AssignmentError(f"{path}: {exc}") from exc
