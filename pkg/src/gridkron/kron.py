"""Schur-complement Kron reduction and its structural consequences.

Reducing a node set r replaces Y with Y_kk - Y_kr inv(Y_rr) Y_rk. Removing a
node fully connects its former neighbors (clique formation) and leaves the
block of non-adjacent nodes bit-identical.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .assignment import Assignment

__all__ = [
    "PIVOT_TOL",
    "PRUNE_TOL",
    "SingularReductionError",
    "kron_reduce",
    "eliminate_node",
    "EquivalenceCheck",
    "sequential_equivalence_check",
    "reduced_adjacency",
    "adjacency_from_admittance",
]

# Pivots smaller than this abort the reduction; smaller off-diagonal fill is
# pruned to exact zero when deriving graph structure.
PIVOT_TOL = 1e-12
PRUNE_TOL = 1e-12


class SingularReductionError(RuntimeError):
    """Y_rr is (numerically) singular for the requested removal set."""


def _format_nodes(nodes) -> str:
    nodes = sorted(nodes)
    if len(nodes) > 12:
        return f"{nodes[:12]}... ({len(nodes)} nodes)"
    return str(nodes)


def kron_reduce(y: np.ndarray, keep) -> np.ndarray:
    """Kron-reduce Y onto ``keep`` (result indexed by sorted(keep)).

    Raises SingularReductionError when the removed block is singular, which
    happens when some removed component has no path to a kept node.
    """
    y = np.asarray(y, dtype=complex)
    n = y.shape[0]
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= n for k in keep):
        raise ValueError(f"keep set out of range for n={n}")
    remove = [i for i in range(n) if i not in set(keep)]
    if not remove:
        return y.copy()
    y_kk = y[np.ix_(keep, keep)]
    y_kr = y[np.ix_(keep, remove)]
    y_rk = y[np.ix_(remove, keep)]
    y_rr = y[np.ix_(remove, remove)]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LinAlgWarning)  # we guard pivots below
            lu, piv = lu_factor(y_rr)
    except Exception as exc:
        raise SingularReductionError(
            f"cannot factor removed block {_format_nodes(remove)}"
        ) from exc
    if np.min(np.abs(np.diag(lu))) < PIVOT_TOL:
        raise SingularReductionError(
            f"singular removed block {_format_nodes(remove)}: "
            "a removed component has no path to a kept node"
        )
    return y_kk - y_kr @ lu_solve((lu, piv), y_rk)


def eliminate_node(y: np.ndarray, r: int) -> np.ndarray:
    """Single-node Kron reduction (rank-1 Schur step on the pivot Y[r,r])."""
    y = np.asarray(y, dtype=complex)
    pivot = y[r, r]
    if abs(pivot) < PIVOT_TOL:
        raise SingularReductionError(f"singular pivot at node {r}")
    rest = [i for i in range(y.shape[0]) if i != r]
    return y[np.ix_(rest, rest)] - np.outer(y[rest, r], y[r, rest]) / pivot


@dataclass(frozen=True)
class EquivalenceCheck:
    ok: bool
    max_deviation: float

    def __bool__(self) -> bool:
        return self.ok


def sequential_equivalence_check(y: np.ndarray, remove, order=None, tol: float = 1e-10) -> EquivalenceCheck:
    """Compare block reduction of ``remove`` against node-by-node elimination.

    ``order`` optionally fixes the elimination order (default: ascending ids).
    Returns ok=True iff the two routes agree entrywise within ``tol``.
    """
    y = np.asarray(y, dtype=complex)
    n = y.shape[0]
    remove = sorted(set(int(r) for r in remove))
    keep = [i for i in range(n) if i not in set(remove)]
    block = kron_reduce(y, keep)

    order = list(order) if order is not None else list(remove)
    if sorted(order) != remove:
        raise ValueError("order must be a permutation of the removal set")
    current = y.copy()
    labels = list(range(n))
    for r in order:
        idx = labels.index(r)
        current = eliminate_node(current, idx)
        labels.pop(idx)
    dev = float(np.max(np.abs(current - block))) if keep else 0.0
    return EquivalenceCheck(ok=dev <= tol, max_deviation=dev)


def reduced_adjacency(assignment: Assignment, lam: np.ndarray) -> np.ndarray:
    """(A @ lam @ A.T) masked off-diagonal and binarized.

    Super-nodes i,k are adjacent iff some member of cluster i neighbors some
    member of cluster k; rows and columns of reduced nodes are zero.
    """
    lam = np.asarray(lam)
    n = assignment.n
    if lam.shape != (n, n):
        raise ValueError(f"adjacency shape {lam.shape} does not match n={n}")
    parent = np.array(assignment.parent)
    out = np.zeros((n, n), dtype=int)
    rows, cols = np.nonzero(lam)
    pu, pv = parent[rows], parent[cols]
    mask = pu != pv
    out[pu[mask], pv[mask]] = 1
    out[pv[mask], pu[mask]] = 1
    return out


def adjacency_from_admittance(y: np.ndarray, tol: float = PRUNE_TOL) -> np.ndarray:
    """Binary adjacency of an admittance matrix, pruning fill below ``tol``."""
    y = np.asarray(y)
    lam = (np.abs(y) > tol).astype(int)
    np.fill_diagonal(lam, 0)
    return lam
