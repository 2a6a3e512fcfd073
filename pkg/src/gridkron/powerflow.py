"""AC power flow (Newton-Raphson, PQ loads) and exact current-injection solves.

Scenarios pair per-node complex current injections with the voltages of a
converged power-flow solution; injections are derived as I = Y @ V from the
converged voltages so Y @ V = I holds to machine precision.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .assignment import Assignment
from .netmodel import Network, build_admittance

__all__ = [
    "LoadCase",
    "Scenario",
    "PowerFlowError",
    "SingularSystemError",
    "solve_ac_powerflow",
    "solve_current_injection",
    "kron_voltages",
    "scenarios_from_loadcases",
    "write_scenarios",
    "read_scenarios",
    "load_loadcases",
    "save_loadcases",
]


class PowerFlowError(RuntimeError):
    """Newton-Raphson failed to converge."""


class SingularSystemError(RuntimeError):
    """The non-slack admittance block is singular (disconnected component)."""


@dataclass(frozen=True)
class LoadCase:
    """Per-node complex power demand (p.u.); the slack entry is ignored."""

    demands: np.ndarray
    slack_voltage: complex = 1 + 0j
    id: str = ""


@dataclass(frozen=True)
class Scenario:
    id: str
    injections: np.ndarray
    voltages: np.ndarray

    @property
    def n(self) -> int:
        return len(self.voltages)


def solve_ac_powerflow(
    network: Network,
    loadcase: LoadCase,
    tol: float = 1e-10,
    max_iter: int = 30,
) -> Scenario:
    """Newton-Raphson power flow with PQ loads and a fixed slack voltage.

    Converges when the largest complex power mismatch at non-slack nodes is
    below ``tol``. Injections in the returned scenario are Y @ V exactly.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    y = build_admittance(network)
    n = network.n
    slack = network.slack_id
    demands = np.asarray(loadcase.demands, dtype=complex)
    if demands.shape != (n,):
        raise ValueError(f"loadcase has {demands.shape} demands, expected ({n},)")
    s_spec = -demands  # loads draw power: injection is minus demand
    s_spec[slack] = 0.0

    ns = [i for i in range(n) if i != slack]
    v = np.full(n, complex(loadcase.slack_voltage), dtype=complex)  # flat start

    mismatch = np.inf
    for _ in range(max_iter):
        i_inj = y @ v
        s_calc = v * np.conj(i_inj)
        ds = s_spec[ns] - s_calc[ns]
        mismatch = np.max(np.abs(ds)) if ns else 0.0
        if mismatch <= tol:
            break
        # dS_i/de_j and dS_i/df_j for V = e + jf at non-slack nodes
        yc = np.conj(y[np.ix_(ns, ns)])
        diag_ic = np.diag(np.conj(i_inj[ns]))
        d_e = diag_ic + v[ns, None] * yc
        d_f = 1j * (diag_ic - v[ns, None] * yc)
        m = len(ns)
        jac = np.empty((2 * m, 2 * m))
        jac[:m, :m] = d_e.real
        jac[:m, m:] = d_f.real
        jac[m:, :m] = d_e.imag
        jac[m:, m:] = d_f.imag
        rhs = np.concatenate([ds.real, ds.imag])
        try:
            step = np.linalg.solve(jac, rhs)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowError(f"singular Jacobian (mismatch {mismatch:.3e})") from exc
        v[ns] += step[:m] + 1j * step[m:]
    else:
        raise PowerFlowError(
            f"no convergence in {max_iter} iterations (final mismatch {mismatch:.3e})"
        )

    injections = y @ v
    return Scenario(id=loadcase.id, injections=injections, voltages=v)


def solve_current_injection(
    y: np.ndarray,
    injections: np.ndarray,
    slack_id: int,
    slack_voltage: complex,
) -> np.ndarray:
    """Solve Y @ V = I with the slack voltage fixed and the slack row released.

    The returned V satisfies every non-slack row equation; the slack row
    absorbs any injection mismatch (it is the reference bus).
    """
    y = np.asarray(y, dtype=complex)
    injections = np.asarray(injections, dtype=complex)
    n = y.shape[0]
    ns = [i for i in range(n) if i != slack_id]
    v = np.empty(n, dtype=complex)
    v[slack_id] = slack_voltage
    if ns:
        rhs = injections[ns] - y[ns, slack_id] * slack_voltage
        try:
            v[ns] = np.linalg.solve(y[np.ix_(ns, ns)], rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(
                "singular non-slack block: a component has no path to the slack"
            ) from exc
    return v


def kron_voltages(assignment: Assignment, v_agg: np.ndarray) -> np.ndarray:
    """Per-node reported voltages: each node takes its super-node's entry."""
    return assignment.expand(np.asarray(v_agg, dtype=complex))


def scenarios_from_loadcases(
    network: Network,
    loadcases,
    tol: float = 1e-10,
    max_iter: int = 30,
) -> list[Scenario]:
    return [solve_ac_powerflow(network, lc, tol=tol, max_iter=max_iter) for lc in loadcases]


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

_SCENARIO_HEADER = ["scenario_id", "node_id", "v_re", "v_im", "i_re", "i_im"]


def write_scenarios(scenarios, path) -> None:
    """One row per node per scenario: scenario_id,node_id,v_re,v_im,i_re,i_im."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SCENARIO_HEADER)
        for sc in scenarios:
            for node in range(sc.n):
                writer.writerow(
                    [
                        sc.id,
                        node,
                        repr(float(sc.voltages[node].real)),
                        repr(float(sc.voltages[node].imag)),
                        repr(float(sc.injections[node].real)),
                        repr(float(sc.injections[node].imag)),
                    ]
                )


def read_scenarios(path) -> list[Scenario]:
    rows: dict[str, dict[int, tuple[complex, complex]]] = {}
    order: list[str] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _SCENARIO_HEADER:
            raise ValueError(f"{path}: expected header {','.join(_SCENARIO_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise ValueError(f"{path}:{lineno}: malformed row")
            sid = row[0]
            node = int(row[1])
            v = complex(float(row[2]), float(row[3]))
            i = complex(float(row[4]), float(row[5]))
            if sid not in rows:
                rows[sid] = {}
                order.append(sid)
            rows[sid][node] = (v, i)
    scenarios = []
    for sid in order:
        entries = rows[sid]
        n = len(entries)
        if sorted(entries) != list(range(n)):
            raise ValueError(f"{path}: scenario '{sid}' node ids not contiguous")
        voltages = np.array([entries[k][0] for k in range(n)], dtype=complex)
        injections = np.array([entries[k][1] for k in range(n)], dtype=complex)
        scenarios.append(Scenario(id=sid, injections=injections, voltages=voltages))
    return scenarios


_CASE_KEYS = {"id", "slack_re", "slack_im", "nodes"}
_CASE_NODE_KEYS = {"id", "p", "q"}


def load_loadcases(path, n: int) -> list[LoadCase]:
    """Load cases JSON: {"cases": [{"id", "slack_re", "slack_im", "nodes": [{"id","p","q"}]}]}.

    Nodes omitted from a case default to zero demand.
    """
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict) or set(data) != {"cases"}:
        raise ValueError(f"{path}: top level must be an object with a 'cases' list")
    cases = []
    for ci, raw in enumerate(data["cases"]):
        loc = f"{path}: cases[{ci}]"
        for key in raw:
            if key not in _CASE_KEYS:
                raise ValueError(f"{loc}: unknown field '{key}'")
        demands = np.zeros(n, dtype=complex)
        for ni, nd in enumerate(raw.get("nodes", [])):
            for key in nd:
                if key not in _CASE_NODE_KEYS:
                    raise ValueError(f"{loc}: nodes[{ni}]: unknown field '{key}'")
            idx = int(nd["id"])
            if not 0 <= idx < n:
                raise ValueError(f"{loc}: nodes[{ni}]: node id {idx} out of range")
            demands[idx] = complex(float(nd.get("p", 0.0)), float(nd.get("q", 0.0)))
        cases.append(
            LoadCase(
                demands=demands,
                slack_voltage=complex(
                    float(raw.get("slack_re", 1.0)), float(raw.get("slack_im", 0.0))
                ),
                id=str(raw.get("id", f"case{ci}")),
            )
        )
    return cases


def save_loadcases(loadcases, path) -> None:
    data = {
        "cases": [
            {
                "id": lc.id,
                "slack_re": complex(lc.slack_voltage).real,
                "slack_im": complex(lc.slack_voltage).imag,
                "nodes": [
                    {"id": i, "p": float(s.real), "q": float(s.imag)}
                    for i, s in enumerate(np.asarray(lc.demands, dtype=complex))
                    if s != 0
                ],
            }
            for lc in loadcases
        ]
    }
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")
