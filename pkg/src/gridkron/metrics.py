"""Validation and reporting: exact error statistics and Pareto sweeps.

All errors compare voltage magnitudes of the exact aggregated solve against
the full-network scenario voltages, with every original node measured at its
super-node's voltage. CSV outputs report errors in m-p.u. (values times 1000).
"""

from __future__ import annotations

import csv
import dataclasses
import time
from dataclasses import dataclass

import numpy as np

from .assignment import Assignment
from .netmodel import Network, build_admittance
from .powerflow import kron_voltages, solve_current_injection

__all__ = [
    "voltage_error_stats",
    "error_report_rows",
    "write_error_report",
    "PipelineResult",
    "run_pipeline",
    "pareto_sweep",
    "write_pareto_csv",
    "PARETO_FIELDS",
]

DEFAULT_STAGE1_FRACTION = 0.2


def _aggregated_voltages(scenario, network: Network, assignment: Assignment, y=None):
    if y is None:
        y = build_admittance(network)
    slack = network.slack_id
    return solve_current_injection(
        y, assignment.aggregate(scenario.injections), slack, scenario.voltages[slack]
    )


def voltage_error_stats(scenarios, network: Network, assignment: Assignment) -> list[dict]:
    """Per-scenario max/mean/median of | |reported V| - |full V| | over all nodes.

    The median over an even node count takes the lower-middle element.
    """
    y = build_admittance(network)
    out = []
    for sc in scenarios:
        v_agg = _aggregated_voltages(sc, network, assignment, y=y)
        reported = kron_voltages(assignment, v_agg)
        err = np.abs(np.abs(reported) - np.abs(sc.voltages))
        ordered = np.sort(err)
        out.append(
            {
                "scenario": sc.id,
                "max": float(err.max()),
                "mean": float(err.mean()),
                "median": float(ordered[(len(ordered) - 1) // 2]),
            }
        )
    return out


def error_report_rows(scenarios, network: Network, assignment: Assignment) -> list[dict]:
    """Per-node rows: node, scenario, |v|_full, |v|_reduced, abs_error."""
    y = build_admittance(network)
    rows = []
    for sc in scenarios:
        v_agg = _aggregated_voltages(sc, network, assignment, y=y)
        reported = np.abs(kron_voltages(assignment, v_agg))
        full = np.abs(sc.voltages)
        for node in range(network.n):
            rows.append(
                {
                    "node": node,
                    "scenario": sc.id,
                    "v_full": float(full[node]),
                    "v_reduced": float(reported[node]),
                    "abs_error": float(abs(reported[node] - full[node])),
                }
            )
    return rows


def write_error_report(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["node", "scenario", "v_full", "v_reduced", "abs_error"]
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


@dataclass
class PipelineResult:
    stage1_assignment: Assignment
    reduction: "object"  # optikron.ReductionResult
    recovery: "object | None"  # radialize.RadialRecovery
    stats: list[dict]
    solve_time_s: float

    @property
    def assignment(self) -> Assignment:
        return self.reduction.assignment


def run_pipeline(
    network: Network,
    scenarios,
    ebar: float,
    params,
    stage1_ebar: float | None = None,
    do_radialize: bool = True,
) -> PipelineResult:
    """Stage 1, iterative reduction at ``ebar``, then optional radialization.

    ``stage1_ebar`` defaults to 20% of ``ebar`` so the stage-1 reporting error
    fits inside the overall budget enforced by stage 2.
    """
    # deferred imports: metrics is itself imported by optikron
    from .optikron import reduce_iteratively
    from .radialize import radialize as recover_radial
    from .stage1 import run_stage1

    t0 = time.perf_counter()
    s1_ebar = stage1_ebar if stage1_ebar is not None else DEFAULT_STAGE1_FRACTION * ebar
    a_init = run_stage1(network, scenarios, s1_ebar)
    run_params = dataclasses.replace(params, ebar=ebar)
    reduction = reduce_iteratively(network, scenarios, a_init, run_params)
    recovery = None
    if do_radialize:
        recovery = recover_radial(network, reduction.assignment, reduction.y_reduced)
    return PipelineResult(
        stage1_assignment=a_init,
        reduction=reduction,
        recovery=recovery,
        stats=reduction.error_stats,
        solve_time_s=time.perf_counter() - t0,
    )


PARETO_FIELDS = [
    "ebar_mpu",
    "reduction_pct_meshed",
    "reduction_pct_radial",
    "max_err_mpu",
    "mean_err_mpu",
    "median_err_mpu",
    "cliques",
    "critical_nodes",
    "solve_time_s",
]


def pareto_sweep(
    network: Network,
    scenarios,
    ebar_list,
    params,
    stage1_fraction: float = DEFAULT_STAGE1_FRACTION,
    jobs: int = 1,
) -> list[dict]:
    """One full pipeline run per error bound; failed rows carry an 'error' key.

    ``ebar_list`` must be nonempty and ascending (p.u. values).
    """
    ebar_list = list(ebar_list)
    if not ebar_list:
        raise ValueError("ebar_list must be nonempty")
    if sorted(ebar_list) != ebar_list:
        raise ValueError("ebar_list must be ascending")
    tasks = [(network, scenarios, ebar, params, stage1_fraction) for ebar in ebar_list]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_pareto_row, tasks))
    return [_pareto_row(task) for task in tasks]


def _pareto_row(task) -> dict:
    network, scenarios, ebar, params, stage1_fraction = task
    try:
        result = run_pipeline(
            network, scenarios, ebar, params, stage1_ebar=stage1_fraction * ebar
        )
    except Exception as exc:  # keep sweeping the remaining rows
        return {"ebar_mpu": ebar * 1e3, "error": str(exc)}
    n = network.n
    stats = result.stats
    recovery = result.recovery
    return {
        "ebar_mpu": ebar * 1e3,
        "reduction_pct_meshed": 100.0 * (n - result.assignment.n_supers) / n,
        "reduction_pct_radial": 100.0 * (n - len(recovery.keep)) / n,
        "max_err_mpu": 1e3 * max(s["max"] for s in stats),
        "mean_err_mpu": 1e3 * float(np.mean([s["mean"] for s in stats])),
        "median_err_mpu": 1e3 * float(np.mean([s["median"] for s in stats])),
        "cliques": len(recovery.cliques.cliques),
        "critical_nodes": len(recovery.critical),
        "solve_time_s": result.solve_time_s,
    }


def write_pareto_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=PARETO_FIELDS + ["error"])
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
