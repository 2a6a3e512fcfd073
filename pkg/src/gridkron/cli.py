"""Command-line pipeline: gen, pf, stage1, reduce, radialize, validate, pareto.

Every subcommand accepts --config pointing at a JSON object of defaults
(flag values override config values override builtins) and exits nonzero with
a single-line "error: ..." message on failure. The solver command template
can also come from the GRIDKRON_SOLVER_CMD environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import metrics, optikron, synth
from .assignment import read_assignment, write_assignment
from .radialize import radialize as radialize_network
from .stage1 import run_stage1
from .kron import kron_reduce
from .netmodel import build_admittance, load_network, network_from_admittance, save_network
from .powerflow import (
    load_loadcases,
    read_scenarios,
    save_loadcases,
    scenarios_from_loadcases,
    solve_current_injection,
    write_scenarios,
)

VALIDATION_EXIT = 2
SLACK_MARGIN = 1.1  # validation allowance over ebar for the linearized bound


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data


def _resolve(args, config: dict, key: str, builtin):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return builtin


def _write_nodemap(keep, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["reduced_id", "original_id"])
        for reduced, original in enumerate(keep):
            writer.writerow([reduced, original])


def _make_params(args, config: dict, n: int) -> optikron.OptiParams:
    alpha = _resolve(args, config, "alpha", None)
    solver = _resolve(args, config, "solver_cmd", None) or os.environ.get(
        "GRIDKRON_SOLVER_CMD"
    )
    return optikron.OptiParams(
        ebar=float(_resolve(args, config, "ebar", 1e-3)),
        alpha=float(alpha) if alpha is not None else optikron.OptiParams.default_alpha(n),
        q=int(_resolve(args, config, "q", 1)),
        mip_gap=float(_resolve(args, config, "gap", 1e-3)),
        solver=solver,
        binary_limit=int(_resolve(args, config, "binary_limit", 200)),
    )


def _cmd_gen(args) -> int:
    config = _load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    network, cases = synth.generate_feeder(
        n=int(args.n),
        seed=int(args.seed),
        zero_injection_fraction=float(
            _resolve(args, config, "zero_injection_fraction", 0.3)
        ),
        target_vmin=float(_resolve(args, config, "target_vmin", 0.95)),
    )
    save_network(network, out / "feeder.json")
    save_loadcases(cases, out / "loads.json")
    print(f"wrote {out / 'feeder.json'} and {out / 'loads.json'} (n={network.n})")
    return 0


def _cmd_pf(args) -> int:
    config = _load_config(args.config)
    network = load_network(args.net)
    cases = load_loadcases(args.loads, network.n)
    scenarios = scenarios_from_loadcases(
        network,
        cases,
        tol=float(_resolve(args, config, "tol", 1e-10)),
        max_iter=int(_resolve(args, config, "max_iter", 30)),
    )
    write_scenarios(scenarios, args.out)
    print(f"wrote {args.out} ({len(scenarios)} scenarios)")
    return 0


def _cmd_stage1(args) -> int:
    config = _load_config(args.config)
    network = load_network(args.net)
    scenarios = read_scenarios(args.scenarios)
    ebar = float(_resolve(args, config, "ebar", 1e-3))
    assignment = run_stage1(network, scenarios, ebar)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_assignment(assignment, out / "assignment.csv")
    keep = assignment.supers
    y_red = kron_reduce(build_admittance(network), keep)
    reduced = network_from_admittance(y_red, keep.index(network.slack_id))
    save_network(reduced, out / "reduced_feeder.json")
    _write_nodemap(keep, out / "nodemap.csv")
    print(
        f"stage1 assigned {assignment.reduction_count} of {network.n} nodes "
        f"({len(keep)} super-nodes); artifacts in {out}"
    )
    return 0


def _cmd_reduce(args) -> int:
    config = _load_config(args.config)
    network = load_network(args.net)
    scenarios = read_scenarios(args.scenarios)
    params = _make_params(args, config, network.n)
    if args.assignment:
        a_init = read_assignment(args.assignment, network.n, network.slack_id)
    else:
        from .assignment import Assignment

        a_init = Assignment.identity(network.n, network.slack_id)
    result = optikron.reduce_iteratively(network, scenarios, a_init, params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_network(result.network, out / "reduced_feeder.json")
    _write_nodemap(result.keep, out / "nodemap.csv")
    write_assignment(result.assignment, out / "assignment.csv")
    with open(out / "traces.json", "w") as fh:
        json.dump(optikron.traces_to_json(result.traces), fh, indent=1, sort_keys=True)
        fh.write("\n")
    rows = metrics.error_report_rows(scenarios, network, result.assignment)
    metrics.write_error_report(rows, out / "error_report.csv")
    reduced_pct = 100.0 * (network.n - len(result.keep)) / network.n
    max_err = max(s["max"] for s in result.error_stats)
    print(
        f"reduced {network.n} -> {len(result.keep)} nodes ({reduced_pct:.1f}%), "
        f"max |V| error {max_err * 1e3:.3f} m-p.u., "
        f"{len(result.traces)} iterations; artifacts in {out}"
    )
    return 0


def _cmd_radialize(args) -> int:
    network = load_network(args.net)
    assignment = read_assignment(args.assignment, network.n, network.slack_id)
    y_red = kron_reduce(build_admittance(network), assignment.supers)
    recovery = radialize_network(network, assignment, y_red)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_network(recovery.network, out / "radial_feeder.json")
    _write_nodemap(recovery.keep, out / "nodemap.csv")
    n = network.n
    report = {
        "cliques": len(recovery.cliques.cliques),
        "clique_sizes": sorted(len(c) for c in recovery.cliques.cliques),
        "critical_nodes": list(recovery.critical),
        "reduction_pct_meshed": 100.0 * (n - len(assignment.supers)) / n,
        "reduction_pct_radial": 100.0 * (n - len(recovery.keep)) / n,
    }
    with open(out / "radialize_report.json", "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(
        f"radialized: {report['cliques']} cliques, "
        f"{len(recovery.critical)} critical nodes reinstated; artifacts in {out}"
    )
    return 0


def _cmd_validate(args) -> int:
    network = load_network(args.full)
    assignment = read_assignment(args.assignment, network.n, network.slack_id)
    scenarios = read_scenarios(args.scenarios)
    rows = metrics.error_report_rows(scenarios, network, assignment)
    metrics.write_error_report(rows, args.out)
    stats = metrics.voltage_error_stats(scenarios, network, assignment)
    for st in stats:
        print(
            f"scenario {st['scenario']}: max {st['max'] * 1e3:.4f} m-p.u., "
            f"mean {st['mean'] * 1e3:.4f}, median {st['median'] * 1e3:.4f}"
        )
    if args.reduced:
        reduced = load_network(args.reduced)
        keep = assignment.supers
        if reduced.n != len(keep):
            raise ValueError(
                f"reduced feeder has {reduced.n} nodes but assignment has "
                f"{len(keep)} super-nodes"
            )
        y_full = build_admittance(network)
        y_red = build_admittance(reduced)
        slack_pos = keep.index(network.slack_id)
        worst = 0.0
        for sc in scenarios:
            v_full = solve_current_injection(
                y_full,
                assignment.aggregate(sc.injections),
                network.slack_id,
                sc.voltages[network.slack_id],
            )
            agg = assignment.aggregate(sc.injections)[list(keep)]
            v_red = solve_current_injection(
                y_red, agg, slack_pos, sc.voltages[network.slack_id]
            )
            worst = max(worst, float(np.max(np.abs(v_red - v_full[list(keep)]))))
        print(f"reduced-artifact consistency: max deviation {worst:.3e} p.u.")
        if worst > 1e-6:
            raise ValueError(
                f"reduced feeder disagrees with the assignment ({worst:.3e} p.u.)"
            )
    if args.ebar is not None:
        limit = SLACK_MARGIN * float(args.ebar)
        worst = max(st["max"] for st in stats)
        if worst > limit:
            print(
                f"error: max voltage error {worst * 1e3:.4f} m-p.u. exceeds "
                f"1.1*ebar = {limit * 1e3:.4f} m-p.u.",
                file=sys.stderr,
            )
            return VALIDATION_EXIT
    return 0


def _cmd_pareto(args) -> int:
    config = _load_config(args.config)
    network = load_network(args.net)
    scenarios = read_scenarios(args.scenarios)
    params = _make_params(args, config, network.n)
    ebar_list = [float(tok) * 1e-3 for tok in str(args.ebar_list).split(",") if tok]
    rows = metrics.pareto_sweep(
        network,
        scenarios,
        ebar_list,
        params,
        stage1_fraction=float(_resolve(args, config, "stage1_fraction", 0.2)),
        jobs=int(_resolve(args, config, "jobs", 1)),
    )
    metrics.write_pareto_csv(rows, args.out)
    failured = [row for row in rows if "error" in row]
    print(f"wrote {args.out} ({len(rows)} rows, {len(failured)} failed)")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridkron",
        description="Optimal Kron-based reduction of radial distribution feeders",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with default option values")

    p = sub.add_parser("gen", help="generate a synthetic feeder and load cases")
    common(p)
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--zero-injection-fraction", dest="zero_injection_fraction", type=float)
    p.add_argument("--target-vmin", dest="target_vmin", type=float)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("pf", help="solve AC power flow for each load case")
    common(p)
    p.add_argument("--net", required=True)
    p.add_argument("--loads", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.set_defaults(func=_cmd_pf)

    p = sub.add_parser("stage1", help="assign zero-injection nodes")
    common(p)
    p.add_argument("--net", required=True)
    p.add_argument("--scenarios", required=True)
    p.add_argument("--ebar", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_stage1)

    p = sub.add_parser("reduce", help="run the iterative reduction")
    common(p)
    p.add_argument("--net", required=True)
    p.add_argument("--scenarios", required=True)
    p.add_argument("--ebar", type=float)
    p.add_argument("--assignment", help="stage-1 assignment CSV (default: identity)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--q", type=int)
    p.add_argument("--gap", type=float)
    p.add_argument("--solver-cmd", dest="solver_cmd")
    p.add_argument("--binary-limit", dest="binary_limit", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_reduce)

    p = sub.add_parser("radialize", help="restore a radial topology")
    common(p)
    p.add_argument("--net", required=True)
    p.add_argument("--assignment", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_radialize)

    p = sub.add_parser("validate", help="exact error statistics for an assignment")
    common(p)
    p.add_argument("--full", required=True)
    p.add_argument("--reduced")
    p.add_argument("--assignment", required=True)
    p.add_argument("--scenarios", required=True)
    p.add_argument("--ebar", type=float)
    p.add_argument("--out", default="error_report.csv")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("pareto", help="sweep error bounds and tabulate the trade-off")
    common(p)
    p.add_argument("--net", required=True)
    p.add_argument("--scenarios", required=True)
    p.add_argument("--ebar-list", dest="ebar_list", required=True, help="m-p.u., comma separated")
    p.add_argument("--alpha", type=float)
    p.add_argument("--q", type=int)
    p.add_argument("--gap", type=float)
    p.add_argument("--solver-cmd", dest="solver_cmd")
    p.add_argument("--binary-limit", dest="binary_limit", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pareto)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # single-line machine-parsable failure
        message = " ".join(str(exc).split())
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
