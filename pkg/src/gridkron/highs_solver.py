"""MPS-file MILP solver backed by HiGHS (via scipy), for the external-solver hook.

Usage: python -m gridkron.highs_solver MODEL.mps SOLUTION.sol [--gap G] [--time-limit S]

Reads a fixed-format MPS model, solves it with HiGHS branch-and-cut, and
writes whitespace "name value" lines, which is exactly the wire format the
reduction driver's --solver-cmd template expects. This keeps large runs on
the same file-exchange path as any third-party solver.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np
from scipy.optimize import linprog

from .milp import MilpModel, _to_arrays, read_model


def solve_mps(model: MilpModel, gap: float = 1e-3, time_limit: float | None = None):
    arr = _to_arrays(model)
    integrality = np.zeros(len(model.variables))
    if len(arr.binaries):
        integrality[arr.binaries] = 1
    options = {"mip_rel_gap": float(gap)}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    res = linprog(
        arr.c,
        A_ub=arr.a_ub,
        b_ub=arr.b_ub,
        A_eq=arr.a_eq,
        b_eq=arr.b_eq,
        bounds=np.column_stack([arr.lb, arr.ub]),
        method="highs",
        integrality=integrality,
        options=options,
    )
    if res.status != 0 or res.x is None:
        raise RuntimeError(f"HiGHS failed: status={res.status} ({res.message})")
    x = np.asarray(res.x, dtype=float)
    if len(arr.binaries):
        x[arr.binaries] = np.round(x[arr.binaries])
    x = np.clip(x, arr.lb, arr.ub)
    return {name: float(val) for name, val in zip(arr.names, x)}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gridkron-highs")
    parser.add_argument("model")
    parser.add_argument("solution")
    parser.add_argument("--gap", type=float, default=1e-3)
    parser.add_argument("--time-limit", type=float, default=None)
    args = parser.parse_args(argv)
    try:
        model = read_model(args.model)
        values = solve_mps(model, gap=args.gap, time_limit=args.time_limit)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    with open(args.solution, "w") as fh:
        for name, value in values.items():
            fh.write(f"{name} {value!r}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
