"""Synthetic radial feeder and load-case generation for desk-scale runs."""

from __future__ import annotations

import numpy as np

from .netmodel import Network
from .powerflow import LoadCase, solve_ac_powerflow

__all__ = ["generate_feeder"]

LOAD_SCALES = {"low": 0.5, "medium": 1.0, "high": 1.5}
MIN_VOLTAGE_FLOOR = 0.9


def generate_feeder(
    n: int,
    seed: int,
    branch_y_range: tuple[float, float] = (8.0, 40.0),
    load_range: tuple[float, float] = (0.002, 0.02),
    zero_injection_fraction: float = 0.3,
    target_vmin: float = 0.95,
) -> tuple[Network, list[LoadCase]]:
    """Deterministic random radial feeder plus low/medium/high load cases.

    The tree grows by uniform attachment with node 0 as the slack. Branch
    impedances have X/R ratios in [0.5, 2] with admittance magnitudes drawn
    from ``branch_y_range``. A fixed count round(zero_injection_fraction * n)
    of non-slack nodes carries no load. Load magnitudes are drawn from
    ``load_range`` and globally rescaled until the high case's minimum voltage
    sits at ``target_vmin`` (never below 0.9 p.u.).
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 0 <= zero_injection_fraction < 1:
        raise ValueError("zero_injection_fraction must be in [0, 1)")
    if target_vmin < MIN_VOLTAGE_FLOOR:
        raise ValueError(f"target_vmin must be >= {MIN_VOLTAGE_FLOOR}")
    rng = np.random.default_rng(seed)

    edges = []
    for node in range(1, n):
        attach = int(rng.integers(0, node))
        y_mag = rng.uniform(*branch_y_range)
        xr = rng.uniform(0.5, 2.0)
        r = (1.0 / y_mag) / np.sqrt(1.0 + xr * xr)
        z = complex(r, xr * r)
        edges.append((attach, node, 1.0 / z))
    network = Network.from_edges(n, edges, slack_id=0)

    n_zero = int(zero_injection_fraction * n + 1e-9)  # floor, fp-safe
    n_zero = min(n_zero, n - 1)
    zero_nodes = set(rng.choice(np.arange(1, n), size=n_zero, replace=False).tolist())

    demands = np.zeros(n, dtype=complex)
    for node in range(1, n):
        if node in zero_nodes:
            continue
        p = rng.uniform(*load_range)
        pf = rng.uniform(0.90, 0.98)
        q = p * np.tan(np.arccos(pf))
        demands[node] = complex(p, q)

    # rescale so the high case bottoms out at the target minimum voltage
    scale = 1.0
    high = LOAD_SCALES["high"]
    for _ in range(40):
        case = LoadCase(demands=demands * (scale * high), id="calib")
        try:
            sc = solve_ac_powerflow(network, case)
            vmin = float(np.min(np.abs(sc.voltages)))
        except Exception:
            scale *= 0.5
            continue
        if vmin < target_vmin - 1e-6:
            # linearize: drop below 1.0 is roughly proportional to load scale
            scale *= (1.0 - target_vmin) / max(1e-12, 1.0 - vmin)
        elif vmin > target_vmin + 0.005 and np.any(demands != 0):
            scale *= (1.0 - target_vmin) / max(1e-12, 1.0 - vmin)
        else:
            break
    demands = demands * scale

    cases = [
        LoadCase(demands=demands * factor, id=name)
        for name, factor in LOAD_SCALES.items()
    ]
    return network, cases
