"""Optimal Kron-based reduction: MILP construction and the iterative driver.

Each iteration solves a rectangular-coordinate MILP that picks up to q
cluster merges (binary matrix Omega over the active adjacency), composes them
onto the previous assignment (A = Omega A_prev), and trades the summed
intra-cluster voltage error rows against the number of reduced nodes. Big-M
envelopes linearize the diag(V) A product and a linearized magnitude bound
keeps per-node voltage errors within the user limit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import metrics
from .assignment import Assignment, AssignmentError
from .kron import kron_reduce, reduced_adjacency
from .milp import MilpModel, MilpSolution, solve_external, solve_reference
from .netmodel import Network, adjacency, build_admittance, network_from_admittance
from .powerflow import solve_current_injection

__all__ = [
    "OptiParams",
    "OptiKronError",
    "IterationTrace",
    "ReductionResult",
    "error_matrix",
    "mice",
    "mice_from_solves",
    "compute_big_m",
    "build_milp",
    "anchor_values",
    "extract_assignment",
    "reduce_iteratively",
    "traces_to_json",
]

BINARIZE_TOL = 1e-6


class OptiKronError(RuntimeError):
    """Reduction driver failure (infeasible model, bad solver output)."""


@dataclass(frozen=True)
class OptiParams:
    """Knobs of one reduction run.

    ebar is the voltage-magnitude error bound (p.u.), alpha the reduction
    weight, q the per-iteration reduction cap, mip_gap the relative optimality
    gap, and solver either None (bundled solver) or an external command
    template with {model}/{solution} placeholders.
    """

    ebar: float
    alpha: float
    q: int = 1
    mip_gap: float = 1e-3
    solver: str | None = None
    binary_limit: int = 200
    time_limit: float | None = None

    def __post_init__(self):
        if not self.ebar > 0:
            raise ValueError("ebar must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.q < 0:
            raise ValueError("q must be nonnegative")
        if not 0 <= self.mip_gap < 1:
            raise ValueError("mip_gap must be in [0, 1)")

    @staticmethod
    def default_alpha(n: int) -> float:
        return 10.0 / n


def error_matrix(assignment: Assignment, v_hat: np.ndarray, v_agg: np.ndarray) -> np.ndarray:
    """E = A diag(v_hat) - diag(v_agg) A: entry (i,j) is v_hat[j] - v_agg[i]
    where node j is carried by super-node i, zero elsewhere."""
    n = assignment.n
    e = np.zeros((n, n), dtype=complex)
    parent = np.array(assignment.parent)
    cols = np.arange(n)
    e[parent, cols] = np.asarray(v_hat, dtype=complex) - np.asarray(v_agg, dtype=complex)[parent]
    return e


def mice(e_re: np.ndarray, e_im: np.ndarray) -> np.ndarray:
    """Per-row infinity norms of the real part plus those of the imaginary part."""
    e_re = np.asarray(e_re, dtype=float)
    e_im = np.asarray(e_im, dtype=float)
    if e_re.shape != e_im.shape:
        raise ValueError("real and imaginary error matrices must share a shape")
    return np.max(np.abs(e_re), axis=1) + np.max(np.abs(e_im), axis=1)


def mice_from_solves(
    y: np.ndarray,
    scenarios,
    assignment: Assignment,
    slack_id: int,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Exact per-scenario MICE rows for an assignment.

    Returns (mice matrix of shape (n_scenarios, n), aggregated voltage
    vectors). Voltages come from exact solves of Y V = A I with the slack
    pinned to each scenario's slack voltage.
    """
    rows = []
    v_aggs = []
    for sc in scenarios:
        v_agg = solve_current_injection(
            y, assignment.aggregate(sc.injections), slack_id, sc.voltages[slack_id]
        )
        e = error_matrix(assignment, sc.voltages, v_agg)
        rows.append(mice(e.real, e.imag))
        v_aggs.append(v_agg)
    return np.vstack(rows), v_aggs


def compute_big_m(
    mice_prev: np.ndarray,
    alpha: float,
    q: int,
    v_hat: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-(scenario, node) Big-M constants: MICE + alpha*q + |component of v_hat|.

    The component magnitudes are taken absolutely so the envelopes stay valid
    when voltage components are negative (downstream angles usually make the
    imaginary parts negative).
    """
    mice_prev = np.atleast_2d(np.asarray(mice_prev, dtype=float))
    v_hat = np.atleast_2d(np.asarray(v_hat, dtype=complex))
    if mice_prev.shape != v_hat.shape:
        raise ValueError("mice_prev and v_hat must share a shape")
    pad = float(alpha) * int(q)
    return mice_prev + pad + np.abs(v_hat.real), mice_prev + pad + np.abs(v_hat.imag)


@dataclass(frozen=True)
class _Structure:
    """Index sets shared by the model builder, anchor, and extraction."""

    supers: tuple[int, ...]
    clusters: dict[int, list[int]]
    pairs: tuple[tuple[int, int], ...]  # instantiated Omega (receiver, column)
    cands: dict[int, tuple[int, ...]]  # column k -> candidate receivers


def _structure(a_prev: Assignment, lam_active: np.ndarray, slack_id: int) -> _Structure:
    supers = a_prev.supers
    clusters = a_prev.clusters()
    lam = np.asarray(lam_active)
    pairs: list[tuple[int, int]] = []
    cands: dict[int, list[int]] = {k: [k] for k in supers}
    for i in supers:
        pairs.append((i, i))
    for k in supers:
        if k == slack_id:
            continue
        for i in supers:
            if i != k and lam[i, k]:
                pairs.append((i, k))
                cands[k].append(i)
    return _Structure(
        supers=supers,
        clusters=clusters,
        pairs=tuple(sorted(pairs)),
        cands={k: tuple(sorted(v)) for k, v in cands.items()},
    )


def build_milp(
    network: Network,
    scenarios,
    a_prev: Assignment,
    lam_active: np.ndarray,
    params: OptiParams,
    big_m: tuple[np.ndarray, np.ndarray],
) -> MilpModel:
    """Assemble the rectangular-coordinate reduction MILP for one iteration.

    Binaries are Omega entries over current super-nodes (diagonal) and active
    adjacency pairs (columns into the slack excluded; the slack diagonal is
    fixed to one). The model carries the A = Omega A_prev definitions, the
    per-scenario KCL rows with the slack pinned, four Big-M envelope rows per
    W entry, error-matrix and per-node error definitions, the linearized
    magnitude bound (omitted when ebar is infinite), epigraph rows for the
    row infinity norms, the reduction objective, and the cutting plane.
    """
    n = network.n
    slack = network.slack_id
    if a_prev.n != n:
        raise ValueError("assignment size does not match network")
    y = build_admittance(network)
    m_re, m_im = big_m
    m_re = np.atleast_2d(np.asarray(m_re, dtype=float))
    m_im = np.atleast_2d(np.asarray(m_im, dtype=float))
    n_l = len(scenarios)
    if m_re.shape != (n_l, n) or m_im.shape != (n_l, n):
        raise ValueError(
            f"big-M shape {m_re.shape} does not match ({n_l}, {n})"
        )
    for sc in scenarios:
        if sc.n != n:
            raise ValueError(f"scenario '{sc.id}' has {sc.n} nodes, expected {n}")

    st = _structure(a_prev, lam_active, slack)
    parent = a_prev.parent
    model = MilpModel(name="optikron")

    # Omega binaries
    for i, k in st.pairs:
        if i == k == slack:
            model.add_variable(f"Om_{i}_{k}", kind="binary", lower=1.0, upper=1.0)
        else:
            model.add_variable(f"Om_{i}_{k}", kind="binary")

    # A entries over the reachable sparsity, tied to Omega
    a_pattern: list[tuple[int, int]] = []
    for k in st.supers:
        for i in st.cands[k]:
            for j in st.clusters[k]:
                a_pattern.append((i, j))
                model.add_variable(f"A_{i}_{j}", lower=0.0, upper=1.0)
    for i, j in a_pattern:
        model.add_constraint(
            f"adef_{i}_{j}",
            [(f"A_{i}_{j}", 1.0), (f"Om_{i}_{parent[j]}", -1.0)],
            "=",
            0.0,
        )
    for j in range(n):
        model.add_constraint(
            f"acol_{j}",
            [(f"A_{i}_{j}", 1.0) for i in st.cands[parent[j]]],
            "=",
            1.0,
        )
    for k in st.supers:
        model.add_constraint(
            f"omcol_{k}",
            [(f"Om_{i}_{k}", 1.0) for i in st.cands[k]],
            "=",
            1.0,
        )
    for i, k in st.pairs:
        if i != k:
            model.add_constraint(
                f"omsup_{i}_{k}",
                [(f"Om_{i}_{k}", 1.0), (f"Om_{i}_{i}", -1.0)],
                "<=",
                0.0,
            )

    # cutting plane: at most q reductions this iteration
    model.add_constraint(
        "cut",
        [(f"A_{k}_{k}", 1.0) for k in st.supers],
        ">=",
        float(len(st.supers) - params.q),
    )

    y_re, y_im = y.real, y.imag
    receives: dict[int, list[int]] = {}
    for i, k in st.pairs:
        receives.setdefault(i, []).append(k)
    for l, sc in enumerate(scenarios):
        v_hat = sc.voltages
        slack_v = v_hat[slack]
        ic = np.zeros(n, dtype=complex)
        for k in st.supers:
            ic[k] = sum(sc.injections[j] for j in st.clusters[k])

        for c in range(n):
            if c == slack:
                model.add_variable(f"Vre_{l}_{c}", lower=slack_v.real, upper=slack_v.real)
                model.add_variable(f"Vim_{l}_{c}", lower=slack_v.imag, upper=slack_v.imag)
            else:
                model.add_variable(f"Vre_{l}_{c}")
                model.add_variable(f"Vim_{l}_{c}")
        for i, k in st.pairs:
            model.add_variable(f"Wre_{l}_{i}_{k}", lower=-m_re[l, i], upper=m_re[l, i])
            model.add_variable(f"Wim_{l}_{i}_{k}", lower=-m_im[l, i], upper=m_im[l, i])
        for i, j in a_pattern:
            model.add_variable(f"Ere_{l}_{i}_{j}")
            model.add_variable(f"Eim_{l}_{i}_{j}")
        for j in range(n):
            model.add_variable(f"ere_{l}_{j}")
            model.add_variable(f"eim_{l}_{j}")
        for i in st.supers:
            model.add_variable(f"tre_{l}_{i}", lower=0.0)
            model.add_variable(f"tim_{l}_{i}", lower=0.0)

        # KCL in rectangular coordinates, slack row released
        for r in range(n):
            if r == slack:
                continue
            re_terms = []
            im_terms = []
            for c in np.nonzero(np.abs(y[r]) > 0)[0]:
                gre, gim = y_re[r, c], y_im[r, c]
                if gre:
                    re_terms.append((f"Vre_{l}_{c}", gre))
                    im_terms.append((f"Vim_{l}_{c}", gre))
                if gim:
                    re_terms.append((f"Vim_{l}_{c}", -gim))
                    im_terms.append((f"Vre_{l}_{c}", gim))
            for k in receives.get(r, ()):
                if ic[k].real:
                    re_terms.append((f"Om_{r}_{k}", -ic[k].real))
                if ic[k].imag:
                    im_terms.append((f"Om_{r}_{k}", -ic[k].imag))
            model.add_constraint(f"kclre_{l}_{r}", re_terms, "=", 0.0)
            model.add_constraint(f"kclim_{l}_{r}", im_terms, "=", 0.0)

        # Big-M envelopes for W = diag(V) Omega (four rows per entry and part)
        for i, k in st.pairs:
            om = f"Om_{i}_{k}"
            for part, mm in (("re", m_re[l, i]), ("im", m_im[l, i])):
                w = f"W{part}_{l}_{i}_{k}"
                v = f"V{part}_{l}_{i}"
                model.add_constraint(
                    f"w{part}a_{l}_{i}_{k}", [(w, 1.0), (om, mm), (v, -1.0)], "<=", mm
                )
                model.add_constraint(
                    f"w{part}b_{l}_{i}_{k}", [(w, 1.0), (om, -mm), (v, -1.0)], ">=", -mm
                )
                model.add_constraint(
                    f"w{part}c_{l}_{i}_{k}", [(w, 1.0), (om, -mm)], "<=", 0.0
                )
                model.add_constraint(
                    f"w{part}d_{l}_{i}_{k}", [(w, 1.0), (om, mm)], ">=", 0.0
                )

        # error matrix definitions E = A diag(v_hat) - W
        for i, j in a_pattern:
            k = parent[j]
            model.add_constraint(
                f"edre_{l}_{i}_{j}",
                [
                    (f"Ere_{l}_{i}_{j}", 1.0),
                    (f"A_{i}_{j}", -v_hat[j].real),
                    (f"Wre_{l}_{i}_{k}", 1.0),
                ],
                "=",
                0.0,
            )
            model.add_constraint(
                f"edim_{l}_{i}_{j}",
                [
                    (f"Eim_{l}_{i}_{j}", 1.0),
                    (f"A_{i}_{j}", -v_hat[j].imag),
                    (f"Wim_{l}_{i}_{k}", 1.0),
                ],
                "=",
                0.0,
            )

        # nodal voltage errors e = v_hat - A^T V, via column sums of W
        for j in range(n):
            k = parent[j]
            model.add_constraint(
                f"evre_{l}_{j}",
                [(f"ere_{l}_{j}", 1.0)] + [(f"Wre_{l}_{i}_{k}", 1.0) for i in st.cands[k]],
                "=",
                v_hat[j].real,
            )
            model.add_constraint(
                f"evim_{l}_{j}",
                [(f"eim_{l}_{j}", 1.0)] + [(f"Wim_{l}_{i}_{k}", 1.0) for i in st.cands[k]],
                "=",
                v_hat[j].imag,
            )

        # linearized voltage magnitude bound
        if np.isfinite(params.ebar):
            for j in range(n):
                bound = float(np.abs(v_hat[j]) * params.ebar)
                terms = [
                    (f"ere_{l}_{j}", v_hat[j].real),
                    (f"eim_{l}_{j}", v_hat[j].imag),
                ]
                model.add_constraint(f"vmhi_{l}_{j}", terms, "<=", bound)
                model.add_constraint(f"vmlo_{l}_{j}", terms, ">=", -bound)

        # epigraph rows realizing the row infinity norms
        for i, j in a_pattern:
            model.add_constraint(
                f"ep1re_{l}_{i}_{j}",
                [(f"Ere_{l}_{i}_{j}", 1.0), (f"tre_{l}_{i}", -1.0)],
                "<=",
                0.0,
            )
            model.add_constraint(
                f"ep2re_{l}_{i}_{j}",
                [(f"Ere_{l}_{i}_{j}", -1.0), (f"tre_{l}_{i}", -1.0)],
                "<=",
                0.0,
            )
            model.add_constraint(
                f"ep1im_{l}_{i}_{j}",
                [(f"Eim_{l}_{i}_{j}", 1.0), (f"tim_{l}_{i}", -1.0)],
                "<=",
                0.0,
            )
            model.add_constraint(
                f"ep2im_{l}_{i}_{j}",
                [(f"Eim_{l}_{i}_{j}", -1.0), (f"tim_{l}_{i}", -1.0)],
                "<=",
                0.0,
            )

    obj = []
    for l in range(n_l):
        for i in st.supers:
            obj.append((f"tre_{l}_{i}", 1.0))
            obj.append((f"tim_{l}_{i}", 1.0))
    for k in st.supers:
        obj.append((f"A_{k}_{k}", params.alpha))
    model.set_objective(obj, constant=-params.alpha * len(st.supers))
    return model


def anchor_values(
    network: Network,
    scenarios,
    a_prev: Assignment,
    lam_active: np.ndarray,
    v_aggs=None,
) -> dict[str, float]:
    """Variable values realizing Omega = I (A = A_prev) in the built model.

    This point is feasible in every correctly-built model and doubles as the
    warm-start incumbent for the bundled solver.
    """
    n = network.n
    slack = network.slack_id
    y = build_admittance(network)
    st = _structure(a_prev, lam_active, slack)
    parent = a_prev.parent
    if v_aggs is None:
        v_aggs = [
            solve_current_injection(
                y, a_prev.aggregate(sc.injections), slack, sc.voltages[slack]
            )
            for sc in scenarios
        ]
    values: dict[str, float] = {}
    for i, k in st.pairs:
        values[f"Om_{i}_{k}"] = 1.0 if i == k else 0.0
    for k in st.supers:
        for i in st.cands[k]:
            for j in st.clusters[k]:
                values[f"A_{i}_{j}"] = 1.0 if i == k else 0.0
    for l, sc in enumerate(scenarios):
        v_agg = v_aggs[l]
        v_hat = sc.voltages
        for c in range(n):
            values[f"Vre_{l}_{c}"] = float(v_agg[c].real)
            values[f"Vim_{l}_{c}"] = float(v_agg[c].imag)
        for i, k in st.pairs:
            values[f"Wre_{l}_{i}_{k}"] = float(v_agg[i].real) if i == k else 0.0
            values[f"Wim_{l}_{i}_{k}"] = float(v_agg[i].imag) if i == k else 0.0
        t_re = {i: 0.0 for i in st.supers}
        t_im = {i: 0.0 for i in st.supers}
        for k in st.supers:
            for i in st.cands[k]:
                for j in st.clusters[k]:
                    if i == k:
                        ere = float(v_hat[j].real - v_agg[i].real)
                        eim = float(v_hat[j].imag - v_agg[i].imag)
                    else:
                        ere = eim = 0.0
                    values[f"Ere_{l}_{i}_{j}"] = ere
                    values[f"Eim_{l}_{i}_{j}"] = eim
                    t_re[i] = max(t_re[i], abs(ere))
                    t_im[i] = max(t_im[i], abs(eim))
        for j in range(n):
            values[f"ere_{l}_{j}"] = float(v_hat[j].real - v_agg[parent[j]].real)
            values[f"eim_{l}_{j}"] = float(v_hat[j].imag - v_agg[parent[j]].imag)
        for i in st.supers:
            values[f"tre_{l}_{i}"] = t_re[i]
            values[f"tim_{l}_{i}"] = t_im[i]
    return values


def extract_assignment(solution: MilpSolution, a_prev: Assignment) -> Assignment:
    """Binarize the solved Omega and compose A = Omega A_prev.

    Rejects fractional binaries beyond 1e-6 and any solution whose columns do
    not sum to one or whose receivers are themselves absorbed.
    """
    omega: dict[tuple[int, int], float] = {}
    for name, val in solution.values.items():
        if not name.startswith("Om_"):
            continue
        _, i, k = name.split("_")
        if min(abs(val), abs(val - 1.0)) > BINARIZE_TOL:
            raise OptiKronError(f"fractional binary {name} = {val}")
        omega[(int(i), int(k))] = val
    chosen: dict[int, int] = {}
    for (i, k), val in omega.items():
        if val > 0.5:
            if k in chosen:
                raise OptiKronError(f"column {k} of Omega has multiple ones")
            chosen[k] = i
    for k in a_prev.supers:
        if k not in chosen:
            raise OptiKronError(f"column {k} of Omega sums to zero")
    receivers = {k: i for k, i in chosen.items() if i != k}
    try:
        return a_prev.absorb(receivers)
    except AssignmentError as exc:
        raise OptiKronError(f"solver output violates assignment invariants: {exc}") from exc


@dataclass
class IterationTrace:
    index: int
    a_prev: Assignment
    a_star: Assignment
    lam_active: np.ndarray
    big_m_re: np.ndarray
    big_m_im: np.ndarray
    mice_prev: np.ndarray
    objective: float
    reduced_nodes: int
    wallclock_ms: float


@dataclass
class ReductionResult:
    traces: list[IterationTrace]
    assignment: Assignment
    keep: tuple[int, ...]
    y_reduced: np.ndarray
    network: Network
    node_map: dict[int, int]  # original id -> reduced id
    error_stats: list[dict]


def _solve_model(model: MilpModel, params: OptiParams, warm: dict[str, float]) -> MilpSolution:
    if params.solver:
        return solve_external(model, params.solver)
    return solve_reference(
        model,
        gap=params.mip_gap,
        time_limit=params.time_limit,
        binary_limit=params.binary_limit,
        warm_values=warm,
    )


def reduce_iteratively(
    network: Network,
    scenarios,
    a_init: Assignment,
    params: OptiParams,
) -> ReductionResult:
    """Run the build/solve/extract loop until an iteration reduces nothing.

    Big-M constants are recomputed from fresh exact MICE values each
    iteration and the active adjacency is updated from the latest assignment.
    The final admittance is the Kron reduction onto the surviving super-nodes.
    """
    y = build_admittance(network)
    slack = network.slack_id
    lam = reduced_adjacency(a_init, adjacency(network))
    a_prev = a_init
    v_hat = np.vstack([sc.voltages for sc in scenarios])
    traces: list[IterationTrace] = []
    iteration = 0
    while True:
        t0 = time.perf_counter()
        mice_prev, v_aggs = mice_from_solves(y, scenarios, a_prev, slack)
        m_re, m_im = compute_big_m(mice_prev, params.alpha, params.q, v_hat)
        model = build_milp(network, scenarios, a_prev, lam, params, (m_re, m_im))
        warm = anchor_values(network, scenarios, a_prev, lam, v_aggs=v_aggs)
        bad = model.violations(warm)
        if bad:
            raise OptiKronError(
                "identity assignment is infeasible in the built model; ebar is "
                f"tighter than the errors already carried by the input assignment ({bad[0]})"
            )
        try:
            solution = _solve_model(model, params, warm)
        except Exception as exc:
            raise OptiKronError(
                f"solver failed at iteration {iteration}: {exc}"
            ) from exc
        if solution.status not in ("optimal", "gap_limit"):
            raise OptiKronError(
                f"iteration {iteration}: solver status '{solution.status}' "
                "(the model is feasible at Omega = I, this signals a backend bug)"
            )
        a_star = extract_assignment(solution, a_prev)
        delta = a_prev.n_supers - a_star.n_supers
        traces.append(
            IterationTrace(
                index=iteration,
                a_prev=a_prev,
                a_star=a_star,
                lam_active=lam,
                big_m_re=m_re,
                big_m_im=m_im,
                mice_prev=mice_prev,
                objective=float(solution.objective),
                reduced_nodes=delta,
                wallclock_ms=(time.perf_counter() - t0) * 1e3,
            )
        )
        if delta == 0:
            break
        lam = reduced_adjacency(a_star, lam)
        a_prev = a_star
        iteration += 1

    keep = a_prev.supers
    y_red = kron_reduce(y, keep)
    node_map = {orig: idx for idx, orig in enumerate(keep)}
    reduced_network = network_from_admittance(y_red, node_map[slack])
    stats = metrics.voltage_error_stats(scenarios, network, a_prev)
    return ReductionResult(
        traces=traces,
        assignment=a_prev,
        keep=keep,
        y_reduced=y_red,
        network=reduced_network,
        node_map=node_map,
        error_stats=stats,
    )


def traces_to_json(traces) -> list[dict]:
    """Per-iteration trace records for the JSON trace artifact."""
    return [
        {
            "iteration": tr.index,
            "reduced_nodes": tr.reduced_nodes,
            "objective": tr.objective,
            "mice_max": float(np.max(tr.mice_prev)) if tr.mice_prev.size else 0.0,
            "wallclock_ms": tr.wallclock_ms,
        }
        for tr in traces
    ]
