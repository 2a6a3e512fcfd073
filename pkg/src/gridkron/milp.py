"""Solver-agnostic MILP representation, file exchange, and a bundled solver.

Models are plain variable/constraint/objective records (minimization only;
encode maximization by negating coefficients). External solvers are driven
purely through files: an MPS or LP model file goes out, a whitespace
"name value" solution file comes back, and every solution is replayed against
the in-memory model before it is accepted.

The bundled reference solver is a best-first branch-and-bound over LP
relaxations, intended for desk-scale models (guarded by a free-binary limit).
"""

from __future__ import annotations

import math
import re
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from heapq import heappop, heappush
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

__all__ = [
    "Variable",
    "Constraint",
    "MilpModel",
    "MilpSolution",
    "ModelFile",
    "MilpError",
    "SolverError",
    "SolverIntegrityError",
    "write_model",
    "read_model",
    "read_solution",
    "solve_reference",
    "solve_external",
]

INT_TOL = 1e-6
FEAS_TOL = 1e-6

_SENSES = ("<=", "=", ">=")


class MilpError(ValueError):
    """Invalid model construction or file content."""


class SolverError(RuntimeError):
    """The solve could not produce a usable solution."""


class SolverIntegrityError(SolverError):
    """A returned solution violates the in-memory model."""


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = "continuous"  # or "binary"
    lower: float = -math.inf
    upper: float = math.inf


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: tuple[tuple[str, float], ...]
    sense: str
    rhs: float


@dataclass
class MilpModel:
    name: str = "model"
    variables: list[Variable] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective_terms: list[tuple[str, float]] = field(default_factory=list)
    objective_constant: float = 0.0

    def __post_init__(self):
        self._var_index: dict[str, int] = {v.name: i for i, v in enumerate(self.variables)}
        self._row_names: set[str] = {c.name for c in self.constraints}

    def add_variable(
        self,
        name: str,
        kind: str = "continuous",
        lower: float | None = None,
        upper: float | None = None,
    ) -> str:
        if name in self._var_index:
            raise MilpError(f"duplicate variable '{name}'")
        if kind not in ("continuous", "binary"):
            raise MilpError(f"unknown variable kind '{kind}'")
        if kind == "binary":
            lo = 0.0 if lower is None else float(lower)
            hi = 1.0 if upper is None else float(upper)
        else:
            lo = -math.inf if lower is None else float(lower)
            hi = math.inf if upper is None else float(upper)
        if lo > hi:
            raise MilpError(f"variable '{name}': lower {lo} > upper {hi}")
        self._var_index[name] = len(self.variables)
        self.variables.append(Variable(name=name, kind=kind, lower=lo, upper=hi))
        return name

    def add_constraint(self, name: str, terms, sense: str, rhs: float) -> str:
        if name in self._row_names:
            raise MilpError(f"duplicate constraint '{name}'")
        if sense not in _SENSES:
            raise MilpError(f"constraint '{name}': unknown sense '{sense}'")
        rhs = float(rhs)
        if not math.isfinite(rhs):
            raise MilpError(f"constraint '{name}': non-finite rhs")
        packed = []
        for var, coef in terms:
            if var not in self._var_index:
                raise MilpError(f"constraint '{name}': unknown variable '{var}'")
            coef = float(coef)
            if not math.isfinite(coef):
                raise MilpError(f"constraint '{name}': non-finite coefficient on '{var}'")
            if coef != 0.0:
                packed.append((var, coef))
        self._row_names.add(name)
        self.constraints.append(Constraint(name=name, terms=tuple(packed), sense=sense, rhs=rhs))
        return name

    def set_objective(self, terms, constant: float = 0.0) -> None:
        packed = []
        for var, coef in terms:
            if var not in self._var_index:
                raise MilpError(f"objective: unknown variable '{var}'")
            coef = float(coef)
            if not math.isfinite(coef):
                raise MilpError(f"objective: non-finite coefficient on '{var}'")
            if coef != 0.0:
                packed.append((var, coef))
        if not math.isfinite(constant):
            raise MilpError("objective: non-finite constant")
        self.objective_terms = packed
        self.objective_constant = float(constant)

    @property
    def num_binaries(self) -> int:
        return sum(1 for v in self.variables if v.kind == "binary")

    def variable_index(self, name: str) -> int:
        return self._var_index[name]

    def evaluate(self, values: dict[str, float]) -> float:
        return self.objective_constant + sum(
            coef * values.get(var, 0.0) for var, coef in self.objective_terms
        )

    def violations(self, values: dict[str, float], tol: float = FEAS_TOL) -> list[str]:
        """Human-readable list of constraint/bound violations beyond ``tol``."""
        out = []
        for v in self.variables:
            x = values.get(v.name, 0.0)
            if x < v.lower - tol or x > v.upper + tol:
                out.append(f"bound {v.name}: {x} outside [{v.lower}, {v.upper}]")
            if v.kind == "binary" and min(abs(x), abs(x - 1.0)) > tol:
                out.append(f"integrality {v.name}: {x}")
        for c in self.constraints:
            lhs = sum(coef * values.get(var, 0.0) for var, coef in c.terms)
            if c.sense == "<=" and lhs > c.rhs + tol:
                out.append(f"{c.name}: {lhs} <= {c.rhs} violated")
            elif c.sense == ">=" and lhs < c.rhs - tol:
                out.append(f"{c.name}: {lhs} >= {c.rhs} violated")
            elif c.sense == "=" and abs(lhs - c.rhs) > tol:
                out.append(f"{c.name}: {lhs} = {c.rhs} violated")
        return out


@dataclass
class MilpSolution:
    status: str  # optimal | infeasible | gap_limit | error
    objective: float | None
    values: dict[str, float] = field(default_factory=dict)
    bound_gap: float = 0.0
    best_bound: float | None = None
    nodes: int = 0


@dataclass
class ModelFile:
    path: Path
    fmt: str
    sanitized: bool
    column_names: dict[str, str]  # file name -> model name
    row_names: dict[str, str]


# ---------------------------------------------------------------------------
# Name sanitization
# ---------------------------------------------------------------------------

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]{0,7}$")


def _needs_sanitize(model: MilpModel) -> bool:
    names = [v.name for v in model.variables] + [c.name for c in model.constraints]
    return any(not _NAME_RE.match(nm) for nm in names)


def _name_maps(model: MilpModel) -> tuple[bool, dict[str, str], dict[str, str]]:
    """(sanitized, model var -> file name, model row -> file name)."""
    if not _needs_sanitize(model):
        cols = {v.name: v.name for v in model.variables}
        rows = {c.name: c.name for c in model.constraints}
        return False, cols, rows
    cols = {v.name: f"x{i}" for i, v in enumerate(model.variables)}
    rows = {c.name: f"c{i}" for i, c in enumerate(model.constraints)}
    return True, cols, rows


def _write_name_map(path: Path, cols: dict[str, str], rows: dict[str, str]) -> None:
    with open(path, "w") as fh:
        for model_name, file_name in cols.items():
            fh.write(f"col\t{file_name}\t{model_name}\n")
        for model_name, file_name in rows.items():
            fh.write(f"row\t{file_name}\t{model_name}\n")


# ---------------------------------------------------------------------------
# MPS format
# ---------------------------------------------------------------------------

_MPS_SENSE = {"<=": "L", ">=": "G", "=": "E"}
_MPS_SENSE_BACK = {"L": "<=", "G": ">=", "E": "="}


def _mps_line(f1: str, f2: str = "", f3: str = "", f4: str = "", f5: str = "", f6: str = "") -> str:
    # fixed-format field starts (1-indexed): 2, 5, 15, 25, 40, 50; long fields
    # overflow to the right with single-space separation (free-MPS compatible)
    line = " " + f1.ljust(2)
    for start, fld in ((4, f2), (14, f3), (24, f4), (39, f5), (49, f6)):
        if fld == "":
            continue
        if len(line) < start:
            line = line.ljust(start)
        elif not line.endswith(" "):
            line += " "
        line += fld
    return line.rstrip()


def _write_mps(model: MilpModel, path: Path, cols: dict[str, str], rows: dict[str, str]) -> None:
    lines = [f"NAME          {model.name}", "ROWS", _mps_line("N", "OBJ")]
    for c in model.constraints:
        lines.append(_mps_line(_MPS_SENSE[c.sense], rows[c.name]))
    lines.append("COLUMNS")
    obj = dict(model.objective_terms)
    by_var: dict[str, list[tuple[str, float]]] = {v.name: [] for v in model.variables}
    for c in model.constraints:
        for var, coef in c.terms:
            by_var[var].append((rows[c.name], coef))
    for v in model.variables:
        entries = []
        if v.name in obj:
            entries.append(("OBJ", obj[v.name]))
        entries.extend(by_var[v.name])
        if not entries:
            entries.append(("OBJ", 0.0))  # keep the column present in the file
        for row, coef in entries:
            lines.append(_mps_line("", cols[v.name], row, repr(float(coef))))
    lines.append("RHS")
    for c in model.constraints:
        if c.rhs != 0.0:
            lines.append(_mps_line("", "RHS", rows[c.name], repr(float(c.rhs))))
    if model.objective_constant != 0.0:
        lines.append(_mps_line("", "RHS", "OBJ", repr(-float(model.objective_constant))))
    lines.append("BOUNDS")
    for v in model.variables:
        nm = cols[v.name]
        if v.kind == "binary":
            lines.append(_mps_line("BV", "BND", nm))
            if v.lower != 0.0:
                lines.append(_mps_line("LO", "BND", nm, repr(float(v.lower))))
            if v.upper != 1.0:
                lines.append(_mps_line("UP", "BND", nm, repr(float(v.upper))))
            continue
        lo_def = v.lower == 0.0
        hi_def = v.upper == math.inf
        if lo_def and hi_def:
            continue
        if v.lower == -math.inf and v.upper == math.inf:
            lines.append(_mps_line("FR", "BND", nm))
            continue
        if v.lower == -math.inf:
            lines.append(_mps_line("MI", "BND", nm))
        elif not lo_def:
            lines.append(_mps_line("LO", "BND", nm, repr(float(v.lower))))
        if not hi_def:
            lines.append(_mps_line("UP", "BND", nm, repr(float(v.upper))))
    lines.append("ENDATA")
    path.write_text("\n".join(lines) + "\n")


def _read_mps(path: Path) -> MilpModel:
    model_name = "model"
    section = None
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    obj_row: str | None = None
    col_entries: dict[str, list[tuple[str, float]]] = {}
    col_order: list[str] = []
    rhs: dict[str, float] = {}
    bounds: dict[str, dict[str, float | bool]] = {}
    binaries: set[str] = set()

    def touch_col(name: str):
        if name not in col_entries:
            col_entries[name] = []
            col_order.append(name)

    for raw in path.read_text().splitlines():
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw.startswith(" "):
            parts = raw.split()
            section = parts[0].upper()
            if section == "NAME" and len(parts) > 1:
                model_name = parts[1]
            if section == "ENDATA":
                break
            continue
        parts = raw.split()
        if section == "ROWS":
            kind, name = parts[0].upper(), parts[1]
            if kind == "N":
                if obj_row is None:
                    obj_row = name
                continue
            if kind not in _MPS_SENSE_BACK:
                raise MilpError(f"{path}: unknown row type '{kind}'")
            row_sense[name] = _MPS_SENSE_BACK[kind]
            row_order.append(name)
        elif section == "COLUMNS":
            if len(parts) % 2 == 1:
                col = parts[0]
                touch_col(col)
                for k in range(1, len(parts), 2):
                    col_entries[col].append((parts[k], float(parts[k + 1])))
            else:
                raise MilpError(f"{path}: malformed COLUMNS line {raw!r}")
        elif section == "RHS":
            for k in range(1, len(parts), 2):
                rhs[parts[k]] = float(parts[k + 1])
        elif section == "BOUNDS":
            btype = parts[0].upper()
            name = parts[2]
            touch_col(name)
            info = bounds.setdefault(name, {})
            if btype == "BV":
                binaries.add(name)
                info.setdefault("lo", 0.0)
                info.setdefault("hi", 1.0)
            elif btype == "LO":
                info["lo"] = float(parts[3])
            elif btype == "UP":
                info["hi"] = float(parts[3])
            elif btype == "FX":
                info["lo"] = info["hi"] = float(parts[3])
            elif btype == "MI":
                info["lo"] = -math.inf
            elif btype == "PL":
                info["hi"] = math.inf
            elif btype == "FR":
                info["lo"] = -math.inf
                info["hi"] = math.inf
            else:
                raise MilpError(f"{path}: unknown bound type '{btype}'")
        elif section == "RANGES":
            raise MilpError(f"{path}: RANGES section not supported")

    model = MilpModel(name=model_name)
    for col in col_order:
        info = bounds.get(col, {})
        if col in binaries:
            model.add_variable(
                col, kind="binary", lower=info.get("lo", 0.0), upper=info.get("hi", 1.0)
            )
        else:
            model.add_variable(
                col,
                kind="continuous",
                lower=info.get("lo", 0.0),
                upper=info.get("hi", math.inf),
            )
    row_terms: dict[str, list[tuple[str, float]]] = {name: [] for name in row_order}
    obj_terms: list[tuple[str, float]] = []
    for col in col_order:
        for row, coef in col_entries[col]:
            if row == obj_row:
                obj_terms.append((col, coef))
            elif row in row_terms:
                row_terms[row].append((col, coef))
            else:
                raise MilpError(f"{path}: entry for undeclared row '{row}'")
    for name in row_order:
        model.add_constraint(name, row_terms[name], row_sense[name], rhs.get(name, 0.0))
    constant = -rhs.get(obj_row, 0.0) if obj_row else 0.0
    model.set_objective(obj_terms, constant=constant)
    return model


# ---------------------------------------------------------------------------
# LP format (CPLEX-style subset)
# ---------------------------------------------------------------------------


def _lp_expr(terms, constant: float = 0.0) -> str:
    parts = []
    for var, coef in terms:
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {repr(abs(float(coef)))} {var}")
    if constant != 0.0:
        sign = "-" if constant < 0 else "+"
        parts.append(f"{sign} {repr(abs(float(constant)))}")
    if not parts:
        return "0.0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def _write_lp(model: MilpModel, path: Path, cols: dict[str, str], rows: dict[str, str]) -> None:
    lines = [f"\\ {model.name}", "Minimize"]
    obj_terms = [(cols[v], c) for v, c in model.objective_terms]
    lines.append(f" OBJ: {_lp_expr(obj_terms, model.objective_constant)}")
    lines.append("Subject To")
    for c in model.constraints:
        terms = [(cols[v], coef) for v, coef in c.terms]
        lines.append(f" {rows[c.name]}: {_lp_expr(terms)} {c.sense} {repr(float(c.rhs))}")
    # every variable gets a bounds line (declaration order survives re-parsing)
    lines.append("Bounds")
    for v in model.variables:
        nm = cols[v.name]
        if v.lower == -math.inf and v.upper == math.inf:
            lines.append(f" {nm} free")
        else:
            lo = "-inf" if v.lower == -math.inf else repr(float(v.lower))
            hi = "+inf" if v.upper == math.inf else repr(float(v.upper))
            lines.append(f" {lo} <= {nm} <= {hi}")
    binaries = [cols[v.name] for v in model.variables if v.kind == "binary"]
    if binaries:
        lines.append("Binary")
        lines.append(" " + " ".join(binaries))
    lines.append("End")
    path.write_text("\n".join(lines) + "\n")


_LP_SECTIONS = {"minimize", "subject", "bounds", "binary", "end"}


def _parse_lp_terms(tokens: list[str]) -> tuple[list[tuple[str, float]], float]:
    terms: list[tuple[str, float]] = []
    constant = 0.0
    sign = 1.0
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok == "+":
            sign = 1.0
            i += 1
            continue
        if tok == "-":
            sign = -1.0
            i += 1
            continue
        coef = sign * float(tok)
        if i + 1 < len(tokens) and not _is_number(tokens[i + 1]) and tokens[i + 1] not in ("+", "-"):
            terms.append((tokens[i + 1], coef))
            i += 2
        else:
            constant += coef
            i += 1
        sign = 1.0
    return terms, constant


def _is_number(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def _read_lp(path: Path) -> MilpModel:
    name = path.stem
    section = None
    obj_terms: list[tuple[str, float]] = []
    obj_constant = 0.0
    cons: list[tuple[str, list[tuple[str, float]], str, float]] = []
    bound_lines: list[str] = []
    binaries: list[str] = []
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            name = line[1:].strip() or name
            continue
        head = line.split()[0].lower()
        if head in _LP_SECTIONS:
            section = head
            continue
        if section == "minimize":
            label, _, expr = line.partition(":")
            terms, const = _parse_lp_terms(expr.split())
            obj_terms, obj_constant = terms, const
        elif section == "subject":
            label, _, body = line.partition(":")
            tokens = body.split()
            sense_idx = next(
                (k for k, t in enumerate(tokens) if t in _SENSES), None
            )
            if sense_idx is None:
                raise MilpError(f"{path}: constraint without sense: {line!r}")
            terms, const = _parse_lp_terms(tokens[:sense_idx])
            rhs = float(tokens[sense_idx + 1]) - const
            cons.append((label.strip(), terms, tokens[sense_idx], rhs))
        elif section == "bounds":
            bound_lines.append(line)
        elif section == "binary":
            binaries.extend(line.split())
        elif section == "end":
            break
    var_names: list[str] = []
    seen: set[str] = set()

    def note(nm: str):
        if nm not in seen:
            seen.add(nm)
            var_names.append(nm)

    bounds: dict[str, tuple[float, float]] = {}
    for line in bound_lines:  # first: bounds carry the declaration order
        tokens = line.split()
        if len(tokens) == 2 and tokens[1].lower() == "free":
            note(tokens[0])
            bounds[tokens[0]] = (-math.inf, math.inf)
        elif len(tokens) == 5 and tokens[1] == "<=" and tokens[3] == "<=":
            nm = tokens[2]
            note(nm)
            lo = -math.inf if tokens[0] in ("-inf", "-Inf") else float(tokens[0])
            hi = math.inf if tokens[4] in ("+inf", "inf", "Inf") else float(tokens[4])
            bounds[nm] = (lo, hi)
        else:
            raise MilpError(f"{path}: unsupported bounds line {line!r}")
    for nm, _ in obj_terms:
        note(nm)
    for _, terms, _, _ in cons:
        for nm, _ in terms:
            note(nm)
    for nm in binaries:
        note(nm)
    model = MilpModel(name=name)
    binary_set = set(binaries)
    for nm in var_names:
        if nm in binary_set:
            lo, hi = bounds.get(nm, (0.0, 1.0))
            model.add_variable(nm, kind="binary", lower=lo, upper=hi)
        else:
            lo, hi = bounds.get(nm, (0.0, math.inf))
            model.add_variable(nm, kind="continuous", lower=lo, upper=hi)
    for label, terms, sense, rhs in cons:
        model.add_constraint(label, terms, sense, rhs)
    model.set_objective(obj_terms, constant=obj_constant)
    return model


# ---------------------------------------------------------------------------
# Public file API
# ---------------------------------------------------------------------------


def write_model(model: MilpModel, path, fmt: str = "mps") -> ModelFile:
    """Write the model in MPS or LP format.

    Names that do not fit the 8-character alphanumeric file convention are
    rewritten (x0.., c0..) and the reversible mapping is emitted alongside as
    ``<path>.names``.
    """
    path = Path(path)
    fmt = fmt.lower()
    if fmt not in ("mps", "lp"):
        raise MilpError(f"unknown model format '{fmt}'")
    sanitized, cols, rows = _name_maps(model)
    if fmt == "mps":
        _write_mps(model, path, cols, rows)
    else:
        _write_lp(model, path, cols, rows)
    if sanitized:
        _write_name_map(Path(str(path) + ".names"), cols, rows)
    return ModelFile(
        path=path,
        fmt=fmt,
        sanitized=sanitized,
        column_names={v: k for k, v in cols.items()},
        row_names={v: k for k, v in rows.items()},
    )


def read_model(path) -> MilpModel:
    """Re-parse a model file written by write_model (auto-detects the format)."""
    path = Path(path)
    head = ""
    for line in path.read_text().splitlines():
        if line.strip():
            head = line.strip()
            break
    if head.upper().startswith(("NAME", "ROWS", "OBJSENSE")):
        return _read_mps(path)
    return _read_lp(path)


def read_solution(path, model: MilpModel | None = None, name_map: dict[str, str] | None = None) -> MilpSolution:
    """Parse whitespace-separated "name value" lines ('#' starts a comment).

    With ``model`` given, the values are replayed against it: the objective is
    recomputed and any violation beyond 1e-6 raises SolverIntegrityError.
    ``name_map`` translates file variable names back to model names.
    """
    values: dict[str, float] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise MilpError(f"{path}:{lineno}: expected 'name value'")
            name = parts[0]
            if name_map:
                name = name_map.get(name, name)
            values[name] = float(parts[1])
    if model is None:
        return MilpSolution(status="optimal", objective=None, values=values)
    known = {v.name for v in model.variables}
    unknown = sorted(set(values) - known)
    if unknown:
        raise MilpError(f"{path}: unknown variables in solution: {unknown[:5]}")
    full = {v.name: values.get(v.name, 0.0) for v in model.variables}
    bad = model.violations(full, tol=FEAS_TOL)
    if bad:
        raise SolverIntegrityError(
            f"{path}: solution violates model ({len(bad)} violations; first: {bad[0]})"
        )
    return MilpSolution(status="optimal", objective=model.evaluate(full), values=full)


# ---------------------------------------------------------------------------
# Reference branch-and-bound solver
# ---------------------------------------------------------------------------


@dataclass
class _Arrays:
    c: np.ndarray
    const: float
    a_ub: sparse.csr_matrix | None
    b_ub: np.ndarray | None
    a_eq: sparse.csr_matrix | None
    b_eq: np.ndarray | None
    lb: np.ndarray
    ub: np.ndarray
    binaries: np.ndarray
    names: list[str]


def _to_arrays(model: MilpModel) -> _Arrays:
    nv = len(model.variables)
    index = {v.name: i for i, v in enumerate(model.variables)}
    c = np.zeros(nv)
    for var, coef in model.objective_terms:
        c[index[var]] += coef
    lb = np.array([v.lower for v in model.variables])
    ub = np.array([v.upper for v in model.variables])
    ub_rows, ub_cols, ub_vals, b_ub = [], [], [], []
    eq_rows, eq_cols, eq_vals, b_eq = [], [], [], []
    for cons in model.constraints:
        if cons.sense == "=":
            r = len(b_eq)
            for var, coef in cons.terms:
                eq_rows.append(r)
                eq_cols.append(index[var])
                eq_vals.append(coef)
            b_eq.append(cons.rhs)
        else:
            flip = -1.0 if cons.sense == ">=" else 1.0
            r = len(b_ub)
            for var, coef in cons.terms:
                ub_rows.append(r)
                ub_cols.append(index[var])
                ub_vals.append(flip * coef)
            b_ub.append(flip * cons.rhs)
    a_ub = (
        sparse.csr_matrix((ub_vals, (ub_rows, ub_cols)), shape=(len(b_ub), nv))
        if b_ub
        else None
    )
    a_eq = (
        sparse.csr_matrix((eq_vals, (eq_rows, eq_cols)), shape=(len(b_eq), nv))
        if b_eq
        else None
    )
    binaries = np.array(
        [i for i, v in enumerate(model.variables) if v.kind == "binary"], dtype=int
    )
    return _Arrays(
        c=c,
        const=model.objective_constant,
        a_ub=a_ub,
        b_ub=np.array(b_ub) if b_ub else None,
        a_eq=a_eq,
        b_eq=np.array(b_eq) if b_eq else None,
        lb=lb,
        ub=ub,
        binaries=binaries,
        names=[v.name for v in model.variables],
    )


def _lp_solve(arr: _Arrays, lb: np.ndarray, ub: np.ndarray):
    res = linprog(
        arr.c,
        A_ub=arr.a_ub,
        b_ub=arr.b_ub,
        A_eq=arr.a_eq,
        b_eq=arr.b_eq,
        bounds=np.column_stack([lb, ub]),
        method="highs",
    )
    return res


def solve_reference(
    model: MilpModel,
    gap: float = 1e-3,
    time_limit: float | None = None,
    binary_limit: int = 200,
    warm_values: dict[str, float] | None = None,
) -> MilpSolution:
    """Best-first branch-and-bound over LP relaxations.

    Branches on the most fractional binary (ties by variable order) and stops
    when the relative gap (ub - lb) / max(1, |ub|) reaches ``gap``. A feasible
    ``warm_values`` dict seeds the incumbent. Guarded to ``binary_limit`` free
    binaries; returned solutions are replayed against the model.
    """
    arr = _to_arrays(model)
    free_bin = [int(i) for i in arr.binaries if arr.lb[i] < arr.ub[i]]
    if len(free_bin) > binary_limit:
        raise SolverError(
            f"model has {len(free_bin)} free binaries, over the reference-solver "
            f"guard of {binary_limit}"
        )
    t0 = time.perf_counter()
    deadline = None if time_limit is None else t0 + time_limit

    incumbent_obj = math.inf
    incumbent_x: np.ndarray | None = None
    if warm_values is not None:
        if model.violations(warm_values, tol=FEAS_TOL):
            raise SolverIntegrityError("warm start values violate the model")
        x = np.array([warm_values.get(nm, 0.0) for nm in arr.names])
        incumbent_obj = float(arr.c @ x) + arr.const
        incumbent_x = x

    def gap_of(ub_val: float, lb_val: float) -> float:
        return max(0.0, ub_val - lb_val) / max(1.0, abs(ub_val))

    root = _lp_solve(arr, arr.lb, arr.ub)
    if root.status == 3:
        raise SolverError("LP relaxation is unbounded")
    if root.status == 2:
        return MilpSolution(status="infeasible", objective=None, bound_gap=math.inf)
    if root.status != 0:
        raise SolverError(f"LP relaxation failed (status {root.status})")

    counter = 0
    nodes = 0
    heap: list[tuple[float, int, np.ndarray, np.ndarray, bool]] = []
    # entries: (bound, tie, lb, ub, solved); root enters pre-solved via resolve
    heappush(heap, (root.fun + arr.const, counter, arr.lb.copy(), arr.ub.copy(), False))
    proven_lb = root.fun + arr.const
    tried_rounding = False

    while heap:
        bound, _, nlb, nub, _ = heappop(heap)
        proven_lb = bound
        if incumbent_x is not None and gap_of(incumbent_obj, bound) <= gap:
            break
        if deadline is not None and time.perf_counter() > deadline:
            heappush(heap, (bound, counter, nlb, nub, False))
            break
        res = _lp_solve(arr, nlb, nub)
        nodes += 1
        if res.status == 2:
            continue
        if res.status != 0:
            raise SolverError(f"node LP failed (status {res.status})")
        obj = res.fun + arr.const
        if obj >= incumbent_obj - gap * max(1.0, abs(incumbent_obj)):
            continue
        x = res.x
        allfrac = np.abs(x[arr.binaries] - np.round(x[arr.binaries])) if len(arr.binaries) else np.array([])
        if allfrac.size == 0 or allfrac.max() <= INT_TOL:
            incumbent_obj = obj
            incumbent_x = x.copy()
            continue
        if not tried_rounding:
            tried_rounding = True
            rlb, rub = nlb.copy(), nub.copy()
            rounded = np.round(x[arr.binaries])
            rlb[arr.binaries] = rounded
            rub[arr.binaries] = rounded
            rres = _lp_solve(arr, rlb, rub)
            if rres.status == 0:
                robj = rres.fun + arr.const
                if robj < incumbent_obj:
                    incumbent_obj = robj
                    incumbent_x = rres.x.copy()
        order = np.argsort(-allfrac, kind="stable")
        branch_var = int(arr.binaries[order[0]])
        for fix in (0.0, 1.0):
            clb, cub = nlb.copy(), nub.copy()
            clb[branch_var] = fix
            cub[branch_var] = fix
            counter += 1
            heappush(heap, (obj, counter, clb, cub, False))

    if incumbent_x is None:
        if deadline is not None and time.perf_counter() > deadline:
            raise SolverError("time limit reached with no incumbent")
        return MilpSolution(status="infeasible", objective=None, bound_gap=math.inf, nodes=nodes)

    if heap:
        proven_lb = min(proven_lb, heap[0][0])
    else:
        proven_lb = min(proven_lb, incumbent_obj)
    final_gap = gap_of(incumbent_obj, proven_lb)
    timed_out = deadline is not None and time.perf_counter() > deadline and final_gap > gap
    status = "gap_limit" if timed_out else "optimal"

    x = incumbent_x.copy()
    if len(arr.binaries):
        x[arr.binaries] = np.round(x[arr.binaries])
    x = np.clip(x, arr.lb, arr.ub)
    values = {nm: float(val) for nm, val in zip(arr.names, x)}
    bad = model.violations(values, tol=FEAS_TOL)
    if bad:
        raise SolverIntegrityError(
            f"reference solver produced an infeasible solution ({bad[0]})"
        )
    return MilpSolution(
        status=status,
        objective=model.evaluate(values),
        values=values,
        bound_gap=final_gap,
        best_bound=proven_lb,
        nodes=nodes,
    )


def solve_external(model: MilpModel, command_template: str, workdir=None) -> MilpSolution:
    """Solve through an external MPS-capable solver.

    ``command_template`` must contain {model} and {solution} placeholders; the
    command must write "name value" lines to the solution path. The returned
    values are replayed against the in-memory model.
    """
    if "{model}" not in command_template or "{solution}" not in command_template:
        raise SolverError("solver command template needs {model} and {solution}")
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        model_path = Path(tmp) / "model.mps"
        solution_path = Path(tmp) / "model.sol"
        info = write_model(model, model_path, fmt="mps")
        cmd = [
            part.format(model=str(model_path), solution=str(solution_path))
            for part in shlex.split(command_template)
        ]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            tail = (proc.stderr or proc.stdout).strip().splitlines()[-3:]
            raise SolverError(
                f"external solver exited {proc.returncode}: {' | '.join(tail)}"
            )
        if not solution_path.exists():
            raise SolverError("external solver produced no solution file")
        return read_solution(solution_path, model=model, name_map=info.column_names)
