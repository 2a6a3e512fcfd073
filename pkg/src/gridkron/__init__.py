"""Optimal Kron-based reduction of radial distribution networks."""

from .assignment import Assignment, AssignmentError
from .kron import (
    kron_reduce,
    reduced_adjacency,
    sequential_equivalence_check,
    SingularReductionError,
)
from .metrics import pareto_sweep, run_pipeline, voltage_error_stats
from .milp import MilpModel, MilpSolution, read_model, read_solution, solve_reference, write_model
from .netmodel import (
    Branch,
    Network,
    NetworkFormatError,
    Node,
    adjacency,
    build_admittance,
    load_network,
    save_network,
    validate_radial,
)
from .optikron import (
    OptiParams,
    ReductionResult,
    build_milp,
    compute_big_m,
    error_matrix,
    extract_assignment,
    mice,
    reduce_iteratively,
)
from .powerflow import (
    LoadCase,
    PowerFlowError,
    Scenario,
    kron_voltages,
    solve_ac_powerflow,
    solve_current_injection,
)
from .radialize import (
    RadialRecovery,
    critical_nodes,
    find_maximal_cliques,
    radialize,
    spanning_subtree,
)
from .stage1 import assign_zero_injection, candidate_sets, run_stage1, zero_injection_set
from .synth import generate_feeder

__version__ = "0.1.0"
