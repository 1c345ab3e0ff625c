"""Distributed MPC with adaptive ellipsoidal terminal sets.

Offline synthesis of terminal cost and distributed gains, three online
schemes (origin-centered, asymmetric, relaxed-asymmetric terminal sets),
centralized and consensus-ADMM solve modes, and a closed-loop simulation
harness.
"""

from .admm import AdmmOptions, run_consensus
from .model import (
    ModelValidationError,
    Scenario,
    SelectionMaps,
    SubsystemModel,
    Topology,
    assemble_global,
    build_selection_maps,
    lift_block_diagonal,
    load_scenario,
    neighbor_embed,
)
from .ocp import OcpSolution, OcpStatus, Scheme, evaluate_cost, solve_ocp
from .sdp import (
    AffineMatrixExpr,
    SdpProblem,
    SolveOptions,
    SolveResult,
    SolveStatus,
    eval_expr,
    solve,
)
from .simulate import SimTrace, feasibility_sweep, run, write_trace_csv
from .synthesis import (
    SynthesisError,
    TerminalIngredients,
    build_offline_sdp,
    recover_terminal_ingredients,
    synthesize,
    verify_lyapunov_decrease,
)
from .terminal import TerminalSet, check_membership, soundness_check

__all__ = [
    "AdmmOptions",
    "AffineMatrixExpr",
    "ModelValidationError",
    "OcpSolution",
    "OcpStatus",
    "Scenario",
    "Scheme",
    "SdpProblem",
    "SelectionMaps",
    "SimTrace",
    "SolveOptions",
    "SolveResult",
    "SolveStatus",
    "SubsystemModel",
    "SynthesisError",
    "TerminalIngredients",
    "TerminalSet",
    "Topology",
    "assemble_global",
    "build_offline_sdp",
    "build_selection_maps",
    "check_membership",
    "eval_expr",
    "evaluate_cost",
    "feasibility_sweep",
    "lift_block_diagonal",
    "load_scenario",
    "neighbor_embed",
    "recover_terminal_ingredients",
    "run",
    "run_consensus",
    "solve",
    "solve_ocp",
    "soundness_check",
    "synthesize",
    "verify_lyapunov_decrease",
    "write_trace_csv",
]
