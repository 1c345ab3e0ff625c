"""Consensus ADMM over the subsystem graph.

Each agent keeps local copies of the variables it shares with its neighbors
(the neighborhood state trajectories and, per neighbor, the terminal-set
radius and center), solves a local conic problem with a quadratic penalty on
disagreement, and exchanges messages synchronously each round.  Scaled-form
consensus updates; multipliers of the terminal LMIs stay private.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import SelectionMaps, SubsystemModel, Topology
from .ocp import (
    OcpLayout,
    OcpOutcome,
    OcpStatus,
    Scheme,
    ValidationTolerances,
    _set_lins,
    _u_name,
    _x_name,
    add_subsystem_constraints,
    evaluate_cost,
    extract_solution,
    validate_solution,
)
from .sdp import Lin, QuadForm, SdpProblem, SolveOptions, SolveStatus, solve
from .synthesis import TerminalIngredients
from .terminal import TerminalSet


@dataclass
class AdmmOptions:
    penalty: float = 1.0
    eps_primal: float = 1e-4
    eps_dual: float = 1e-4
    max_iter: int = 500


@dataclass
class AdmmMessage:
    """One agent's view of the shared coordinates after its local solve."""

    sender: int
    iteration: int
    values: dict[str, float]


@dataclass
class ConsensusState:
    """Iterate data of the consensus scheme."""

    consensus: dict[str, float]
    duals: dict[int, dict[str, float]]
    locals: dict[int, dict[str, float]]
    penalty: float
    residual_history: list[tuple[float, float]] = field(default_factory=list)


def shared_coordinates(scheme: Scheme, layout: OcpLayout, topology: Topology,
                       i: int) -> list[str]:
    """Names of the coordinates agent i shares: x_j trajectories, a_j, c_j, j in N_i."""
    names: list[str] = []
    for j in topology.neighbors[i]:
        names += layout.x_vars(j)
        names += layout.set_vars(j)
    return names


def _build_local_problem(
    scheme: Scheme,
    i: int,
    x0: np.ndarray,
    T: int,
    ingredients: TerminalIngredients,
    models: list[SubsystemModel],
    topology: Topology,
    maps: SelectionMaps,
    layout: OcpLayout,
) -> tuple[SdpProblem, list[str]]:
    """Agent i's local problem without the (iteration-dependent) penalty terms."""
    problem = SdpProblem()
    nbrs = topology.neighbors[i]
    for j in nbrs:
        for t in range(T + 1):
            for d in range(maps.state_dims[j]):
                problem.add_var(_x_name(j, t, d))
    for t in range(T):
        for d in range(maps.input_dims[i]):
            problem.add_var(_u_name(i, t, d))
    for j in nbrs:
        problem.add_var(f"a{j}", lb=0.0)
        if layout.free_center:
            for d in range(maps.state_dims[j]):
                problem.add_var(f"c{j}_{d}")

    # Neighborhood initial condition.
    for j in nbrs:
        off = maps.state_offset(j)
        for d in range(maps.state_dims[j]):
            problem.add_equality(Lin.var(_x_name(j, 0, d)) - float(x0[off + d]))

    a, c = _set_lins(topology, maps, layout.free_center)
    add_subsystem_constraints(problem, scheme, i, T, ingredients, models,
                              topology, maps, a, c)
    shared = shared_coordinates(scheme, layout, topology, i)
    return problem, shared


def _local_cost_quadform(i, T, ingredients, models, topology, maps) -> QuadForm:
    """Agent i's share of the cost over its own copies."""
    mod = models[i]
    nbrs = topology.neighbors[i]
    names: list[str] = []
    for t in range(T + 1):
        for j in nbrs:
            names += [_x_name(j, t, d) for d in range(maps.state_dims[j])]
    for t in range(T):
        names += [_u_name(i, t, d) for d in range(maps.input_dims[i])]
    nN = mod.n_Ni
    mi = mod.m
    size = (T + 1) * nN + T * mi
    Qm = np.zeros((size, size))
    for t in range(T):
        Qm[t * nN:(t + 1) * nN, t * nN:(t + 1) * nN] = mod.Q_Ni
    Tii = maps.T[(i, i)]
    Qm[T * nN:(T + 1) * nN, T * nN:(T + 1) * nN] = Tii.T @ ingredients.P[i] @ Tii
    off = (T + 1) * nN
    for t in range(T):
        Qm[off + t * mi:off + (t + 1) * mi, off + t * mi:off + (t + 1) * mi] = mod.R
    return QuadForm(names, Qm)


def local_step(
    problem: SdpProblem,
    base_quad: QuadForm,
    shared: list[str],
    state: ConsensusState,
    i: int,
    iteration: int,
    options: SolveOptions | None = None,
) -> tuple[OcpStatus, AdmmMessage | None]:
    """Solve agent i's penalized local problem and form its outbound message.

    The penalty (rho/2)||v - z + y||^2 is folded into the quadratic
    objective; the linear part carries the cross terms.
    """
    rho = state.penalty
    names = list(base_quad.names)
    idx = {n: k for k, n in enumerate(names)}
    extra = [g for g in shared if g not in idx]
    for g in extra:
        idx[g] = len(names)
        names.append(g)
    Qm = np.zeros((len(names), len(names)))
    nq = base_quad.matrix.shape[0]
    Qm[:nq, :nq] = base_quad.matrix
    lin = Lin(0.0)
    for g in shared:
        target = state.consensus[g] - state.duals[i][g]
        k = idx[g]
        Qm[k, k] += 0.5 * rho
        lin = lin + Lin(0.5 * rho * target * target, {g: -rho * target})
    problem.obj_quad = QuadForm(names, Qm)
    problem.obj_lin = lin
    result = solve(problem, options)
    if result.status is SolveStatus.INFEASIBLE:
        return OcpStatus.INFEASIBLE, None
    if result.status is not SolveStatus.OPTIMAL:
        return OcpStatus.NUMERICAL_FAILURE, None
    state.locals[i] = result.assignment
    msg = AdmmMessage(i, iteration, {g: result.assignment[g] for g in shared})
    return OcpStatus.OPTIMAL, msg


def residuals(state: ConsensusState, shared_by_agent: dict[int, list[str]],
              consensus_prev: dict[str, float]) -> tuple[float, float]:
    """Primal: disagreement of local copies with the consensus; dual: consensus drift."""
    primal_sq = 0.0
    dual_sq = 0.0
    for i, shared in shared_by_agent.items():
        for g in shared:
            primal_sq += (state.locals[i][g] - state.consensus[g]) ** 2
            dual_sq += (state.consensus[g] - consensus_prev[g]) ** 2
    return float(np.sqrt(primal_sq)), float(state.penalty * np.sqrt(dual_sq))


@dataclass
class AdmmResult:
    status: OcpStatus
    outcome: OcpOutcome
    iterations: int
    residual_history: list[tuple[float, float]]
    trace: list[AdmmMessage] = field(default_factory=list)


def run_consensus(
    scheme: Scheme,
    x0: np.ndarray,
    T: int,
    ingredients: TerminalIngredients,
    models: list[SubsystemModel],
    topology: Topology,
    maps: SelectionMaps,
    options: AdmmOptions | None = None,
    solve_options: SolveOptions | None = None,
    keep_trace: bool = False,
) -> AdmmResult:
    """Synchronous-round consensus solve of the online OCP.

    Converges to the centralized optimum (the problem is convex); local
    infeasibility at any agent is reported as an infeasible instance.
    """
    options = options or AdmmOptions()
    x0 = np.asarray(x0, dtype=float).ravel()
    layout = OcpLayout(T, maps.state_dims, maps.input_dims, scheme.free_center)
    M = topology.M

    locals_: dict[int, tuple[SdpProblem, list[str], QuadForm]] = {}
    shared_by_agent: dict[int, list[str]] = {}
    for i in range(M):
        problem, shared = _build_local_problem(
            scheme, i, x0, T, ingredients, models, topology, maps, layout)
        quad = _local_cost_quadform(i, T, ingredients, models, topology, maps)
        locals_[i] = (problem, shared, quad)
        shared_by_agent[i] = shared

    owners: dict[str, list[int]] = {}
    for i, shared in shared_by_agent.items():
        for g in shared:
            owners.setdefault(g, []).append(i)
    # Only genuinely overlapping coordinates enter the consensus exchange.
    owners = {g: own for g, own in owners.items() if len(own) >= 2}
    shared_by_agent = {i: [g for g in shared if g in owners]
                       for i, shared in shared_by_agent.items()}
    for i in range(M):
        locals_[i] = (locals_[i][0], shared_by_agent[i], locals_[i][2])

    consensus = {g: 0.0 for g in owners}
    # Seed the known coordinates: initial neighborhood states.
    for j in range(M):
        off = maps.state_offset(j)
        for d in range(maps.state_dims[j]):
            name = _x_name(j, 0, d)
            if name in consensus:
                consensus[name] = float(x0[off + d])
    state = ConsensusState(
        consensus=consensus,
        duals={i: {g: 0.0 for g in shared_by_agent[i]} for i in range(M)},
        locals={},
        penalty=options.penalty,
    )

    trace: list[AdmmMessage] = []
    iterations = 0
    converged = False
    for it in range(1, options.max_iter + 1):
        iterations = it
        for i in range(M):
            problem, shared, quad = locals_[i]
            status, msg = local_step(problem, quad, shared, state, i, it,
                                     solve_options)
            if status is not OcpStatus.OPTIMAL:
                return AdmmResult(status, OcpOutcome(status, detail=f"agent {i}"),
                                  it, state.residual_history, trace)
            if keep_trace:
                trace.append(msg)

        prev = dict(state.consensus)
        for g, own in owners.items():
            state.consensus[g] = sum(
                state.locals[i][g] + state.duals[i][g] for i in own) / len(own)
        for i in range(M):
            for g in shared_by_agent[i]:
                state.duals[i][g] += state.locals[i][g] - state.consensus[g]
        primal, dual = residuals(state, shared_by_agent, prev)
        state.residual_history.append((primal, dual))
        if primal <= options.eps_primal and dual <= options.eps_dual:
            converged = True
            break

    if not converged:
        return AdmmResult(
            OcpStatus.NUMERICAL_FAILURE,
            OcpOutcome(OcpStatus.NUMERICAL_FAILURE,
                       detail=f"no convergence in {options.max_iter} iterations "
                              f"(primal {primal:.2e}, dual {dual:.2e})"),
            iterations, state.residual_history, trace)

    # Assemble the consensus solution; inputs are private to their agents.
    assignment = dict(state.consensus)
    for i in range(M):
        for t in range(T):
            for d in range(maps.input_dims[i]):
                name = _u_name(i, t, d)
                assignment[name] = state.locals[i][name]
        for k, v in state.locals[i].items():
            assignment.setdefault(k, v)
    if not layout.free_center:
        for j in range(M):
            for d in range(maps.state_dims[j]):
                assignment.setdefault(f"c{j}_{d}", 0.0)
    sol = extract_solution(assignment, layout, ingredients, models, topology, maps)
    # Consensus averaging leaves residual-scale slack; validate accordingly.
    slack = max(1e-6, 10.0 * state.residual_history[-1][0])
    issues = validate_solution(sol, ingredients, models, topology, maps,
                               ValidationTolerances(slack, slack, slack))
    if issues:
        return AdmmResult(OcpStatus.NUMERICAL_FAILURE,
                          OcpOutcome(OcpStatus.NUMERICAL_FAILURE,
                                     detail="; ".join(issues)),
                          iterations, state.residual_history, trace)
    return AdmmResult(OcpStatus.OPTIMAL, OcpOutcome(OcpStatus.OPTIMAL, sol),
                      iterations, state.residual_history, trace)
