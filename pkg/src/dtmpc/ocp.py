"""Assembly and solution of the three online optimal control problems.

Schemes: origin-centered adaptive sets with quadratic row constraints
(``adap``), free centers with quadratic rows (``asym``) and free centers
with relaxed linear rows (``rlxd``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .model import SelectionMaps, SubsystemModel, Topology, validate_models
from .sdp import (
    Lin,
    QuadForm,
    SdpProblem,
    SolveOptions,
    SolveStatus,
    lift_quadratic_objective,
    solve,
)
from .synthesis import TerminalIngredients
from .terminal import (
    TerminalSet,
    check_membership,
    invariance_lmi,
    input_row_lmi_linear,
    input_row_lmi_quadratic,
    membership_lmi,
    state_row_lmi_linear,
    state_row_lmi_quadratic,
)


class Scheme(Enum):
    """Online scheme: terminal-set parametrization and row-constraint form."""

    ADAP = "adap"   # center pinned to the origin, quadratic rows
    ASYM = "asym"   # free center, quadratic rows
    RLXD = "rlxd"   # free center, relaxed linear rows

    @property
    def free_center(self) -> bool:
        return self is not Scheme.ADAP

    @property
    def linear_rows(self) -> bool:
        return self is Scheme.RLXD


class OcpStatus(Enum):
    OPTIMAL = "OPTIMAL"
    INFEASIBLE = "INFEASIBLE"
    NUMERICAL_FAILURE = "NUMFAIL"


@dataclass
class OcpSolution:
    """Optimal trajectories plus terminal-set parameters per subsystem."""

    x: np.ndarray                  # (T+1, n) global states
    u: np.ndarray                  # (T, m) global inputs
    sets: list[TerminalSet]
    multipliers: dict[str, float]
    objective: float

    def to_dict(self, ingredients: TerminalIngredients | None = None) -> dict:
        data = {
            "x": self.x.tolist(),
            "u": self.u.tolist(),
            "objective": self.objective,
            "sets": [{"c": ts.c.tolist(), "a": ts.a} for ts in self.sets],
        }
        if ingredients is not None:
            for entry, P in zip(data["sets"], ingredients.P):
                entry["P"] = P.tolist()
        return data


@dataclass
class OcpOutcome:
    status: OcpStatus
    solution: OcpSolution | None = None
    detail: str = ""

    @property
    def feasible(self) -> bool:
        return self.status is OcpStatus.OPTIMAL


def _x_name(j: int, t: int, d: int) -> str:
    return f"x{j}_{t}_{d}"


def _u_name(i: int, t: int, d: int) -> str:
    return f"u{i}_{t}_{d}"


@dataclass
class OcpLayout:
    """Variable naming for one OCP instance, used for extraction and ADMM sharing."""

    T: int
    state_dims: tuple[int, ...]
    input_dims: tuple[int, ...]
    free_center: bool

    def x_vars(self, j: int) -> list[str]:
        return [_x_name(j, t, d) for t in range(self.T + 1)
                for d in range(self.state_dims[j])]

    def set_vars(self, j: int) -> list[str]:
        names = [f"a{j}"]
        if self.free_center:
            names += [f"c{j}_{d}" for d in range(self.state_dims[j])]
        return names


def _declare_trajectory_vars(problem: SdpProblem, layout: OcpLayout, i: int):
    for t in range(layout.T + 1):
        for d in range(layout.state_dims[i]):
            problem.add_var(_x_name(i, t, d))
    for t in range(layout.T):
        for d in range(layout.input_dims[i]):
            problem.add_var(_u_name(i, t, d))


def _declare_set_vars(problem: SdpProblem, layout: OcpLayout, i: int):
    problem.add_var(f"a{i}", lb=0.0)
    if layout.free_center:
        for d in range(layout.state_dims[i]):
            problem.add_var(f"c{i}_{d}")


def _x_lin(i: int, t: int, dims) -> np.ndarray:
    return np.array([Lin.var(_x_name(i, t, d)) for d in range(dims[i])], dtype=object)


def _u_lin(i: int, t: int, dims) -> np.ndarray:
    return np.array([Lin.var(_u_name(i, t, d)) for d in range(dims[i])], dtype=object)


def _set_lins(topology: Topology, maps: SelectionMaps, free_center: bool):
    a = {j: Lin.var(f"a{j}") for j in range(topology.M)}
    if free_center:
        c = {j: [Lin.var(f"c{j}_{d}") for d in range(maps.state_dims[j])]
             for j in range(topology.M)}
    else:
        c = {j: [0.0] * maps.state_dims[j] for j in range(topology.M)}
    return a, c


def add_subsystem_constraints(
    problem: SdpProblem,
    scheme: Scheme,
    i: int,
    T: int,
    ingredients: TerminalIngredients,
    models: list[SubsystemModel],
    topology: Topology,
    maps: SelectionMaps,
    a: dict,
    c: dict,
):
    """All constraints attributed to subsystem i: dynamics, stage rows, terminal LMIs.

    Multiplier variables are declared here, fresh per row and neighbor.
    Shared with the consensus solver, which builds per-agent problems from
    exactly this partition.
    """
    mod = models[i]
    nbrs = topology.neighbors[i]
    dims = maps.state_dims

    def x_N(t):
        return np.concatenate([_x_lin(j, t, dims) for j in nbrs])

    # Dynamics x_i(t+1) = A_Ni x_Ni(t) + B u_i(t).
    for t in range(T):
        rhs = mod.A_Ni.astype(object) @ x_N(t) + mod.B.astype(object) @ _u_lin(i, t, maps.input_dims)
        xi_next = _x_lin(i, t + 1, dims)
        for d in range(mod.n):
            problem.add_equality(xi_next[d] - rhs[d])

    # Stage constraints: states at t = 0..T, inputs at t = 0..T-1.
    for t in range(T + 1):
        rows = mod.G_Ni.astype(object) @ x_N(t)
        for k in range(len(mod.g_Ni)):
            problem.add_inequality(rows[k] - float(mod.g_Ni[k]))
    for t in range(T):
        rows = mod.H.astype(object) @ _u_lin(i, t, maps.input_dims)
        for l in range(len(mod.h)):
            problem.add_inequality(rows[l] - float(mod.h[l]))

    # Terminal membership.
    xT = list(_x_lin(i, T, dims))
    problem.add_psd(membership_lmi(ingredients.P_inv(i), xT, c[i], a[i]))

    # Invariance with one multiplier per neighbor.
    lam = {j: problem.add_var(f"lam{i}_{j}", lb=0.0) for j in nbrs}
    problem.add_psd(invariance_lmi(i, ingredients, models, topology, maps, a, c, lam))

    # Row constraints on the terminal-set product.
    if scheme.linear_rows:
        for k in range(len(mod.g_Ni)):
            sig = {j: problem.add_var(f"sig{i}_{k}_{j}", lb=0.0) for j in nbrs}
            problem.add_psd(state_row_lmi_linear(
                i, k, ingredients, models, topology, maps, a, c, sig))
        for l in range(len(mod.h)):
            bet = {j: problem.add_var(f"bet{i}_{l}_{j}", lb=0.0) for j in nbrs}
            problem.add_psd(input_row_lmi_linear(
                i, l, ingredients, models, topology, maps, a, c, bet))
    else:
        for k in range(len(mod.g_Ni)):
            tau = {j: problem.add_var(f"tau{i}_{k}_{j}", lb=0.0) for j in nbrs}
            problem.add_psd(state_row_lmi_quadratic(
                i, k, ingredients, models, topology, maps, a, c, tau))
        for l in range(len(mod.h)):
            rho = {j: problem.add_var(f"rho{i}_{l}_{j}", lb=0.0) for j in nbrs}
            problem.add_psd(input_row_lmi_quadratic(
                i, l, ingredients, models, topology, maps, a, c, rho))


def cost_quadform(
    T: int,
    ingredients: TerminalIngredients,
    models: list[SubsystemModel],
    topology: Topology,
    maps: SelectionMaps,
) -> QuadForm:
    """Global quadratic cost over the stacked trajectory variables."""
    dims, idims = maps.state_dims, maps.input_dims
    names: list[str] = []
    for t in range(T + 1):
        for j in range(topology.M):
            names += [_x_name(j, t, d) for d in range(dims[j])]
    for t in range(T):
        for i in range(topology.M):
            names += [_u_name(i, t, d) for d in range(idims[i])]
    n, m = maps.n, maps.m
    Qg = sum(maps.W[i].T @ mod.Q_Ni @ maps.W[i] for i, mod in enumerate(models))
    Pg = np.zeros((n, n))
    for i in range(topology.M):
        Pg += maps.U[i].T @ ingredients.P[i] @ maps.U[i]
    Rg = np.zeros((m, m))
    for i, mod in enumerate(models):
        Rg += maps.V[i].T @ mod.R @ maps.V[i]
    size = (T + 1) * n + T * m
    Qm = np.zeros((size, size))
    for t in range(T):
        Qm[t * n:(t + 1) * n, t * n:(t + 1) * n] = Qg
    Qm[T * n:(T + 1) * n, T * n:(T + 1) * n] = Pg
    off = (T + 1) * n
    for t in range(T):
        Qm[off + t * m:off + (t + 1) * m, off + t * m:off + (t + 1) * m] = Rg
    return QuadForm(names, Qm)


def build_ocp(
    scheme: Scheme,
    x0: np.ndarray,
    T: int,
    ingredients: TerminalIngredients,
    models: list[SubsystemModel],
    topology: Topology,
    maps: SelectionMaps,
    pin_center_to_zero: bool = False,
    epigraph: bool = True,
) -> tuple[SdpProblem, OcpLayout]:
    """Assemble the full online OCP for the given scheme and initial state."""
    if T < 1:
        raise ValueError("prediction horizon must be at least 1")
    validate_models(models, topology, maps)
    x0 = np.asarray(x0, dtype=float).ravel()
    if len(x0) != maps.n:
        raise ValueError(f"x0 must have dimension {maps.n}")

    free_center = scheme.free_center and not pin_center_to_zero
    layout = OcpLayout(T, maps.state_dims, maps.input_dims, free_center)
    problem = SdpProblem()
    for i in range(topology.M):
        _declare_trajectory_vars(problem, layout, i)
    for i in range(topology.M):
        _declare_set_vars(problem, layout, i)

    # Initial condition.
    for j in range(topology.M):
        xj0 = _x_lin(j, 0, maps.state_dims)
        off = maps.state_offset(j)
        for d in range(maps.state_dims[j]):
            problem.add_equality(xj0[d] - float(x0[off + d]))

    a, c = _set_lins(topology, maps, free_center)
    for i in range(topology.M):
        add_subsystem_constraints(problem, scheme, i, T, ingredients, models,
                                  topology, maps, a, c)

    problem.obj_quad = cost_quadform(T, ingredients, models, topology, maps)
    if epigraph:
        lift_quadratic_objective(problem)
    return problem, layout


def evaluate_cost(
    x: np.ndarray,
    u: np.ndarray,
    ingredients: TerminalIngredients,
    models: list[SubsystemModel],
    topology: Topology,
    maps: SelectionMaps,
) -> float:
    """Exact quadratic cost of given trajectories (stage sums plus terminal blocks)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    T = x.shape[0] - 1
    total = 0.0
    for i, mod in enumerate(models):
        for t in range(T):
            xN = maps.W[i] @ x[t]
            ui = maps.V[i] @ u[t]
            total += float(xN @ mod.Q_Ni @ xN + ui @ mod.R @ ui)
        xiT = maps.U[i] @ x[T]
        total += float(xiT @ ingredients.P[i] @ xiT)
    return total


@dataclass
class ValidationTolerances:
    dynamics: float = 1e-6
    constraints: float = 1e-6
    membership: float = 1e-6


def extract_solution(
    assignment: dict[str, float],
    layout: OcpLayout,
    ingredients: TerminalIngredients,
    models: list[SubsystemModel],
    topology: Topology,
    maps: SelectionMaps,
) -> OcpSolution:
    T = layout.T
    x = np.zeros((T + 1, maps.n))
    for j in range(topology.M):
        off = maps.state_offset(j)
        for t in range(T + 1):
            for d in range(maps.state_dims[j]):
                x[t, off + d] = assignment[_x_name(j, t, d)]
    u = np.zeros((T, maps.m))
    for i in range(topology.M):
        off = maps.input_offset(i)
        for t in range(T):
            for d in range(maps.input_dims[i]):
                u[t, off + d] = assignment[_u_name(i, t, d)]
    sets = []
    for j in range(topology.M):
        a = max(0.0, assignment[f"a{j}"])
        if layout.free_center:
            cj = np.array([assignment[f"c{j}_{d}"] for d in range(maps.state_dims[j])])
        else:
            cj = np.zeros(maps.state_dims[j])
        sets.append(TerminalSet(cj, a))
    mults = {k: v for k, v in assignment.items()
             if k.startswith(("lam", "tau", "rho", "sig", "bet"))}
    J = evaluate_cost(x, u, ingredients, models, topology, maps)
    return OcpSolution(x, u, sets, mults, J)


def validate_solution(
    sol: OcpSolution,
    ingredients: TerminalIngredients,
    models: list[SubsystemModel],
    topology: Topology,
    maps: SelectionMaps,
    tols: ValidationTolerances | None = None,
) -> list[str]:
    """Check trajectory, constraint and membership invariants; returns violations."""
    tols = tols or ValidationTolerances()
    issues = []
    T = sol.x.shape[0] - 1
    for i, mod in enumerate(models):
        for t in range(T):
            resid = maps.U[i] @ sol.x[t + 1] - (
                mod.A_Ni @ (maps.W[i] @ sol.x[t]) + mod.B @ (maps.V[i] @ sol.u[t]))
            if np.abs(resid).max() > tols.dynamics:
                issues.append(f"dynamics residual {np.abs(resid).max():.2e} at i={i} t={t}")
        for t in range(T + 1):
            viol = (mod.G_Ni @ (maps.W[i] @ sol.x[t]) - mod.g_Ni).max()
            if viol > tols.constraints:
                issues.append(f"state constraint violated by {viol:.2e} at i={i} t={t}")
        for t in range(T):
            viol = (mod.H @ (maps.V[i] @ sol.u[t]) - mod.h).max()
            if viol > tols.constraints:
                issues.append(f"input constraint violated by {viol:.2e} at i={i} t={t}")
        if not check_membership(maps.U[i] @ sol.x[T], sol.sets[i],
                                ingredients.P[i], tol=tols.membership):
            issues.append(f"terminal membership violated at i={i}")
    return issues


def solve_ocp(
    scheme: Scheme,
    x0: np.ndarray,
    T: int,
    ingredients: TerminalIngredients,
    models: list[SubsystemModel],
    topology: Topology,
    maps: SelectionMaps,
    options: SolveOptions | None = None,
    pin_center_to_zero: bool = False,
) -> OcpOutcome:
    """Build and solve one OCP instance; infeasibility is a clean outcome."""
    problem, layout = build_ocp(scheme, x0, T, ingredients, models, topology,
                                maps, pin_center_to_zero=pin_center_to_zero)
    result = solve(problem, options)
    if result.status is SolveStatus.INFEASIBLE:
        return OcpOutcome(OcpStatus.INFEASIBLE, detail=result.message)
    if result.status is not SolveStatus.OPTIMAL:
        return OcpOutcome(OcpStatus.NUMERICAL_FAILURE, detail=result.message)
    sol = extract_solution(result.assignment, layout, ingredients, models,
                           topology, maps)
    issues = validate_solution(sol, ingredients, models, topology, maps,
                               ValidationTolerances(1e-6, 1e-6, 1e-6))
    if issues:
        return OcpOutcome(OcpStatus.NUMERICAL_FAILURE,
                          detail="; ".join(issues))
    return OcpOutcome(OcpStatus.OPTIMAL, sol)


def solution_to_json(outcome: OcpOutcome, path: str,
                     ingredients: TerminalIngredients | None = None,
                     scheme: Scheme | None = None):
    data = {"status": outcome.status.value}
    if scheme is not None:
        data["scheme"] = scheme.value
    if outcome.solution is not None:
        data.update(outcome.solution.to_dict(ingredients))
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
