"""Offline synthesis of terminal cost blocks P_i and distributed gains K_Ni.

Maximizes sum_i trace(E_i) over block-diagonal E = P^-1, gain parameters
Y_Ni and per-neighborhood relaxation matrices, subject to one block LMI per
subsystem and a coupling condition that makes the lifted relaxation terms
sum to a negative semidefinite matrix.  Every emitted ingredients object is
gated on an explicit global Lyapunov-decrease check.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import (
    ModelValidationError,
    SelectionMaps,
    SubsystemModel,
    Topology,
    lift_block_diagonal,
    neighborhood_dim,
    validate_models,
)
from .sdp import (
    AffineMatrixExpr,
    Lin,
    SdpProblem,
    SolveOptions,
    SolveResult,
    SolveStatus,
    solve,
    sqrtm_psd,
)


class SynthesisError(RuntimeError):
    """Offline synthesis failed (infeasible design or numerical breakdown)."""


@dataclass
class TerminalIngredients:
    """Terminal cost blocks P_i (positive definite) and gains K_Ni."""

    P: list[np.ndarray]
    K: list[np.ndarray]

    def P_inv(self, i: int) -> np.ndarray:
        return np.linalg.inv(self.P[i])

    def to_json(self, path: str):
        data = {
            "subsystems": [
                {"P": P.tolist(), "K": K.tolist()}
                for P, K in zip(self.P, self.K)
            ]
        }
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2)

    @staticmethod
    def from_json(path: str) -> "TerminalIngredients":
        with open(path) as fh:
            data = json.load(fh)
        return TerminalIngredients(
            P=[np.atleast_2d(np.array(s["P"], dtype=float)) for s in data["subsystems"]],
            K=[np.atleast_2d(np.array(s["K"], dtype=float)) for s in data["subsystems"]],
        )


def _sym_matrix_vars(problem: SdpProblem, base: str, n: int) -> np.ndarray:
    """Symmetric n x n matrix of fresh scalar variables (upper triangle)."""
    out = np.empty((n, n), dtype=object)
    for r in range(n):
        for c in range(r, n):
            var = problem.add_var(f"{base}_{r}_{c}")
            out[r, c] = var
            out[c, r] = var
    return out


def _matrix_vars(problem: SdpProblem, base: str, rows: int, cols: int) -> np.ndarray:
    out = np.empty((rows, cols), dtype=object)
    for r in range(rows):
        for c in range(cols):
            out[r, c] = problem.add_var(f"{base}_{r}_{c}")
    return out


def _block(rows) -> np.ndarray:
    """Assemble a block matrix of object/float arrays."""
    return np.block([[np.asarray(b, dtype=object) for b in row] for row in rows])


def build_offline_sdp(
    models: list[SubsystemModel],
    topology: Topology,
    maps: SelectionMaps,
    eps_lmi: float = 1e-6,
    eps_e: float = 1e-6,
) -> SdpProblem:
    """Assemble the offline trace-maximization SDP.

    Variables: inverse-cost blocks E_i, gain parameters Y_Ni and symmetric
    relaxation matrices per neighborhood.  eps_lmi shifts the block LMIs to
    leave margin for the Lyapunov-decrease gate; eps_e keeps E invertible.
    """
    validate_models(models, topology, maps)
    problem = SdpProblem()
    M = topology.M
    dims = maps.state_dims

    E_blocks = [_sym_matrix_vars(problem, f"E{i}", dims[i]) for i in range(M)]
    Y = []
    Hrel = []
    for i in range(M):
        nN = neighborhood_dim(topology, dims, i)
        Y.append(_matrix_vars(problem, f"Y{i}", models[i].m, nN))
        Hrel.append(_sym_matrix_vars(problem, f"Hrel{i}", nN))

    trace_terms = Lin(0.0)
    for i in range(M):
        for r in range(dims[i]):
            trace_terms = trace_terms + E_blocks[i][r, r]
    problem.obj_lin = -trace_terms  # maximize total trace

    for i in range(M):
        problem.add_psd(AffineMatrixExpr.from_entries(
            E_blocks[i] - eps_e * np.eye(dims[i])
        ))

    for i in range(M):
        mod = models[i]
        nbrs = topology.neighbors[i]
        nN = neighborhood_dim(topology, dims, i)
        ni, mi = mod.n, mod.m
        E_Ni = np.zeros((nN, nN), dtype=object)
        off = 0
        for j in nbrs:
            E_Ni[off:off + dims[j], off:off + dims[j]] = E_blocks[j]
            off += dims[j]
        Tii = maps.T[(i, i)]
        Qh = sqrtm_psd(mod.Q_Ni)
        Rh = sqrtm_psd(mod.R)
        AE_BY = mod.A_Ni.astype(object) @ E_Ni + mod.B.astype(object) @ Y[i]
        lifted_Ei = Tii.T.astype(object) @ E_blocks[i] @ Tii.astype(object)
        lmi = _block([
            [lifted_Ei + Hrel[i], AE_BY.T, E_Ni @ Qh, Y[i].T @ Rh],
            [AE_BY, E_blocks[i], np.zeros((ni, nN)), np.zeros((ni, mi))],
            [Qh @ E_Ni, np.zeros((nN, ni)), np.eye(nN), np.zeros((nN, mi))],
            [Rh @ Y[i], np.zeros((mi, ni)), np.zeros((mi, nN)), np.eye(mi)],
        ])
        d = lmi.shape[0]
        problem.add_psd(AffineMatrixExpr.from_entries(lmi - eps_lmi * np.eye(d)))

    # Lifted relaxation terms must sum to a negative semidefinite matrix.
    n = maps.n
    coupling = np.zeros((n, n), dtype=object)
    for i in range(M):
        coupling = coupling + maps.W[i].T.astype(object) @ Hrel[i] @ maps.W[i].astype(object)
    problem.add_psd(AffineMatrixExpr.from_entries(-coupling))
    return problem


def recover_terminal_ingredients(
    result: SolveResult,
    models: list[SubsystemModel],
    topology: Topology,
    maps: SelectionMaps,
    cond_limit: float = 1e10,
) -> TerminalIngredients:
    """Invert the solved E blocks into P_i and recover the gains K_Ni."""
    if result.status is not SolveStatus.OPTIMAL:
        raise SynthesisError(f"offline SDP did not solve to optimality: {result.status}")
    dims = maps.state_dims
    E_vals = []
    for i in range(topology.M):
        Ei = np.zeros((dims[i], dims[i]))
        for r in range(dims[i]):
            for c in range(r, dims[i]):
                Ei[r, c] = Ei[c, r] = result.assignment[f"E{i}_{r}_{c}"]
        eigs = np.linalg.eigvalsh(Ei)
        if eigs.min() <= 1e-12 or np.linalg.cond(Ei) > cond_limit:
            raise SynthesisError(f"E block {i} is near singular (cond > {cond_limit:g})")
        E_vals.append(Ei)

    P = [np.linalg.inv(Ei) for Ei in E_vals]
    K = []
    for i in range(topology.M):
        nN = neighborhood_dim(topology, dims, i)
        Yi = np.zeros((models[i].m, nN))
        for r in range(models[i].m):
            for c in range(nN):
                Yi[r, c] = result.assignment[f"Y{i}_{r}_{c}"]
        E_Ni = lift_block_diagonal(E_vals, maps.W[i])
        if np.linalg.cond(E_Ni) > cond_limit:
            raise SynthesisError(f"E_N{i} is near singular (cond > {cond_limit:g})")
        K.append(Yi @ np.linalg.inv(E_Ni))
    return TerminalIngredients(P=[0.5 * (p + p.T) for p in P], K=K)


@dataclass
class LyapunovReport:
    """Outcome of the global closed-loop Lyapunov-decrease check."""

    max_decrease_eig: float
    spectral_radius: float
    passed: bool
    tol: float = 1e-7


def verify_lyapunov_decrease(
    ingredients: TerminalIngredients,
    models: list[SubsystemModel],
    topology: Topology,
    maps: SelectionMaps,
    tol: float = 1e-7,
) -> LyapunovReport:
    """Check A_cl^T P A_cl - P + Q + K^T R K <= 0 for the assembled closed loop."""
    n, m = maps.n, maps.m
    A = sum(maps.U[i].T @ mod.A_Ni @ maps.W[i] for i, mod in enumerate(models))
    B = sum(maps.U[i].T @ mod.B @ maps.V[i] for i, mod in enumerate(models))
    K = sum(maps.V[i].T @ ingredients.K[i] @ maps.W[i] for i in range(topology.M))
    P = lift_block_diagonal(ingredients.P, np.eye(n))
    Q = sum(maps.W[i].T @ mod.Q_Ni @ maps.W[i] for i, mod in enumerate(models))
    R = lift_block_diagonal([mod.R for mod in models], np.eye(m))
    A_cl = A + B @ K
    D = A_cl.T @ P @ A_cl - P + Q + K.T @ R @ K
    max_eig = float(np.linalg.eigvalsh(0.5 * (D + D.T)).max())
    rho = float(np.abs(np.linalg.eigvals(A_cl)).max())
    return LyapunovReport(max_eig, rho, max_eig <= tol, tol)


def synthesize(
    models: list[SubsystemModel],
    topology: Topology,
    maps: SelectionMaps,
    options: SolveOptions | None = None,
) -> tuple[TerminalIngredients, LyapunovReport]:
    """Full offline pipeline: build, solve, recover and gate on the decrease check."""
    problem = build_offline_sdp(models, topology, maps)
    result = solve(problem, options)
    if result.status is SolveStatus.INFEASIBLE:
        raise SynthesisError("offline synthesis is infeasible for this system")
    ingredients = recover_terminal_ingredients(result, models, topology, maps)
    report = verify_lyapunov_decrease(ingredients, models, topology, maps)
    if not report.passed:
        raise SynthesisError(
            f"Lyapunov-decrease gate failed (max eigenvalue {report.max_decrease_eig:.3e})"
        )
    return ingredients, report
