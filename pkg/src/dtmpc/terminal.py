"""Online terminal-set constraints as affine matrix expressions.

Every builder returns an AffineMatrixExpr that is affine in the terminal-set
radii a_i (square roots of the set sizes), the centers c_i, the trajectory
endpoint and the nonnegative S-procedure multipliers.  Entries may be Lin
expressions or plain numbers, so the same builders serve both the OCP
assembly (variables) and standalone feasibility probes (constants).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SelectionMaps, SubsystemModel, Topology, neighbor_embed
from .sdp import AffineMatrixExpr, Lin
from .synthesis import TerminalIngredients


@dataclass
class TerminalSet:
    """Ellipsoid (x - c)^T P (x - c) <= a^2 with radius a >= 0."""

    c: np.ndarray
    a: float

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.a = float(self.a)
        if self.a < -1e-12:
            raise ValueError("terminal set radius must be nonnegative")

    @property
    def alpha(self) -> float:
        return self.a ** 2


def check_membership(x, ts: TerminalSet, P: np.ndarray, tol: float = 1e-9) -> bool:
    """Direct ellipsoid membership predicate."""
    d = np.asarray(x, dtype=float).ravel() - ts.c
    return float(d @ np.atleast_2d(P) @ d) <= ts.alpha + tol


def _as_obj_vec(x, n: int) -> np.ndarray:
    out = np.empty(n, dtype=object)
    seq = list(np.atleast_1d(x)) if not isinstance(x, (list, tuple)) else list(x)
    if len(seq) != n:
        raise ValueError(f"expected length {n}, got {len(seq)}")
    for k, e in enumerate(seq):
        out[k] = e
    return out


def _scaled_identity_blockdiag(values: dict, topology: Topology,
                               maps: SelectionMaps, i: int) -> np.ndarray:
    """Blockdiag of a_j * I_{n_j} over j in N_i (entries Lin or float)."""
    nbrs = topology.neighbors[i]
    nN = sum(maps.state_dims[j] for j in nbrs)
    out = np.zeros((nN, nN), dtype=object)
    off = 0
    for j in nbrs:
        for d in range(maps.state_dims[j]):
            out[off + d, off + d] = values[j]
        off += maps.state_dims[j]
    return out


def _stack_centers(centers: dict, topology: Topology, maps: SelectionMaps,
                   i: int) -> np.ndarray:
    nbrs = topology.neighbors[i]
    parts = [_as_obj_vec(centers[j], maps.state_dims[j]) for j in nbrs]
    return np.concatenate(parts)


def _multiplier_sum_matrix(mult: dict, ingredients: TerminalIngredients,
                           topology: Topology, maps: SelectionMaps, i: int) -> np.ndarray:
    """Sum over neighbors of mult_j times neighbor j's embedded ellipsoid matrix."""
    nbrs = topology.neighbors[i]
    nN = sum(maps.state_dims[j] for j in nbrs)
    out = np.zeros((nN, nN), dtype=object)
    for j in nbrs:
        Pij = neighbor_embed(ingredients.P[j], j, maps, i, topology)
        out = out + Pij.astype(object) * mult[j]
    return out


def membership_lmi(P_inv: np.ndarray, x_T, c, a) -> AffineMatrixExpr:
    """Endpoint membership in Schur form: [[P^-1 a, x_T - c], [., a]] >= 0."""
    P_inv = np.atleast_2d(P_inv)
    n = P_inv.shape[0]
    xv = _as_obj_vec(x_T, n)
    cv = _as_obj_vec(c, n)
    diff = xv - cv
    entries = np.empty((n + 1, n + 1), dtype=object)
    for r in range(n):
        for col in range(n):
            entries[r, col] = P_inv[r, col] * a
        entries[r, n] = diff[r]
        entries[n, r] = diff[r]
    entries[n, n] = a
    return AffineMatrixExpr.from_entries(entries)


def invariance_lmi(
    i: int,
    ingredients: TerminalIngredients,
    models: list[SubsystemModel],
    topology: Topology,
    maps: SelectionMaps,
    a: dict,
    c: dict,
    lam: dict,
) -> AffineMatrixExpr:
    """One-step invariance of terminal set i under the terminal controller.

    Affine in the radii a_j, centers c_j (j in N_i) and multipliers lam[j].
    """
    mod = models[i]
    ni = mod.n
    nbrs = topology.neighbors[i]
    nN = mod.n_Ni
    AK = mod.A_Ni + mod.B @ ingredients.K[i]
    P_inv = ingredients.P_inv(i)

    alpha_half = _scaled_identity_blockdiag(a, topology, maps, i)
    c_N = _stack_centers(c, topology, maps, i)
    c_i = _as_obj_vec(c[i], ni)
    top_mid = AK.astype(object) @ alpha_half            # ni x nN
    top_right = AK.astype(object) @ c_N - c_i           # ni
    mult_block = _multiplier_sum_matrix(lam, ingredients, topology, maps, i)
    lam_sum = sum((lam[j] for j in nbrs), Lin(0.0))

    d = ni + nN + 1
    entries = np.empty((d, d), dtype=object)
    entries.fill(0.0)
    for r in range(ni):
        for col in range(ni):
            entries[r, col] = P_inv[r, col] * a[i]
        for col in range(nN):
            entries[r, ni + col] = top_mid[r, col]
            entries[ni + col, r] = top_mid[r, col]
        entries[r, ni + nN] = top_right[r]
        entries[ni + nN, r] = top_right[r]
    for r in range(nN):
        for col in range(nN):
            entries[ni + r, ni + col] = mult_block[r, col]
    entries[ni + nN, ni + nN] = a[i] - lam_sum
    return AffineMatrixExpr.from_entries(entries)


def _row_lmi_quadratic(row: np.ndarray, bound: float, ingredients, topology,
                       maps, i: int, a: dict, c: dict, mult: dict) -> AffineMatrixExpr:
    if bound <= 0:
        raise ValueError(
            "quadratic row form requires a strictly positive bound "
            f"(got {bound:g}); use the linear form instead"
        )
    nN = len(row)
    alpha_half = _scaled_identity_blockdiag(a, topology, maps, i)
    c_N = _stack_centers(c, topology, maps, i)
    row_alpha = row.astype(object) @ alpha_half          # nN
    row_c = row.astype(object) @ c_N                     # scalar
    mult_block = _multiplier_sum_matrix(mult, ingredients, topology, maps, i)
    mult_sum = sum((mult[j] for j in topology.neighbors[i]), Lin(0.0))

    d = 1 + nN + 1
    entries = np.empty((d, d), dtype=object)
    entries.fill(0.0)
    entries[0, 0] = float(bound)
    for k in range(nN):
        entries[0, 1 + k] = row_alpha[k]
        entries[1 + k, 0] = row_alpha[k]
        for l in range(nN):
            entries[1 + k, 1 + l] = mult_block[k, l]
    entries[0, d - 1] = row_c
    entries[d - 1, 0] = row_c
    entries[d - 1, d - 1] = float(bound) - mult_sum
    return AffineMatrixExpr.from_entries(entries)


def _row_lmi_linear(row: np.ndarray, bound: float, ingredients, topology,
                    maps, i: int, a: dict, c: dict, mult: dict) -> AffineMatrixExpr:
    nN = len(row)
    alpha_half = _scaled_identity_blockdiag(a, topology, maps, i)
    c_N = _stack_centers(c, topology, maps, i)
    row_alpha = row.astype(object) @ alpha_half
    row_c = row.astype(object) @ c_N
    mult_block = _multiplier_sum_matrix(mult, ingredients, topology, maps, i)
    mult_sum = sum((mult[j] for j in topology.neighbors[i]), Lin(0.0))

    d = nN + 1
    entries = np.empty((d, d), dtype=object)
    entries.fill(0.0)
    for k in range(nN):
        for l in range(nN):
            entries[k, l] = mult_block[k, l]
        entries[k, nN] = 0.5 * row_alpha[k]
        entries[nN, k] = 0.5 * row_alpha[k]
    entries[nN, nN] = float(bound) - row_c - mult_sum
    return AffineMatrixExpr.from_entries(entries)


def state_row_lmi_quadratic(i, k, ingredients, models, topology, maps,
                            a, c, tau) -> AffineMatrixExpr:
    """Row k of the neighborhood state constraint, quadratic (squared) form."""
    mod = models[i]
    return _row_lmi_quadratic(mod.G_Ni[k], float(mod.g_Ni[k]), ingredients,
                              topology, maps, i, a, c, tau)


def input_row_lmi_quadratic(i, l, ingredients, models, topology, maps,
                            a, c, rho) -> AffineMatrixExpr:
    """Row l of the input constraint under the terminal gain, quadratic form."""
    mod = models[i]
    row = mod.H[l] @ ingredients.K[i]
    return _row_lmi_quadratic(row, float(mod.h[l]), ingredients,
                              topology, maps, i, a, c, rho)


def state_row_lmi_linear(i, k, ingredients, models, topology, maps,
                         a, c, sigma) -> AffineMatrixExpr:
    """Row k of the neighborhood state constraint, relaxed linear form."""
    mod = models[i]
    return _row_lmi_linear(mod.G_Ni[k], float(mod.g_Ni[k]), ingredients,
                           topology, maps, i, a, c, sigma)


def input_row_lmi_linear(i, l, ingredients, models, topology, maps,
                         a, c, beta) -> AffineMatrixExpr:
    """Row l of the input constraint under the terminal gain, relaxed linear form."""
    mod = models[i]
    row = mod.H[l] @ ingredients.K[i]
    return _row_lmi_linear(row, float(mod.h[l]), ingredients,
                           topology, maps, i, a, c, beta)


def sample_in_ellipsoid(P: np.ndarray, c: np.ndarray, a: float, count: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Uniform samples in the ellipsoid (x - c)^T P (x - c) <= a^2; shape (count, n)."""
    P = np.atleast_2d(P)
    n = P.shape[0]
    c = np.asarray(c, dtype=float).ravel()
    w, v = np.linalg.eigh(P)
    L = (v / np.sqrt(w)) @ v.T   # P^{-1/2}
    dirs = rng.standard_normal((count, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = rng.random(count) ** (1.0 / n)
    return c + a * (dirs * radii[:, None]) @ L.T


@dataclass
class SoundnessReport:
    """Worst empirical violations of the implications certified by the LMIs."""

    samples: int
    max_invariance_violation: float
    max_state_violation: float
    max_input_violation: float

    def passed(self, tol: float = 1e-6) -> bool:
        return max(self.max_invariance_violation, self.max_state_violation,
                   self.max_input_violation) <= tol


def soundness_check(
    ingredients: TerminalIngredients,
    models: list[SubsystemModel],
    topology: Topology,
    maps: SelectionMaps,
    sets: list[TerminalSet],
    samples: int = 10_000,
    seed: int = 0,
) -> SoundnessReport:
    """Monte-Carlo check of invariance and constraint satisfaction on the set product.

    Samples each subsystem's ellipsoid independently (the terminal region is
    their product) and evaluates the invariance, state-row and input-row
    implications on the assembled neighborhood points.
    """
    rng = np.random.default_rng(seed)
    pts = [
        sample_in_ellipsoid(ingredients.P[j], sets[j].c, sets[j].a, samples, rng)
        for j in range(topology.M)
    ]
    inv_v = st_v = in_v = 0.0
    for i, mod in enumerate(models):
        x_N = np.hstack([pts[j] for j in topology.neighbors[i]])
        AK = mod.A_Ni + mod.B @ ingredients.K[i]
        nxt = x_N @ AK.T - sets[i].c
        quad = np.einsum("ij,jk,ik->i", nxt, ingredients.P[i], nxt)
        inv_v = max(inv_v, float((quad - sets[i].alpha).max()))
        st = x_N @ mod.G_Ni.T - mod.g_Ni
        st_v = max(st_v, float(st.max()))
        un = x_N @ (mod.H @ ingredients.K[i]).T - mod.h
        in_v = max(in_v, float(un.max()))
    return SoundnessReport(samples, inv_v, st_v, in_v)
