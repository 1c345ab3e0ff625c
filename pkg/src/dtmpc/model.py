"""Subsystem dynamics, coupling topology, constraints and selection-map algebra."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class ModelValidationError(ValueError):
    """Raised when subsystem data or topology is internally inconsistent."""


@dataclass(frozen=True)
class Topology:
    """Coupling structure: M subsystems, each with a sorted neighbor list.

    Neighbor indices are 0-based and always include the subsystem itself.
    """

    M: int
    neighbors: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.M < 1 or len(self.neighbors) != self.M:
            raise ModelValidationError("neighbor list count must equal M")
        for i, nbrs in enumerate(self.neighbors):
            if len(set(nbrs)) != len(nbrs):
                raise ModelValidationError(f"subsystem {i}: duplicate neighbors")
            if any(j < 0 or j >= self.M for j in nbrs):
                raise ModelValidationError(f"subsystem {i}: neighbor index out of range")
            if i not in nbrs:
                raise ModelValidationError(f"subsystem {i}: must be its own neighbor")
            if tuple(sorted(nbrs)) != tuple(nbrs):
                raise ModelValidationError(f"subsystem {i}: neighbors must be sorted")

    @staticmethod
    def from_lists(neighbor_lists) -> "Topology":
        return Topology(len(neighbor_lists), tuple(tuple(sorted(n)) for n in neighbor_lists))


def _sym(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


@dataclass
class SubsystemModel:
    """Local dynamics, polyhedral constraints and cost weights of one subsystem.

    Dynamics: x_i+ = A_Ni x_Ni + B u_i over the neighborhood state x_Ni.
    Constraints: G_Ni x_Ni <= g_Ni, H u_i <= h.  Cost weights Q_Ni, R.
    """

    id: int
    A_Ni: np.ndarray
    B: np.ndarray
    G_Ni: np.ndarray
    g_Ni: np.ndarray
    H: np.ndarray
    h: np.ndarray
    Q_Ni: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        for name in ("A_Ni", "B", "G_Ni", "H", "Q_Ni", "R"):
            setattr(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        for name in ("g_Ni", "h"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).ravel())

    @property
    def n(self) -> int:
        return self.A_Ni.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def n_Ni(self) -> int:
        return self.A_Ni.shape[1]

    def validate(self, n_Ni: int, require_interior: bool = True):
        sid = self.id
        if self.A_Ni.shape[1] != n_Ni:
            raise ModelValidationError(
                f"subsystem {sid}: A_Ni has {self.A_Ni.shape[1]} columns, "
                f"neighborhood dimension is {n_Ni}"
            )
        if self.B.shape[0] != self.n:
            raise ModelValidationError(f"subsystem {sid}: B row count != state dim")
        if self.G_Ni.shape != (len(self.g_Ni), n_Ni):
            raise ModelValidationError(f"subsystem {sid}: G_Ni/g_Ni shape mismatch")
        if self.H.shape != (len(self.h), self.m):
            raise ModelValidationError(f"subsystem {sid}: H/h shape mismatch")
        if self.Q_Ni.shape != (n_Ni, n_Ni):
            raise ModelValidationError(f"subsystem {sid}: Q_Ni must be {n_Ni}x{n_Ni}")
        if self.R.shape != (self.m, self.m):
            raise ModelValidationError(f"subsystem {sid}: R must be {self.m}x{self.m}")
        if not np.allclose(self.Q_Ni, self.Q_Ni.T, atol=1e-10):
            raise ModelValidationError(f"subsystem {sid}: Q_Ni not symmetric")
        if not np.allclose(self.R, self.R.T, atol=1e-10):
            raise ModelValidationError(f"subsystem {sid}: R not symmetric")
        if np.linalg.eigvalsh(_sym(self.Q_Ni)).min() < -1e-10:
            raise ModelValidationError(f"subsystem {sid}: Q_Ni not PSD")
        if np.linalg.eigvalsh(_sym(self.R)).min() <= 1e-12:
            raise ModelValidationError(f"subsystem {sid}: R not positive definite")
        if require_interior and (self.g_Ni.min(initial=np.inf) <= 0 or self.h.min(initial=np.inf) <= 0):
            raise ModelValidationError(
                f"subsystem {sid}: constraint sets must contain the origin strictly "
                "(g_Ni > 0 and h > 0)"
            )


@dataclass
class SelectionMaps:
    """Binary lifting matrices relating local and global vectors.

    U[i] x = x_i, W[i] x = x_Ni, V[i] u = u_i; T[(i, j)] extracts the x_j
    block out of x_Ni for j in N_i.
    """

    U: list[np.ndarray]
    W: list[np.ndarray]
    V: list[np.ndarray]
    T: dict[tuple[int, int], np.ndarray]
    state_dims: tuple[int, ...]
    input_dims: tuple[int, ...]

    @property
    def n(self) -> int:
        return sum(self.state_dims)

    @property
    def m(self) -> int:
        return sum(self.input_dims)

    def state_offset(self, i: int) -> int:
        return sum(self.state_dims[:i])

    def input_offset(self, i: int) -> int:
        return sum(self.input_dims[:i])


def build_selection_maps(
    topology: Topology, state_dims, input_dims
) -> SelectionMaps:
    """Construct U_i, W_Ni, V_i and the per-neighbor extractors T_ij.

    W_Ni stacks the U_j blocks in ascending neighbor order.
    """
    state_dims = tuple(int(d) for d in state_dims)
    input_dims = tuple(int(d) for d in input_dims)
    if len(state_dims) != topology.M or len(input_dims) != topology.M:
        raise ModelValidationError("dimension lists must have one entry per subsystem")
    if any(d < 1 for d in state_dims) or any(d < 1 for d in input_dims):
        raise ModelValidationError("state and input dimensions must be positive")

    n, m = sum(state_dims), sum(input_dims)
    x_off = np.cumsum((0,) + state_dims)
    u_off = np.cumsum((0,) + input_dims)

    U, W, V = [], [], []
    T: dict[tuple[int, int], np.ndarray] = {}
    for i in range(topology.M):
        Ui = np.zeros((state_dims[i], n))
        Ui[:, x_off[i]:x_off[i + 1]] = np.eye(state_dims[i])
        U.append(Ui)
        Vi = np.zeros((input_dims[i], m))
        Vi[:, u_off[i]:u_off[i + 1]] = np.eye(input_dims[i])
        V.append(Vi)
    for i in range(topology.M):
        nbrs = topology.neighbors[i]
        n_Ni = sum(state_dims[j] for j in nbrs)
        Wi = np.zeros((n_Ni, n))
        row = 0
        for j in nbrs:
            Wi[row:row + state_dims[j], :] = U[j]
            Tij = np.zeros((state_dims[j], n_Ni))
            Tij[:, row:row + state_dims[j]] = np.eye(state_dims[j])
            T[(i, j)] = Tij
            row += state_dims[j]
        W.append(Wi)
    return SelectionMaps(U, W, V, T, state_dims, input_dims)


def neighborhood_dim(topology: Topology, state_dims, i: int) -> int:
    return sum(state_dims[j] for j in topology.neighbors[i])


def lift_block_diagonal(blocks: list[np.ndarray], W: np.ndarray) -> np.ndarray:
    """Restriction of blockdiag(blocks) to the coordinates selected by W.

    Computes W @ blockdiag(blocks) @ W.T; symmetric (PSD if all blocks are).
    """
    blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    total = sum(b.shape[0] for b in blocks)
    if W.shape[1] != total:
        raise ModelValidationError(
            f"selection map expects dimension {W.shape[1]}, blocks give {total}"
        )
    big = np.zeros((total, total))
    off = 0
    for b in blocks:
        if b.shape[0] != b.shape[1]:
            raise ModelValidationError("blocks must be square")
        big[off:off + b.shape[0], off:off + b.shape[0]] = b
        off += b.shape[0]
    return W @ big @ W.T


def neighbor_embed(P_j: np.ndarray, j: int, maps: SelectionMaps, i: int,
                   topology: Topology) -> np.ndarray:
    """Embed neighbor j's quadratic-form matrix into neighborhood-i coordinates.

    Returns T_ij^T P_j T_ij, acting only on the x_j block of x_Ni.
    """
    if j not in topology.neighbors[i]:
        raise ModelValidationError(f"subsystem {j} is not a neighbor of {i}")
    Tij = maps.T[(i, j)]
    P_j = np.atleast_2d(np.asarray(P_j, dtype=float))
    return Tij.T @ P_j @ Tij


@dataclass
class GlobalModel:
    """Assembled global update x+ = A x + B u plus stacked constraints."""

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    g: np.ndarray
    H: np.ndarray
    h: np.ndarray
    Q: np.ndarray
    R: np.ndarray


def assemble_global(models: list[SubsystemModel], topology: Topology,
                    maps: SelectionMaps) -> GlobalModel:
    """Stack the per-subsystem pieces into global dynamics, constraints and cost."""
    validate_models(models, topology, maps)
    n, m = maps.n, maps.m
    A = np.zeros((n, n))
    B = np.zeros((n, m))
    for i, mod in enumerate(models):
        A += maps.U[i].T @ mod.A_Ni @ maps.W[i]
        B += maps.U[i].T @ mod.B @ maps.V[i]
    G = np.vstack([mod.G_Ni @ maps.W[i] for i, mod in enumerate(models)])
    g = np.concatenate([mod.g_Ni for mod in models])
    H = np.vstack([mod.H @ maps.V[i] for i, mod in enumerate(models)])
    h = np.concatenate([mod.h for mod in models])
    Q = sum(maps.W[i].T @ mod.Q_Ni @ maps.W[i] for i, mod in enumerate(models))
    R = lift_block_diagonal([mod.R for mod in models], np.eye(m))
    return GlobalModel(A, B, G, g, H, h, Q, R)


def validate_models(models: list[SubsystemModel], topology: Topology,
                    maps: SelectionMaps, require_interior: bool = True):
    if len(models) != topology.M:
        raise ModelValidationError("model count must equal topology.M")
    for i, mod in enumerate(models):
        n_Ni = neighborhood_dim(topology, maps.state_dims, i)
        if mod.n != maps.state_dims[i] or mod.m != maps.input_dims[i]:
            raise ModelValidationError(f"subsystem {i}: dimensions disagree with maps")
        mod.validate(n_Ni, require_interior=require_interior)


@dataclass
class Scenario:
    """A fully specified problem instance as loaded from JSON."""

    models: list[SubsystemModel]
    topology: Topology
    maps: SelectionMaps = field(repr=False, default=None)
    horizon: int = 2
    x0: np.ndarray | None = None


def load_scenario(path: str) -> Scenario:
    """Load a scenario JSON file (1-based neighbor lists, row-major matrices)."""
    with open(path) as fh:
        data = json.load(fh)
    return scenario_from_dict(data)


def scenario_from_dict(data: dict) -> Scenario:
    subs = data["subsystems"]
    neighbor_lists = [[j - 1 for j in s["neighbors"]] for s in subs]
    topology = Topology.from_lists(neighbor_lists)
    models = []
    for i, s in enumerate(subs):
        models.append(
            SubsystemModel(
                id=i,
                A_Ni=np.array(s["A_Ni"], dtype=float),
                B=np.array(s["B"], dtype=float),
                G_Ni=np.array(s["G_Ni"], dtype=float),
                g_Ni=np.array(s["g_Ni"], dtype=float),
                H=np.array(s["H"], dtype=float),
                h=np.array(s["h"], dtype=float),
                Q_Ni=np.array(s["Q_Ni"], dtype=float),
                R=np.array(s["R"], dtype=float),
            )
        )
    state_dims = [m.n for m in models]
    input_dims = [m.m for m in models]
    maps = build_selection_maps(topology, state_dims, input_dims)
    validate_models(models, topology, maps)
    x0 = np.array(data["x0"], dtype=float) if "x0" in data else None
    return Scenario(models, topology, maps, int(data.get("horizon", 2)), x0)
