"""Small semidefinite-programming layer.

Symmetric matrix expressions that are affine in scalar decision variables,
assembled into a conic problem with linear equalities/inequalities, PSD
constraints and a convex quadratic-plus-linear objective.  The solve itself
is delegated to an external conic solver (CLARABEL, falling back to SCS)
behind a fixed result contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import cvxpy as cp


class Lin:
    """Affine scalar expression: ``const + sum(coef * var)``.

    Supports +, -, scalar * and /, so numpy object arrays of Lin entries
    can be combined with plain float arrays via ordinary matrix algebra.
    """

    __slots__ = ("const", "terms")

    def __init__(self, const: float = 0.0, terms: dict[str, float] | None = None):
        self.const = float(const)
        self.terms = terms if terms is not None else {}

    @staticmethod
    def var(name: str) -> "Lin":
        return Lin(0.0, {name: 1.0})

    @staticmethod
    def wrap(x) -> "Lin":
        return x if isinstance(x, Lin) else Lin(float(x))

    def copy(self) -> "Lin":
        return Lin(self.const, dict(self.terms))

    def __add__(self, other):
        other = Lin.wrap(other)
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms.get(k, 0.0) + v
        return Lin(self.const + other.const, terms)

    __radd__ = __add__

    def __neg__(self):
        return Lin(-self.const, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-Lin.wrap(other))

    def __rsub__(self, other):
        return Lin.wrap(other) + (-self)

    def __mul__(self, s):
        if isinstance(s, Lin):
            raise TypeError("product of two affine expressions is not affine")
        s = float(s)
        return Lin(self.const * s, {k: v * s for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __truediv__(self, s):
        return self * (1.0 / float(s))

    def value(self, assignment: dict[str, float]) -> float:
        return self.const + sum(c * assignment[k] for k, c in self.terms.items())

    def variables(self):
        return self.terms.keys()

    def __repr__(self):
        parts = [f"{v:+g}*{k}" for k, v in self.terms.items()]
        return f"Lin({self.const:g} {' '.join(parts)})"


def lin_vector(names: list[str]) -> np.ndarray:
    """Object array of fresh variables, one per name."""
    out = np.empty(len(names), dtype=object)
    for i, n in enumerate(names):
        out[i] = Lin.var(n)
    return out


def as_lin_array(x) -> np.ndarray:
    """Coerce a numeric or mixed array-like to an object array of Lin/float."""
    arr = np.asarray(x, dtype=object)
    return arr


@dataclass
class AffineMatrixExpr:
    """Symmetric matrix expression affine in scalar variables: C + sum(x_v * M_v)."""

    dim: int
    constant: np.ndarray
    coeffs: dict[str, np.ndarray] = field(default_factory=dict)

    @staticmethod
    def from_entries(entries) -> "AffineMatrixExpr":
        """Build from a square array whose entries are Lin or numbers.

        The entry array must be symmetric up to floating round-off; it is
        symmetrized exactly so downstream PSD handling sees a symmetric
        matrix.
        """
        entries = np.asarray(entries, dtype=object)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"expected square entry array, got {entries.shape}")
        d = entries.shape[0]
        const = np.zeros((d, d))
        coeffs: dict[str, np.ndarray] = {}
        for r in range(d):
            for c in range(d):
                e = entries[r, c]
                if isinstance(e, Lin):
                    const[r, c] = e.const
                    for name, coef in e.terms.items():
                        if coef == 0.0:
                            continue
                        if name not in coeffs:
                            coeffs[name] = np.zeros((d, d))
                        coeffs[name][r, c] += coef
                else:
                    const[r, c] = float(e)
        const = 0.5 * (const + const.T)
        coeffs = {k: 0.5 * (m + m.T) for k, m in coeffs.items()}
        return AffineMatrixExpr(d, const, coeffs)

    def eval(self, assignment: dict[str, float]) -> np.ndarray:
        """Exact affine evaluation at a variable assignment."""
        out = self.constant.copy()
        for name, mat in self.coeffs.items():
            if name not in assignment:
                raise KeyError(f"assignment missing variable {name!r}")
            out = out + assignment[name] * mat
        return out

    def variables(self):
        return self.coeffs.keys()


def eval_expr(expr: AffineMatrixExpr, assignment: dict[str, float]) -> np.ndarray:
    return expr.eval(assignment)


@dataclass
class QuadForm:
    """Convex quadratic form z^T M z over the named variables (M PSD)."""

    names: list[str]
    matrix: np.ndarray

    def value(self, assignment: dict[str, float]) -> float:
        z = np.array([assignment[n] for n in self.names])
        return float(z @ self.matrix @ z)


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class SolveResult:
    status: SolveStatus
    assignment: dict[str, float]
    objective: float | None
    max_psd_residual: float
    solver: str = ""
    message: str = ""


@dataclass
class SolveOptions:
    feas_tol: float = 1e-8
    opt_tol: float = 1e-8
    max_iter: int = 200


class SdpProblem:
    """Conic problem over scalar variables.

    Constraints: linear equalities (expr == 0), linear inequalities
    (expr <= 0), PSD constraints (AffineMatrixExpr >= 0) and optional
    lower bounds per variable.  Objective: minimize quad + lin.
    """

    def __init__(self):
        self.variables: dict[str, float | None] = {}
        self.equalities: list[Lin] = []
        self.inequalities: list[Lin] = []
        self.psd_constraints: list[AffineMatrixExpr] = []
        self.obj_lin: Lin = Lin(0.0)
        self.obj_quad: QuadForm | None = None

    def add_var(self, name: str, lb: float | None = None) -> Lin:
        if name in self.variables:
            raise ValueError(f"variable {name!r} already declared")
        self.variables[name] = lb
        return Lin.var(name)

    def add_var_vector(self, base: str, n: int, lb: float | None = None) -> np.ndarray:
        return np.array(
            [self.add_var(f"{base}_{k}", lb) for k in range(n)], dtype=object
        )

    def add_equality(self, expr: Lin):
        self.equalities.append(Lin.wrap(expr))

    def add_inequality(self, expr: Lin):
        """Constrain expr <= 0."""
        self.inequalities.append(Lin.wrap(expr))

    def add_psd(self, expr: AffineMatrixExpr):
        self._check_declared(expr.variables())
        self.psd_constraints.append(expr)

    def _check_declared(self, names):
        for n in names:
            if n not in self.variables:
                raise ValueError(f"constraint references undeclared variable {n!r}")

    def validate(self):
        for e in self.equalities + self.inequalities:
            self._check_declared(e.variables())
        for p in self.psd_constraints:
            self._check_declared(p.variables())
        self._check_declared(self.obj_lin.variables())
        if self.obj_quad is not None:
            self._check_declared(self.obj_quad.names)
            evals = np.linalg.eigvalsh(0.5 * (self.obj_quad.matrix + self.obj_quad.matrix.T))
            if evals.min() < -1e-9:
                raise ValueError("quadratic objective part is not PSD")

    def objective_value(self, assignment: dict[str, float]) -> float:
        val = self.obj_lin.value(assignment)
        if self.obj_quad is not None:
            val += self.obj_quad.value(assignment)
        return val


def sqrtm_psd(mat: np.ndarray, clip: float = 1e-12) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition; tiny negatives clipped."""
    mat = 0.5 * (np.asarray(mat, dtype=float) + np.asarray(mat, dtype=float).T)
    w, v = np.linalg.eigh(mat)
    if w.min() < -1e-8:
        raise ValueError(f"matrix is not PSD (min eigenvalue {w.min():.3e})")
    w = np.where(w < clip, 0.0, w)
    return (v * np.sqrt(w)) @ v.T


def quadratic_epigraph(
    quad: QuadForm, lin: Lin, epi_name: str = "_epi"
) -> tuple[Lin, AffineMatrixExpr]:
    """Schur-complement epigraph lift of a convex quadratic objective.

    Returns a linear objective ``lin + t`` and the PSD constraint
    ``[[t, (Fz)^T], [Fz, I]] >= 0`` with F the symmetric square root of the
    quadratic form, so that at the optimum t equals z^T M z.
    """
    F = sqrtm_psd(quad.matrix)
    k = len(quad.names)
    z = np.array([Lin.var(n) for n in quad.names], dtype=object)
    fz = F.astype(object) @ z
    entries = np.empty((k + 1, k + 1), dtype=object)
    entries[0, 0] = Lin.var(epi_name)
    for r in range(k):
        entries[0, 1 + r] = fz[r]
        entries[1 + r, 0] = fz[r]
        for c in range(k):
            entries[1 + r, 1 + c] = 1.0 if r == c else 0.0
    return lin + Lin.var(epi_name), AffineMatrixExpr.from_entries(entries)


def lift_quadratic_objective(problem: SdpProblem, epi_name: str = "_epi") -> SdpProblem:
    """Replace the problem's quadratic objective by its epigraph form in place."""
    if problem.obj_quad is None:
        return problem
    new_lin, psd = quadratic_epigraph(problem.obj_quad, problem.obj_lin, epi_name)
    problem.add_var(epi_name, lb=0.0)
    problem.obj_lin = new_lin
    problem.obj_quad = None
    problem.add_psd(psd)
    return problem


def _lin_to_row(expr: Lin, index: dict[str, int], n: int) -> tuple[np.ndarray, float]:
    row = np.zeros(n)
    for name, coef in expr.terms.items():
        row[index[name]] += coef
    return row, expr.const


_STATUS_MAP = {
    cp.OPTIMAL: SolveStatus.OPTIMAL,
    cp.INFEASIBLE: SolveStatus.INFEASIBLE,
    cp.UNBOUNDED: SolveStatus.UNBOUNDED,
}


def _try_solver(prob: cp.Problem, solver: str, options: SolveOptions) -> str:
    kwargs = {}
    if solver == cp.SCS:
        kwargs = {"eps": min(options.feas_tol, 1e-8), "max_iters": 100_000}
    prob.solve(solver=solver, **kwargs)
    return prob.status


def solve(problem: SdpProblem, options: SolveOptions | None = None) -> SolveResult:
    """Solve the conic problem; optimality and infeasibility are solver-certified.

    Inaccurate or failed solver exits are reported as NUMERICAL_FAILURE,
    never as INFEASIBLE.
    """
    options = options or SolveOptions()
    problem.validate()
    names = list(problem.variables)
    index = {n: i for i, n in enumerate(names)}
    nv = len(names)
    v = cp.Variable(nv) if nv else cp.Variable(1)

    constraints = []
    for name, lb in problem.variables.items():
        if lb is not None:
            constraints.append(v[index[name]] >= lb)
    for expr in problem.equalities:
        row, const = _lin_to_row(expr, index, nv)
        constraints.append(row @ v + const == 0)
    for expr in problem.inequalities:
        row, const = _lin_to_row(expr, index, nv)
        constraints.append(row @ v + const <= 0)
    for psd in problem.psd_constraints:
        acc = cp.Constant(psd.constant)
        for name, mat in psd.coeffs.items():
            acc = acc + v[index[name]] * mat
        constraints.append(acc >> 0)

    obj_row, obj_const = _lin_to_row(problem.obj_lin, index, nv)
    objective = obj_row @ v + obj_const
    if problem.obj_quad is not None:
        qidx = [index[n] for n in problem.obj_quad.names]
        qm = 0.5 * (problem.obj_quad.matrix + problem.obj_quad.matrix.T)
        objective = objective + cp.quad_form(v[qidx], cp.psd_wrap(qm))

    prob = cp.Problem(cp.Minimize(objective), constraints)
    status = None
    solver_used = ""
    for solver in (cp.CLARABEL, cp.SCS):
        try:
            status = _try_solver(prob, solver, options)
            solver_used = solver
        except (cp.SolverError, Exception):  # noqa: BLE001 - solver backends vary
            status = None
            continue
        if status in _STATUS_MAP:
            break

    if status not in _STATUS_MAP:
        return SolveResult(
            SolveStatus.NUMERICAL_FAILURE, {}, None, np.inf, solver_used,
            f"solver status {status!r}",
        )

    mapped = _STATUS_MAP[status]
    if mapped is not SolveStatus.OPTIMAL:
        return SolveResult(mapped, {}, None, np.inf, solver_used, str(status))

    values = np.asarray(v.value).ravel()
    assignment = {n: float(values[index[n]]) for n in names}
    residual = 0.0
    for psd in problem.psd_constraints:
        mat = psd.eval(assignment)
        w = np.linalg.eigvalsh(0.5 * (mat + mat.T))
        residual = max(residual, max(0.0, -float(w.min())))
    return SolveResult(
        SolveStatus.OPTIMAL,
        assignment,
        problem.objective_value(assignment),
        residual,
        solver_used,
    )


def dump_problem(problem: SdpProblem) -> str:
    """Plain-text self-describing dump for offline debugging (format unstable)."""
    lines = ["variables:"]
    for name, lb in problem.variables.items():
        lines.append(f"  {name} lb={lb}")
    lines.append("equalities (== 0):")
    for e in problem.equalities:
        lines.append(f"  {e!r}")
    lines.append("inequalities (<= 0):")
    for e in problem.inequalities:
        lines.append(f"  {e!r}")
    lines.append(f"psd constraints: {len(problem.psd_constraints)}")
    for i, p in enumerate(problem.psd_constraints):
        lines.append(f"  [{i}] dim={p.dim} vars={sorted(p.variables())}")
        lines.append(f"      constant=\n{p.constant}")
    lines.append(f"objective linear: {problem.obj_lin!r}")
    if problem.obj_quad is not None:
        lines.append(f"objective quadratic over {problem.obj_quad.names}")
    return "\n".join(lines)
