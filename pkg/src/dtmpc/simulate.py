"""Receding-horizon closed loop: solve, apply the first input, advance, repeat."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .admm import AdmmOptions, run_consensus
from .model import SelectionMaps, SubsystemModel, Topology, assemble_global
from .ocp import OcpStatus, Scheme, solve_ocp
from .synthesis import TerminalIngredients
from .terminal import TerminalSet


@dataclass
class StepRecord:
    t: int
    x: np.ndarray
    u: np.ndarray | None
    status: OcpStatus
    objective: float | None
    sets: list[TerminalSet] | None


@dataclass
class SimTrace:
    """Time-stamped closed-loop records for one run."""

    scheme: Scheme
    horizon: int
    mode: str
    records: list[StepRecord] = field(default_factory=list)
    aborted: bool = False

    @property
    def feasible_steps(self) -> int:
        return sum(1 for r in self.records if r.status is OcpStatus.OPTIMAL)

    def states(self) -> np.ndarray:
        return np.array([r.x for r in self.records])

    def stage_cost_sum(self, models, topology, maps) -> float:
        """Accumulated closed-loop stage cost over the recorded steps."""
        total = 0.0
        for r in self.records:
            if r.u is None:
                continue
            for i, mod in enumerate(models):
                xN = maps.W[i] @ r.x
                ui = maps.V[i] @ r.u
                total += float(xN @ mod.Q_Ni @ xN + ui @ mod.R @ ui)
        return total


def run(
    scheme: Scheme,
    x0: np.ndarray,
    T: int,
    steps: int,
    ingredients: TerminalIngredients,
    models: list[SubsystemModel],
    topology: Topology,
    maps: SelectionMaps,
    mode: str = "central",
    admm_options: AdmmOptions | None = None,
    stop_at_infeasible: bool = True,
) -> SimTrace:
    """Run the receding-horizon loop for `steps` steps (plant = model, no noise).

    The applied input is the first of the optimal sequence; the terminal set
    is re-optimized from scratch at every step.  Infeasibility truncates the
    run (flagged); numerical failures are recorded and flag the run as
    aborted without stopping it.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if mode not in ("central", "admm"):
        raise ValueError(f"unknown mode {mode!r}")
    gm = assemble_global(models, topology, maps)
    trace = SimTrace(scheme, T, mode)
    x = np.asarray(x0, dtype=float).ravel().copy()
    for t in range(steps):
        if mode == "central":
            outcome = solve_ocp(scheme, x, T, ingredients, models, topology, maps)
        else:
            outcome = run_consensus(scheme, x, T, ingredients, models, topology,
                                    maps, admm_options).outcome
        if outcome.status is OcpStatus.OPTIMAL:
            sol = outcome.solution
            u = sol.u[0].copy()
            trace.records.append(StepRecord(t, x.copy(), u, outcome.status,
                                            sol.objective, sol.sets))
            x = gm.A @ x + gm.B @ u
        else:
            trace.records.append(StepRecord(t, x.copy(), None, outcome.status,
                                            None, None))
            trace.aborted = True
            if stop_at_infeasible and outcome.status is OcpStatus.INFEASIBLE:
                break
    return trace


def write_trace_csv(trace: SimTrace, path: str, maps: SelectionMaps):
    """CSV trace: t, states, inputs, status, J, centers, radii; one row per step."""
    n, m, M = maps.n, maps.m, len(maps.state_dims)
    header = (["t"]
              + [f"x{k + 1}" for k in range(n)]
              + [f"u{k + 1}" for k in range(m)]
              + ["status", "J"]
              + [f"c{k + 1}" for k in range(n)]
              + [f"a{k + 1}" for k in range(M)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in trace.records:
            u = list(r.u) if r.u is not None else [""] * m
            if r.sets is not None:
                c = list(np.concatenate([ts.c for ts in r.sets]))
                a = [ts.a for ts in r.sets]
            else:
                c = [""] * n
                a = [""] * M
            writer.writerow([r.t] + list(r.x) + u
                            + [r.status.value, r.objective if r.objective is not None else ""]
                            + c + a)


@dataclass
class SweepPoint:
    x0: np.ndarray
    status: OcpStatus


@dataclass
class SweepResult:
    scheme: Scheme
    points: list[SweepPoint]

    def count(self, status: OcpStatus) -> int:
        return sum(1 for p in self.points if p.status is status)


def feasibility_sweep(
    scheme: Scheme,
    grid: np.ndarray,
    T: int,
    ingredients: TerminalIngredients,
    models: list[SubsystemModel],
    topology: Topology,
    maps: SelectionMaps,
    jobs: int = 1,
) -> SweepResult:
    """Per-point OCP feasibility over a finite grid of initial states."""
    grid = np.atleast_2d(np.asarray(grid, dtype=float))

    def probe(x0):
        return solve_ocp(scheme, x0, T, ingredients, models, topology, maps).status

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            statuses = list(pool.map(probe, grid))
    else:
        statuses = [probe(x0) for x0 in grid]
    return SweepResult(scheme, [SweepPoint(x0, s) for x0, s in zip(grid, statuses)])


def write_sweep_csv(results: list[SweepResult], path: str):
    """Feasibility map CSV: one row per grid point, one status column per scheme."""
    if not results:
        raise ValueError("no sweep results to write")
    n = len(results[0].points[0].x0)
    header = [f"x{k + 1}" for k in range(n)] + [r.scheme.value for r in results]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in range(len(results[0].points)):
            x0 = results[0].points[row].x0
            writer.writerow(list(x0) + [r.points[row].status.value for r in results])
