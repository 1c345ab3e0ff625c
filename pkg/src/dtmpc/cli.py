"""Command-line entry point: synthesize, solve, simulate, verify, sweep."""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources

import numpy as np

from .admm import AdmmOptions, run_consensus
from .model import ModelValidationError, Scenario, load_scenario
from .ocp import OcpStatus, Scheme, solution_to_json, solve_ocp
from .simulate import feasibility_sweep, run, write_sweep_csv, write_trace_csv
from .synthesis import SynthesisError, TerminalIngredients, synthesize

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2

_SCHEMES = {s.value: s for s in Scheme}


def bundled_scenario_path() -> str:
    """Path of the bundled two-subsystem benchmark scenario."""
    return str(resources.files("dtmpc").joinpath("data/paper.json"))


def _load(args) -> Scenario:
    path = args.scenario or bundled_scenario_path()
    scenario = load_scenario(path)
    if args.x0 is not None:
        scenario.x0 = np.array([float(v) for v in args.x0.split(",")])
    if args.horizon is not None:
        scenario.horizon = args.horizon
    return scenario


def _ingredients(args, scenario: Scenario) -> TerminalIngredients:
    if args.ingredients and os.path.exists(args.ingredients):
        return TerminalIngredients.from_json(args.ingredients)
    ing, _ = synthesize(scenario.models, scenario.topology, scenario.maps)
    return ing


def cmd_synth(args) -> int:
    scenario = _load(args)
    out = args.out or "ingredients.json"
    if os.path.exists(out) and not args.force:
        print(f"error: {out} exists (use --force to overwrite)", file=sys.stderr)
        return EXIT_USAGE
    try:
        ing, report = synthesize(scenario.models, scenario.topology, scenario.maps)
    except SynthesisError as exc:
        print(f"synthesis failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    ing.to_json(out)
    print(f"wrote {out}")
    print(f"Lyapunov decrease: max eigenvalue {report.max_decrease_eig:.3e} "
          f"(tol {report.tol:g}) -> {'PASS' if report.passed else 'FAIL'}")
    print(f"closed-loop spectral radius: {report.spectral_radius:.4f}")
    return EXIT_OK


def cmd_solve(args) -> int:
    scenario = _load(args)
    ing = _ingredients(args, scenario)
    scheme = _SCHEMES[args.scheme]
    if args.mode == "admm":
        res = run_consensus(scheme, scenario.x0, scenario.horizon, ing,
                            scenario.models, scenario.topology, scenario.maps,
                            AdmmOptions(penalty=args.penalty))
        outcome = res.outcome
        if args.trace_admm and res.trace:
            with open(args.trace_admm, "w") as fh:
                for msg in res.trace:
                    fh.write(json.dumps({"sender": msg.sender,
                                         "iteration": msg.iteration,
                                         "values": msg.values}) + "\n")
    else:
        outcome = solve_ocp(scheme, scenario.x0, scenario.horizon, ing,
                            scenario.models, scenario.topology, scenario.maps)
    if outcome.status is OcpStatus.OPTIMAL:
        print(f"status OPTIMAL  J = {outcome.solution.objective:.4f}")
        for j, ts in enumerate(outcome.solution.sets):
            print(f"  subsystem {j + 1}: a = {ts.a:.4f}, c = {np.round(ts.c, 4).tolist()}")
    else:
        print(f"status {outcome.status.value}")
    if args.out:
        solution_to_json(outcome, args.out, ing, scheme)
        print(f"wrote {args.out}")
    return EXIT_OK if outcome.status is not OcpStatus.NUMERICAL_FAILURE else EXIT_FAILURE


def cmd_simulate(args) -> int:
    scenario = _load(args)
    ing = _ingredients(args, scenario)
    scheme = _SCHEMES[args.scheme]
    trace = run(scheme, scenario.x0, scenario.horizon, args.steps, ing,
                scenario.models, scenario.topology, scenario.maps, mode=args.mode,
                admm_options=AdmmOptions(penalty=args.penalty))
    out = args.out or "trace.csv"
    write_trace_csv(trace, out, scenario.maps)
    final = trace.records[-1]
    print(f"{trace.feasible_steps}/{len(trace.records)} feasible steps; "
          f"final ||x|| = {np.linalg.norm(final.x):.3e}")
    print(f"wrote {out}")
    return EXIT_OK if not trace.aborted else EXIT_FAILURE


def cmd_verify(args) -> int:
    from .terminal import soundness_check

    scenario = _load(args)
    ing = _ingredients(args, scenario)
    scheme = _SCHEMES[args.scheme]
    outcome = solve_ocp(scheme, scenario.x0, scenario.horizon, ing,
                        scenario.models, scenario.topology, scenario.maps)
    if outcome.status is not OcpStatus.OPTIMAL:
        print(f"status {outcome.status.value}: nothing to verify")
        return EXIT_OK if outcome.status is OcpStatus.INFEASIBLE else EXIT_FAILURE
    report = soundness_check(ing, scenario.models, scenario.topology, scenario.maps,
                             outcome.solution.sets, samples=args.samples, seed=args.seed)
    ok = report.passed(1e-6)
    print(f"{report.samples} samples per subsystem ellipsoid")
    print(f"  max invariance violation: {report.max_invariance_violation:.3e}")
    print(f"  max state-row violation:  {report.max_state_violation:.3e}")
    print(f"  max input-row violation:  {report.max_input_violation:.3e}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_sweep(args) -> int:
    scenario = _load(args)
    ing = _ingredients(args, scenario)
    lo, hi, count = args.grid
    axis = np.linspace(float(lo), float(hi), int(count))
    mesh = np.stack(np.meshgrid(*([axis] * scenario.maps.n), indexing="ij"), axis=-1)
    grid = mesh.reshape(-1, scenario.maps.n)
    schemes = ([_SCHEMES[args.scheme]] if args.scheme != "all"
               else [Scheme.ADAP, Scheme.ASYM, Scheme.RLXD])
    results = []
    for scheme in schemes:
        res = feasibility_sweep(scheme, grid, scenario.horizon, ing, scenario.models,
                                scenario.topology, scenario.maps, jobs=args.jobs)
        feasible = res.count(OcpStatus.OPTIMAL)
        print(f"{scheme.value}: {feasible}/{len(grid)} feasible")
        results.append(res)
    out = args.out or "sweep.csv"
    write_sweep_csv(results, out)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtmpc",
        description="Distributed MPC with adaptive ellipsoidal terminal sets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scheme_default="rlxd", scheme_choices=None):
        p.add_argument("--scenario", help="scenario JSON (default: bundled benchmark)")
        p.add_argument("--ingredients", help="terminal ingredients JSON (default: re-synthesize)")
        p.add_argument("--scheme", default=scheme_default,
                       choices=scheme_choices or list(_SCHEMES))
        p.add_argument("--mode", default="central", choices=["central", "admm"])
        p.add_argument("--horizon", type=int, default=None)
        p.add_argument("--x0", help="comma-separated initial state")
        p.add_argument("--out", help="output file path")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--penalty", type=float, default=1.0, help="ADMM penalty")
        p.add_argument("--trace-admm", help="write newline-delimited JSON ADMM messages here")

    p = sub.add_parser("synth", help="offline terminal-ingredient synthesis")
    common(p)
    p.add_argument("--force", action="store_true", help="overwrite existing output")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("solve", help="solve one online OCP")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="closed-loop receding-horizon run")
    common(p)
    p.add_argument("--steps", type=int, default=30)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="Monte-Carlo soundness check of a solution")
    common(p)
    p.add_argument("--samples", type=int, default=10_000)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="feasibility sweep over a grid of x0")
    common(p, scheme_default="all", scheme_choices=list(_SCHEMES) + ["all"])
    p.add_argument("--grid", nargs=3, metavar=("LO", "HI", "COUNT"),
                   default=["-1", "1", "5"], help="per-axis grid spec")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # Join "--x0 -0.6,-0.6" so argparse does not read the value as an option.
    for k in range(len(argv) - 1):
        if argv[k] == "--x0":
            argv[k:k + 2] = [f"--x0={argv[k + 1]}"]
            break
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ModelValidationError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SynthesisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
