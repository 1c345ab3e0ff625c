"""Render phase plots and time-series plots from solver output files.

Inputs are the toolkit's external artifacts only: solution JSON files
(predicted trajectories plus per-subsystem terminal intervals) and closed-loop
trace CSV files.  Rendering never modifies its inputs and never resamples:
every plotted number comes verbatim from the source file.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SCHEME_COLORS = {"adap": "tab:blue", "asym": "tab:orange", "rlxd": "tab:green"}


class RenderError(Exception):
    """Malformed or unusable input artifact."""


def load_solution(path: str) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    for key in ("x", "sets"):
        if key not in data:
            raise RenderError(f"{path}: missing field {key!r}")
    for k, entry in enumerate(data["sets"]):
        for key in ("c", "a", "P"):
            if key not in entry:
                raise RenderError(f"{path}: set {k} missing field {key!r}")
    return data


def rectangle_corners(sets: list[dict]) -> np.ndarray:
    """Corner coordinates of the product of per-subsystem 1-D intervals.

    Each interval is the exact extent of a one-dimensional ellipsoid:
    c +- a / sqrt(P).  Returns the 4 corners of the resulting rectangle
    (lexicographic in (low/high) per axis).
    """
    if len(sets) != 2:
        raise RenderError(f"phase plot needs exactly 2 scalar subsystems, got {len(sets)}")
    intervals = []
    for entry in sets:
        c = np.asarray(entry["c"], dtype=float).ravel()
        P = np.atleast_2d(np.asarray(entry["P"], dtype=float))
        if c.size != 1 or P.shape != (1, 1):
            raise RenderError("terminal intervals must be one-dimensional")
        half = float(entry["a"]) / np.sqrt(P[0, 0])
        intervals.append((c[0] - half, c[0] + half))
    (lo1, hi1), (lo2, hi2) = intervals
    return np.array([[lo1, lo2], [lo1, hi2], [hi1, lo2], [hi1, hi2]])


def render_terminal_plot(solution_paths: list[str], out: str) -> dict:
    """Overlay predicted trajectories and terminal rectangles per scheme.

    Returns the plotted payload (trajectories and corners per input file);
    the same payload is embedded as JSON in the PNG metadata.
    """
    if not solution_paths:
        raise RenderError("no solution files given")
    fig, ax = plt.subplots(figsize=(6, 5))
    payload = {}
    for path in solution_paths:
        data = load_solution(path)
        label = data.get("scheme", path)
        color = SCHEME_COLORS.get(label, None)
        x = np.asarray(data["x"], dtype=float)
        if x.ndim != 2 or x.shape[1] != 2:
            raise RenderError(f"{path}: phase plot needs a 2-D global state")
        ax.plot(x[:, 0], x[:, 1], marker="o", color=color, label=label)
        corners = rectangle_corners(data["sets"])
        if np.allclose(corners, corners[0]):
            ax.plot(*corners[0], marker="s", color=color)
        else:
            lo, hi = corners.min(axis=0), corners.max(axis=0)
            ax.add_patch(plt.Rectangle(lo, *(hi - lo), fill=False,
                                       edgecolor=color, linestyle="--"))
        payload[label] = {"x": x.tolist(), "corners": corners.tolist()}
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.legend()
    ax.set_title("Predicted trajectories and terminal sets")
    fig.savefig(out, metadata={"plotted": json.dumps(payload)})
    plt.close(fig)
    return payload


def load_trace(path: str) -> tuple[list[str], np.ndarray, list[list[str]]]:
    """Trace CSV as (header, numeric step/state/input block, raw rows)."""
    with open(path) as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise RenderError(f"{path}: trace has no data rows")
    header = rows[0]
    return header, rows[1:]


def render_timeseries(trace_path: str, out: str) -> dict:
    """State and input time series of one closed-loop trace, two stacked axes."""
    header, rows = load_trace(trace_path)
    x_cols = [k for k, name in enumerate(header)
              if name.startswith("x") and name[1:].isdigit()]
    u_cols = [k for k, name in enumerate(header)
              if name.startswith("u") and name[1:].isdigit()]
    t = np.array([float(r[0]) for r in rows])
    # Inputs are blank on infeasible rows; plot only the populated prefix.
    x = np.array([[float(r[k]) for k in x_cols] for r in rows])
    u_rows = [r for r in rows if all(r[k] != "" for k in u_cols)]
    tu = np.array([float(r[0]) for r in u_rows])
    u = np.array([[float(r[k]) for k in u_cols] for r in u_rows])

    fig, (ax_x, ax_u) = plt.subplots(2, 1, sharex=True, figsize=(6, 6))
    for j, k in enumerate(x_cols):
        ax_x.plot(t, x[:, j], marker=".", label=header[k])
    for j, k in enumerate(u_cols):
        ax_u.plot(tu, u[:, j], marker=".", label=header[k])
    ax_x.set_ylabel("states")
    ax_u.set_ylabel("inputs")
    ax_u.set_xlabel("t")
    ax_x.legend()
    ax_u.legend()
    payload = {"t": t.tolist(), "x": x.tolist(),
               "tu": tu.tolist(), "u": u.tolist()}
    fig.savefig(out, metadata={"plotted": json.dumps(payload)})
    plt.close(fig)
    return payload


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="render",
        description="Render figures from solution JSON / trace CSV files.")
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--fig1", nargs="+", metavar="SOLUTION_JSON",
                       help="phase plot: trajectories + terminal rectangles")
    group.add_argument("--fig2", metavar="TRACE_CSV",
                       help="time series: closed-loop states and inputs")
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    try:
        if args.fig1:
            render_terminal_plot(args.fig1, args.out)
        else:
            render_timeseries(args.fig2, args.out)
    except (RenderError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
