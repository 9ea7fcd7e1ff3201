"""Trace tables, envelope dumps, and static plots for simulation runs.

The trace is a comma-separated table with a fixed header (one row per
planning cycle); envelopes are dumped as one JSON object per cycle; the
plots are vector graphics of the arc-length/time diagram, the lateral path
over the lane, and the velocity profile.  Re-running the same scenario
produces byte-identical text outputs.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .scenario import Scenario
from .simulate import SimulationTrace

TRACE_HEADER = (
    "time,x,y,heading,s,v,a,d,theta,kappa,maneuver_index,decisions,semantics,"
    "j_traj,j_cons,j_total,enumerated,valid_envelopes,feasible,"
    "infeasible_stages,solver_iterations"
)


def _fmt(value: float) -> str:
    return format(float(value), ".12g")


def write_trace_csv(trace: SimulationTrace, path) -> None:
    """One row per planning cycle with the documented fixed header."""
    lines = [TRACE_HEADER]
    for rec in trace.records:
        decisions = ";".join(f"{k}={v}" for k, v in sorted(rec.decisions.items()))
        failures = ";".join(f"{idx}:{stage}" for idx, stage in rec.failures)
        ego = rec.ego
        lines.append(
            ",".join(
                [
                    _fmt(rec.time),
                    _fmt(ego.x),
                    _fmt(ego.y),
                    _fmt(ego.heading),
                    _fmt(ego.s),
                    _fmt(ego.v),
                    _fmt(ego.a),
                    _fmt(ego.d),
                    _fmt(ego.heading),
                    _fmt(ego.kappa),
                    str(rec.maneuver_index),
                    decisions,
                    rec.semantics.replace(",", ";"),
                    _fmt(rec.j_traj),
                    _fmt(rec.j_cons),
                    _fmt(rec.j_total),
                    str(rec.enumerated),
                    str(rec.valid_envelopes),
                    str(rec.feasible),
                    failures,
                    str(rec.solver_iterations),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_envelope_dump(trace: SimulationTrace, path) -> None:
    """One JSON object per cycle holding every surviving maneuver's merged
    envelope at every prediction step."""
    with open(path, "w") as handle:
        for rec in trace.records:
            payload = {
                "time": round(rec.time, 9),
                "maneuvers": [
                    {
                        "index": env.sequence.index,
                        "decisions": {k: v.value for k, v in env.sequence.items},
                        "steps": [
                            {
                                "t_p": round(float(t_p), 9),
                                "s_min": step.s_min,
                                "s_max": step.s_max,
                                "sample_points": step.sample_points.tolist(),
                                "d_left": step.d_left.tolist(),
                                "d_right": step.d_right.tolist(),
                            }
                            for t_p, step in zip(env.prediction_times, env.per_step)
                        ],
                    }
                    for env in rec.envelopes
                ],
            }
            handle.write(json.dumps(payload, sort_keys=True) + "\n")


def _new_figure():
    fig, ax = plt.subplots(figsize=(8, 4))
    return fig, ax


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_plots(trace: SimulationTrace, scenario: Scenario, out_dir) -> list:
    """Write the s-t diagram, the d-s path over the lane, and the velocity
    profile as SVG files; returns the written paths."""
    plt.rcParams["svg.hashsalt"] = "envelope-planner"
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    times = [r.time for r in trace.records]
    s = [r.ego.s for r in trace.records]
    d = [r.ego.d for r in trace.records]
    v = [r.ego.v for r in trace.records]
    written = []

    fig, ax = _new_figure()
    ax.plot(times, s, marker=".", color="tab:blue")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("arc length s [m]")
    ax.set_title("Longitudinal progress")
    ax.grid(True, alpha=0.3)
    path = out / "s_t_diagram.svg"
    _save(fig, path)
    written.append(path)

    fig, ax = _new_figure()
    half = 0.5 * scenario.lane_width
    s_span = [min(s), max(s) + 1.0]
    ax.plot(s_span, [half, half], "k--", linewidth=0.8, label="lane boundary")
    ax.plot(s_span, [-half, -half], "k--", linewidth=0.8)
    ax.plot(s, d, marker=".", color="tab:orange", label="ego path")
    for ob in scenario.obstacles:
        verts = ob.footprint.vertices
        ax.fill(verts[:, 0], verts[:, 1], alpha=0.3, label=f"{ob.id} (t=0)")
    ax.set_xlabel("arc length s [m]")
    ax.set_ylabel("lateral offset d [m]")
    ax.set_title("Path over the lane")
    ax.legend(loc="upper right", fontsize=8)
    ax.grid(True, alpha=0.3)
    path = out / "d_s_path.svg"
    _save(fig, path)
    written.append(path)

    fig, ax = _new_figure()
    ax.plot(times, v, marker=".", color="tab:green")
    ax.axhline(scenario.v_ref, linestyle="--", color="gray", linewidth=0.8)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("speed v [m/s]")
    ax.set_title("Velocity profile")
    ax.grid(True, alpha=0.3)
    path = out / "velocity_profile.svg"
    _save(fig, path)
    written.append(path)
    return written


def emit_outputs(trace: SimulationTrace, scenario: Scenario, out_dir) -> dict:
    """Write trace table, envelope dump, and plots into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.csv"
    write_trace_csv(trace, trace_path)
    envelope_path = out / "envelopes.jsonl"
    write_envelope_dump(trace, envelope_path)
    plots = write_plots(trace, scenario, out / "plots")
    return {"trace": trace_path, "envelopes": envelope_path, "plots": plots}
