"""File emission: trajectory and sweep CSVs, experiment reports, run metadata."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .config import InitialSpec, RunConfig, format_config
from .model import Parameters, State
from .operators import Grid
from .solver import NORM_FIELDS, Trajectory, _norm_row
from .verify import SWEEP_HEADER, ExperimentReport

TRAJECTORY_HEADER = ("t", "x", "S", "I", "R", "B")
FLOAT_FMT = "%.17g"


def _g(v) -> str:
    return FLOAT_FMT % v


def write_trajectory_csv(path, traj: Trajectory, grid: Grid) -> None:
    """Long format: one row per (snapshot, cell)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        x = grid.centers
        for t, snap in zip(traj.times, traj.snapshots):
            u = snap.as_array()
            for i in range(grid.n_cells):
                w.writerow([_g(t), _g(x[i])] + [_g(v) for v in u[i]])


def read_trajectory_csv(path):
    """Returns ``(times, x, fields)`` with ``fields`` of shape ``(n_snap, n_cells, 4)``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    with open(path, encoding="utf-8") as fh:
        header = tuple(fh.readline().strip().split(","))
    if header != TRAJECTORY_HEADER:
        raise ValueError(f"unexpected trajectory header {header}")
    times = np.unique(data[:, 0])
    n_cells = len(data) // len(times)
    if n_cells * len(times) != len(data):
        raise ValueError("ragged trajectory file")
    fields = data[:, 2:].reshape(len(times), n_cells, 4)
    x = data[:n_cells, 1]
    return times, x, fields


def norms_from_fields(fields: np.ndarray, m_star: float) -> dict:
    rows = [_norm_row(u, m_star) for u in fields]
    return {name: np.array(col) for name, col in zip(NORM_FIELDS, zip(*rows))}


def write_norms_csv(path, traj: Trajectory) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t",) + NORM_FIELDS)
        for k, t in enumerate(traj.times):
            w.writerow([_g(t)] + [_g(traj.norms[n][k]) for n in NORM_FIELDS])


def read_norms_csv(path) -> dict:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {"t": data[:, 0], **{n: data[:, k + 1] for k, n in enumerate(NORM_FIELDS)}}


def write_metadata(path, cfg: RunConfig, **meta) -> None:
    Path(path).write_text(format_config(cfg, meta), encoding="utf-8")


def write_report(path, report: ExperimentReport) -> None:
    """Experiment report in the same ``key = value`` grammar."""
    lines = [
        f"name = {report.name}",
        f"verdict = {report.verdict}",
        f"r0 = {_g(report.r0)}",
        f"runtime = {_g(report.runtime)}",
    ]
    for k, v in report.params_digest.items():
        lines.append(f"param.{k} = {_g(v) if isinstance(v, float) else v}")
    for k, v in report.metrics.items():
        lines.append(f"metric.{k} = {_g(v) if isinstance(v, float) else v}")
    for k, v in report.criteria.items():
        lines.append(f"criterion.{k} = {'pass' if v else 'fail'}")
    for note in report.notes:
        lines.append(f"# {note}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow([r["sample"], _g(r["r0_ode"]), _g(r["r0_pde"]), _g(r["s_theta"]), r["outcome"]])


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["sample"] = int(r["sample"])
        for k in ("r0_ode", "r0_pde", "s_theta"):
            r[k] = float(r[k])
    return rows


def build_initial(spec: InitialSpec, params: Parameters, grid: Grid) -> State:
    n = grid.n_cells
    if spec.kind == "constant":
        s, i, r, b = spec.args
        return State(np.full(n, s), np.full(n, i), np.full(n, r), np.full(n, b))
    if spec.kind == "dfe_perturbed":
        amplitude, seed = spec.args
        rng = np.random.default_rng(seed)
        m = params.m_star
        return State(
            np.full(n, m),
            amplitude * m * rng.uniform(0, 1, n),
            np.zeros(n),
            amplitude * m * rng.uniform(0, 1, n),
        )
    times, x, fields = read_trajectory_csv(spec.args[0])
    if fields.shape[1] != n:
        raise ValueError(f"initial file has {fields.shape[1]} cells, grid has {n}")
    return State.from_array(fields[-1])
