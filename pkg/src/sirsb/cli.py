"""Command-line entry point: ``sirsb {simulate,r0,verify,sweep} CONFIG``.

Exit codes: 0 success/pass, 1 experiment fail, 2 usage or config error
(including a violated experiment precondition), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .io import (
    build_initial,
    write_metadata,
    write_norms_csv,
    write_report,
    write_sweep_csv,
    write_trajectory_csv,
)
from .model import ParameterError
from .operators import ZeroPivotError, make_grid
from .solver import NumericalError, SolverConfig, simulate
from .spectral import SpectralError, r0_ode, r0_pde, sign_consistency
from . import verify

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3
EXPERIMENTS = ("extinction", "persistence", "scalar_attractor", "population_law", "apriori_bound")
DEFAULT_SWEEP_RANGES = {"beta1": (0.05, 3.0), "beta2": (0.05, 3.0), "xi": (0.05, 2.0), "g": (0.01, 0.9)}

log = logging.getLogger("sirsb")


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    changes = {}
    for flag, key in (("grid", "grid_cells"), ("t_end", "t_end"), ("dt", "dt"),
                      ("seed", "seed"), ("workers", "workers"), ("out", "outputs")):
        v = getattr(args, flag, None)
        if v is not None:
            changes[key] = v
    if changes.get("grid_cells", 3) < 3:
        raise ConfigError("--grid must be >= 3")
    return dataclasses.replace(cfg, **changes)


def solver_config(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(
        t_end=cfg.t_end,
        grid=make_grid(cfg.grid_cells),
        dt=cfg.dt,
        snapshot_every=cfg.snapshot_every,
        steady_tol=cfg.steady_tol,
    )


def _outdir(cfg: RunConfig) -> Path:
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(cfg: RunConfig) -> int:
    sc = solver_config(cfg)
    p = cfg.parameters
    initial = build_initial(cfg.initial_spec, p, sc.grid)
    traj = simulate(initial, p, sc)
    out = _outdir(cfg)
    write_trajectory_csv(out / "trajectory.csv", traj, sc.grid)
    write_norms_csv(out / "norms.csv", traj)
    write_metadata(out / "metadata.txt", cfg, code_version=__version__, command="simulate",
                   dt_used=traj.dt, steps=traj.steps, steady=traj.steady)
    print(f"wrote {len(traj.times)} snapshots to {out}")
    return EXIT_OK


def cmd_r0(cfg: RunConfig) -> int:
    grid = make_grid(cfg.grid_cells)
    p = cfg.parameters
    sc = sign_consistency(grid, p)
    print(f"r0_ode = {r0_ode(p)!r}")
    print(f"r0_pde = {sc.r0!r}")
    print(f"s_theta = {sc.s_theta!r}")
    print(f"sign_consistency = {sc.verdict}")
    return EXIT_OK if sc.consistent is not False else EXIT_FAIL


def cmd_verify(cfg: RunConfig, name: str) -> int:
    sc = solver_config(cfg)
    p = cfg.parameters
    grid = sc.grid
    if name == "extinction":
        rep = verify.experiment_extinction(p, config=sc, seed=cfg.seed)
    elif name == "persistence":
        rep = verify.experiment_persistence(p, config=sc, seed=cfg.seed)
    elif name == "scalar_attractor":
        source = cfg.scalar_source if cfg.scalar_source is not None else p.b
        decay = cfg.scalar_decay if cfg.scalar_decay is not None else p.d
        level = source / decay
        x = grid.centers
        initials = [np.zeros(grid.n_cells), np.full(grid.n_cells, 10.0 * level), 5.0 * level * x]
        rep = verify.experiment_scalar_attractor(p.D4, p.U, source, decay, initials, sc)
    elif name == "population_law":
        rep = verify.experiment_population_law(p, build_initial(cfg.initial_spec, p, grid), sc)
    elif name == "apriori_bound":
        rep = verify.experiment_apriori_bound(p, build_initial(cfg.initial_spec, p, grid), cfg.horizon, sc)
    else:
        raise ConfigError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    out = _outdir(cfg)
    write_report(out / f"report_{name}.txt", rep)
    write_metadata(out / f"metadata_{name}.txt", cfg, code_version=__version__, command=f"verify {name}")
    for note in rep.notes:
        print(note, file=sys.stderr)
    print(f"{name}: {rep.verdict} (R0 = {rep.r0:.6g}, {rep.runtime:.2f} s)")
    if rep.verdict == verify.INDETERMINATE and any(n.startswith("precondition") for n in rep.notes):
        return EXIT_USAGE
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_sweep(cfg: RunConfig) -> int:
    sc = solver_config(cfg)
    ranges = cfg.ranges or DEFAULT_SWEEP_RANGES
    rows = verify.sweep_threshold(ranges, cfg.samples, sc.grid, sc, base=cfg.parameters,
                                  seed=cfg.seed, workers=cfg.workers)
    out = _outdir(cfg)
    write_sweep_csv(out / "sweep.csv", rows)
    write_metadata(out / "metadata_sweep.txt", cfg, code_version=__version__, command="sweep")
    bad = [r["sample"] for r in rows if verify.sign_agrees(r) is False]
    print(f"wrote {len(rows)} samples to {out / 'sweep.csv'}; sign-inconsistent samples: {len(bad)}")
    return EXIT_OK if not bad else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="key = value configuration file")
    common.add_argument("--grid", type=int, metavar="N", help="number of cells")
    common.add_argument("--t-end", type=float, metavar="T", dest="t_end")
    common.add_argument("--dt", type=float, metavar="DT")
    common.add_argument("--seed", type=int, metavar="S")
    common.add_argument("--workers", type=int, metavar="W")
    common.add_argument("--out", metavar="DIR", help="output directory")
    parser = argparse.ArgumentParser(prog="sirsb", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run one simulation, write trajectory CSV")
    sub.add_parser("r0", parents=[common], help="print R0 (ODE and PDE), s(Theta) and their sign check")
    v = sub.add_parser("verify", parents=[common], help="run a named experiment")
    v.add_argument("experiment", choices=EXPERIMENTS)
    sub.add_parser("sweep", parents=[common], help="parameter sweep, write sweep CSV")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        # metadata files written by earlier runs are accepted as configs
        cfg = _apply_overrides(load_config(args.config, allow_meta=True), args)
        for w in cfg.warnings:
            print(f"warning: {w}", file=sys.stderr)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "r0":
            return cmd_r0(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, args.experiment)
        return cmd_sweep(cfg)
    except (ConfigError, ParameterError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, SpectralError, ZeroPivotError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
