"""Parameter presets and the search used to build them.

There are no published parameter values for this model, so every preset
is constructed from the O(1) default by scaling transmission until
``r0_pde`` hits a target.  Preset files record the resulting R0 in a
comment; ``python -m sirsb.presets`` regenerates them.
"""

from __future__ import annotations

import sys
from importlib import resources
from pathlib import Path

from .config import RunConfig, format_config, parse_config
from .model import Parameters, default_parameters
from .operators import make_grid
from .spectral import r0_pde

PRESET_NAMES = ("default", "extinction", "persistence", "u0")


def tune_r0(
    base: Parameters,
    target: float,
    names=("beta1", "beta2"),
    n_cells: int = 128,
    rtol: float = 1e-12,
) -> Parameters:
    """Scale the named parameters by a common factor so that R0 = target.

    R0 is nondecreasing in each transmission coefficient, so bisection on
    the log of the factor converges.
    """
    grid = make_grid(n_cells)

    def at(c):
        return base.replace(**{n: getattr(base, n) * c for n in names})

    lo, hi = 1.0, 1.0
    while r0_pde(grid, at(lo)).value > target:
        lo /= 2
    while r0_pde(grid, at(hi)).value < target:
        hi *= 2
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if r0_pde(grid, at(mid)).value < target:
            lo = mid
        else:
            hi = mid
    return at(0.5 * (lo + hi))


def build_presets() -> dict[str, tuple[RunConfig, float]]:
    base = default_parameters()
    grid = make_grid(128)
    cfgs = {
        "default": RunConfig(parameters=base),
        "extinction": RunConfig(
            parameters=tune_r0(base, 0.3, names=("beta1", "beta2", "xi", "g")), t_end=200.0
        ),
        "persistence": RunConfig(
            parameters=tune_r0(base, 3.0), t_end=2000.0, snapshot_every=10
        ),
        "u0": RunConfig(parameters=tune_r0(base.replace(U=0.0), 2.0)),
    }
    return {k: (c, r0_pde(grid, c.parameters).value) for k, c in cfgs.items()}


def preset_text(name: str) -> str:
    return resources.files("sirsb").joinpath("presets", f"{name}.cfg").read_text(encoding="utf-8")


def load_preset(name: str) -> RunConfig:
    if name not in PRESET_NAMES:
        raise KeyError(f"unknown preset {name!r}")
    return parse_config(preset_text(name))


def write_presets(directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, (cfg, r0) in build_presets().items():
        header = f"# preset '{name}'\n# r0_pde (n = 128) = {r0!r}\n"
        (directory / f"{name}.cfg").write_text(header + format_config(cfg), encoding="utf-8")


if __name__ == "__main__":
    write_presets(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent / "presets")
