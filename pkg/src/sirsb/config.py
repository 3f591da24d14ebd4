"""Plain-text ``key = value`` configuration and metadata files.

Grammar: one pair per line, ``#`` starts a comment, blank lines ignored,
UTF-8 with LF or CRLF line endings.  Unknown and duplicate keys are errors
so that typos never pass silently.  Metadata files written next to every
run use the same grammar plus a few informational keys, so a run can be
reproduced from its metadata alone.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .model import PARAMETER_NAMES, Parameters, validate

OUTPUT_ENV = "SIRSB_OUTPUT_DIR"
DEFAULT_OUTPUT = "sirsb-out"

_INT_KEYS = {"grid_cells", "snapshot_every", "seed", "workers", "samples"}
_FLOAT_KEYS = {"dt", "t_end", "steady_tol", "horizon", "scalar_source", "scalar_decay"}
_STR_KEYS = {"initial", "outputs"}
_META_KEYS = {"code_version", "dt_used", "steps", "steady", "r0_pde", "command"}
_RANGE = re.compile(r"^range\.(\w+)$")
_INITIAL = re.compile(r"^(dfe_perturbed|file|constant)\((.*)\)$")


class ConfigError(ValueError):
    def __init__(self, message, line: Optional[int] = None):
        super().__init__(f"{message} at line {line}" if line is not None else message)
        self.line = line


@dataclass(frozen=True)
class InitialSpec:
    kind: str  # dfe_perturbed | file | constant
    args: tuple

    def __str__(self):
        return f"{self.kind}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class RunConfig:
    parameters: Parameters
    grid_cells: int = 128
    dt: Optional[float] = None
    t_end: float = 200.0
    initial_spec: InitialSpec = InitialSpec("dfe_perturbed", (0.1, 0))
    outputs: str = ""
    snapshot_every: int = 10
    steady_tol: float = 1e-9
    seed: int = 0
    workers: int = 1
    samples: int = 100
    horizon: float = 1.0
    scalar_source: Optional[float] = None
    scalar_decay: Optional[float] = None
    ranges: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    warnings: tuple = ()

    def output_dir(self) -> Path:
        return Path(self.outputs or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def parse_initial(text: str, line: Optional[int] = None) -> InitialSpec:
    m = _INITIAL.match(text.strip())
    if not m:
        raise ConfigError(f"bad initial spec {text!r}", line)
    kind, body = m.groups()
    parts = [a.strip() for a in body.split(",")] if body.strip() else []
    try:
        if kind == "file":
            if len(parts) != 1:
                raise ValueError
            return InitialSpec(kind, (parts[0],))
        if kind == "dfe_perturbed":
            if len(parts) != 2:
                raise ValueError
            return InitialSpec(kind, (float(parts[0]), int(parts[1])))
        if len(parts) != 4:
            raise ValueError
        return InitialSpec(kind, tuple(float(a) for a in parts))
    except ValueError:
        raise ConfigError(f"bad arguments for {kind}() in {text!r}", line) from None


def read_pairs(text: str) -> list[tuple[str, str, int]]:
    """Split config text into ``(key, value, line_number)`` triples."""
    out = []
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", lineno)
        if key in seen:
            raise ConfigError(f"duplicate key '{key}' (first at line {seen[key]})", lineno)
        seen[key] = lineno
        out.append((key, value, lineno))
    return out


def _number(key, value, lineno, kind=float):
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"nonnumeric value {value!r} for '{key}'", lineno) from None


def parse_config(text: str, *, allow_meta: bool = False) -> RunConfig:
    """Parse the flat config grammar; validates parameters via the model."""
    params, opts, ranges, meta = {}, {}, {}, {}
    for key, value, lineno in read_pairs(text):
        if key in PARAMETER_NAMES:
            params[key] = _number(key, value, lineno)
        elif key in _INT_KEYS:
            opts[key] = _number(key, value, lineno, int)
        elif key in _FLOAT_KEYS:
            opts[key] = _number(key, value, lineno)
        elif key == "initial":
            opts["initial_spec"] = parse_initial(value, lineno)
        elif key == "outputs":
            opts[key] = value
        elif _RANGE.match(key):
            name = _RANGE.match(key).group(1)
            if name not in PARAMETER_NAMES and name != "D":
                raise ConfigError(f"unknown key '{key}'", lineno)
            bits = [b for b in value.replace(",", " ").split()]
            if len(bits) != 2:
                raise ConfigError(f"range for '{name}' needs 'lo, hi'", lineno)
            ranges[name] = (_number(key, bits[0], lineno), _number(key, bits[1], lineno))
        elif allow_meta and key in _META_KEYS:
            meta[key] = value
        else:
            raise ConfigError(f"unknown key '{key}'", lineno)
    missing = [k for k in PARAMETER_NAMES if k not in params]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    parameters = Parameters(**params)
    warns = tuple(validate(parameters))
    if opts.get("grid_cells", 128) < 3:
        raise ConfigError("grid_cells must be >= 3")
    return RunConfig(parameters=parameters, ranges=ranges, meta=meta, warnings=warns, **opts)


def load_config(path, *, allow_meta: bool = False) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), allow_meta=allow_meta)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_config(cfg: RunConfig, meta: Optional[dict] = None) -> str:
    """Serialise a RunConfig (and optional metadata) in the config grammar."""
    lines = [f"{k} = {_fmt(v)}" for k, v in cfg.parameters.as_dict().items()]
    lines += [
        f"grid_cells = {cfg.grid_cells}",
        f"t_end = {_fmt(cfg.t_end)}",
        f"initial = {cfg.initial_spec}",
        f"snapshot_every = {cfg.snapshot_every}",
        f"steady_tol = {_fmt(cfg.steady_tol)}",
        f"seed = {cfg.seed}",
        f"workers = {cfg.workers}",
        f"samples = {cfg.samples}",
        f"horizon = {_fmt(cfg.horizon)}",
    ]
    if cfg.dt is not None:
        lines.append(f"dt = {_fmt(cfg.dt)}")
    if cfg.outputs:
        lines.append(f"outputs = {cfg.outputs}")
    for k in ("scalar_source", "scalar_decay"):
        if getattr(cfg, k) is not None:
            lines.append(f"{k} = {_fmt(getattr(cfg, k))}")
    for name, (lo, hi) in cfg.ranges.items():
        lines.append(f"range.{name} = {_fmt(lo)}, {_fmt(hi)}")
    for k, v in (meta or {}).items():
        if k not in _META_KEYS:
            raise KeyError(f"not a metadata key: {k}")
        lines.append(f"{k} = {_fmt(v)}")
    return "\n".join(lines) + "\n"
