"""IMEX backward-Euler time integration of the SIRS-B system.

One step treats the reaction explicitly and the spatial operators
implicitly::

    (I - dt A) u_next = u + dt F(u)

``(I - dt A)`` is an M-matrix for both operator kinds, so its inverse is
entrywise nonnegative and a nonnegative explicit half-step gives a
nonnegative result.  The time step is chosen so that the half-step is
nonnegative on an invariant box of the scheme; negative values are treated
as errors, never clipped.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import Parameters, State, reaction_array, validate
from .operators import (
    Grid,
    TridiagonalOperator,
    apply,
    assemble_convection_diffusion_robin,
    assemble_diffusion_neumann,
    factorize,
    make_grid,
    solve_shifted,
)

log = logging.getLogger(__name__)

NORM_FIELDS = ("S_max", "I_max", "R_max", "B_max", "S_min", "I_min", "B_min", "V_dev")

DEFAULT_STEADY_TOL = 1e-9
DT_SAFETY = 0.9


class Scheme(enum.Enum):
    IMEX_BACKWARD_EULER = "IMEX_BackwardEuler"


class NumericalError(ArithmeticError):
    """Time stepping produced a negative or nonfinite value.

    ``state`` holds the last valid state and ``bad`` the offending array.
    """

    def __init__(self, message, state=None, bad=None):
        super().__init__(message)
        self.state = state
        self.bad = bad


@dataclass(frozen=True)
class SolverConfig:
    t_end: float
    grid: Grid = field(default_factory=lambda: make_grid(128))
    dt: Optional[float] = None  # None: picked from the reaction bound
    scheme: Scheme = Scheme.IMEX_BACKWARD_EULER
    snapshot_every: int = 1
    steady_tol: float = DEFAULT_STEADY_TOL
    stop_at_steady: bool = True

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.dt is not None and not (0 < self.dt <= self.t_end):
            raise ValueError("dt must satisfy 0 < dt <= t_end")
        if int(self.snapshot_every) != self.snapshot_every or self.snapshot_every < 1:
            raise ValueError("snapshot_every must be a positive integer")


def build_operators(grid: Grid, params: Parameters) -> tuple[TridiagonalOperator, ...]:
    """Spatial operators for (S, I, R, B)."""
    return (
        assemble_diffusion_neumann(grid, params.D1),
        assemble_diffusion_neumann(grid, params.D2),
        assemble_diffusion_neumann(grid, params.D3),
        assemble_convection_diffusion_robin(grid, params.D4, params.U),
    )


def apriori_bound(params: Parameters, initial: State, horizon: float) -> float:
    """A-priori bound on the summed sup norm of the solution over ``[0, horizon]``."""
    p, s = params, horizon
    hosts = float(np.max(initial.S) + np.max(initial.I) + np.max(initial.R))
    growth = math.exp(s * p.g)
    return 3.0 * (hosts + p.b * s) * (1.0 + growth * p.xi * s) + float(np.max(initial.B)) * growth


def invariant_box(params: Parameters, initial: State) -> tuple[float, float]:
    """Upper bounds ``(V_max, B_max)`` preserved by the scheme for admissible dt.

    The host total obeys a scalar equation with equilibrium m*, so it never
    exceeds ``max(|V0|, m*)``.  Bacteria are capped by the positive root of
    ``xi V_max + (g - delta) B - g B^2 / K_B = 0`` or their initial maximum.
    """
    p = params
    v_max = max(float(np.max(initial.S + initial.I + initial.R)), p.m_star)
    a = p.g / p.K_B
    bq = p.delta - p.g
    ceiling = (-bq + math.sqrt(bq * bq + 4.0 * a * p.xi * v_max)) / (2.0 * a)
    return v_max, max(float(np.max(initial.B)), ceiling)


def reaction_lipschitz(params: Parameters, v_max: float, b_max: float) -> float:
    """Row-sum bound on the reaction Jacobian over ``[0, V_max]^3 x [0, B_max]``."""
    p = params
    inc_B = p.beta2 * v_max / p.K  # sup of d/dB [beta2 S B/(B+K)]
    rows = (
        p.beta1 * v_max + p.beta2 + p.d + p.beta1 * v_max + p.sigma + inc_B,
        p.beta1 * v_max + p.beta2 + max(p.beta1 * v_max, p.d + p.gamma) + inc_B,
        p.gamma + p.d + p.sigma,
        p.xi + p.g + 2.0 * p.g * b_max / p.K_B + p.delta,
    )
    return max(rows)


def admissible_dt(params: Parameters, initial: State) -> float:
    return DT_SAFETY / reaction_lipschitz(params, *invariant_box(params, initial))


def _resolve_dt(dt_max: float, config: SolverConfig) -> tuple[float, int]:
    """Largest dt <= dt_max (and <= config.dt) dividing t_end evenly."""
    target = dt_max if config.dt is None else config.dt
    if config.dt is not None and config.dt > dt_max * (1 + 1e-12) / DT_SAFETY:
        raise ValueError(
            f"dt = {config.dt:g} violates the reaction stability bound dt <= {dt_max / DT_SAFETY:g}"
        )
    n_steps = max(1, math.ceil(config.t_end / target - 1e-9))
    return config.t_end / n_steps, n_steps


def _check(u_next: np.ndarray, state: State) -> None:
    if not np.all(np.isfinite(u_next)):
        raise NumericalError(f"nonfinite value after step from t = {state.time:g}", state, u_next)
    if np.any(u_next < 0):
        raise NumericalError(
            f"negative value {u_next.min():.3e} after step from t = {state.time:g}; dt bound violated",
            state,
            u_next,
        )


class Stepper:
    """IMEX step with the implicit operators factorised once for a fixed dt."""

    def __init__(self, params: Parameters, ops, dt: float):
        self.params = params
        self.ops = tuple(ops)
        self.dt = dt
        self._factor = factorize(self.ops, 1.0 / dt)

    def advance(self, u: np.ndarray) -> np.ndarray:
        rhs = u / self.dt + reaction_array(u, self.params)
        return self._factor.solve(rhs)

    def __call__(self, state: State) -> State:
        u_next = self.advance(state.as_array())
        _check(u_next, state)
        return State.from_array(u_next, state.time + self.dt)


def step(state: State, params: Parameters, ops, dt: float) -> State:
    """One IMEX backward-Euler step of the full system."""
    return Stepper(params, ops, dt)(state)


def _norm_row(u: np.ndarray, m_star: float) -> list[float]:
    V = u[:, 0] + u[:, 1] + u[:, 2]
    mx = u.max(axis=0)
    return [
        float(mx[0]), float(mx[1]), float(mx[2]), float(mx[3]),
        float(u[:, 0].min()), float(u[:, 1].min()), float(u[:, 3].min()),
        float(np.abs(V - m_star).max()),
    ]


@dataclass
class Trajectory:
    times: np.ndarray
    snapshots: list
    norms: dict
    dt: float
    steady: bool = False
    steps: int = 0

    @property
    def final(self):
        return self.snapshots[-1]

    def fields(self) -> np.ndarray:
        """Stacked snapshots, shape ``(n_snapshots, n_cells, 4)``."""
        return np.stack([s.as_array() for s in self.snapshots])


def simulate(initial: State, params: Parameters, config: SolverConfig) -> Trajectory:
    """Integrate from ``initial`` to ``config.t_end`` (or to a steady state)."""
    validate(params)
    if initial.n_cells != config.grid.n_cells:
        raise ValueError("initial state does not match the configured grid")
    if not (initial.is_finite() and initial.is_nonnegative()):
        raise ValueError("initial data must be finite and nonnegative")
    if not params.equal_host_diffusion:
        log.warning("D1, D2, D3 differ: the invariant box used for dt is heuristic")
    dt, n_steps = _resolve_dt(admissible_dt(params, initial), config)
    stepper = Stepper(params, build_operators(config.grid, params), dt)
    m_star = params.m_star

    u = initial.as_array()
    t0 = initial.time
    times, snaps, rows = [t0], [initial], [_norm_row(u, m_star)]
    steady = False
    k = 0
    for k in range(1, n_steps + 1):
        u_next = stepper.advance(u)
        _check(u_next, State.from_array(u, t0 + (k - 1) * dt))
        rate = float(np.abs(u_next - u).max()) / dt
        u = u_next
        steady = config.stop_at_steady and rate < config.steady_tol
        if k % config.snapshot_every == 0 or k == n_steps or steady:
            t = t0 + k * dt
            times.append(t)
            snaps.append(State.from_array(u, t))
            rows.append(_norm_row(u, m_star))
        if steady:
            break
    norms = {name: np.array(col) for name, col in zip(NORM_FIELDS, zip(*rows))}
    return Trajectory(np.array(times), snaps, norms, dt, steady, k)


@dataclass
class ScalarTrajectory:
    times: np.ndarray
    fields: np.ndarray  # (n_snapshots, n_cells)
    dt: float
    steady: bool = False

    @property
    def final(self) -> np.ndarray:
        return self.fields[-1]


def simulate_scalar(
    initial,
    diffusivity: float,
    convection: float,
    source,
    decay: float,
    config: SolverConfig,
) -> ScalarTrajectory:
    """Integrate ``w_t = D w_xx - U w_x + g(x) - decay * w`` with the bacterial BCs.

    Source and decay are explicit, transport implicit, exactly as in the full
    system, so with U = 0, ``source = b`` and ``decay = d`` this reproduces the
    host total ``S + I + R`` of a coupled run step for step.
    """
    grid = config.grid
    w = np.asarray(initial, dtype=float).copy()
    g = np.broadcast_to(np.asarray(source, dtype=float), (grid.n_cells,)).copy()
    if not decay > 0:
        raise ValueError("decay must be positive")
    if np.any(g <= 0):
        raise ValueError("source must be positive pointwise")
    if w.shape != (grid.n_cells,) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("initial must be a finite nonnegative field on the grid")
    dt, n_steps = _resolve_dt(DT_SAFETY / decay, config)
    op = assemble_convection_diffusion_robin(grid, diffusivity, convection)
    factor = factorize(op, 1.0 / dt)
    times, fields = [0.0], [w.copy()]
    steady = False
    for k in range(1, n_steps + 1):
        w_next = factor.solve(w / dt + g - decay * w)
        if np.any(w_next < 0) or not np.all(np.isfinite(w_next)):
            raise NumericalError(f"invalid scalar value after step {k}", w, w_next)
        rate = float(np.abs(w_next - w).max()) / dt
        w = w_next
        steady = config.stop_at_steady and rate < config.steady_tol
        if k % config.snapshot_every == 0 or k == n_steps or steady:
            times.append(k * dt)
            fields.append(w.copy())
        if steady:
            break
    return ScalarTrajectory(np.array(times), np.array(fields), dt, steady)


def steady_state_scalar(diffusivity: float, convection: float, source, decay: float, grid: Grid) -> np.ndarray:
    """Direct solve of ``(decay - A) w = g``."""
    if not decay > 0:
        raise ValueError("decay must be positive")
    g = np.broadcast_to(np.asarray(source, dtype=float), (grid.n_cells,))
    if np.any(g <= 0):
        raise ValueError("source must be positive pointwise")
    op = assemble_convection_diffusion_robin(grid, diffusivity, convection)
    return solve_shifted(op, decay, g)


def residual(state: State, params: Parameters, ops) -> float:
    """Sup norm of ``A u + F(u)`` over all four fields."""
    u = state.as_array()
    f = reaction_array(u, params)
    return max(float(np.abs(apply(op, u[:, k]) + f[:, k]).max()) for k, op in enumerate(ops))
