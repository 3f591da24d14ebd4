"""SIRS-B cholera model: parameters, reaction terms and the disease-free state."""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass

import numpy as np

PARAMETER_NAMES = (
    "b", "d", "gamma", "sigma", "delta", "xi", "beta1", "beta2",
    "K", "U", "K_B", "g", "D1", "D2", "D3", "D4",
)


class ParameterError(ValueError):
    pass


class HypothesisWarning(UserWarning):
    """A hypothesis of the threshold results fails; the simulation is still defined."""


@dataclass(frozen=True)
class Parameters:
    b: float
    d: float
    gamma: float
    sigma: float
    delta: float
    xi: float
    beta1: float
    beta2: float
    K: float
    U: float
    K_B: float
    g: float
    D1: float
    D2: float
    D3: float
    D4: float

    @property
    def m_star(self) -> float:
        return self.b / self.d

    @property
    def equal_host_diffusion(self) -> bool:
        return self.D1 == self.D2 == self.D3

    @property
    def growth_below_death(self) -> bool:
        return self.g < self.delta

    def replace(self, **changes) -> "Parameters":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, values) -> "Parameters":
        missing = [k for k in PARAMETER_NAMES if k not in values]
        if missing:
            raise ParameterError(f"missing parameters: {', '.join(missing)}")
        return cls(**{k: float(values[k]) for k in PARAMETER_NAMES})


def validate(params: Parameters, *, emit: bool = False) -> list[str]:
    """Check the positivity assumption and report failed threshold-result hypotheses.

    Nonpositive (or nonfinite) parameters raise :class:`ParameterError`;
    only the convection speed ``U`` may be zero.
    Returns warning strings; with ``emit=True`` they are also issued through
    :mod:`warnings` as :class:`HypothesisWarning`.
    """
    for name in PARAMETER_NAMES:
        value = getattr(params, name)
        # U = 0 is admitted: the inflow condition then reduces to reflection
        ok = value >= 0 if name == "U" else value > 0
        if not (math.isfinite(value) and ok):
            kind = "nonnegative" if name == "U" else "positive"
            raise ParameterError(f"parameter {name} must be a {kind} finite number, got {value!r}")
    messages = []
    if not params.equal_host_diffusion:
        messages.append("threshold hypothesis D1 = D2 = D3 violated")
    if not params.growth_below_death:
        messages.append("persistence hypothesis g < delta violated")
    if emit:
        for m in messages:
            warnings.warn(m, HypothesisWarning, stacklevel=2)
    return messages


@dataclass(frozen=True)
class State:
    """The four fields on a grid plus the time they belong to."""

    S: np.ndarray
    I: np.ndarray
    R: np.ndarray
    B: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        n = None
        for name in "SIRB":
            a = np.array(getattr(self, name), dtype=float)
            if a.ndim != 1 or (n is not None and len(a) != n):
                raise ValueError("S, I, R, B must be 1-D fields of equal length")
            n = len(a)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def from_array(cls, u, time: float = 0.0) -> "State":
        u = np.asarray(u, dtype=float)
        return cls(u[:, 0], u[:, 1], u[:, 2], u[:, 3], time)

    def as_array(self) -> np.ndarray:
        """Fields stacked as columns, shape ``(n_cells, 4)``."""
        return np.column_stack([self.S, self.I, self.R, self.B])

    @property
    def n_cells(self) -> int:
        return len(self.S)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.as_array())))

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.as_array() >= 0))

    def sup_norm(self) -> float:
        """Sum of the per-field sup norms."""
        return float(np.abs(self.as_array()).max(axis=0).sum())


def reaction_array(u: np.ndarray, p: Parameters) -> np.ndarray:
    """Reaction rates for a stacked ``(n, 4)`` state; returns the same shape."""
    S, I, R, B = u[:, 0], u[:, 1], u[:, 2], u[:, 3]
    infection = p.beta1 * S * I + p.beta2 * S * (B / (B + p.K))
    out = np.empty_like(u, dtype=float)
    out[:, 0] = p.b - infection - p.d * S + p.sigma * R
    out[:, 1] = infection - (p.d + p.gamma) * I
    out[:, 2] = p.gamma * I - (p.d + p.sigma) * R
    out[:, 3] = p.xi * I + p.g * B * (1.0 - B / p.K_B) - p.delta * B
    return out


def reaction(state: State, params: Parameters):
    """Pointwise rates ``(dS, dI, dR, dB)`` of the reaction part."""
    r = reaction_array(state.as_array(), params)
    return r[:, 0], r[:, 1], r[:, 2], r[:, 3]


def dfe(params: Parameters, n_cells: int, time: float = 0.0) -> State:
    """Disease-free equilibrium ``(m*, 0, 0, 0)`` on ``n_cells`` cells."""
    zero = np.zeros(n_cells)
    return State(np.full(n_cells, params.m_star), zero, zero, zero, time)


def default_parameters(**overrides) -> Parameters:
    """O(1) preset with b = d (so m* = 1) and g = delta / 2."""
    base = dict(
        b=1.0, d=1.0, gamma=1.0, sigma=0.5, delta=1.0, xi=1.0,
        beta1=1.0, beta2=1.0, K=1.0, U=0.5, K_B=1.0, g=0.5,
        D1=0.1, D2=0.1, D3=0.1, D4=0.1,
    )
    base.update(overrides)
    return Parameters(**base)
