"""Cell-centred finite-volume operators on the unit interval.

Two operators are needed by the model: the reflecting (Neumann) diffusion
used by the three host compartments, and the convection-diffusion operator
for the bacteria, whose inflow boundary carries a zero-total-flux (Robin)
condition and whose outflow boundary only blocks diffusion.

All operators are stored as three diagonals.  Shifted systems
``(shift * I - op) w = rhs`` are solved with the Thomas algorithm; the
elimination coefficients can be precomputed once with :func:`factorize`
and reused across many right-hand sides, which is what the time stepper
does.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class OperatorKind(enum.Enum):
    NEUMANN_DIFFUSION = "NeumannDiffusion"
    ROBIN_CONVECTION_DIFFUSION = "RobinConvectionDiffusion"


class ZeroPivotError(ArithmeticError):
    """Raised when tridiagonal elimination hits a (numerically) zero pivot."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred mesh on [0, 1]."""

    n_cells: int
    spacing: float = field(init=False)
    centers: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 3:
            raise ValueError(f"n_cells must be an integer >= 3, got {self.n_cells!r}")
        object.__setattr__(self, "n_cells", int(self.n_cells))
        h = 1.0 / self.n_cells
        object.__setattr__(self, "spacing", h)
        object.__setattr__(self, "centers", _frozen((np.arange(self.n_cells) + 0.5) * h))


def make_grid(n_cells: int) -> Grid:
    return Grid(n_cells)


@dataclass(frozen=True)
class TridiagonalOperator:
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    kind: OperatorKind

    def __post_init__(self):
        n = len(self.diag)
        if len(self.lower) != n - 1 or len(self.upper) != n - 1:
            raise ValueError("off-diagonals must have length n - 1")
        for name in ("lower", "diag", "upper"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n_cells(self) -> int:
        return len(self.diag)

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.lower, -1) + np.diag(self.upper, 1)

    def row_sums(self) -> np.ndarray:
        s = self.diag.copy()
        s[1:] += self.lower
        s[:-1] += self.upper
        return s

    def __matmul__(self, v):
        return apply(self, v)


def assemble_diffusion_neumann(grid: Grid, diffusivity: float) -> TridiagonalOperator:
    """``D * d2/dx2`` with a reflecting ghost cell at both ends (zero row sums)."""
    if not diffusivity > 0:
        raise ValueError(f"diffusivity must be positive, got {diffusivity!r}")
    n = grid.n_cells
    k = diffusivity / grid.spacing**2
    off = np.full(n - 1, k)
    diag = np.full(n, -2.0 * k)
    diag[0] = diag[-1] = -k
    return TridiagonalOperator(off, diag, off.copy(), OperatorKind.NEUMANN_DIFFUSION)


def assemble_convection_diffusion_robin(
    grid: Grid, diffusivity: float, convection: float
) -> TridiagonalOperator:
    """Flux-form ``d/dx (D dB/dx - U B)`` with first-order upwinding (U >= 0).

    The face at x = 0 carries zero total flux, i.e. ``D B_x - U B = 0``; the
    face at x = 1 carries no diffusive flux, so the only flux through it is
    the convective outflow ``U B``.  Off-diagonals are nonnegative.
    """
    if not diffusivity > 0:
        raise ValueError(f"diffusivity must be positive, got {diffusivity!r}")
    if not convection >= 0:
        raise ValueError(f"convection must be nonnegative, got {convection!r}")
    if convection == 0:
        op = assemble_diffusion_neumann(grid, diffusivity)
        return TridiagonalOperator(op.lower, op.diag, op.upper, OperatorKind.ROBIN_CONVECTION_DIFFUSION)
    n = grid.n_cells
    h = grid.spacing
    k = diffusivity / h**2
    c = convection / h
    # cell i loses U B_i / h through its right face; cell 0 gains nothing
    # through the inflow face and cell n-1 loses U B_{n-1} / h to the outside
    lower = np.full(n - 1, k + c)
    upper = np.full(n - 1, k)
    diag = np.full(n, -2.0 * k - c)
    diag[0] = -k - c
    diag[-1] = -k - c
    return TridiagonalOperator(lower, diag, upper, OperatorKind.ROBIN_CONVECTION_DIFFUSION)


def apply(op: TridiagonalOperator, v) -> np.ndarray:
    """Tridiagonal matrix-vector product; ``v`` may carry trailing batch axes."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != op.n_cells:
        raise ValueError(f"length mismatch: operator has {op.n_cells} cells, field has {v.shape[0]}")
    extra = (slice(None),) + (None,) * (v.ndim - 1)
    out = op.diag[extra] * v
    out[1:] += op.lower[extra] * v[:-1]
    out[:-1] += op.upper[extra] * v[1:]
    return out


@dataclass(frozen=True)
class ShiftedFactor:
    """Thomas elimination coefficients for ``shift * I - op``.

    Coefficient arrays have shape ``(n,)`` for one operator or ``(n, k)`` for
    a batch of ``k`` operators solved column by column in one sweep.
    """

    sub: np.ndarray  # sub-diagonal of the shifted matrix, sub[0] unused
    inv_pivot: np.ndarray
    ratio: np.ndarray  # upper[i] / pivot[i]

    @property
    def n_cells(self) -> int:
        return self.inv_pivot.shape[0]

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        n = self.n_cells
        if rhs.shape[0] != n:
            raise ValueError(f"length mismatch: factor has {n} cells, rhs has {rhs.shape[0]}")
        sub, inv_pivot, ratio = self.sub, self.inv_pivot, self.ratio
        if rhs.ndim == 1 and inv_pivot.ndim == 1:
            # scalar fast path on Python floats
            r = rhs.tolist()
            s, ip, q = sub.tolist(), inv_pivot.tolist(), ratio.tolist()
            y = [0.0] * n
            y[0] = r[0] * ip[0]
            for i in range(1, n):
                y[i] = (r[i] - s[i] * y[i - 1]) * ip[i]
            for i in range(n - 2, -1, -1):
                y[i] -= q[i] * y[i + 1]
            return np.array(y)
        if inv_pivot.ndim < rhs.ndim:
            expand = (slice(None),) + (None,) * (rhs.ndim - inv_pivot.ndim)
            sub, inv_pivot, ratio = sub[expand], inv_pivot[expand], ratio[expand]
        y = np.empty(np.broadcast_shapes(rhs.shape, inv_pivot.shape))
        y[0] = rhs[0] * inv_pivot[0]
        for i in range(1, n):
            y[i] = (rhs[i] - sub[i] * y[i - 1]) * inv_pivot[i]
        for i in range(n - 2, -1, -1):
            y[i] -= ratio[i] * y[i + 1]
        return y


def _mmatrix_pivots(op_list, shifts, lower, upper) -> np.ndarray:
    """Pivots of ``shift * I - op`` for operators with nonnegative off-diagonals.

    Each pivot is the eliminated row's excess over its remaining upper entry,
    and the excess is updated by adding nonnegative terms only, so pivots keep
    full relative accuracy even when ``shift`` is small against the stencil.
    The row excess ``shift - rowsum`` uses the exact row sum of the stored entries.
    """
    n, k = lower.shape[0] + 1, len(op_list)
    excess = np.empty((n, k))
    for j, o in enumerate(op_list):
        lo, di, up = o.lower.tolist(), o.diag.tolist(), o.upper.tolist()
        for i in range(n):
            terms = [di[i]]
            if i > 0:
                terms.append(lo[i - 1])
            if i < n - 1:
                terms.append(up[i])
            excess[i, j] = shifts[j] - math.fsum(terms)
    pivot = np.empty((n, k))
    up_row = np.zeros((n, k))
    up_row[:-1] = upper
    e = excess[0]
    pivot[0] = e + up_row[0]
    with np.errstate(divide="ignore", invalid="ignore"):  # zero pivots are reported by the caller
        for i in range(1, n):
            e = excess[i] + lower[i - 1] * e / pivot[i - 1]
            pivot[i] = e + up_row[i]
    return pivot


def factorize(ops, shift) -> ShiftedFactor:
    """Precompute elimination for ``shift * I - op`` (one operator or a list).

    ``shift`` may be a scalar or one value per operator.  Raises
    :class:`ZeroPivotError` when a pivot vanishes relative to the matrix scale.
    """
    batch = not isinstance(ops, TridiagonalOperator)
    op_list = list(ops) if batch else [ops]
    n = op_list[0].n_cells
    if any(o.n_cells != n for o in op_list):
        raise ValueError("all operators in a batch must share the grid")
    shifts = np.broadcast_to(np.asarray(shift, dtype=float), (len(op_list),))
    lower = np.stack([o.lower for o in op_list], axis=1)
    upper = np.stack([o.upper for o in op_list], axis=1)
    diag = shifts[None, :] - np.stack([o.diag for o in op_list], axis=1)
    sub = np.zeros((n, len(op_list)))
    sub[1:] = -lower
    sup = -upper
    scale = np.abs(diag).max(axis=0) + 1e-300
    pivot = np.empty_like(diag)
    ratio = np.zeros_like(diag)
    if all(o.lower.min() >= 0 and o.upper.min() >= 0 for o in op_list):
        pivot = _mmatrix_pivots(op_list, shifts, lower, upper)
    else:
        pivot[0] = diag[0]
        for i in range(1, n):
            pivot[i] = diag[i] - sub[i] * sup[i - 1] / pivot[i - 1]
    for i in range(n):
        if np.any(np.abs(pivot[i]) <= 1e-13 * scale):
            raise ZeroPivotError(f"zero pivot at row {i}; shifted operator is singular")
        if i < n - 1:
            ratio[i] = sup[i] / pivot[i]
    inv_pivot = 1.0 / pivot
    if not batch:
        sub, inv_pivot, ratio = sub[:, 0], inv_pivot[:, 0], ratio[:, 0]
    return ShiftedFactor(_frozen(sub), _frozen(inv_pivot), _frozen(ratio))


def solve_shifted(op: TridiagonalOperator, shift: float, rhs) -> np.ndarray:
    """Solve ``(shift * I - op) w = rhs`` by tridiagonal elimination."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != op.n_cells:
        raise ValueError(f"length mismatch: operator has {op.n_cells} cells, rhs has {rhs.shape[0]}")
    return factorize(op, shift).solve(rhs)
