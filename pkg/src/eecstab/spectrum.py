"""Discretized oscillator operators, their low spectrum, Hermite reference
states and the multiplier triple attached to each mode."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .grid import Grid, GridError, SampledFunction, integrate_values

HERMITE_MAX_ORDER = 20
BOUNDARY_THRESHOLD = 1e-8


class SpectrumError(ValueError):
    pass


class EigenConvergenceError(RuntimeError):
    """The tridiagonal eigensolver did not converge."""


@dataclass(frozen=True)
class TridiagonalOperator:
    diagonal: np.ndarray
    off_diagonal: np.ndarray
    grid: Grid

    def __post_init__(self):
        if self.diagonal.shape != (self.grid.n_points,):
            raise SpectrumError("diagonal length must equal n_points")
        if self.off_diagonal.shape != (self.grid.n_points - 1,):
            raise SpectrumError("off-diagonal length must equal n_points - 1")
        if not (np.all(np.isfinite(self.diagonal)) and np.all(np.isfinite(self.off_diagonal))):
            raise SpectrumError("operator entries must be finite")

    def apply(self, values: np.ndarray) -> np.ndarray:
        out = self.diagonal * values
        out[:-1] += self.off_diagonal * values[1:]
        out[1:] += self.off_diagonal * values[:-1]
        return out

    def banded(self, shift: float = 0.0) -> np.ndarray:
        """Upper banded storage of ``op + shift`` for ``scipy.linalg.solveh_banded``."""
        ab = np.zeros((2, self.grid.n_points))
        ab[0, 1:] = self.off_diagonal
        ab[1] = self.diagonal + shift
        return ab


@dataclass(frozen=True)
class Multipliers:
    lambda1: float
    lambda2: float
    lambda3: float

    def __post_init__(self):
        if not self.lambda1 < 0:
            raise SpectrumError(f"lambda1 must be negative, got {self.lambda1}")

    def to_dict(self) -> dict:
        return {"lambda1": self.lambda1, "lambda2": self.lambda2, "lambda3": self.lambda3}


@dataclass(frozen=True)
class EigenSolution:
    eigenvalues: np.ndarray
    eigenfunctions: tuple


def hamiltonian(grid: Grid, omega: float, curvature: float) -> TridiagonalOperator:
    """Three-point discretization of ``-1/2 d^2/dq^2 + curvature * omega^2 q^2 / 2``."""
    if not omega > 0:
        raise SpectrumError(f"omega must be positive, got {omega}")
    if not curvature > 0:
        raise SpectrumError(f"curvature must be positive (bound problem), got {curvature}")
    h2 = grid.spacing ** 2
    q = grid.points
    diagonal = 1.0 / h2 + curvature * 0.5 * omega ** 2 * q ** 2
    off = np.full(grid.n_points - 1, -0.5 / h2)
    return TridiagonalOperator(diagonal, off, grid)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    # "first nonzero" judged against the vector's own scale
    idx = np.flatnonzero(np.abs(v) > 1e-8 * np.max(np.abs(v)))[0]
    return -v if v[idx] < 0 else v


def solve_spectrum(op: TridiagonalOperator, k: int) -> EigenSolution:
    """Lowest ``k`` eigenpairs, normalized with the trapezoidal rule."""
    n = op.grid.n_points
    if not 1 <= k <= n // 4:
        raise SpectrumError(f"k must lie in [1, {n // 4}], got {k}")
    try:
        vals, vecs = eigh_tridiagonal(
            op.diagonal, op.off_diagonal, select="i", select_range=(0, k - 1)
        )
    except LinAlgError as exc:
        raise EigenConvergenceError(str(exc)) from exc
    funcs = []
    for col in vecs.T:
        col = _fix_sign(col)
        norm = math.sqrt(integrate_values(col ** 2, op.grid))
        funcs.append(SampledFunction(col / norm, op.grid))
    return EigenSolution(np.asarray(vals), tuple(funcs))


def hermite_values(n: int, omega: float, x: np.ndarray) -> np.ndarray:
    """Normalized Hermite functions via the orthonormal three-term recurrence."""
    if not 0 <= n <= HERMITE_MAX_ORDER:
        raise SpectrumError(f"Hermite order must be in [0, {HERMITE_MAX_ORDER}], got {n}")
    if not omega > 0:
        raise SpectrumError(f"omega must be positive, got {omega}")
    xi = math.sqrt(omega) * np.asarray(x, dtype=float)
    prev = (omega / math.pi) ** 0.25 * np.exp(-0.5 * xi ** 2)
    if n == 0:
        return prev
    cur = math.sqrt(2.0) * xi * prev
    for k in range(1, n):
        prev, cur = cur, math.sqrt(2.0 / (k + 1)) * xi * cur - math.sqrt(k / (k + 1)) * prev
    return cur


def hermite_state(n: int, omega: float, grid: Grid) -> SampledFunction:
    values = hermite_values(n, omega, grid.points)
    edge = max(abs(values[0]), abs(values[-1]))
    if edge > BOUNDARY_THRESHOLD:
        raise GridError(
            f"grid [{grid.x_min}, {grid.x_max}] too narrow for mode {n}: "
            f"boundary magnitude {edge:.2e}"
        )
    return SampledFunction(values, grid)


def multipliers_for(n: int, omega: float) -> Multipliers:
    if n < 0:
        raise SpectrumError("mode index must be non-negative")
    if not omega > 0:
        raise SpectrumError(f"omega must be positive, got {omega}")
    energy = (n + 0.5) * omega
    return Multipliers(-1.0, energy, -energy)
