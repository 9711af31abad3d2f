"""Uniform grids, trapezoidal quadrature, finite differences and the
omega-scaled Fourier transform linking q-space and L-space."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

MIN_POINTS = 16


class GridError(ValueError):
    """Raised for invalid grids or grid mismatches."""


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise GridError("grid bounds must be finite")
        if not self.x_min < self.x_max:
            raise GridError(f"need x_min < x_max, got {self.x_min} >= {self.x_max}")
        if int(self.n_points) != self.n_points or self.n_points < MIN_POINTS:
            raise GridError(f"n_points must be an integer >= {MIN_POINTS}, got {self.n_points}")

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoidal weights."""
        w = np.full(self.n_points, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w

    @property
    def is_symmetric(self) -> bool:
        return self.x_min == -self.x_max

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "n_points": self.n_points}


def make_grid(x_max: float, n_points: int) -> Grid:
    """Symmetric grid on ``[-x_max, x_max]``."""
    if not math.isfinite(x_max) or x_max <= 0:
        raise GridError(f"x_max must be finite and positive, got {x_max}")
    return Grid(-float(x_max), float(x_max), int(n_points))


def default_half_width(omega: float, n_max: int = 0) -> float:
    """Half-width that keeps Hermite states up to ``n_max`` decayed at the edges.

    The ground state needs about 8/sqrt(omega); higher modes reach out to their
    classical turning point sqrt(2n+1)/sqrt(omega), so the margin grows with n.
    """
    return (8.0 + math.sqrt(2 * n_max + 1) - 1.0) / math.sqrt(omega)


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Complex samples on a uniform grid."""

    values: np.ndarray
    grid: Grid = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=complex)
        if values.shape != (self.grid.n_points,):
            raise GridError(
                f"expected {self.grid.n_points} samples, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise GridError("samples must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, func, grid: Grid) -> "SampledFunction":
        return cls(func(grid.points), grid)

    @classmethod
    def zeros(cls, grid: Grid) -> "SampledFunction":
        return cls(np.zeros(grid.n_points), grid)

    @property
    def x(self) -> np.ndarray:
        return self.grid.points

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def _check(self, other: "SampledFunction"):
        if other.grid != self.grid:
            raise GridError("functions live on different grids")

    def __add__(self, other):
        if isinstance(other, SampledFunction):
            self._check(other)
            return SampledFunction(self.values + other.values, self.grid)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, SampledFunction):
            self._check(other)
            return SampledFunction(self.values - other.values, self.grid)
        return NotImplemented

    def __mul__(self, scalar):
        if isinstance(scalar, SampledFunction):
            return NotImplemented
        return SampledFunction(self.values * scalar, self.grid)

    __rmul__ = __mul__

    def __neg__(self):
        return SampledFunction(-self.values, self.grid)

    # -- serialization -----------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x", "re", "im"])
        for x, v in zip(self.x, self.values):
            writer.writerow([repr(float(x)), repr(float(v.real)), repr(float(v.imag))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SampledFunction":
        """Parse ``x, re, im`` CSV. The grid is rebuilt from the first and last x."""
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["x", "re", "im"]:
            raise GridError("CSV header must be 'x,re,im'")
        body = [r for r in rows[1:] if r]
        try:
            data = np.array([[float(c) for c in r] for r in body], dtype=float)
        except ValueError as exc:
            raise GridError(f"non-numeric CSV field: {exc}") from None
        if data.ndim != 2 or data.shape[1] != 3:
            raise GridError("each CSV row needs exactly three fields")
        grid = Grid(float(data[0, 0]), float(data[-1, 0]), len(data))
        if not np.allclose(data[:, 0], grid.points, rtol=0, atol=1e-9 * grid.spacing * grid.n_points):
            raise GridError("x column is not a uniform grid")
        return cls(data[:, 1] + 1j * data[:, 2], grid)

    def to_json(self) -> str:
        payload = {
            "grid": self.grid.to_dict(),
            "values": [[float(v.real), float(v.imag)] for v in self.values],
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "SampledFunction":
        try:
            payload = json.loads(text)
            g = payload["grid"]
            grid = Grid(float(g["x_min"]), float(g["x_max"]), int(g["n_points"]))
            pairs = np.asarray(payload["values"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise GridError(f"malformed function JSON: {exc}") from None
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise GridError("values must be a list of [re, im] pairs")
        return cls(pairs[:, 0] + 1j * pairs[:, 1], grid)


def integrate(f: SampledFunction) -> complex:
    """Trapezoidal rule over the whole grid."""
    return complex(np.dot(f.grid.weights, f.values))


def integrate_values(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Trapezoidal rule along the last axis of a raw sample array."""
    return values @ grid.weights


def diff_values(values: np.ndarray, spacing: float) -> np.ndarray:
    """Second-order differences along the last axis.

    Central in the interior, one-sided three-point at both ends.
    """
    values = np.asarray(values)
    if values.shape[-1] < 3:
        raise GridError("need at least 3 points to differentiate")
    out = np.empty_like(values)
    out[..., 1:-1] = (values[..., 2:] - values[..., :-2]) / (2 * spacing)
    out[..., 0] = (-3 * values[..., 0] + 4 * values[..., 1] - values[..., 2]) / (2 * spacing)
    out[..., -1] = (3 * values[..., -1] - 4 * values[..., -2] + values[..., -3]) / (2 * spacing)
    return out


def diff_matrix(grid: Grid) -> sparse.csr_matrix:
    """Sparse matrix of :func:`diff_values`, used for adjoints."""
    n, h = grid.n_points, grid.spacing
    rows, cols, vals = [], [], []
    for j in range(1, n - 1):
        rows += [j, j]
        cols += [j - 1, j + 1]
        vals += [-0.5 / h, 0.5 / h]
    rows += [0, 0, 0, n - 1, n - 1, n - 1]
    cols += [0, 1, 2, n - 1, n - 2, n - 3]
    vals += [-1.5 / h, 2 / h, -0.5 / h, 1.5 / h, -2 / h, 0.5 / h]
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def laplacian_values(values: np.ndarray, spacing: float) -> np.ndarray:
    """Fourth-order five-point second difference along the last axis.

    Samples beyond the grid are taken as zero (truncated, decayed domain), which
    keeps the operator symmetric.
    """
    values = np.asarray(values)
    pad = [(0, 0)] * (values.ndim - 1) + [(2, 2)]
    v = np.pad(values, pad)
    return (-v[..., 4:] + 16 * v[..., 3:-1] - 30 * v[..., 2:-2]
            + 16 * v[..., 1:-3] - v[..., :-4]) / (12 * spacing ** 2)


def laplacian_banded(grid: Grid) -> np.ndarray:
    """Upper banded storage (3 x n) of ``-laplacian_values`` for banded solvers."""
    h2 = grid.spacing ** 2
    ab = np.zeros((3, grid.n_points))
    ab[0, 2:] = 1.0 / (12 * h2)
    ab[1, 1:] = -16.0 / (12 * h2)
    ab[2, :] = 30.0 / (12 * h2)
    return ab


def differentiate(f: SampledFunction) -> SampledFunction:
    return SampledFunction(diff_values(f.values, f.grid.spacing), f.grid)


def _check_omega(omega: float):
    if not (math.isfinite(omega) and omega > 0):
        raise ValueError(f"omega must be positive, got {omega}")


def transform_kernel(target: Grid, source: Grid, omega: float, sign: int = -1) -> np.ndarray:
    """Dense quadrature matrix of the scaled transform.

    ``K[j, k] = sqrt(omega / 2 pi) * w_k * exp(sign * i * omega * t_j * s_k)``
    """
    _check_omega(omega)
    t = target.points[:, None]
    s = source.points[None, :]
    pref = math.sqrt(omega / (2 * math.pi))
    return pref * np.exp(sign * 1j * omega * t * s) * source.weights[None, :]


def transform_forward(f: SampledFunction, q_grid: Grid, omega: float) -> SampledFunction:
    """psi(q) = sqrt(omega/2pi) * int F(L) exp(-i omega q L) dL."""
    kernel = transform_kernel(q_grid, f.grid, omega, sign=-1)
    return SampledFunction(kernel @ f.values, q_grid)


def transform_inverse(psi: SampledFunction, l_grid: Grid, omega: float) -> SampledFunction:
    """Adjoint kernel exp(+i omega q L) with the same prefactor."""
    kernel = transform_kernel(l_grid, psi.grid, omega, sign=+1)
    return SampledFunction(kernel @ psi.values, l_grid)


def l2_norm(f: SampledFunction) -> float:
    return math.sqrt(max(integrate_values(np.abs(f.values) ** 2, f.grid).real, 0.0))


def l2_distance(a: SampledFunction, b: SampledFunction) -> float:
    if a.grid != b.grid:
        raise GridError("l2_distance needs functions on the same grid")
    return l2_norm(a - b)
