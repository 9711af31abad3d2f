"""Stationary points of I(psi, F) under the equilibrium constraints.

With the curvature multiplier pinned at lambda1 = -1 the Lagrangian splits
into E(psi) - E(F) plus the two normalization terms, so a stationary point is
a minimum in psi and a maximum in F. The solver flips the sign of the F block
and minimizes the augmented merit

    E(psi) + E(F) - nu_psi c_psi - nu_f c_f
        + rho/2 (c_psi^2 + c_f^2 + c_q^2 + c_l^2)

where c_q, c_l are the two balance equations and c_psi, c_f the normalization
defects. The normalization multipliers map back to lambda2 = nu_f and
lambda3 = -nu_psi.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .eec import (
    EecResidual,
    EecState,
    OscillatorConfig,
    evaluate_eec,
    expected_energy,
    functional_I,
    kinetic,
    norm_sq,
    potential,
)
from .grid import Grid, SampledFunction, laplacian_banded, laplacian_values, transform_kernel
from .spectrum import Multipliers, hermite_values

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Raised when the objective stops being finite."""


@dataclass(frozen=True)
class SolveOptions:
    max_iterations: int = 30
    gradient_tolerance: float = 1e-6
    constraint_tolerance: float = 1e-6
    penalty_growth: float = 10.0
    paired_mode: bool = False
    seed: int = 0
    initial_penalty: float = 100.0
    inner_iterations: int = 2000

    def __post_init__(self):
        if self.max_iterations < 1 or self.inner_iterations < 1:
            raise ValueError("iteration limits must be >= 1")
        if not (self.gradient_tolerance > 0 and self.constraint_tolerance > 0):
            raise ValueError("tolerances must be positive")
        if not self.penalty_growth > 1:
            raise ValueError("penalty_growth must exceed 1")
        if not self.initial_penalty > 0:
            raise ValueError("initial_penalty must be positive")


@dataclass
class VariationalResult:
    state: EecState
    multipliers: Multipliers
    objective: float
    constraint_residuals: EecResidual
    stationarity_residual: tuple
    iterations: int
    converged: bool
    trace: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "omega": self.state.omega,
            "multipliers": self.multipliers.to_dict(),
            "objective": self.objective,
            "constraint_residuals": self.constraint_residuals.to_dict(),
            "stationarity_residual": list(self.stationarity_residual),
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class QuantizationEntry:
    energy: float
    nearest_level: int
    defect: float


# -- discrete operators -----------------------------------------------------

def _interior_norm(values: np.ndarray, grid: Grid) -> float:
    inner = values[2:-2]
    return math.sqrt(grid.spacing * float(np.sum(np.abs(inner) ** 2)))


def stationarity_residual(state: EecState, m: Multipliers) -> tuple:
    """L2 norms of the two stationarity equations on the grid interior.

    psi:  -1/2 psi'' - lambda1 omega^2 q^2 psi / 2 + lambda3 psi
    F:    -lambda1/2 F'' - omega^2 L^2 F / 2 + lambda2 F
    """
    w2 = state.omega ** 2
    psi, f = state.psi, state.f
    q, ell = psi.grid.points, f.grid.points
    r_psi = (-0.5 * laplacian_values(psi.values, psi.grid.spacing)
             - m.lambda1 * 0.5 * w2 * q ** 2 * psi.values + m.lambda3 * psi.values)
    r_f = (-0.5 * m.lambda1 * laplacian_values(f.values, f.grid.spacing)
           - 0.5 * w2 * ell ** 2 * f.values + m.lambda2 * f.values)
    return _interior_norm(r_psi, psi.grid), _interior_norm(r_f, f.grid)


class _Block:
    """Functionals on one grid with gradients in the trapezoidal inner product."""

    def __init__(self, grid: Grid, omega: float):
        self.grid = grid
        self.omega = omega
        self.w = grid.weights
        self.x2w = omega ** 2 * grid.points ** 2
        ab = laplacian_banded(grid)
        ab[-1] += self.x2w
        self.chol = cholesky_banded(ab)

    def kinetic(self, v):
        return float(kinetic(v, self.grid))

    def potential(self, v):
        return float(potential(v, self.grid, self.omega))

    def norm(self, v):
        return float(norm_sq(v, self.grid))

    def grad_kinetic(self, v):
        return -(self.grid.spacing / self.w) * laplacian_values(v, self.grid.spacing)

    def grad_potential(self, v):
        return self.x2w * v

    def precondition(self, g, scale=1.0):
        re = cho_solve_banded((self.chol, False), g.real)
        im = cho_solve_banded((self.chol, False), g.imag)
        return (re + 1j * im) / scale

    def inner(self, a, b):
        return float(np.dot(self.w, (np.conj(a) * b).real))


class _Merit:
    """Augmented merit on the stacked unknown.

    Free mode stacks (psi, F) into one vector; paired mode keeps only psi and
    rebuilds F through the inverse transform.
    """

    def __init__(self, state: EecState, paired: bool):
        self.q = _Block(state.psi.grid, state.omega)
        self.l = _Block(state.f.grid, state.omega)
        self.paired = paired
        self.nq = state.psi.grid.n_points
        if paired:
            self.t_inv = transform_kernel(state.f.grid, state.psi.grid, state.omega, sign=+1)
            self.w = self.q.w
            # balances and the F normalization hold identically for transform pairs
            self.active = [3]
        else:
            self.w = np.concatenate([self.q.w, self.l.w])
            self.active = [0, 1, 2, 3]

    def split(self, z):
        if self.paired:
            return z, self.t_inv @ z
        return z[:self.nq], z[self.nq:]

    def _pull_back(self, g_psi, g_f):
        """Map a (psi, F) gradient pair onto the unknown."""
        if self.paired:
            # chain rule through F = T psi, moving between the two weightings
            return g_psi + (self.t_inv.conj().T @ (self.l.w * g_f)) / self.q.w
        return np.concatenate([g_psi, g_f])

    def constraints(self, z):
        psi, f = self.split(z)
        q, l = self.q, self.l
        return np.array([
            q.kinetic(psi) - l.potential(f),
            l.kinetic(f) - q.potential(psi),
            l.norm(f) - 1.0,
            q.norm(psi) - 1.0,
        ])

    def constraint_gradients(self, z):
        psi, f = self.split(z)
        q, l = self.q, self.l
        kq, vq = q.grad_kinetic(psi), q.grad_potential(psi)
        kl, vl = l.grad_kinetic(f), l.grad_potential(f)
        zq, zl = np.zeros_like(psi), np.zeros_like(f)
        pairs = [(kq, -vl), (-vq, kl), (zq, 2 * f), (2 * psi, zl)]
        return [self._pull_back(a, b) for a, b in pairs]

    def energy(self, z):
        psi, f = self.split(z)
        return (self.q.kinetic(psi) + self.q.potential(psi)
                + self.l.kinetic(f) + self.l.potential(f))

    def energy_gradient(self, z):
        psi, f = self.split(z)
        return self._pull_back(self.q.grad_kinetic(psi) + self.q.grad_potential(psi),
                               self.l.grad_kinetic(f) + self.l.grad_potential(f))

    def value(self, z, nu, rho):
        c = self.constraints(z)[self.active]
        return self.energy(z) - float(nu @ c) + 0.5 * rho * float(c @ c)

    def gradient(self, z, nu, rho):
        c = self.constraints(z)[self.active]
        all_grads = self.constraint_gradients(z)
        grads = [all_grads[k] for k in self.active]
        g = self.energy_gradient(z)
        for ck, nk, gk in zip(c, nu, grads):
            g = g + (rho * ck - nk) * gk
        return g, grads

    def inner(self, a, b):
        return float(np.dot(self.w, (np.conj(a) * b).real))

    def _base_solve(self, g):
        if self.paired:
            return self.q.precondition(g, 2.0)
        return np.concatenate([self.q.precondition(g[:self.nq]),
                               self.l.precondition(g[self.nq:])])

    def direction(self, g, grads, rho):
        """-(A + rho U U^T W)^{-1} g by Woodbury, A the block oscillator operator."""
        ainv_g = self._base_solve(g)
        ainv_u = [self._base_solve(u) for u in grads]
        k = len(grads)
        small = np.eye(k) / rho + np.array(
            [[self.inner(grads[i], ainv_u[j]) for j in range(k)] for i in range(k)])
        rhs = np.array([self.inner(u, ainv_g) for u in grads])
        coef = np.linalg.solve(small, rhs)
        d = ainv_g - sum(cj * aj for cj, aj in zip(coef, ainv_u))
        return -d


def _check_finite(value, where):
    if not math.isfinite(value):
        raise SolverError(f"objective became non-finite during {where}")


def _inner_descent(merit, z, nu, rho, tol, max_iter, trace, outer, project=None):
    """Preconditioned gradient descent with Armijo backtracking.

    Stops on a small gradient, or when several consecutive steps gain less than
    roundoff (the leftover gradient then sits in stiff boundary modes).
    """
    value = merit.value(z, nu, rho)
    _check_finite(value, "initial evaluation")
    it = 0
    flat = 0
    for it in range(1, max_iter + 1):
        g, grads = merit.gradient(z, nu, rho)
        if math.sqrt(merit.inner(g, g)) <= tol:
            break
        d = merit.direction(g, grads, rho)
        if project is not None:
            d = project(d)
        slope = merit.inner(g, d)
        if slope >= 0:
            d, slope = -g, -merit.inner(g, g)
        step = 1.0
        for _ in range(30):
            trial = z + step * d
            new_value = merit.value(trial, nu, rho)
            _check_finite(new_value, "line search")
            if new_value <= value + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            return z, value, it
        flat = flat + 1 if value - new_value <= 1e-14 * max(1.0, abs(value)) else 0
        z, value = trial, new_value
        trace.append((outer, len(trace), value))
        if flat >= 5:
            break
    return z, value, it


def _parity(values: np.ndarray) -> int | None:
    """+1 / -1 when the samples are even / odd about the grid center."""
    scale = np.max(np.abs(values))
    if scale == 0:
        return None
    for sign in (1, -1):
        if np.max(np.abs(values - sign * values[::-1])) <= 1e-10 * scale:
            return sign
    return None


def _symmetrizer(merit, psi, f):
    """Projection keeping each block in the parity class of the initial state.

    The problem is parity invariant, but roundoff would otherwise seed the
    lower opposite-parity mode and descent would amplify it.
    """
    p_psi = _parity(psi)
    p_f = None if merit.paired else _parity(f)
    if p_psi is None and p_f is None:
        return None

    def project(z):
        psi, f = (z, None) if merit.paired else (z[:merit.nq], z[merit.nq:])
        if p_psi is not None:
            psi = 0.5 * (psi + p_psi * psi[::-1])
        if merit.paired:
            return psi
        if p_f is not None:
            f = 0.5 * (f + p_f * f[::-1])
        return np.concatenate([psi, f])

    return project


def _rayleigh(block: _Block, v) -> float:
    return (block.kinetic(v) + block.potential(v)) / block.norm(v)


def solve(init: EecState, options: SolveOptions = SolveOptions()) -> VariationalResult:
    """Stationary point of I with the normalization and balance constraints."""
    psi = np.array(init.psi.values)
    f = np.array(init.f.values)
    q_grid, l_grid = init.psi.grid, init.f.grid
    n_psi = float(norm_sq(psi, q_grid))
    n_f = float(norm_sq(f, l_grid))
    if n_psi == 0.0 or (not options.paired_mode and n_f == 0.0):
        raise ValueError("zero initial state: normalization is unreachable")
    psi = psi / math.sqrt(n_psi)
    f = f / math.sqrt(n_f) if n_f > 0 else f

    merit = _Merit(init, options.paired_mode)
    paired = options.paired_mode
    z = psi if paired else np.concatenate([psi, f])
    project = _symmetrizer(merit, psi, f)
    # multipliers enter the merit as -nu @ c over the active constraints
    if paired:
        nu = np.array([2 * _rayleigh(merit.q, psi)])
    else:
        nu = np.array([0.0, 0.0, _rayleigh(merit.l, f), _rayleigh(merit.q, psi)])
    rho = options.initial_penalty
    trace: list = []
    converged = False
    last_violation = math.inf
    outer = 0
    for outer in range(1, options.max_iterations + 1):
        z, _, inner = _inner_descent(
            merit, z, nu, rho, 0.1 * options.gradient_tolerance,
            options.inner_iterations, trace, outer, project)
        c = merit.constraints(z)
        nu = nu - rho * c[merit.active]
        state = _state(init, *merit.split(z))
        stat = stationarity_residual(state, _multipliers(nu, paired))
        violation = float(np.max(np.abs(c)))
        log.debug("outer %d: inner=%d violation=%.3e stationarity=%s rho=%g",
                  outer, inner, violation, stat, rho)
        if violation <= options.constraint_tolerance and max(stat) <= options.gradient_tolerance:
            converged = True
            break
        if violation > 0.25 * last_violation:
            rho *= options.penalty_growth
        last_violation = violation

    state = _state(init, *merit.split(z))
    multipliers = _multipliers(nu, paired)
    return VariationalResult(
        state=state,
        multipliers=multipliers,
        objective=functional_I(state),
        constraint_residuals=evaluate_eec(state),
        stationarity_residual=stationarity_residual(state, multipliers),
        iterations=outer,
        converged=converged,
        trace=trace,
    )


def _multipliers(nu, paired) -> Multipliers:
    """Map merit multipliers onto (lambda1, lambda2, lambda3).

    Each block's Euler-Lagrange equation is divided by its kinetic coefficient
    so the second-derivative terms match the stationarity ODEs. The balance
    multipliers are only determined up to nu_l = -nu_q, and that gauge gives
    lambda1 = -1.
    """
    if paired:
        return Multipliers(-1.0, 0.5 * float(nu[0]), -0.5 * float(nu[0]))
    nu_q, nu_l, nu_f, nu_psi = (float(v) for v in nu)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam2 = float(np.divide(nu_f, 1 + nu_q))
        lam3 = float(np.divide(-nu_psi, 1 - nu_q))
        lam1 = float(np.divide(-(1 + nu_l), 1 - nu_q))
    if not lam1 < 0:
        # early, unconverged estimates can leave the bound-state sector;
        # report them in the lambda1 = -1 gauge
        lam1 = -1.0
    return Multipliers(lam1, lam2, lam3)


def _state(init: EecState, psi, f) -> EecState:
    return EecState(SampledFunction(psi, init.psi.grid), SampledFunction(f, init.f.grid),
                    init.config)


def random_init(grid: Grid, omega: float, seed: int, basis_size: int = 6,
                parity: int | None = None) -> EecState:
    """Random Hermite mixture for both psi and F, sharing one parity class.

    ``parity`` 0 keeps even modes, 1 odd modes; ``None`` draws it from the seed.
    """
    rng = np.random.default_rng(seed)
    if parity is None:
        parity = int(rng.integers(2))
    modes = [n for n in range(basis_size) if n % 2 == parity]
    basis = np.array([hermite_values(n, omega, grid.points) for n in modes])

    def draw():
        coeffs = rng.normal(size=len(modes)) + 1j * rng.normal(size=len(modes))
        v = coeffs @ basis
        return SampledFunction(v / math.sqrt(float(norm_sq(v, grid))), grid)

    psi = draw()
    return EecState(psi, draw(), OscillatorConfig(omega))


def quantize_energy(energy: float, omega: float) -> QuantizationEntry:
    level = max(int(round(energy / omega - 0.5)), 0)
    return QuantizationEntry(energy, level, abs(energy - (level + 0.5) * omega))


def quantization_report(results) -> list:
    entries = []
    for r in results:
        if not r.converged:
            raise ValueError("quantization_report needs converged results")
        energy = expected_energy(r.state.psi, r.state.config)
        entries.append(quantize_energy(energy, r.state.omega))
    return entries
