"""Perturbation ensembles, the overdetermined residual system and the
stable/unstable classification, for the oscillator pair and for the
two-variable toy problem x^2 - y^2 = 0."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .eec import EecState, equality_residuals, norm_sq
from .grid import (Grid, GridError, SampledFunction, l2_distance, laplacian_values,
                   transform_inverse, transform_kernel)
from .spectrum import hermite_state
from .variational import SolveOptions

log = logging.getLogger(__name__)

STABLE = "stable"
UNSTABLE = "unstable"

# descent budget for the overdetermined system; the exact least-squares
# optimum is usually not reached (see optimize_overdetermined)
DEFAULT_OPTIONS = SolveOptions(max_iterations=500)


@dataclass(frozen=True)
class PerturbationSpec:
    count: int = 20
    amplitude: float = 1e-3
    seed: int = 0
    basis_size: int = 6
    perturb_f: bool = True

    def __post_init__(self):
        if self.count < 10:
            raise ValueError("the ensemble needs count >= 10 members")
        if self.count % 2:
            raise ValueError("count must be even (members come in +/- pairs)")
        # zero is accepted as a degenerate case for testing the assembly
        if not self.amplitude >= 0:
            raise ValueError("amplitude must be non-negative")
        if self.basis_size < 2:
            raise ValueError("basis_size must be >= 2")


@dataclass(frozen=True, eq=False)
class PerturbationEnsemble:
    deltas_psi: np.ndarray  # (count, n_q)
    deltas_f: np.ndarray  # (count, n_l)
    spec: PerturbationSpec
    q_grid: Grid
    l_grid: Grid

    def member(self, i: int):
        return (SampledFunction(self.deltas_psi[i], self.q_grid),
                SampledFunction(self.deltas_f[i], self.l_grid))

    @property
    def count(self) -> int:
        return len(self.deltas_psi)

    @classmethod
    def from_deltas(cls, deltas_psi, deltas_f, spec: PerturbationSpec, q_grid: Grid,
                    l_grid: Grid | None = None) -> "PerturbationEnsemble":
        """Ensemble from explicit perturbations, no pairing or count check."""
        l_grid = l_grid or q_grid
        d_psi = np.atleast_2d(np.asarray(deltas_psi, dtype=complex))
        d_f = np.atleast_2d(np.asarray(deltas_f, dtype=complex))
        if d_psi.shape != (len(d_psi), q_grid.n_points) or d_f.shape != (len(d_psi), l_grid.n_points):
            raise GridError("perturbation arrays do not match the grids")
        return cls(d_psi, d_f, spec, q_grid, l_grid)


@dataclass(frozen=True)
class StabilityVerdict:
    drift: float
    residual_at_rigid: float
    residual_at_optimum: float
    label: str
    kappa: float
    amplitude: float
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "drift": self.drift,
            "residual_at_rigid": self.residual_at_rigid,
            "residual_at_optimum": self.residual_at_optimum,
            "label": self.label,
            "kappa": self.kappa,
            "amplitude": self.amplitude,
            "converged": self.converged,
        }


@dataclass
class OverdeterminedResult:
    state: EecState
    objective_initial: float
    objective: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)


# -- ensembles --------------------------------------------------------------

def _perturbation_draws(rng, basis, count, amplitude, grid):
    out = np.empty((count, grid.n_points))
    for i in range(0, count, 2):
        v = rng.normal(size=len(basis)) @ basis
        v *= amplitude / math.sqrt(float(norm_sq(v, grid)))
        out[i], out[i + 1] = v, -v
    return out


def generate_ensemble(spec: PerturbationSpec, grid: Grid, omega: float,
                      l_grid: Grid | None = None) -> PerturbationEnsemble:
    """Random real Hermite mixtures, rescaled to the amplitude, in +/- pairs."""
    l_grid = l_grid or grid
    basis_q = np.array([hermite_state(n, omega, grid).values.real for n in range(spec.basis_size)])
    rng = np.random.default_rng(spec.seed)
    d_psi = _perturbation_draws(rng, basis_q, spec.count, spec.amplitude, grid)
    if spec.perturb_f:
        basis_l = np.array([hermite_state(n, omega, l_grid).values.real
                            for n in range(spec.basis_size)])
        d_f = _perturbation_draws(rng, basis_l, spec.count, spec.amplitude, l_grid)
    else:
        d_f = np.zeros((spec.count, l_grid.n_points))
    return PerturbationEnsemble(d_psi.astype(complex), d_f.astype(complex), spec, grid, l_grid)


# -- overdetermined system --------------------------------------------------

def _check_grids(state: EecState, ensemble: PerturbationEnsemble):
    if state.psi.grid != ensemble.q_grid or state.f.grid != ensemble.l_grid:
        raise GridError("ensemble and state live on different grids")


def _member_residuals(psi, f, ensemble, omega):
    return equality_residuals(psi[None, :] + ensemble.deltas_psi, f[None, :] + ensemble.deltas_f,
                              ensemble.q_grid, ensemble.l_grid, omega)


def assemble_residuals(state: EecState, ensemble: PerturbationEnsemble) -> np.ndarray:
    """Stacked (balance_q, balance_l, norm_f - 1, norm_psi - 1) for every member.

    Decay conditions are limits rather than finite equations and are left out.
    """
    _check_grids(state, ensemble)
    r = _member_residuals(state.psi.values, state.f.values, ensemble, state.omega)
    return r.reshape(-1)


class _LeastSquares:
    def __init__(self, state: EecState, ensemble: PerturbationEnsemble, weights,
                 paired: bool = False):
        self.ens = ensemble
        self.paired = paired
        self.omega = state.omega
        self.wts = np.asarray(weights, dtype=float)
        self.q, self.l = ensemble.q_grid, ensemble.l_grid
        self.wq, self.wl = self.q.weights, self.l.weights
        self.nq = self.q.n_points
        if paired:
            self.t_inv = transform_kernel(self.l, self.q, self.omega, sign=+1)

    def start(self, state: EecState):
        if self.paired:
            return state.psi.values.copy()
        return np.concatenate([state.psi.values, state.f.values])

    def split(self, z):
        if self.paired:
            return z, self.t_inv @ z
        return z[:self.nq], z[self.nq:]

    def value(self, z):
        psi, f = self.split(z)
        r = _member_residuals(psi, f, self.ens, self.omega)
        return float(np.sum(self.wts * r ** 2))

    def gradient(self, z):
        psi, f = self.split(z)
        ps = psi[None, :] + self.ens.deltas_psi
        fs = f[None, :] + self.ens.deltas_f
        r = _member_residuals(psi, f, self.ens, self.omega) * self.wts
        w2 = self.omega ** 2
        gk_q = -(self.q.spacing / self.wq) * laplacian_values(ps, self.q.spacing)
        gv_q = w2 * self.q.points ** 2 * ps
        gk_l = -(self.l.spacing / self.wl) * laplacian_values(fs, self.l.spacing)
        gv_l = w2 * self.l.points ** 2 * fs
        rq, rl, rf, rp = (r[:, k:k + 1] for k in range(4))
        g_psi = 2 * np.sum(rq * gk_q - rl * gv_q + rp * 2 * ps, axis=0)
        g_f = 2 * np.sum(-rq * gv_l + rl * gk_l + rf * 2 * fs, axis=0)
        if self.paired:
            return g_psi + (self.t_inv.conj().T @ (self.wl * g_f)) / self.wq
        return np.concatenate([g_psi, g_f])

    def inner(self, a, b):
        w = self.wq if self.paired else np.concatenate([self.wq, self.wl])
        return float(np.dot(w, (np.conj(a) * b).real))


def optimize_overdetermined(init: EecState, ensemble: PerturbationEnsemble,
                            options: SolveOptions = DEFAULT_OPTIONS,
                            weights=(1.0, 1.0, 1.0, 1.0)) -> OverdeterminedResult:
    """Least-squares optimum of the stacked perturbed equations.

    Gradient descent with Armijo backtracking from ``init``; the trial step
    grows after each accepted step. The returned objective never exceeds the
    one at ``init``. In paired mode only psi is free and F follows as its
    inverse transform, so the init's F is replaced by that of its psi.

    The unperturbed equations have a continuum of solutions, and the exact
    optimum sits where that continuum is least sensitive to the ensemble,
    often O(1) away from ``init``. Descent creeps toward it slowly, so with a
    perturbed ensemble the run typically ends on the iteration budget with
    ``converged`` false and the drift measures the local response.
    """
    _check_grids(init, ensemble)
    if options.paired_mode:
        init = paired_state(init)
    problem = _LeastSquares(init, ensemble, weights, options.paired_mode)
    z = problem.start(init)
    value = start = problem.value(z)
    history = [value]
    # residuals already at the tolerance: nothing to optimize
    floor = 4 * ensemble.count * options.constraint_tolerance ** 2
    step = 1.0
    converged = False
    it = 0
    for it in range(1, options.max_iterations + 1):
        if value <= floor:
            converged = True
            break
        g = problem.gradient(z)
        gnorm = math.sqrt(problem.inner(g, g))
        if gnorm <= options.gradient_tolerance:
            converged = True
            break
        slope = -gnorm ** 2
        for _ in range(60):
            trial = z - step * g
            new_value = problem.value(trial)
            if new_value <= value + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            converged = True  # no decrease representable in floating point
            break
        z, value = trial, new_value
        history.append(value)
        step *= 2.0
    psi, f = problem.split(z)
    state = init.replace(SampledFunction(psi, init.psi.grid), SampledFunction(f, init.f.grid))
    if not converged:
        log.info("overdetermined optimization stopped after %d iterations", it)
    return OverdeterminedResult(state, start, value, it, converged, history)


def paired_state(state: EecState) -> EecState:
    """(psi, T^-1 psi): the state with F tied to psi."""
    return state.replace(f=transform_inverse(state.psi, state.f.grid, state.omega))


def state_drift(a: EecState, b: EecState) -> float:
    return l2_distance(a.psi, b.psi) + l2_distance(a.f, b.f)


def _label(drift: float, kappa: float, amplitude: float) -> str:
    return STABLE if drift <= kappa * amplitude else UNSTABLE


def classify(rigid: EecState, ensemble: PerturbationEnsemble,
             options: SolveOptions = DEFAULT_OPTIONS,
             kappa: float = 10.0) -> StabilityVerdict:
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    if options.paired_mode:
        rigid = paired_state(rigid)
    result = optimize_overdetermined(rigid, ensemble, options)
    drift = state_drift(rigid, result.state)
    amplitude = ensemble.spec.amplitude
    log.debug("classify: drift %.3e after %d iterations", drift, result.iterations)
    return StabilityVerdict(
        drift=drift,
        residual_at_rigid=result.objective_initial,
        residual_at_optimum=result.objective,
        label=_label(drift, kappa, amplitude),
        kappa=kappa,
        amplitude=amplitude,
        converged=result.converged,
    )


# -- density comparison -----------------------------------------------------

def density_comparison(state: EecState, delta: SampledFunction):
    """(ideal, real) densities |psi|^2 and |psi + delta|^2 on the q grid."""
    if delta.grid != state.psi.grid:
        raise GridError("perturbation and state live on different grids")
    ideal = np.abs(state.psi.values) ** 2
    real = np.abs(state.psi.values + delta.values) ** 2
    return ideal, real


# -- toy analogue -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ToyEnsemble:
    deltas: np.ndarray  # (count, 2)
    amplitude: float
    seed: int

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=float)
        if d.ndim != 2 or d.shape[1] != 2 or len(d) < 10:
            raise ValueError("toy ensemble needs at least 10 (dx, dy) pairs")
        if np.any(np.abs(d) > 3 * self.amplitude):
            raise ValueError("toy perturbations must stay within 3 * amplitude")
        object.__setattr__(self, "deltas", d)

    @classmethod
    def generate(cls, count: int, amplitude: float, seed: int,
                 paired: bool = False) -> "ToyEnsemble":
        """Gaussian draws of width ``amplitude`` clipped at 3 sigma.

        With ``paired`` the draws come in +/- pairs; the origin is then an
        exact stationary point for every amplitude.
        """
        rng = np.random.default_rng(seed)
        if not paired:
            return cls(np.clip(rng.normal(size=(count, 2)), -3, 3) * amplitude, amplitude, seed)
        if count % 2:
            raise ValueError("count must be even (members come in +/- pairs)")
        half = np.clip(rng.normal(size=(count // 2, 2)), -3, 3) * amplitude
        deltas = np.empty((count, 2))
        deltas[0::2], deltas[1::2] = half, -half
        return cls(deltas, amplitude, seed)

    def scaled(self, amplitude: float) -> "ToyEnsemble":
        factor = amplitude / self.amplitude
        return ToyEnsemble(self.deltas * factor, amplitude, self.seed)


@dataclass(frozen=True)
class ToyResult:
    x: float
    y: float
    objective: float
    iterations: int
    converged: bool


def toy_residual(x, y, dx, dy):
    return (x + dx) ** 2 - (y + dy) ** 2


def toy_objective(ensemble: ToyEnsemble, x: float, y: float) -> float:
    dx, dy = ensemble.deltas.T
    return float(np.sum(toy_residual(x, y, dx, dy) ** 2))


def _toy_derivatives(p, dx, dy):
    u, v = p[0] + dx, p[1] + dy
    r = u * u - v * v
    grad = 4 * np.array([np.sum(r * u), -np.sum(r * v)])
    hess = 8 * np.array([[np.sum(u * u), -np.sum(u * v)], [-np.sum(u * v), np.sum(v * v)]])
    hess += 4 * np.sum(r) * np.diag([1.0, -1.0])
    return float(np.sum(r * r)), grad, hess


def toy_optimize(ensemble: ToyEnsemble, init=(1.0, 1.0), max_iterations: int = 500,
                 tolerance: float = 1e-14) -> ToyResult:
    """Minimize the summed squared toy residuals from ``init``.

    Descent with Armijo backtracking. The direction is the gradient scaled
    by the Hessian, shifted to be positive definite; plain gradient steps
    crawl along the cone x = +/-y where the curvature ratio is ~1/eps^2.
    """
    dx, dy = ensemble.deltas.T
    p = np.array(init, dtype=float)
    value, grad, hess = _toy_derivatives(p, dx, dy)
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        if math.sqrt(float(grad @ grad)) <= tolerance * max(1.0, value):
            converged = True
            break
        lo = float(np.linalg.eigvalsh(hess)[0])
        scale = float(np.trace(np.abs(hess)))
        shift = max(0.0, 1e-10 * scale - lo)
        direction = -np.linalg.solve(hess + shift * np.eye(2), grad)
        slope = float(grad @ direction)
        if slope >= 0:
            direction, slope = -grad, -float(grad @ grad)
        step = 1.0
        while step > 1e-20:
            trial = p + step * direction
            new_value, new_grad, new_hess = _toy_derivatives(trial, dx, dy)
            if new_value <= value + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            converged = True  # no representable decrease left
            break
        p, value, grad, hess = trial, new_value, new_grad, new_hess
    return ToyResult(float(p[0]), float(p[1]), value, it, converged)


def toy_brute_force(ensemble: ToyEnsemble, half_width: float = 2.0, step: float = 1e-3,
                    chunk: int = 256):
    """Grid-search minimum of the toy objective over a square.

    The objective is a quartic in (x, y); it is expanded in the ensemble
    moments so each grid point costs O(1).
    """
    a, b = ensemble.deltas.T
    c = a * a - b * b
    n = len(a)
    sa, sb, sab = np.sum(a * a), np.sum(b * b), np.sum(a * b)
    ma, mb, mc = np.sum(a), np.sum(b), np.sum(c)
    sac, sbc, scc = np.sum(a * c), np.sum(b * c), np.sum(c * c)
    axis = np.linspace(-half_width, half_width, int(round(2 * half_width / step)) + 1)
    best = (math.inf, 0.0, 0.0)
    for start in range(0, len(axis), chunk):
        x = axis[start:start + chunk, None]
        y = axis[None, :]
        u = x * x - y * y
        s = (n * u * u + 4 * x * x * sa + 4 * y * y * sb + scc
             + 4 * u * x * ma - 4 * u * y * mb + 2 * u * mc
             - 8 * x * y * sab + 4 * x * sac - 4 * y * sbc)
        k = np.unravel_index(np.argmin(s), s.shape)
        if s[k] < best[0]:
            best = (float(s[k]), float(axis[start + k[0]]), float(axis[k[1]]))
    return best[1], best[2], best[0]


def toy_classify(point, ensemble: ToyEnsemble, kappa: float = 10.0) -> StabilityVerdict:
    result = toy_optimize(ensemble, point)
    drift = math.hypot(result.x - point[0], result.y - point[1])
    return StabilityVerdict(
        drift=drift,
        residual_at_rigid=toy_objective(ensemble, *point),
        residual_at_optimum=result.objective,
        label=_label(drift, kappa, ensemble.amplitude),
        kappa=kappa,
        amplitude=ensemble.amplitude,
        converged=result.converged,
    )


def toy_g_profile(x_values, dx: float, dy: float):
    """g(x) = (x + dx)^2 - (x + dy)^2 along the line y = x."""
    x = np.asarray(x_values, dtype=float)
    return x, toy_residual(x, x, dx, dy)
