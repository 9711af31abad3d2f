"""Command-line interface: ``eecstab {eigen,check,solve,stability,toy,figures}``.

Every command reads one JSON config (``--config``), applies flag overrides,
and writes JSON/CSV results into the output directory. Exit codes: 0 success,
1 tolerance failure, 2 bad input, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass, fields

import numpy as np

from . import plotting
from .eec import EecState, OscillatorConfig, evaluate_conditions, evaluate_eec
from .grid import Grid, GridError, SampledFunction, default_half_width, make_grid, transform_inverse
from .spectrum import EigenConvergenceError, hamiltonian, hermite_state, solve_spectrum
from .stability import (
    PerturbationSpec,
    ToyEnsemble,
    classify,
    density_comparison,
    generate_ensemble,
    toy_brute_force,
    toy_classify,
    toy_g_profile,
    toy_optimize,
)
from .variational import SolveOptions, SolverError, quantization_report, random_init, solve

log = logging.getLogger("eecstab")

EXIT_OK, EXIT_TOLERANCE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULTS = {
    "omega": 1.0,
    "grid_half_width": None,  # None: wide enough for the perturbation basis
    "grid_points": 1025,
    "mode_index": 0,
    "levels": 6,
    "tolerance": 1e-4,
    "render": True,
    "output_dir": "out",
    "init_psi": None,
    "init_f": None,
    "perturbation": {"count": 20, "amplitude": 1e-3, "seed": 0, "basis_size": 6, "perturb_f": True},
    "solver": {},
    "stability": {"kappa": 10.0, "max_iterations": 200, "epsilons": [1e-2, 1e-3, 1e-4]},
    "toy": {
        "count": 100, "amplitude": 0.01, "seed": 0, "init": [1.0, 1.0],
        "dx": 0.1, "dy": -0.1, "x_min": -2.0, "x_max": 2.0, "x_points": 401,
        "oracle_half_width": 2.0, "oracle_step": 1e-3,
    },
    "figures": {"delta_amplitude": 0.05, "member": 0},
}


class InputError(Exception):
    """Bad configuration, bad input file or unusable output location."""


@dataclass
class ExperimentConfig:
    omega: float
    grid_half_width: float | None
    grid_points: int
    mode_index: int
    levels: int
    tolerance: float
    render: bool
    output_dir: str
    init_psi: str | None
    init_f: str | None
    perturbation: dict
    solver: dict
    stability: dict
    toy: dict
    figures: dict

    @property
    def oscillator(self) -> OscillatorConfig:
        return OscillatorConfig(self.omega)

    @property
    def perturbation_spec(self) -> PerturbationSpec:
        return PerturbationSpec(**self.perturbation)

    @property
    def solve_options(self) -> SolveOptions:
        return SolveOptions(**self.solver)

    def grid(self) -> Grid:
        half = self.grid_half_width
        if half is None:
            n_max = max(self.mode_index, self.perturbation["basis_size"] - 1, 1)
            half = default_half_width(self.omega, n_max)
        return make_grid(half, self.grid_points)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _merge(base: dict, extra: dict, where="config") -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if key not in base and where != "config.solver":
            raise InputError(f"unknown key {where}.{key}")
        if isinstance(base.get(key), dict) and key != "solver":
            if not isinstance(value, dict):
                raise InputError(f"{where}.{key} must be an object")
            out[key] = _merge(base[key], value, f"{where}.{key}")
        else:
            out[key] = value
    return out


def load_config(path: str | None, args: argparse.Namespace | None = None) -> ExperimentConfig:
    """Defaults, then the JSON file, then command-line flags."""
    raw = copy.deepcopy(DEFAULTS)
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise InputError("config must be a JSON object")
        raw = _merge(raw, data)
    if args is not None:
        if args.omega is not None:
            raw["omega"] = args.omega
        if args.seed is not None:
            raw["perturbation"]["seed"] = args.seed
            raw["solver"]["seed"] = args.seed
            raw["toy"]["seed"] = args.seed
        if args.tol is not None:
            raw["tolerance"] = args.tol
            raw["solver"]["gradient_tolerance"] = args.tol
            raw["solver"]["constraint_tolerance"] = args.tol
        if args.epsilon is not None:
            raw["perturbation"]["amplitude"] = args.epsilon
            raw["toy"]["amplitude"] = args.epsilon
        if args.count is not None:
            raw["perturbation"]["count"] = args.count
            raw["toy"]["count"] = args.count
        if args.output_dir is not None:
            raw["output_dir"] = args.output_dir
        if args.paired:
            raw["solver"]["paired_mode"] = True
        if getattr(args, "no_render", False):
            raw["render"] = False
    cfg = ExperimentConfig(**raw)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig):
    try:
        cfg.oscillator
        cfg.grid()
        cfg.perturbation_spec
        cfg.solve_options
    except (TypeError, ValueError) as exc:  # GridError is a ValueError
        raise InputError(str(exc)) from None
    if cfg.mode_index < 0 or cfg.levels < 1:
        raise InputError("mode_index must be >= 0 and levels >= 1")
    if not cfg.tolerance > 0:
        raise InputError("tolerance must be positive")
    if not cfg.stability["kappa"] > 0 or cfg.stability["max_iterations"] < 1:
        raise InputError("stability.kappa must be positive and max_iterations >= 1")
    if any(not e > 0 for e in cfg.stability["epsilons"]):
        raise InputError("stability.epsilons must be positive")


# -- output helpers ---------------------------------------------------------

def _prepare_output(directory: str) -> str:
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {directory}: {exc}") from None
    if not os.access(directory, os.W_OK | os.X_OK):
        raise InputError(f"output directory {directory} is not writable")
    return directory


def write_atomic(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise InputError(f"cannot write {path}: {exc}") from None


def _clean(obj):
    """JSON-safe copy: numpy scalars to floats, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: str, payload: dict):
    write_atomic(path, json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")


def write_table(path: str, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    write_atomic(path, buf.getvalue())


def _render(cfg: ExperimentConfig, func, *args):
    if not cfg.render:
        return
    try:
        func(*args)
    except (OSError, RuntimeError, ValueError) as exc:  # a failed PNG must not sink the run
        log.warning("figure rendering failed: %s", exc)


def _read_state_file(path: str) -> SampledFunction:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    try:
        if path.endswith(".json"):
            return SampledFunction.from_json(text)
        return SampledFunction.from_csv(text)
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"malformed state file {path}: {exc}") from None


# -- commands ---------------------------------------------------------------

def cmd_eigen(cfg: ExperimentConfig) -> int:
    out = _prepare_output(cfg.output_dir)
    grid = cfg.grid()
    if cfg.levels > grid.n_points // 4:
        raise InputError(f"levels={cfg.levels} needs at least {4 * cfg.levels} grid points")
    sol = solve_spectrum(hamiltonian(grid, cfg.omega, 1.0), cfg.levels)
    levels = []
    for n, (e, f) in enumerate(zip(sol.eigenvalues, sol.eigenfunctions)):
        exact = (n + 0.5) * cfg.omega
        levels.append({"n": n, "eigenvalue": float(e), "exact": exact, "defect": float(e) - exact})
        write_atomic(os.path.join(out, f"eigenfunction_{n}.csv"), f.to_csv())
    write_json(os.path.join(out, "eigenvalues.json"),
               {"omega": cfg.omega, "grid": grid.to_dict(), "levels": levels})
    return EXIT_OK


def cmd_check(cfg: ExperimentConfig, psi_path: str, f_path: str) -> int:
    out = _prepare_output(cfg.output_dir)
    psi, f = _read_state_file(psi_path), _read_state_file(f_path)
    if psi.grid != f.grid:
        raise InputError(f"psi and F grids differ: {psi.grid.to_dict()} vs {f.grid.to_dict()}")
    try:
        state = EecState(psi, f, cfg.oscillator)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    conditions = evaluate_conditions(state)
    residual = evaluate_eec(state)
    worst = max(residual.max_magnitude(), abs(conditions.norm_psi_defect), abs(conditions.decay_psi))
    passed = worst < cfg.tolerance
    write_json(os.path.join(out, "check.json"), {
        "conditions": conditions.to_dict(),
        "residual": residual.to_dict(),
        "max_magnitude": worst,
        "tolerance": cfg.tolerance,
        "passed": passed,
    })
    return EXIT_OK if passed else EXIT_TOLERANCE


def _initial_state(cfg: ExperimentConfig) -> EecState:
    grid = cfg.grid()
    if cfg.init_psi or cfg.init_f:
        if not (cfg.init_psi and cfg.init_f):
            raise InputError("init_psi and init_f must be given together")
        psi, f = _read_state_file(cfg.init_psi), _read_state_file(cfg.init_f)
        try:
            return EecState(psi, f, cfg.oscillator)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    return random_init(grid, cfg.omega, cfg.solve_options.seed)


def cmd_solve(cfg: ExperimentConfig) -> int:
    out = _prepare_output(cfg.output_dir)
    init = _initial_state(cfg)
    try:
        result = solve(init, cfg.solve_options)
    except ValueError as exc:  # zero or otherwise unusable init
        raise InputError(str(exc)) from None
    payload = {"result": result.to_dict(), "seed": cfg.solve_options.seed}
    if result.converged:
        payload["quantization"] = [vars(q) for q in quantization_report([result])]
    write_json(os.path.join(out, "solve.json"), payload)
    write_atomic(os.path.join(out, "solution_psi.csv"), result.state.psi.to_csv())
    write_atomic(os.path.join(out, "solution_f.csv"), result.state.f.to_csv())
    return EXIT_OK if result.converged else EXIT_NUMERIC


def comparison_states(grid: Grid, omega: float) -> dict:
    """Rigid candidates for the stability table, each paired with F = T^-1 psi."""
    h0, h1 = hermite_state(0, omega, grid), hermite_state(1, omega, grid)
    sigma = 2.0 / omega
    x = grid.points
    gauss = np.exp(-x ** 2 / (2 * sigma ** 2))
    gauss /= math.sqrt(float(np.sum(grid.weights * gauss ** 2)))
    candidates = {
        "h0": h0,
        "h1": h1,
        "squeezed_gaussian": SampledFunction(gauss, grid),
        "mix_h0_h1": (h0 + h1) * (1 / math.sqrt(2.0)),
    }
    cfg = OscillatorConfig(omega)
    return {name: EecState(psi, transform_inverse(psi, grid, omega), cfg)
            for name, psi in candidates.items()}


def cmd_stability(cfg: ExperimentConfig) -> int:
    out = _prepare_output(cfg.output_dir)
    grid = cfg.grid()
    spec = cfg.perturbation_spec
    st = cfg.stability
    options = SolveOptions(**{**cfg.solver, "max_iterations": st["max_iterations"]})
    ensemble = generate_ensemble(spec, grid, cfg.omega)
    rows = []
    for name, state in comparison_states(grid, cfg.omega).items():
        verdict = classify(state, ensemble, options, st["kappa"])
        rows.append({"state": name, **verdict.to_dict()})
    rigid = EecState(*(2 * [hermite_state(cfg.mode_index, cfg.omega, grid)]), cfg.oscillator)
    sweep = []
    for eps in st["epsilons"]:
        ens = generate_ensemble(PerturbationSpec(**{**cfg.perturbation, "amplitude": eps}),
                                grid, cfg.omega)
        v = classify(rigid, ens, options, st["kappa"])
        sweep.append((eps, v.drift, v.residual_at_rigid, v.residual_at_optimum, v.label, v.converged))
    write_json(os.path.join(out, "stability.json"), {
        "omega": cfg.omega,
        "grid": grid.to_dict(),
        "perturbation": vars(spec),
        "max_iterations": st["max_iterations"],
        "paired_mode": options.paired_mode,
        "verdicts": rows,
    })
    write_table(os.path.join(out, "drift_vs_epsilon.csv"),
                ["epsilon", "drift", "residual_at_rigid", "residual_at_optimum", "label", "converged"],
                sweep)
    _render(cfg, plotting.plot_drift, [s[0] for s in sweep], [s[1] for s in sweep], st["kappa"],
            os.path.join(out, "drift_vs_epsilon.png"))
    converged = all(r["converged"] for r in rows) and all(s[5] for s in sweep)
    return EXIT_OK if converged else EXIT_NUMERIC


def _profile(cfg: ExperimentConfig):
    toy = cfg.toy
    xs = np.linspace(toy["x_min"], toy["x_max"], int(toy["x_points"]))
    return toy_g_profile(xs, toy["dx"], toy["dy"])


def cmd_toy(cfg: ExperimentConfig) -> int:
    out = _prepare_output(cfg.output_dir)
    toy = cfg.toy
    try:
        ensemble = ToyEnsemble.generate(int(toy["count"]), float(toy["amplitude"]), int(toy["seed"]))
    except ValueError as exc:
        raise InputError(str(exc)) from None
    init = tuple(float(v) for v in toy["init"])
    result = toy_optimize(ensemble, init)
    bx, by, bval = toy_brute_force(ensemble, toy["oracle_half_width"], toy["oracle_step"])
    payload = {
        "ensemble": {"count": len(ensemble.deltas), "amplitude": ensemble.amplitude, "seed": ensemble.seed},
        "init": list(init),
        "optimum": vars(result),
        "distance_to_origin": math.hypot(result.x, result.y),
        "oracle": {"x": bx, "y": by, "objective": bval, "step": toy["oracle_step"],
                   "half_width": toy["oracle_half_width"]},
        "oracle_distance": math.hypot(result.x - bx, result.y - by),
        "verdicts": {
            "init": toy_classify(init, ensemble).to_dict(),
            "origin": toy_classify((0.0, 0.0), ensemble).to_dict(),
        },
    }
    write_json(os.path.join(out, "toy.json"), payload)
    x, g = _profile(cfg)
    write_table(os.path.join(out, "toy_profile.csv"), ["x", "g"], zip(x, g))
    _render(cfg, plotting.plot_g_profile, x, g, toy["dx"], toy["dy"],
            os.path.join(out, "toy_profile.png"))
    return EXIT_OK if result.converged else EXIT_NUMERIC


def cmd_figures(cfg: ExperimentConfig) -> int:
    out = _prepare_output(cfg.output_dir)
    grid = cfg.grid()
    psi = hermite_state(cfg.mode_index, cfg.omega, grid)
    state = EecState(psi, psi, cfg.oscillator)
    fig = cfg.figures
    amp = float(fig["delta_amplitude"])
    if amp > 0:
        spec = PerturbationSpec(**{**cfg.perturbation, "amplitude": amp})
        delta = generate_ensemble(spec, grid, cfg.omega).member(int(fig["member"]))[0]
    elif amp == 0:
        delta = SampledFunction.zeros(grid)
    else:
        raise InputError("figures.delta_amplitude must be non-negative")
    ideal, real = density_comparison(state, delta)
    write_table(os.path.join(out, "density_comparison.csv"), ["x", "ideal", "real"],
                zip(grid.points, ideal, real))
    x, g = _profile(cfg)
    write_table(os.path.join(out, "toy_profile.csv"), ["x", "g"], zip(x, g))
    write_atomic(os.path.join(out, "figures.gp"),
                 plotting.gnuplot_script("density_comparison.csv", "toy_profile.csv"))
    _render(cfg, plotting.plot_density_comparison, grid.points, ideal, real,
            os.path.join(out, "density_comparison.png"))
    _render(cfg, plotting.plot_g_profile, x, g, cfg.toy["dx"], cfg.toy["dy"],
            os.path.join(out, "toy_profile.png"))
    return EXIT_OK


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment config")
    common.add_argument("--omega", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--tol", type=float, help="check tolerance and solver tolerances")
    common.add_argument("--epsilon", type=float, help="perturbation amplitude")
    common.add_argument("--count", type=int, help="ensemble size")
    common.add_argument("--output-dir", metavar="DIR")
    common.add_argument("--paired", action="store_true", help="tie F to the inverse transform of psi")
    common.add_argument("--no-render", action="store_true", help="skip PNG rendering")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="eecstab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("eigen", parents=[common], help="lowest levels of the discretized oscillator")
    check = sub.add_parser("check", parents=[common], help="evaluate conditions on psi/F files")
    check.add_argument("psi", help="psi CSV (x,re,im) or JSON")
    check.add_argument("f", help="F CSV (x,re,im) or JSON")
    sub.add_parser("solve", parents=[common], help="constrained stationary point from a seeded init")
    sub.add_parser("stability", parents=[common], help="verdict table and drift-vs-eps sweep")
    sub.add_parser("toy", parents=[common], help="x^2 - y^2 = 0 analogue")
    sub.add_parser("figures", parents=[common], help="density and g(x) figure data")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args)
        if args.command == "check":
            return cmd_check(cfg, args.psi, args.f)
        command = {"eigen": cmd_eigen, "solve": cmd_solve, "stability": cmd_stability,
                   "toy": cmd_toy, "figures": cmd_figures}[args.command]
        return command(cfg)
    except InputError as exc:
        print(f"eecstab: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (GridError, ValueError, TypeError, KeyError) as exc:
        print(f"eecstab: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, EigenConvergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"eecstab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
