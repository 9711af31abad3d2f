"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest -v tests/test_acceptance.py -s`` or directly as a script.
"""

import filecmp
import json
import math
import os
import sys
import tempfile
import time

import numpy as np
import pytest

from eecstab.cli import main
from eecstab.eec import EecState, OscillatorConfig, evaluate_eec
from eecstab.grid import SampledFunction, l2_norm, make_grid, transform_forward
from eecstab.spectrum import hamiltonian, hermite_state, multipliers_for, solve_spectrum
from eecstab.stability import (
    PerturbationSpec,
    ToyEnsemble,
    generate_ensemble,
    optimize_overdetermined,
    state_drift,
    toy_brute_force,
    toy_classify,
    toy_g_profile,
    toy_optimize,
)
from eecstab.variational import quantization_report, random_init, solve, stationarity_residual


def _pair(n, grid, omega=1.0):
    h = hermite_state(n, omega, grid)
    return EecState(h, h, OscillatorConfig(omega))


def criterion_1():
    g1 = make_grid(8.0, 1025)
    e1 = solve_spectrum(hamiltonian(g1, 1.0, 1.0), 6).eigenvalues
    err1 = float(np.max(np.abs(e1 - (np.arange(6) + 0.5))))
    g2 = make_grid(8.0 / math.sqrt(2.0), 1025)
    e2 = solve_spectrum(hamiltonian(g2, 2.0, 1.0), 6).eigenvalues
    err2 = float(np.max(np.abs(e2 - 2 * (np.arange(6) + 0.5))))
    return err1 <= 1e-3 and err2 <= 2e-3, f"max error omega=1 {err1:.2e} (<=1e-3), omega=2 {err2:.2e} (<=2e-3)"


def criterion_2():
    g = make_grid(8.0, 1025)
    worst = max(max(stationarity_residual(_pair(n, g), multipliers_for(n, 1.0))) for n in range(4))
    return worst <= 5e-3, f"max stationarity residual n<=3: {worst:.2e} (<=5e-3)"


def criterion_3():
    g = make_grid(8.0, 1025)
    residuals = [evaluate_eec(_pair(n, g)) for n in range(4)]
    worst = max(r.max_magnitude() for r in residuals)
    decay = max(max(r.decay_psi, r.decay_transform) for r in residuals)
    return worst < 1e-5 and decay < 1e-8, f"max residual {worst:.2e} (<1e-5), max decay {decay:.2e} (<1e-8)"


def criterion_4():
    g = make_grid(8.0, 1025)
    sup = 0.0
    parseval = 0.0
    for n in range(5):
        h = hermite_state(n, 1.0, g)
        psi = transform_forward(h, g, 1.0)
        sup = max(sup, float(np.max(np.abs(psi.values - (-1j) ** n * h.values))))
        parseval = max(parseval, abs(l2_norm(psi) ** 2 - l2_norm(h) ** 2))
    mix = SampledFunction(hermite_state(0, 1.0, g).values + (0.3 - 0.4j) * hermite_state(3, 1.0, g).values, g)
    parseval = max(parseval, abs(l2_norm(transform_forward(mix, g, 1.0)) ** 2 - l2_norm(mix) ** 2))
    return sup <= 1e-5 and parseval <= 1e-6, f"sup error {sup:.2e} (<=1e-5), Parseval {parseval:.2e} (<=1e-6)"


def criterion_5():
    g = make_grid(8.0, 1025)
    start = time.perf_counter()
    results = [solve(random_init(g, 1.0, seed)) for seed in range(20)]
    elapsed = time.perf_counter() - start
    converged = sum(r.converged for r in results)
    if converged < 20:
        return False, f"{converged}/20 converged in {elapsed:.1f} s"
    entries = quantization_report(results)
    worst = max(e.defect for e in entries)
    levels = sorted({e.nearest_level for e in entries})
    ok = worst <= 5e-2 and elapsed < 60
    return ok, f"20/20 converged, max defect {worst:.1e} (<=5e-2), levels {levels}, {elapsed:.1f} s (<60)"


def criterion_6():
    eps = 0.01
    e = ToyEnsemble.generate(100, eps, 0)
    r = toy_optimize(e, (1.0, 1.0))
    bx, by, _ = toy_brute_force(e, 2.0, 1e-3)
    dist = math.hypot(r.x, r.y)
    oracle = math.hypot(r.x - bx, r.y - by)
    unstable = toy_classify((1.0, 1.0), e)
    stable = toy_classify((0.0, 0.0), e)
    ok = (r.converged and dist <= 0.05 and oracle <= 1e-2 and unstable.label == "unstable"
          and unstable.drift >= 1 and stable.label == "stable" and stable.drift <= 10 * eps)
    return ok, (f"optimum |p|={dist:.1e} (<=0.05), oracle gap {oracle:.1e} (<=1e-2), "
                f"drift(1,1)={unstable.drift:.3f} {unstable.label}, drift(0,0)={stable.drift:.1e} {stable.label}")


def criterion_7():
    dx, dy = 0.3, 0.1
    x, g = toy_g_profile(np.linspace(-2, 2, 401), dx, dy)
    slope_err = float(np.max(np.abs(np.diff(g) / np.diff(x) - 2 * (dx - dy))))
    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "c.json")
        with open(cfg, "w") as fh:
            json.dump({"toy": {"dx": dx, "dy": dy}}, fh)
        code = main(["figures", "--config", cfg, "--output-dir", tmp, "--no-render"])
        data = np.loadtxt(os.path.join(tmp, "toy_profile.csv"), delimiter=",", skiprows=1)
    fit_slope, fit_icpt = np.polyfit(data[:, 0], data[:, 1], 1)
    icpt_err = abs(fit_icpt - (dx ** 2 - dy ** 2))
    csv_slope_err = abs(fit_slope - 2 * (dx - dy))
    ok = code == 0 and slope_err <= 1e-10 and icpt_err <= 1e-10 and csv_slope_err <= 1e-10
    return ok, f"slope error {slope_err:.1e}, CSV fit slope error {csv_slope_err:.1e}, intercept error {icpt_err:.1e} (<=1e-10)"


def criterion_8():
    g = make_grid(8.0, 1025)
    rigid = _pair(0, g)
    drifts = []
    for eps in (1e-2, 1e-3, 1e-4):
        e = generate_ensemble(PerturbationSpec(count=20, amplitude=eps, seed=0), g, 1.0)
        drifts.append(state_drift(rigid, optimize_overdetermined(rigid, e).state))
    monotone = drifts[0] > drifts[1] > drifts[2]
    ok = monotone and drifts[2] <= 10 * 1e-4
    return ok, "drifts " + ", ".join(f"{d:.2e}" for d in drifts) + f"; monotone={monotone}; eps=1e-4 drift <= 1e-3"


def _run_twice(args):
    with tempfile.TemporaryDirectory() as tmp:
        dirs = []
        codes = []
        for k in range(2):
            out = os.path.join(tmp, f"run{k}")
            codes.append(main(args + ["--output-dir", out, "--no-render"]))
            dirs.append(out)
        names = sorted(n for n in os.listdir(dirs[0]) if n.endswith((".json", ".csv")))
        same = names == sorted(n for n in os.listdir(dirs[1]) if n.endswith((".json", ".csv")))
        same = same and all(filecmp.cmp(os.path.join(dirs[0], n), os.path.join(dirs[1], n), shallow=False)
                            for n in names)
        first = {n: open(os.path.join(dirs[0], n)).read() for n in names}
    return codes, same, first


def criterion_9():
    codes, same, files = _run_twice(["stability"])
    table = json.loads(files["stability.json"])["verdicts"]
    names = [row["state"] for row in table]
    complete = names == ["h0", "h1", "squeezed_gaussian", "mix_h0_h1"] and all(
        {"drift", "residual_at_rigid", "residual_at_optimum", "label"} <= set(row) for row in table)
    sound = all(row["residual_at_optimum"] <= row["residual_at_rigid"] + 1e-12 for row in table)
    ok = same and complete and sound and codes[0] == codes[1]
    drifts = ", ".join(f"{row['state']}={row['drift']:.2e}" for row in table)
    return ok, f"identical reruns={same}, complete={complete}, residual never increases={sound}, exit {codes[0]}; drift {drifts}"


def criterion_10():
    with tempfile.TemporaryDirectory() as tmp:
        g = make_grid(8.0, 1025)
        h0 = os.path.join(tmp, "h0.csv")
        with open(h0, "w") as fh:
            fh.write(hermite_state(0, 1.0, g).to_csv())
        cfg = os.path.join(tmp, "small.json")
        with open(cfg, "w") as fh:
            json.dump({"grid_points": 257, "stability": {"max_iterations": 20}}, fh)
        commands = {
            "eigen": ["eigen"],
            "check": ["check", h0, h0],
            "solve": ["solve", "--seed", "5"],
            "stability": ["stability", "--config", cfg],
            "toy": ["toy"],
            "figures": ["figures"],
        }
        status = {name: _run_twice(args)[1] for name, args in commands.items()}
    bad = [k for k, v in status.items() if not v]
    return not bad, "byte-identical reruns for " + ", ".join(commands) + (f"; differing: {bad}" if bad else "")


CRITERIA = [
    (1, "energy quantization", criterion_1),
    (2, "multiplier consistency", criterion_2),
    (3, "EEC feasibility of rigid solutions", criterion_3),
    (4, "transform self-reciprocity", criterion_4),
    (5, "variational quantization experiment", criterion_5),
    (6, "toy analogue", criterion_6),
    (7, "g(x) profile reproduction", criterion_7),
    (8, "drift scaling", criterion_8),
    (9, "stability comparison table", criterion_9),
    (10, "determinism", criterion_10),
]


def _line(number, title, passed, detail):
    return f"ACCEPTANCE {number:2d} {'PASS' if passed else 'FAIL'} {title}: {detail}"


@pytest.mark.parametrize("number, title, check", CRITERIA, ids=[f"criterion_{c[0]}" for c in CRITERIA])
def test_criterion(number, title, check, capsys):
    passed, detail = check()
    with capsys.disabled():
        print("\n" + _line(number, title, passed, detail))
    assert passed, detail


if __name__ == "__main__":
    failures = 0
    for number, title, check in CRITERIA:
        passed, detail = check()
        failures += not passed
        print(_line(number, title, passed, detail), flush=True)
    sys.exit(1 if failures else 0)
