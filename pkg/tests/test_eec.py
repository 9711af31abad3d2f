import cmath

import numpy as np
import pytest

from eecstab.eec import (
    EecState,
    EnergyError,
    OscillatorConfig,
    evaluate_conditions,
    evaluate_eec,
    expected_energy,
    functional_I,
)
from eecstab.grid import GridError, Grid, SampledFunction, default_half_width, make_grid, transform_inverse
from eecstab.spectrum import hermite_state

from conftest import hermite_pair


def test_conditions_ground_state(grid):
    report = evaluate_conditions(hermite_pair(0, grid))
    assert report.norm_psi_defect < 1e-8
    assert report.decay_psi < 1e-12
    assert report.energy_expectation == pytest.approx(0.5, abs=1e-4)


def test_conditions_scaled_and_excited(grid):
    h0 = hermite_state(0, 1.0, grid)
    state = EecState(h0 * 2, h0, OscillatorConfig())
    assert evaluate_conditions(state).norm_psi_defect == pytest.approx(3.0, abs=1e-6)
    assert evaluate_conditions(hermite_pair(3, grid)).energy_expectation == pytest.approx(3.5, abs=1e-3)


@pytest.mark.parametrize("n", range(4))
def test_rigid_pairs_feasible(grid, n):
    r = evaluate_eec(hermite_pair(n, grid))
    assert r.max_magnitude() < 1e-5
    assert r.decay_psi < 1e-8 and r.decay_transform < 1e-8


def test_mismatched_pair(grid):
    h0, h1 = hermite_state(0, 1.0, grid), hermite_state(1, 1.0, grid)
    r = evaluate_eec(EecState(h0, h1, OscillatorConfig()))
    assert r.balance_q == pytest.approx(-0.5, abs=1e-4)
    assert r.balance_l == pytest.approx(0.5, abs=1e-4)
    assert functional_I(EecState(h1, h0, OscillatorConfig())) == pytest.approx(0.5, abs=1e-4)


def test_zero_state(grid):
    z = SampledFunction.zeros(grid)
    state = EecState(z, z, OscillatorConfig())
    r = evaluate_eec(state)
    assert r.norm_psi_defect == 1 and r.norm_f_defect == 1
    assert r.balance_q == 0 and r.balance_l == 0
    assert functional_I(state) == 0


@pytest.mark.parametrize("n", range(6))
def test_functional_vanishes_on_rigid(grid, n):
    assert abs(functional_I(hermite_pair(n, grid))) < 1e-5


def test_functional_matches_balance(grid, rng):
    psi = SampledFunction(hermite_state(0, 1.0, grid).values * (1 + 0.1 * rng.normal(size=grid.n_points)), grid)
    state = EecState(psi, hermite_state(2, 1.0, grid), OscillatorConfig())
    assert functional_I(state) == evaluate_eec(state).balance_q


def test_transform_pairs_balance(grid):
    psi = SampledFunction(hermite_state(1, 1.0, grid).values + 0.5j * hermite_state(2, 1.0, grid).values, grid)
    psi = psi * (1 / np.sqrt(1.25))
    state = EecState(psi, transform_inverse(psi, grid, 1.0), OscillatorConfig())
    r = evaluate_eec(state)
    assert abs(r.balance_q) < 1e-5
    assert abs(r.norm_f_defect - r.norm_psi_defect) < 1e-5


def test_expected_energy(grid):
    assert expected_energy(hermite_state(0, 1.0, grid), OscillatorConfig()) == pytest.approx(0.5, abs=1e-4)
    g2 = make_grid(default_half_width(2.0, 2), 1025)
    assert expected_energy(hermite_state(2, 2.0, g2), OscillatorConfig(2.0)) == pytest.approx(5.0, abs=1e-3)
    with pytest.raises(EnergyError):
        expected_energy(hermite_state(0, 1.0, grid) * np.sqrt(2), OscillatorConfig())


@pytest.mark.parametrize("theta", [0.3, 1.7, 3.0])
def test_energy_phase_invariant(grid, theta):
    h = hermite_state(3, 1.0, grid)
    cfg = OscillatorConfig()
    assert expected_energy(h * cmath.exp(1j * theta), cfg) == pytest.approx(expected_energy(h, cfg), rel=1e-13)


def test_energy_converges_with_refinement():
    errs = []
    for n in (257, 513, 1025):
        g = make_grid(8.0, n)
        errs.append(abs(expected_energy(hermite_state(4, 1.0, g), OscillatorConfig()) - 4.5))
    assert errs[0] > errs[1] > errs[2]


def test_state_requires_symmetric_grid(grid):
    g = Grid(-6.0, 8.0, 513)
    f = SampledFunction.zeros(g)
    with pytest.raises(GridError):
        EecState(f, f, OscillatorConfig())


def test_config_rejects_bad_omega():
    with pytest.raises(ValueError):
        OscillatorConfig(0.0)
