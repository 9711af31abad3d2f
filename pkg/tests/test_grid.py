import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eecstab.eec import kinetic, potential
from eecstab.grid import (
    Grid,
    GridError,
    SampledFunction,
    default_half_width,
    differentiate,
    integrate,
    l2_distance,
    l2_norm,
    make_grid,
    transform_forward,
    transform_inverse,
)
from eecstab.spectrum import hermite_state


def test_make_grid_spacing():
    assert make_grid(8.0, 1025).spacing == pytest.approx(0.015625, abs=1e-15)
    assert make_grid(1.0, 16).spacing == pytest.approx(2 / 15, abs=1e-15)


@pytest.mark.parametrize("x_max, n", [(-1.0, 100), (float("inf"), 100), (float("nan"), 100), (1.0, 15)])
def test_make_grid_rejects(x_max, n):
    with pytest.raises(GridError):
        make_grid(x_max, n)


def test_grid_invariants():
    with pytest.raises(GridError):
        Grid(1.0, 0.0, 32)
    assert make_grid(2.0, 33).is_symmetric
    assert not Grid(-1.0, 2.0, 33).is_symmetric


def test_sampled_function_invariants(grid):
    with pytest.raises(GridError):
        SampledFunction(np.zeros(10), grid)
    bad = np.zeros(grid.n_points)
    bad[3] = np.nan
    with pytest.raises(GridError):
        SampledFunction(bad, grid)


def test_integrate_examples(grid):
    assert integrate(SampledFunction.zeros(grid)) == 0
    h0 = hermite_state(0, 1.0, grid)
    assert abs(integrate(SampledFunction(np.abs(h0.values) ** 2, grid)) - 1) < 1e-10
    odd = SampledFunction(grid.points * np.abs(h0.values) ** 2, grid)
    assert abs(integrate(odd)) < 1e-12


def test_integrate_exact_for_piecewise_linear():
    g = make_grid(3.0, 61)
    f = SampledFunction.from_callable(lambda x: 2.0 * x + 1.0, g)
    assert integrate(f).real == pytest.approx(6.0, abs=1e-12)


def test_quadrature_order():
    errors = []
    for n in (17, 33, 65):
        g = make_grid(1.0, n)
        f = SampledFunction.from_callable(lambda x: np.exp(-x ** 2), g)
        errors.append(abs(integrate(f).real - math.sqrt(math.pi) * math.erf(1.0)))
    ratios = [errors[i] / errors[i + 1] for i in range(2)]
    assert all(3.8 < r < 4.2 for r in ratios)


def test_differentiate_examples(grid):
    const = SampledFunction(np.full(grid.n_points, 3.0), grid)
    assert np.max(np.abs(differentiate(const).values)) < 1e-12
    line = SampledFunction.from_callable(lambda x: x, grid)
    assert np.max(np.abs(differentiate(line).values - 1)) < 1e-10
    h0 = hermite_state(0, 1.0, grid)
    err = np.max(np.abs(differentiate(h0).values + grid.points * h0.values))
    assert err <= 0.5 * grid.spacing ** 2


@pytest.mark.parametrize("n", range(5))
def test_transform_eigenfunctions(grid, n):
    h = hermite_state(n, 1.0, grid)
    psi = transform_forward(h, grid, 1.0)
    assert np.max(np.abs(psi.values - (-1j) ** n * h.values)) < 1e-6


def test_transform_zero_and_round_trip(grid):
    zero = SampledFunction.zeros(grid)
    assert np.all(transform_forward(zero, grid, 1.0).values == 0)
    assert np.all(transform_inverse(zero, grid, 1.0).values == 0)
    h0 = hermite_state(0, 1.0, grid)
    back = transform_inverse(transform_forward(h0, grid, 1.0), grid, 1.0)
    assert np.max(np.abs(back.values - h0.values)) < 1e-6


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=6, max_size=6), st.lists(st.floats(-1, 1), min_size=6, max_size=6))
def test_round_trip_band_limited(re, im):
    g = make_grid(8.0, 513)
    coeffs = np.array(re) + 1j * np.array(im)
    if np.sum(np.abs(coeffs)) < 1e-3:
        return
    values = sum(c * hermite_state(k, 1.0, g).values for k, c in enumerate(coeffs))
    f = SampledFunction(values, g)
    back = transform_inverse(transform_forward(f, g, 1.0), g, 1.0)
    assert np.max(np.abs(back.values - f.values)) < 1e-4 * max(1.0, np.max(np.abs(f.values)))


def test_parseval_and_intertwining(grid):
    values = hermite_state(0, 1.0, grid).values + 0.4j * hermite_state(3, 1.0, grid).values
    f = SampledFunction(values, grid)
    psi = transform_forward(f, grid, 1.0)
    assert abs(l2_norm(psi) - l2_norm(f)) < 1e-6
    assert abs(kinetic(psi.values, grid) - potential(f.values, grid, 1.0)) < 1e-5


def test_scaled_transform_omega_two():
    omega = 2.0
    g = make_grid(default_half_width(omega, 2), 1025)
    h2 = hermite_state(2, omega, g)
    psi = transform_forward(h2, g, omega)
    assert np.max(np.abs(psi.values + h2.values)) < 1e-6


def test_l2_distance_examples(grid):
    h0 = hermite_state(0, 1.0, grid)
    h1 = hermite_state(1, 1.0, grid)
    assert l2_distance(h0, h0) == 0
    assert l2_distance(h0, -h0) == pytest.approx(2.0, abs=1e-6)
    assert l2_distance(h0, h0 + h1 * 0.3) == pytest.approx(0.3, abs=1e-8)
    with pytest.raises(GridError):
        l2_distance(h0, hermite_state(0, 1.0, make_grid(8.0, 513)))


def test_csv_and_json_round_trip(grid):
    f = SampledFunction(hermite_state(2, 1.0, grid).values * (1 + 0.5j), grid)
    g = SampledFunction.from_csv(f.to_csv())
    assert g.grid == f.grid and np.array_equal(g.values, f.values)
    h = SampledFunction.from_json(f.to_json())
    assert h.grid == f.grid and np.array_equal(h.values, f.values)


@pytest.mark.parametrize("text", ["", "a,b,c\n1,2,3\n", "x,re,im\n1,2\n", "x,re,im\n" + "0,1,oops\n" * 20,
                                  "x,re,im\n" + "".join(f"{x},0,0\n" for x in [0, 1, 2, 4] * 5)])
def test_csv_malformed(text):
    with pytest.raises(GridError):
        SampledFunction.from_csv(text)
