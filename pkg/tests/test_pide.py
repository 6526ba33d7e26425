import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from switchkac.errors import ConfigurationError, StabilityError
from switchkac.model import HybridState, ScalarField, apply_generator, constant
from switchkac.pide import (DiscreteOperator, Extension, Grid1D, apply_discrete_generator,
                            discretization_budget, solve_cauchy, solve_dirichlet)

from conftest import brownian_motion, field, jump_model


def heat_error(n_nodes):
    bm = brownian_motion()
    grid = Grid1D(-10.0, 10.0, n_nodes)
    sol = solve_cauchy(bm, grid, None, field(lambda x: np.exp(-x**2 / 2)), 1.0)
    x = grid.nodes
    exact = np.exp(-x**2 / 4) / math.sqrt(2.0)
    return float(np.max(np.abs(sol.level(1.0)[0] - exact)))


def test_heat_kernel_accuracy_and_rate():
    coarse, fine = heat_error(400), heat_error(800)
    assert coarse < 5e-3
    assert coarse / fine >= 3.0


def test_quadratic_dirichlet_is_exact():
    sol = solve_dirichlet(brownian_motion(), Grid1D(-1.0, 1.0, 41), None,
                          ScalarField.constant(-1.0), ScalarField.constant(0.0))
    x = sol.grid.nodes
    assert np.max(np.abs(sol.values[0, 0] - (1 - x**2))) < 1e-12


@settings(max_examples=20, deadline=None)
@given(lo=st.floats(-3, 3), hi=st.floats(-3, 3), c=st.floats(0, 5), s=st.floats(0.2, 3))
def test_discrete_maximum_principle(lo, hi, c, s):
    spec = brownian_motion().replace(diffusion=constant([s], kind="diffusion"))
    eta = ScalarField(lambda x, i: np.where(x[:, 0] < 0, lo, hi))
    sol = solve_dirichlet(spec, Grid1D(-1.0, 1.0, 61), ScalarField.constant(c), None, eta)
    u = sol.values[0, 0]
    assert u.max() <= max(lo, hi, 0.0) + 1e-12
    assert u.min() >= min(lo, hi, 0.0) - 1e-12


@settings(max_examples=20, deadline=None)
@given(value=st.floats(-100, 100), drift=st.floats(-2, 2))
def test_constants_in_kernel_of_discrete_generator(value, drift):
    spec = jump_model(drift=(drift, -drift))
    grid = Grid1D(-3.0, 3.0, 61, 2)
    out = apply_discrete_generator(spec, grid, np.full((2, 61), value))
    assert np.max(np.abs(out)) <= 1e-9 * max(1.0, abs(value))


def test_discrete_generator_matches_pointwise_generator():
    spec = jump_model(drift=(0.3, -0.2))
    grid = Grid1D(-8.0, 8.0, 1601, 2)
    f = field(lambda x: np.exp(-x**2 / 2))
    U = np.stack([f.value(grid.nodes[:, None], np.zeros(grid.n_nodes, int))] * 2)
    LU = apply_discrete_generator(spec, grid, U, quad_level=2)
    for xv in (-1.0, 0.0, 0.5, 2.0):
        j = int(np.argmin(np.abs(grid.nodes - xv)))
        for i in (0, 1):
            ref = apply_generator(spec, f, HybridState([grid.nodes[j]], i))
            assert LU[i, j] == pytest.approx(ref, abs=5e-3)


def test_extension_rules():
    bm = brownian_motion()
    grid = Grid1D(0.0, 1.0, 11)
    U = 2.0 + 3.0 * grid.nodes[None, :]
    lin = apply_discrete_generator(bm, grid, U, extension="linear")
    assert np.max(np.abs(lin)) < 1e-10
    const = apply_discrete_generator(bm, grid, U, extension="constant")
    assert const[0, 0] > 0 and const[0, -1] < 0
    formula = apply_discrete_generator(bm, grid, U, extension=lambda t, x, i: 2.0 + 3.0 * x)
    assert np.max(np.abs(formula)) < 1e-10
    with pytest.raises(ConfigurationError):
        Extension("mirror")


def test_coupled_constants_are_preserved():
    spec = jump_model()
    sol = solve_cauchy(spec, Grid1D(-5, 5, 101, 2), None, ScalarField.constant(1.0), 1.0)
    assert np.max(np.abs(sol.values - 1.0)) < 1e-12


def test_constant_killing_discounts():
    spec = jump_model()
    sol = solve_cauchy(spec, Grid1D(-5, 5, 101, 2), ScalarField.constant(0.7),
                       ScalarField.constant(1.0), 1.0, n_steps=200)
    assert np.max(np.abs(sol.level(1.0) - math.exp(-0.7))) < 1e-4


def test_backward_solve_of_constant_source():
    # u_t + u''/2 = 1, u(T) = 0  ->  u(t) = -(T - t)
    sol = solve_cauchy(brownian_motion(), Grid1D(-3, 3, 61), None, ScalarField.constant(0.0), 2.0,
                       direction="backward", source=ScalarField.constant(1.0))
    assert sol.value(0.0, 0.0, 0) == pytest.approx(-2.0, abs=1e-12)
    assert sol.times[0] == 0.0 and sol.times[-1] == 2.0


def test_explicit_step_restriction():
    spec = brownian_motion().replace(drift=constant([50.0]), diffusion=constant([0.1], kind="diffusion"))
    with pytest.raises(StabilityError) as info:
        solve_cauchy(spec, Grid1D(-1, 1, 201), None, ScalarField.constant(1.0), 1.0, n_steps=10)
    assert info.value.ratio > 1


def test_stability_ratio_form():
    spec = jump_model(drift=(1.0, -2.0))
    op = DiscreteOperator(spec, Grid1D(-4, 4, 81, 2))
    ratio = op.stability_ratio(0.01)
    assert ratio == pytest.approx(0.01 * (np.max(np.abs(op.b)) / 0.1 + op.jump_rate.max() + 1.0))


def test_dirichlet_needs_ellipticity():
    spec = brownian_motion().replace(diffusion=constant([0.0], kind="diffusion"))
    with pytest.raises(ConfigurationError):
        solve_dirichlet(spec, Grid1D(-1, 1, 11), None, None, ScalarField.constant(0.0))


def test_solution_csv_and_levels(tmp_path):
    sol = solve_cauchy(jump_model(), Grid1D(-2, 2, 11, 2), None, ScalarField.constant(1.0), 0.5,
                       n_steps=10, store_every=5)
    path = tmp_path / "u.csv"
    sol.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "x", "regime", "u"]
    assert len(rows) == 1 + len(sol.times) * 2 * 11
    with pytest.raises(ConfigurationError):
        sol.level(0.1)


def test_budget_is_twice_the_gap():
    bm = brownian_motion()
    data = field(lambda x: np.cos(x))
    fine = solve_cauchy(bm, Grid1D(-10, 10, 401), None, data, 1.0)
    coarse = solve_cauchy(bm, Grid1D(-10, 10, 201), None, data, 1.0)
    b = discretization_budget(fine, coarse, 1.0, 0.0, 0)
    assert b == pytest.approx(2 * abs(fine.value(1.0, 0.0, 0) - coarse.value(1.0, 0.0, 0)))
    assert abs(fine.value(1.0, 0.0, 0) - math.exp(-0.5)) < b + 1e-6
