import math

import numpy as np
import pytest

from switchkac.errors import ConfigurationError
from switchkac.feynman_kac import (DirichletProblemSpec, dynkin_residual, estimate_dirichlet,
                                   estimate_initial_value, estimate_terminal_value,
                                   tabulated_generator)
from switchkac.levy import QuadParams
from switchkac.model import HybridState, ScalarField, apply_generator
from switchkac.path_sim import Box, SimParams

from conftest import brownian_motion, field, jump_model


def bump(x):
    r = np.clip(1 - x**2, 1e-300, None)
    return np.where(np.abs(x) < 1, np.exp(1 - 1 / r), 0.0)


def test_heat_equation_with_cosine_data():
    est = estimate_initial_value(brownian_motion(), None, field(np.cos), 0.5, HybridState([0.3], 0),
                                 SimParams(0.5, 0.05, seed=1), 20_000)
    assert est.within(math.exp(-0.25) * math.cos(0.3), n_se=4)


def test_constant_killing_is_exact():
    est = estimate_initial_value(jump_model(), ScalarField.constant(0.7), ScalarField.constant(1.0), 1.3,
                                 HybridState([0.0], 1), SimParams(1.0, 0.1, seed=2), 500)
    assert est.mean == pytest.approx(math.exp(-0.91), rel=1e-12)
    assert est.std_error < 1e-12


def test_terminal_value_sign_convention():
    zero = ScalarField.constant(0.0)
    est = estimate_terminal_value(jump_model(), zero, ScalarField.constant(1.0), zero, 0.2, 1.0,
                                  HybridState([0.0], 0), SimParams(1.0, 0.1, seed=3), 200)
    assert est.mean == pytest.approx(-0.8, abs=1e-12)


def test_terminal_value_at_horizon_is_data():
    est = estimate_terminal_value(jump_model(), None, None, field(np.cos), 1.0, 1.0,
                                  HybridState([0.4], 1), SimParams(1.0, 0.1), 10)
    assert est.mean == math.cos(0.4) and est.std_error == 0.0


def test_time_dependent_source_uses_absolute_time():
    # u_t + u''/2 = t, u(T) = 0  ->  u(t) = -(T^2 - t^2) / 2
    g = ScalarField(lambda t, x, i: np.full(len(x), t), time_dependent=True)
    est = estimate_terminal_value(brownian_motion(), None, g, ScalarField.constant(0.0), 0.5, 1.0,
                                  HybridState([0.0], 0), SimParams(1.0, 0.01, seed=4), 100)
    assert est.mean == pytest.approx(-0.375, abs=1e-10)


def test_invalid_times_rejected(bm):
    with pytest.raises(ConfigurationError):
        estimate_initial_value(bm, None, field(np.cos), 0.0, HybridState([0.0], 0), SimParams(1, 0.1), 10)
    with pytest.raises(ConfigurationError):
        estimate_terminal_value(bm, None, None, field(np.cos), 2.0, 1.0, HybridState([0.0], 0),
                                SimParams(1, 0.1), 10)


def test_exit_time_oracle():
    prob = DirichletProblemSpec(Box([-1.0], [1.0]), None, ScalarField.constant(-1.0), ScalarField.constant(0.0))
    est = estimate_dirichlet(brownian_motion(), prob, HybridState([0.5], 0), SimParams(1.0, 1e-3, seed=5), 4000)
    assert est.within(0.75, n_se=4)
    assert est.metadata["censored_fraction"] == 0.0
    assert est.metadata["mean_exit_time"] == pytest.approx(est.mean)


def test_short_horizon_is_flagged():
    prob = DirichletProblemSpec(Box([-1.0], [1.0]), None, ScalarField.constant(-1.0),
                                ScalarField.constant(0.0), max_horizon=0.05)
    est = estimate_dirichlet(brownian_motion(), prob, HybridState([0.0], 0), SimParams(1.0, 1e-2, seed=6), 500)
    assert not est.valid
    assert est.metadata["flags"] == ["horizon too short"]


def test_dirichlet_start_must_be_inside(bm):
    prob = DirichletProblemSpec(Box([-1.0], [1.0]), None, None, ScalarField.constant(0.0))
    with pytest.raises(ConfigurationError):
        estimate_dirichlet(bm, prob, HybridState([1.0], 0), SimParams(1.0, 0.1), 10)


def test_tabulated_generator_matches_pointwise():
    spec = jump_model()
    f = field(bump)
    lf = tabulated_generator(spec, f, (-1.0, 1.0))
    for x in (-0.7, 0.0, 0.4, 1.5):
        for i in (0, 1):
            ref = apply_generator(spec, f, HybridState([x], i), QuadParams(atol=1e-6))
            assert lf(np.array([[x]]), np.array([i]))[0] == pytest.approx(ref, abs=1e-4)


def test_dynkin_residual_vanishes_for_brownian_bump():
    r = dynkin_residual(brownian_motion(), field(bump), 0.5, HybridState([0.3], 0),
                        SimParams(0.5, 0.01, seed=7), 20_000, support=(-1.0, 1.0))
    assert abs(r.mean) <= 4 * r.std_error


def test_dynkin_with_exit_time():
    f = field(lambda x: x**2)
    r = dynkin_residual(brownian_motion(), f, Box([-1.0], [1.0]), HybridState([0.0], 0),
                        SimParams(1.0, 1e-3, seed=8), 2000, lf=lambda x, a: np.ones(len(x)))
    assert abs(r.mean) <= 4 * r.std_error + 0.01


def test_dynkin_needs_support_or_lf(bm):
    with pytest.raises(ConfigurationError):
        dynkin_residual(bm, field(bump), 0.5, HybridState([0.0], 0), SimParams(0.5, 0.1), 10)
