import numpy as np
import pytest
from scipy.linalg import expm

from switchkac.errors import ConfigurationError, SimulationError
from switchkac.levy import CompoundPoisson
from switchkac.model import HybridState
from switchkac.model import constant, constant_generator, geometric, logistic_generator, scaled_jump
from switchkac.path_sim import (Box, PathCallable, SimParams, TerminalObserver, empirical_moment_bound,
                                ensemble_values, reduce_batches, run_batch, simulate_ensemble,
                                simulate_path, stream)

from conftest import brownian_motion, jump_model


def terminal(fn):
    return lambda n: TerminalObserver(n, fn)


def test_paths_are_reproducible(jm):
    p = SimParams(1.0, 0.01, delta=0.0, seed=11, stream_id=3)
    a = simulate_path(jm, HybridState([0.0], 0), p)
    b = simulate_path(jm, HybridState([0.0], 0), p)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.x_values, b.x_values)
    c = simulate_path(jm, HybridState([0.0], 0), SimParams(1.0, 0.01, seed=11, stream_id=4))
    assert not np.array_equal(a.x_values[-1], c.x_values[-1])


def test_thread_count_does_not_change_results(jm):
    kw = dict(seed=5, batch_size=500)
    f = terminal(lambda x, a: x[:, 0] ** 2)
    one = simulate_ensemble(jm, HybridState([0.0], 0), SimParams(0.5, 0.01, threads=1, **kw), 2000, f)
    two = simulate_ensemble(jm, HybridState([0.0], 0), SimParams(0.5, 0.01, threads=3, **kw), 2000, f)
    assert one.mean == two.mean and one.std_error == two.std_error


def test_brownian_second_moment():
    est = simulate_ensemble(brownian_motion(), HybridState([0.5], 0), SimParams(1.0, 0.05, seed=1),
                            40_000, terminal(lambda x, a: x[:, 0] ** 2))
    assert est.within(1.25, n_se=4)


def test_regime_law_matches_matrix_exponential():
    q = np.array([[-2.0, 2.0], [0.5, -0.5]])
    spec = brownian_motion().replace(
        m=2, diffusion=constant([1.0, 1.0], kind="diffusion"), drift=constant([0.0, 0.0]),
        generator_q=constant_generator(q), q_bound=2.0)
    est = simulate_ensemble(spec, HybridState([0.0], 0), SimParams(0.7, 0.1, seed=2), 40_000,
                            terminal(lambda x, a: (a == 1).astype(float)))
    assert est.within(expm(0.7 * q)[0, 1], n_se=4)


def test_thinning_with_state_dependent_rates():
    # no motion: the regime is a chain with the frozen generator Q(x0)
    gen = logistic_generator([[-1.0, 1.0], [1.0, -1.0]], [[-3.0, 3.0], [0.2, -0.2]])
    spec = brownian_motion().replace(
        m=2, diffusion=constant([0.0, 0.0], kind="diffusion"), drift=constant([0.0, 0.0]),
        generator_q=gen, q_bound=3.0)
    x0 = 0.8
    q = gen(np.array([[x0]]))[0]
    est = simulate_ensemble(spec, HybridState([x0], 0), SimParams(1.0, 0.25, seed=3), 40_000,
                            terminal(lambda x, a: (a == 1).astype(float)))
    assert est.within(expm(q)[0, 1], n_se=4)


def test_compensated_jumps_are_centered():
    spec = brownian_motion().replace(
        diffusion=constant([0.0], kind="diffusion"),
        jump_coeff=scaled_jump([1.0]), levy=CompoundPoisson.normal(2.0, 0.5, 0.1))
    est = simulate_ensemble(spec, HybridState([1.0], 0), SimParams(1.0, 0.1, seed=4), 40_000,
                            terminal(lambda x, a: x[:, 0]))
    # variance rate * E[Z^2] = 2 * 0.26
    assert est.within(1.0, n_se=4)
    assert est.std_error == pytest.approx(np.sqrt(0.52 / 40_000), rel=0.05)


def test_left_limits_undo_jumps():
    spec = brownian_motion().replace(jump_coeff=scaled_jump([1.0]),
                                     levy=CompoundPoisson.discrete(5.0, [3.0]))
    path = simulate_path(spec, HybridState([0.0], 0), SimParams(2.0, 0.05, seed=6))
    assert path.jumps
    for j in path.jumps:
        k = int(np.flatnonzero(path.times == j.time)[0])
        assert path.x_values[k, 0] - path.left_limits()[k, 0] == pytest.approx(3.0)


def test_explosion_raises_with_partial_path():
    spec = brownian_motion().replace(drift=geometric([60.0]), diffusion=constant([0.0], kind="diffusion"))
    with pytest.raises(SimulationError) as info:
        simulate_path(spec, HybridState([1.0], 0), SimParams(1.0, 0.01))
    assert info.value.partial_path is not None


def test_explosion_is_flagged_in_batches():
    spec = brownian_motion().replace(drift=geometric([60.0]), diffusion=constant([0.0], kind="diffusion"))
    res = ensemble_values(spec, HybridState([1.0], 0), SimParams(1.0, 0.01), 10,
                          terminal(lambda x, a: x[:, 0]))
    est = reduce_batches(res)
    assert not est.valid and est.metadata["explosion_fraction"] == 1.0


def test_exit_time_with_bridge_correction():
    bm = brownian_motion()
    res = run_batch(bm, HybridState([0.0], 0), SimParams(20.0, 0.01), 20_000, stream(8),
                    TerminalObserver(20_000, lambda x, a: x[:, 0]), domain=Box([-1.0], [1.0]))
    assert res.exited.all()
    t = res.exit_times
    assert abs(t.mean() - 1.0) <= 4 * t.std() / np.sqrt(len(t)) + 0.01


def test_start_outside_domain_rejected(bm):
    with pytest.raises(ConfigurationError):
        run_batch(bm, HybridState([2.0], 0), SimParams(1.0, 0.1), 5, stream(0),
                  TerminalObserver(5, lambda x, a: x[:, 0]), domain=Box([-1.0], [1.0]))


def test_path_functional_and_observer_agree():
    jm = jump_model()
    p = SimParams(0.5, 0.05, seed=9)
    a = simulate_ensemble(jm, HybridState([0.0], 1), p, 3000, PathCallable(lambda path: path.x_values[-1, 0] ** 2))
    b = simulate_ensemble(jm, HybridState([0.0], 1), p, 3000, terminal(lambda x, a: x[:, 0] ** 2))
    assert abs(a.mean - b.mean) <= 4 * np.hypot(a.std_error, b.std_error)


def test_moment_bound_dominates_terminal_moment(bm):
    p = SimParams(1.0, 0.01, seed=10)
    sup = empirical_moment_bound(bm, HybridState([0.0], 0), p, 2, 4000)
    assert sup.mean > 1.0
    with pytest.raises(ConfigurationError):
        empirical_moment_bound(bm, HybridState([0.0], 0), p, 3, 10)


def test_sim_params_validated():
    with pytest.raises(ConfigurationError):
        SimParams(0.0, 0.1)
    with pytest.raises(ConfigurationError):
        SimParams(1.0, 0.1, delta=-1.0)
