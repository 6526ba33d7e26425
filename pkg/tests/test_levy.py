import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from switchkac.errors import ConfigurationError, QuadratureError
from switchkac.levy import (AliasTable, CompoundPoisson, QuadParams, StableLike, Tabulated,
                            choose_truncation, compensator_correction, integrate,
                            integrate_checked, sample_jumps, small_jump_second_moment, tail_mass)
from switchkac.model import HybridState
from switchkac.path_sim import stream

from conftest import jump_model


def test_stable_tail_mass_closed_form():
    nu = StableLike(0.5, inner=0.05, outer=1.0)
    assert tail_mass(nu, 0.1) == pytest.approx(2 * (0.1**-0.5 - 1) / 0.5)
    # below the inner cutoff the mass saturates
    assert tail_mass(nu, 0.01) == pytest.approx(tail_mass(nu, 0.05))
    assert tail_mass(nu, 2.0) == 0.0


def test_tail_mass_rejects_nonpositive_delta():
    with pytest.raises(ConfigurationError):
        tail_mass(StableLike(0.5), 0.0)


def test_infinite_activity_flag():
    assert StableLike(1.2).infinite_activity
    assert not StableLike(1.2, inner=0.1).infinite_activity
    assert not CompoundPoisson.normal(2.0, 0.0, 1.0).infinite_activity


def test_second_moment_quadrature_matches_closed_form():
    nu = StableLike(0.5, outer=1.0)
    val = integrate_checked(nu, lambda z: z[:, 0] ** 2)
    assert val == pytest.approx(2.0 / 1.5, rel=1e-9)


def test_compound_poisson_moments():
    nu = CompoundPoisson.normal(3.0, 0.2, 0.5)
    assert integrate(nu, lambda z: np.ones(len(z))) == pytest.approx(3.0, rel=1e-10)
    assert integrate(nu, lambda z: z[:, 0]) == pytest.approx(0.6, rel=1e-10)
    assert nu.tail_mass(0.3) == pytest.approx(
        3.0 * (stats.norm.sf(0.3, 0.2, 0.5) + stats.norm.cdf(-0.3, 0.2, 0.5)))


def test_discrete_compound_poisson_and_tabulated_agree():
    cp = CompoundPoisson.discrete(2.0, [-1.0, 0.5, 2.0], [0.2, 0.3, 0.5])
    tab = Tabulated([-1.0, 0.5, 2.0], [0.4, 0.6, 1.0])
    for d in (0.1, 0.7, 1.5):
        assert cp.tail_mass(d) == pytest.approx(tab.tail_mass(d))
    g = lambda z: z[:, 0] ** 3  # noqa: E731
    assert integrate(cp, g) == pytest.approx(integrate(tab, g))


def test_symmetry_detection():
    assert StableLike(1.0).symmetric()
    assert CompoundPoisson.discrete(1.0, [-1.0, 1.0]).symmetric()
    assert not CompoundPoisson.normal(1.0, -0.1, 0.2).symmetric()
    assert Tabulated([-2.0, -1.0, 1.0, 2.0], [1.0, 3.0, 3.0, 1.0]).symmetric()


def test_invalid_measures_rejected():
    with pytest.raises(ConfigurationError):
        StableLike(2.5)
    with pytest.raises(ConfigurationError):
        CompoundPoisson.discrete(1.0, [0.0, 1.0])
    with pytest.raises(ConfigurationError):
        CompoundPoisson.discrete(1.0, [1.0, 2.0], [0.5, 0.6])
    with pytest.raises(ConfigurationError):
        Tabulated([1.0], [-1.0])


def test_quadrature_disagreement_raises():
    with pytest.raises(QuadratureError) as info:
        integrate_checked(StableLike(0.5, outer=1.0), lambda z: np.cos(40 * z[:, 0]),
                          quad=QuadParams(atol=0.0, refinements=1))
    assert info.value.coarse != info.value.fine


@settings(max_examples=40, deadline=None)
@given(beta=st.floats(0.1, 1.9), d1=st.floats(1e-3, 0.5), d2=st.floats(1e-3, 0.5))
def test_tail_mass_is_monotone(beta, d1, d2):
    nu = StableLike(beta, outer=2.0)
    lo, hi = sorted((d1, d2))
    assert nu.tail_mass(lo) >= nu.tail_mass(hi)


@settings(max_examples=25, deadline=None)
@given(beta=st.floats(0.2, 1.8), delta=st.floats(0.01, 0.9))
def test_quadrature_of_one_is_tail_mass(beta, delta):
    nu = StableLike(beta, outer=1.0)
    val = integrate(nu, lambda z: np.ones(len(z)), lo=delta, level=2)
    assert val == pytest.approx(nu.tail_mass(delta), rel=1e-8)


def test_sampled_marks_follow_the_truncated_law():
    nu = StableLike(0.5, inner=0.05, outer=1.0)
    rng = stream(1, 0, 0)
    r = np.abs(nu.sample_marks(20_000, 0.1, rng)[:, 0])
    res = stats.kstest(r, lambda v: nu.radial_cdf(v, 0.1))
    assert res.pvalue > 0.01


def test_jump_counts_are_poisson():
    nu = CompoundPoisson.normal(2.0, 0.0, 1.0)
    counts = np.array([len(sample_jumps(nu, 0.0, 1.5, stream(2, 0, k))[0]) for k in range(4000)])
    lam = 3.0
    top = 8
    obs = np.array([np.sum(counts == k) for k in range(top)] + [np.sum(counts >= top)])
    p = np.append(stats.poisson.pmf(np.arange(top), lam), stats.poisson.sf(top - 1, lam))
    assert stats.chisquare(obs, p * len(counts)).pvalue > 0.01


def test_jump_times_sorted_and_inside_horizon():
    t, marks = sample_jumps(StableLike(1.0, outer=1.0), 0.05, 3.0, stream(3))
    assert np.all(np.diff(t) >= 0) and t.min() >= 0 and t.max() <= 3.0
    assert marks.shape == (len(t), 1) and np.all(np.abs(marks) > 0.05)


def test_infinite_activity_requires_truncation():
    with pytest.raises(ConfigurationError):
        sample_jumps(StableLike(1.0), 0.0, 1.0, stream(0))


def test_alias_table_frequencies():
    p = np.array([0.1, 0.6, 0.05, 0.25])
    draws = AliasTable(p).sample(50_000, stream(4))
    obs = np.bincount(draws, minlength=4)
    assert stats.chisquare(obs, p * len(draws)).pvalue > 0.01


def test_symmetric_measure_needs_no_compensation():
    spec = jump_model()
    s = HybridState([0.3], 1)
    assert np.allclose(compensator_correction(spec, s, 0.1), 0.0, atol=1e-12)


def test_truncation_meets_variance_budget():
    spec = jump_model().replace(levy=StableLike(1.5, outer=1.0))
    s = HybridState([0.0], 1)
    delta = choose_truncation(spec, s, T=1.0, target_variance=1.0)
    assert small_jump_second_moment(spec, s, delta) <= 1e-4 * (1 + 1e-9)
    assert 0 < delta < 1.0
    # second moment below delta: 2 k^2 delta^(2-beta) / (2-beta)
    assert small_jump_second_moment(spec, s, 0.2) == pytest.approx(2 * 0.2**0.5 / 0.5, rel=1e-8)
