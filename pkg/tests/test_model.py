import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from switchkac.errors import ConfigurationError
from switchkac.levy import StableLike
from switchkac.model import (HybridState, ScalarField, apply_generator, generator_table,
                             generator_terms, validate_model)
from switchkac.model import (affine, constant, constant_generator, geometric, logistic_generator,
                             power_jump, tabulated, two_sided)

from conftest import brownian_motion, field, jump_model


def test_state_rejects_non_finite():
    with pytest.raises(ConfigurationError):
        HybridState([np.nan], 0)


def test_state_must_match_model(jm):
    with pytest.raises(ConfigurationError):
        jm.check_state(HybridState([0.0, 1.0], 0))
    with pytest.raises(ConfigurationError):
        jm.check_state(HybridState([0.0], 2))


def test_square_under_brownian_motion():
    f = field(lambda x: x**2)
    assert apply_generator(brownian_motion(), f, HybridState([0.7], 0)) == pytest.approx(1.0, abs=1e-6)


def test_square_under_jump_model(jm):
    # sigma_i^2 + k_i^2 * int z^2 nu(dz) with the mark range (0.05, 1]
    moment = 2 * (1 - 0.05**1.5) / 1.5
    f = field(lambda x: x**2)
    for i, (s, k) in enumerate(((1.0, 0.5), (2.0, 1.0))):
        got = apply_generator(jm, f, HybridState([0.3], i))
        assert got == pytest.approx(s**2 + k**2 * moment, rel=1e-6)


def test_switching_term_picks_up_rates(jm):
    f = ScalarField(lambda x, i: np.asarray(i, float) + 0.0 * x[:, 0])
    terms = generator_terms(jm, f, HybridState([0.0], 0))
    assert terms["switching"] == pytest.approx(1.0)
    assert terms["drift"] == terms["diffusion"] == 0.0


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-5, 5), i=st.integers(0, 1), c=st.floats(-10, 10))
def test_constants_are_annihilated(x, i, c):
    assert apply_generator(jump_model(drift=(0.4, -1.0)), ScalarField.constant(c),
                           HybridState([x], i)) == pytest.approx(0.0, abs=1e-9)


def test_generator_table_shape(jm):
    tab = generator_table(jm, field(lambda x: np.exp(-x**2)), np.linspace(-2, 2, 7))
    assert tab.shape == (2, 7)
    assert np.all(np.isfinite(tab))


def test_validation_accepts_the_reference_model(jm):
    pts = [HybridState([x], i) for x in (-1.0, 0.0, 2.0) for i in (0, 1)]
    pairs = [(HybridState([0.0], 0), HybridState([1.0], 0))]
    rep = validate_model(jm, pts, pairs, kappa=10.0)
    assert rep.ok, rep.violations


def test_validation_flags_bad_generator_and_rates(jm):
    bad = jm.replace(generator_q=constant_generator([[-1.0, 2.0], [1.0, -1.0]]), q_bound=1.0)
    rep = validate_model(bad, [HybridState([0.0], 0)], [(HybridState([0.0], 0), HybridState([1.0], 0))])
    names = {v.check for v in rep.violations}
    assert {"generator row sum", "rate bound"} <= names


def test_validation_flags_divergent_jump_moment(jm):
    bad = jm.replace(levy=StableLike(1.5), jump_coeff=power_jump([1.0, 1.0], 0.2, 1.0))
    rep = validate_model(bad, [HybridState([0.0], 0)], [(HybridState([0.0], 0), HybridState([1.0], 0))])
    assert any(v.check == "jump second moment infinite" for v in rep.violations)


def test_validation_flags_lipschitz_excess():
    spec = brownian_motion().replace(drift=affine([0.0], [5.0]))
    rep = validate_model(spec, [HybridState([0.0], 0)],
                         [(HybridState([0.0], 0), HybridState([1.0], 0))], kappa=1.0)
    assert rep.sampled_kappa == pytest.approx(25.0)
    assert not rep.ok


def test_family_shapes():
    x = np.linspace(-1, 1, 5)[:, None]
    i = np.array([0, 1, 0, 1, 1])
    assert constant([1.0, 2.0])(x, i).shape == (5, 1)
    assert constant([1.0, 2.0], kind="diffusion")(x, i).shape == (5, 1, 1)
    assert geometric([0.1, 0.2])(x, i).shape == (5, 1)
    assert tabulated([-1, 1], [[0, 1], [1, 2]], kind="diffusion")(x, i).shape == (5, 1, 1)
    v = two_sided(2.0, 1.0, scale=[1.0, 3.0])(np.array([[-50.0], [50.0]]), np.array([1, 1]))
    assert v[:, 0, 0] == pytest.approx([6.0, 3.0])
    q = logistic_generator([[-1, 1], [1, -1]], [[-3, 3], [3, -3]])(x)
    assert q.shape == (5, 2, 2) and np.allclose(q.sum(axis=2), 0)


def test_model_needs_jump_pair(jm):
    with pytest.raises(ConfigurationError):
        jm.replace(levy=None)
