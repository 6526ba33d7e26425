import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from switchkac.estimate import Accumulator, Estimate

samples = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=0, max_size=40)


@settings(max_examples=100)
@given(a=samples, b=samples, c=samples)
def test_merge_matches_pooled_statistics(a, b, c):
    merged = Accumulator.of(a).merge(Accumulator.of(b)).merge(Accumulator.of(c))
    pooled = np.array(a + b + c)
    assert merged.count == len(pooled)
    if len(pooled):
        assert merged.mean == pytest.approx(pooled.mean(), abs=1e-9)
        assert merged.m2 == pytest.approx(np.sum((pooled - pooled.mean()) ** 2), rel=1e-9, abs=1e-6)


@settings(max_examples=100)
@given(a=samples, b=samples)
def test_merge_is_commutative(a, b):
    x = Accumulator.of(a).merge(Accumulator.of(b))
    y = Accumulator.of(b).merge(Accumulator.of(a))
    assert x.count == y.count
    assert x.mean == pytest.approx(y.mean, abs=1e-9)
    assert x.m2 == pytest.approx(y.m2, rel=1e-9, abs=1e-6)


def test_standard_error_and_interval():
    v = np.arange(10.0)
    est = Accumulator.of(v).estimate()
    assert est.std_error == pytest.approx(v.std(ddof=1) / math.sqrt(10))
    assert est.half_width == pytest.approx(1.959964 * est.std_error, rel=1e-6)
    assert est.within(4.5) and not est.within(10.0)


def test_exploded_paths_invalidate():
    acc = Accumulator.of([1.0, 2.0])
    acc.exploded = 1
    est = acc.estimate()
    assert not est.valid and est.metadata["exploded"] == 1
    assert "INVALID" in str(est)


def test_empty_accumulator_gives_nan():
    est = Accumulator().estimate()
    assert math.isnan(est.mean) and est.n_paths == 0


def test_within_budget():
    assert Estimate(1.0, 0.01, 100).within(1.05, budget=0.03)
    assert not Estimate(1.0, 0.01, 100).within(1.07, budget=0.03)
