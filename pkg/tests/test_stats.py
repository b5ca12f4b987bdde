import numpy as np
import pytest
from hypothesis import given, strategies as st

from kpztorus.stats import Estimate, mc_estimate, combine_means, Stopwatch


def test_mc_estimate_matches_numpy():
    x = np.random.default_rng(3).standard_normal(500)
    e = mc_estimate(x)
    assert e.value == pytest.approx(x.mean())
    assert e.stderr == pytest.approx(x.std(ddof=1) / np.sqrt(500))
    assert e.n == 500


def test_estimate_rejects_tiny_samples():
    with pytest.raises(ValueError):
        Estimate(value=0.0, stderr=0.0, n=1)


@given(st.floats(-10, 10), st.floats(0.01, 5), st.floats(-10, 10), st.floats(0.01, 5))
def test_agrees_with_is_symmetric(v1, s1, v2, s2):
    a = Estimate(value=v1, stderr=s1, n=10)
    b = Estimate(value=v2, stderr=s2, n=10)
    assert a.agrees_with(b) == b.agrees_with(a)


def test_agrees_with_threshold():
    a = Estimate(value=0.0, stderr=1.0, n=10)
    assert a.agrees_with(Estimate(value=2.9, stderr=0.0001, n=10))
    assert not a.agrees_with(Estimate(value=3.1, stderr=0.0001, n=10))


def test_combine_means_batches():
    e = combine_means([1.0, 3.0], [1.0, 1.0], n_total=20)
    assert e.value == pytest.approx(2.0)
    assert e.n == 20
    x = np.random.default_rng(0).standard_normal((4, 25))
    e = combine_means(x.mean(axis=1), x.std(axis=1, ddof=1) / 5, n_total=100)
    assert e.value == pytest.approx(x.mean())
    with pytest.raises(ValueError):
        combine_means([1.0], [0.1], n_total=5)


def test_stopwatch():
    with Stopwatch() as sw:
        pass
    assert sw.elapsed >= 0.0
