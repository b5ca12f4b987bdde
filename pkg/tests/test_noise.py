import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from kpztorus.rng import RngStream
from kpztorus.noise import (
    InvalidGridError, LatticeField, CovarianceSpec,
    sample_bridge, sample_bridge_values, sample_stationary_density,
    stationary_density_values, sample_white_slice, smooth_slice_values,
)


@given(st.integers(2, 9).map(lambda k: 2**k), st.floats(0.25, 8.0))
@settings(max_examples=20, deadline=None)
def test_bridge_endpoints_pinned(n, L):
    w = sample_bridge_values(L, n, RngStream(0).generator(), size=4)
    assert w.shape == (4, n + 1)
    np.testing.assert_allclose(w[:, 0], 0.0, atol=1e-14)
    np.testing.assert_allclose(w[:, -1], 0.0, atol=1e-14)


def test_bridge_covariance():
    # Cov(W(x), W(y)) = min(x, y) - x y / L
    L, n = 2.0, 64
    w = sample_bridge_values(L, n, RngStream(11).generator(), size=200_000)
    x = np.arange(n + 1) * L / n
    i, j = 16, 40
    want = min(x[i], x[j]) - x[i] * x[j] / L
    got = np.mean(w[:, i] * w[:, j])
    assert got == pytest.approx(want, abs=0.01)
    var = np.var(w[:, n // 2])
    assert var == pytest.approx(L / 4, rel=0.02)


def test_bridge_scaling_identity():
    # int_0^L exp(beta W) has the law of L int_0^1 exp(beta sqrt(L) W')
    beta, L, n, m = 0.8, 4.0, 256, 10_000
    g = RngStream(5).generator()
    wa = sample_bridge_values(L, n, g, size=m)[:, :n]
    a = np.exp(beta * wa).sum(axis=1) * (L / n)
    wb = sample_bridge_values(1.0, n, g, size=m)[:, :n]
    b = L * np.exp(beta * np.sqrt(L) * wb).sum(axis=1) * (1.0 / n)
    assert sps.ks_2samp(a, b).pvalue > 0.01


def test_bridge_path_object():
    p = sample_bridge(1.0, 32, RngStream(2).generator())
    assert p.n == 32
    assert p.values.shape == (33,)


@given(st.floats(0.1, 2.0), st.integers(3, 8).map(lambda k: 2**k))
@settings(max_examples=20, deadline=None)
def test_stationary_density_normalized(beta, n):
    rho = stationary_density_values(beta, 1.0, n, RngStream(1).generator(), size=8)
    assert np.all(rho > 0)
    np.testing.assert_allclose(rho.sum(axis=-1) / n, 1.0, atol=1e-12)


def test_stationary_density_field():
    f = sample_stationary_density(1.0, 2.0, 64, RngStream(3).generator())
    assert isinstance(f, LatticeField)
    assert f.integral() == pytest.approx(1.0)
    assert f.dx == pytest.approx(2.0 / 64)


def test_white_slice_variance():
    n, dx, dt = 64, 1 / 64, 1e-3
    s = sample_white_slice(n, dx, dt, RngStream(4).generator(), size=50_000)
    v = s.increments.var()
    assert v == pytest.approx(dt / dx, rel=0.02)
    assert s.kind == "white"
    assert s.dt == dt


def test_grid_validation():
    g = RngStream(0).generator()
    with pytest.raises(InvalidGridError):
        sample_bridge_values(1.0, 0, g)
    with pytest.raises(InvalidGridError):
        sample_bridge_values(-1.0, 32, g)


def test_covariance_spec_roundtrip(tmp_path):
    rhat = np.zeros(9)
    rhat[0] = 1.0
    rhat[1] = 0.3
    rhat[2] = 0.1
    spec = CovarianceSpec(d=1, L=1.0, rhat=tuple(rhat))
    path = tmp_path / "cov.json"
    spec.to_json(path)
    back = CovarianceSpec.from_json(path)
    assert back.d == 1
    np.testing.assert_allclose(back.rhat, spec.rhat)


def test_covariance_spec_rejects_negative_fourier_mode():
    rhat = [1.0, -0.5, 0.0]
    with pytest.raises(ValueError):
        CovarianceSpec(d=1, L=1.0, rhat=tuple(rhat))


def test_smooth_slice_covariance():
    rhat = np.zeros(5)
    rhat[0] = 1.0
    rhat[1] = 0.4
    spec = CovarianceSpec(d=1, L=1.0, rhat=tuple(rhat))
    n, dt = 32, 1e-2
    xi = smooth_slice_values(spec, n, dt, RngStream(9).generator(), size=100_000)
    # increments carry variance R(0) dt and lag-covariance R(x) dt
    r0 = xi[:, 0].var() / dt
    assert r0 == pytest.approx(spec.r_zero(), rel=0.02)
    lag = n // 4
    want = spec.r_value(lag / n * spec.L)
    got = np.mean(xi[:, 0] * xi[:, lag]) / dt
    assert got == pytest.approx(want, abs=0.03 * spec.r_zero())
