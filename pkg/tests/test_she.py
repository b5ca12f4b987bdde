import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpztorus.rng import RngStream
from kpztorus.noise import CovarianceSpec
from kpztorus.she import (
    DomainError, SolverParams, TruncationError,
    heat_multiplier, solve, greens, covering,
)


def params(**kw):
    base = dict(beta=1.0, L=1.0, n=32, dt=2e-3, T=0.5)
    base.update(kw)
    return SolverParams(**base)


def test_param_validation():
    with pytest.raises(DomainError):
        params(n=0)
    with pytest.raises(DomainError):
        params(dt=-1e-3)
    with pytest.raises(DomainError):
        params(beta=-1.0)
    with pytest.raises(DomainError):
        params(L=0.0)


def test_heat_multiplier_is_exact_spectral_decay():
    n, L, dt = 64, 2.0, 1e-2
    m = heat_multiplier(n, L, dt)
    k = np.arange(n // 2 + 1)
    want = np.exp(-0.5 * (2 * np.pi * k / L) ** 2 * dt)
    np.testing.assert_allclose(m, want)


def test_heat_step_preserves_constants():
    p = params(beta=0.0, T=0.2)
    z0 = np.ones(p.n)
    traj = solve(z0, p, RngStream(0), checkpoints=[0.2])
    np.testing.assert_allclose(traj.fields[-1], 1.0, atol=1e-13)


@given(st.integers(0, 2**31), st.floats(0.2, 2.0))
@settings(max_examples=10, deadline=None)
def test_positivity(seed, beta):
    p = params(beta=beta, T=0.1)
    z0 = np.abs(RngStream(seed).generator().standard_normal(p.n)) + 0.1
    traj = solve(z0, p, RngStream(seed + 1), checkpoints=[0.1])
    assert np.all(traj.fields > 0)


def test_mean_field_is_deterministic_heat_flow():
    # Ito compensation makes E Z solve the plain heat equation; with flat
    # initial data the replica mean stays at 1
    p = params(T=0.5)
    z0 = np.ones((10_000, p.n))
    traj = solve(z0, p, RngStream(12), checkpoints=[0.25, 0.5], batch=10_000)
    for k in range(2):
        m = traj.fields[k].mean(axis=0)
        se = traj.fields[k].std(axis=0, ddof=1) / np.sqrt(10_000)
        assert np.all(np.abs(m - 1.0) < 3.5 * se + 1e-3)


def test_total_mass_is_martingale():
    p = params(T=0.5)
    g = RngStream(21).generator()
    z0 = np.abs(g.standard_normal(p.n)) + 0.5
    mass0 = z0.mean()  # times L = 1
    traj = solve(np.tile(z0, (20_000, 1)), p, RngStream(22),
                 checkpoints=[0.5], batch=20_000)
    mass = traj.fields[-1].mean(axis=1)
    se = mass.std(ddof=1) / np.sqrt(20_000)
    assert abs(mass.mean() - mass0) < 3 * se


def test_greens_matches_solve_same_seed():
    p = params(T=0.25)
    K = greens(0.0, 0.25, p, RngStream(33))
    z0 = RngStream(44).generator().uniform(0.5, 1.5, p.n)
    traj = solve(z0, p, RngStream(33), checkpoints=[0.25])
    np.testing.assert_allclose(K.apply(z0), traj.fields[-1, 0], rtol=1e-12)


def test_greens_semigroup():
    p = params(T=0.5)
    s, u, t = 0.0, 0.25, 0.5
    rng = RngStream(55)
    K_su = greens(s, u, p, rng.substream(0))
    K_ut = greens(u, t, p, rng.substream(1))
    K = K_ut.compose(K_su)
    v = np.ones(p.n)
    # composition applies the two pieces in order
    np.testing.assert_allclose(K.apply(v), K_ut.apply(K_su.apply(v)), rtol=1e-12)


def test_greens_positive():
    p = params(T=0.25)
    K = greens(0.0, 0.25, p, RngStream(5))
    assert np.all(K.K > 0)


def test_covering_sectors_sum_to_periodic_kernel():
    p = params(T=0.5)
    cov = covering(0.0, 0.5, 7, p, RngStream(66))
    K = greens(0.0, 0.5, p, RngStream(66))
    np.testing.assert_allclose(cov.periodic().K, K.K, rtol=1e-8)


def test_covering_sector_mass_decays():
    p = params(T=0.5)
    cov = covering(0.0, 0.5, 7, p, RngStream(67), tol=1e-8)
    mass = cov.sector_masses()
    mid = len(mass) // 2
    assert mass[mid] > mass[mid + 3] > mass[mid + 6]
    assert mass[0] < 1e-10 and mass[-1] < 1e-10


def test_covering_truncation_error():
    p = params(T=1.0, beta=0.0)
    with pytest.raises(TruncationError):
        covering(0.0, 1.0, 1, p, RngStream(68))


def test_smooth_noise_runs():
    rhat = np.zeros(5)
    rhat[0] = 1.0
    rhat[1] = 0.3
    spec = CovarianceSpec(d=1, L=1.0, rhat=tuple(rhat))
    p = params(noise=spec, T=0.1)
    traj = solve(np.ones(p.n), p, RngStream(77), checkpoints=[0.1])
    assert np.all(traj.fields > 0)


def test_solve_checkpoint_bookkeeping():
    p = params(T=0.5)
    traj = solve(np.ones(p.n), p, RngStream(88), checkpoints=[0.1, 0.3, 0.5])
    assert traj.fields.shape[0] == 3
    np.testing.assert_allclose(traj.times, [0.1, 0.3, 0.5])
    f = traj.field_at(0.3)
    assert f.values.shape == (p.n,)
