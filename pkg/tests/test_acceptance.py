"""End-to-end acceptance gate: every headline quantity is computed by at
least two independent routes and the routes must agree at pinned tolerances.

All tests here are statistically powered, deterministic under the pinned
seeds, and marked slow; pass --skip-slow to exclude them.
"""
import numpy as np
import pytest

from kpztorus.rng import RngStream
from kpztorus.she import SolverParams, solve
from kpztorus.noise import stationary_density_values
from kpztorus.projective import DensityField, normalize, mixing_curve
from kpztorus.bridge_formulas import (
    gamma_white_closed, ey_minus2_closed, yor_moment,
    gamma_white_bridge_mc, sigma2_white_mc, sigma2_nested_mc,
    sigma2_corrector_mc, sigma2_decay_fit, winding_diffusivity_mc,
    corrector_grad,
)
from kpztorus.height import (
    estimate_gamma, richardson_gamma, RegimeScanConfig, regime_scan,
    lil_diagnostic,
)

pytestmark = [pytest.mark.acceptance]

BETA, L = 1.0, 1.0
GAMMA_TRUE = -13 / 24


@pytest.mark.slow
def test_lyapunov_exponent_triple_route():
    # route 1: closed form
    closed = gamma_white_closed(BETA, L)
    assert closed == pytest.approx(GAMMA_TRUE, abs=1e-15)

    # route 2: bridge Monte Carlo, one million bridges
    mc = gamma_white_bridge_mc(BETA, L, 1_000_000, RngStream(101))
    assert abs(mc.value - closed) < 3 * mc.stderr
    assert abs(mc.value - closed) < 0.005 * abs(closed)

    # route 3: direct simulation, extrapolated over three grid sizes with
    # dt scaled like dx^2 so the leading bias halves per refinement
    rng = RngStream(102)
    ns = [64, 128, 256]
    vals, ses = [], []
    for i, n in enumerate(ns):
        dt = 5e-4 * (128 / n) ** 2
        p = SolverParams(beta=BETA, L=L, n=n, dt=dt, T=8.0)
        est = estimate_gamma(p, rng.substream(i), n_replicas=200)
        vals.append(est.value)
        ses.append(est.stderr)
    value, stderr, order = richardson_gamma(vals, ses, ns)
    assert abs(value - closed) < 0.02 * abs(closed)


def test_yor_density_normalization_and_negative_moment():
    for lam in (0.5, 1.0, 2.0):
        mass = yor_moment(lam, 0.0)
        assert mass == pytest.approx(1.0, abs=1e-6)
        inv2 = yor_moment(lam, -2.0)
        assert inv2 == pytest.approx(ey_minus2_closed(lam), abs=1e-4)


@pytest.mark.slow
def test_variance_rate_small_coupling_limit():
    est = sigma2_white_mc(0.05, 1.0, 200_000, RngStream(103))
    assert est.value / 0.05**2 == pytest.approx(1.0, abs=0.02)


@pytest.mark.slow
def test_variance_rate_decay_in_period():
    fit = sigma2_decay_fit(BETA, [1.0, 4.0, 16.0, 64.0], 200_000, RngStream(104))
    assert fit.slope == pytest.approx(-0.5, abs=0.1)
    assert not fit.flagged


@pytest.mark.slow
def test_variance_rate_triple_route():
    direct = sigma2_white_mc(BETA, L, 400_000, RngStream(105))
    nested = sigma2_nested_mc(BETA, L, 20_000, 64, RngStream(106))
    corr = sigma2_corrector_mc(BETA, L, 20_000, 64, RngStream(107))
    assert direct.agrees_with(nested)
    assert direct.agrees_with(corr)
    assert nested.agrees_with(corr)


@pytest.mark.slow
def test_height_clt(clt_run):
    assert not clt_run.underpowered
    assert clt_run.ks_pvalue > 0.01
    # diffusive variance growth: doubling t doubles the variance
    v25 = clt_run.var_by_time[25.0]
    v50 = clt_run.var_by_time[50.0]
    assert 1.6 < v50 / v25 < 2.4


@pytest.mark.slow
def test_regime_scan_exponents():
    # alpha=1/2 needs a deeper time window before the predicted growth
    # exponent emerges; shorter windows sit in the crossover.
    for alpha, n, t_list, seed in (
        (0.0, 32, (4.0, 8.0, 16.0, 32.0), 108),
        (0.5, 128, (32.0, 64.0, 128.0, 256.0), 56),
    ):
        cfg = RegimeScanConfig(alpha=alpha, lam=1.0, t_list=t_list,
                               n_replicas=400)
        p = SolverParams(beta=BETA, L=1.0, n=n, dt=1e-3, T=1.0)
        res = regime_scan(cfg, p, RngStream(seed))
        assert res.exponent == pytest.approx(res.predicted_exponent, abs=0.15)


@pytest.mark.slow
def test_regime_scan_kpz_band_reported():
    # the strong-coupling corner is out of reach at this scale; the scaled
    # variance must at least stay inside a factor-3 band along the scan
    cfg = RegimeScanConfig(alpha=2 / 3, lam=1.0,
                           t_list=(4.0, 8.0, 16.0, 32.0), n_replicas=400)
    p = SolverParams(beta=BETA, L=1.0, n=64, dt=1e-3, T=1.0)
    res = regime_scan(cfg, p, RngStream(109))
    ratio = res.var_over_t23.max() / res.var_over_t23.min()
    assert ratio < 3.0


def test_corrector_identities():
    g = RngStream(110).generator()
    # per-sample orthogonality against the input density
    for _ in range(100):
        vals = stationary_density_values(BETA, L, 64, g)
        rho = normalize(DensityField(L=L, values=vals))
        grad = corrector_grad(rho, BETA, 64, g)
        resid = np.sum(grad.values * rho.values) * rho.dx
        assert abs(resid) < 1e-8

    # at the flat density the gradient vanishes pointwise up to sampling noise
    flat = DensityField(L=L, values=np.ones(64))
    reps = np.array([corrector_grad(flat, BETA, 256, g).values
                     for _ in range(32)])
    mean = reps.mean(axis=0)
    se = reps.std(axis=0, ddof=1) / np.sqrt(32)
    assert np.all(np.abs(mean) <= 3 * se)


@pytest.mark.slow
def test_winding_shear_identity(winding_ensemble):
    # the environment-averaged quenched variance equals t; the tolerance
    # carries a grid-halving bias budget of 0.1 measured by comparing the
    # same estimator at dt and dt/2 on this grid
    qv = winding_ensemble.quenched_vars
    t = winding_ensemble.t
    se = qv.std(ddof=1) / np.sqrt(len(qv))
    assert len(qv) == 200
    assert abs(qv.mean() - t) < 3 * se + 0.1


@pytest.mark.slow
def test_winding_diffusivity_triple_route(winding_ensemble):
    paths = winding_ensemble.routes.paths
    covsum = winding_ensemble.routes.covsum
    bridge = winding_diffusivity_mc(BETA, 20_000, RngStream(111))
    assert paths.agrees_with(covsum)
    assert paths.agrees_with(bridge)
    assert covsum.agrees_with(bridge)
    for est in (paths, covsum, bridge):
        assert est.value >= 1.0 - 3 * est.stderr


def test_mixing_rate_positive():
    p = SolverParams(beta=BETA, L=L, n=64, dt=1e-3, T=2.0)
    mc = mixing_curve(p, t_max=2.0, rng=RngStream(112), n_pairs=16,
                      init="delta-lebesgue", metric="sup")
    lo, hi = mc.rate_ci()
    assert lo > 0


@pytest.mark.slow
def test_iterated_logarithm_band():
    p = SolverParams(beta=BETA, L=L, n=32, dt=1e-3, T=1000.0)
    rng = RngStream(113)
    rho = stationary_density_values(BETA, L, 32, rng.generator(), size=100)
    z0 = rho / rho.mean(axis=-1, keepdims=True)
    times = np.unique(np.geomspace(10.0, 1000.0, 60).round(2))
    traj = solve(z0, p, rng.substream(1), checkpoints=list(times))
    lil = lil_diagnostic(traj)
    assert lil.band_fraction >= 0.95
