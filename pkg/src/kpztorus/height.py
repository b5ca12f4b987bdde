"""Height-function statistics from direct simulation: Lyapunov exponent,
the Gaussian limit of the centered height, crossover-regime scans, and the
iterated-logarithm diagnostic."""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import stats as sps

from .noise import stationary_density_values
from .rng import as_generator
from .she import SolverParams, Trajectory, solve
from .stats import Estimate, Stopwatch, mc_estimate
from . import bridge_formulas as bf


@dataclass
class HeightSample:
    """Height values of one replica set at a fixed time."""

    t: float
    h: np.ndarray
    gamma: float
    sigma: float

    @property
    def centered(self) -> np.ndarray:
        return self.h - self.gamma * self.t

    @property
    def normalized(self) -> np.ndarray:
        return self.centered / (self.sigma * math.sqrt(self.t))


@dataclass
class GammaEstimate(Estimate):
    """Lyapunov estimate; value/stderr hold the bracket-average route (b),
    slope holds the log-mass-slope route (a)."""

    slope: Estimate | None = None


def estimate_gamma(params: SolverParams, rng, n_replicas=200) -> GammaEstimate:
    """Two estimators from a stationary start: (a) the slope of the mean log
    total mass over the second half of the horizon, and (b) the time average
    of -beta^2/2 times the overlap R(rho), which equals the exponent at
    stationarity."""
    if params.T < 4:
        raise ValueError("horizon too short: need T >= 4")
    gen = as_generator(rng)
    if params.beta == 0:
        return GammaEstimate(value=0.0, stderr=0.0, n=n_replicas,
                             slope=Estimate(value=0.0, stderr=0.0, n=n_replicas))
    z0 = stationary_density_values(params.beta, params.L, params.n, gen,
                                   size=n_replicas)
    with Stopwatch() as sw:
        traj = solve(z0, params, gen, record_overlap=True)
    half = traj.t_grid >= params.T / 2
    tt = traj.t_grid[half]
    # (a) per-replica least-squares slope of log Zbar
    y = traj.logzbar[half]
    tc = tt - tt.mean()
    slopes = (tc @ y) / (tc @ tc)
    est_a = mc_estimate(slopes, runtime_s=sw.elapsed)
    # (b) time average of the bracket density
    vals = -0.5 * params.beta**2 * traj.rho_overlap.mean(axis=0)
    est_b = mc_estimate(vals, runtime_s=sw.elapsed)
    return GammaEstimate(value=est_b.value, stderr=est_b.stderr, n=n_replicas,
                         runtime_s=sw.elapsed, slope=est_a)


def richardson_gamma(values, stderrs, ns):
    """Extrapolate grid-size-dependent estimates to the continuum.

    Assumes gamma(n) = gamma + c n^{-p} over three doubling grid sizes; p is
    estimated from the level differences and clamped to [0.5, 2] (falling
    back to 1 when the differences are noise-dominated).
    """
    v = np.asarray(values, dtype=float)
    se = np.asarray(stderrs, dtype=float)
    ns = np.asarray(ns)
    if len(v) != 3 or not np.allclose(ns[1:] / ns[:-1], 2):
        raise ValueError("need three estimates at doubling grid sizes")
    d1, d2 = v[1] - v[0], v[2] - v[1]
    noise = math.hypot(se[0], se[1]) + math.hypot(se[1], se[2])
    if d1 * d2 <= 0 or abs(d2) < noise:
        p = 1.0
    else:
        p = min(2.0, max(0.5, math.log2(abs(d1) / abs(d2))))
    r = 2.0**p
    value = v[2] + (v[2] - v[1]) / (r - 1)
    stderr = math.hypot(se[2] * r / (r - 1), se[1] / (r - 1))
    # budget for the neglected higher-order term of the extrapolation
    stderr = math.hypot(stderr, 0.25 * abs(d2 / (r - 1)))
    return value, stderr, p


@dataclass
class CltResult:
    sample: HeightSample
    ks_stat: float
    ks_pvalue: float
    var_by_time: dict
    underpowered: bool
    gamma: float
    sigma2: float


def clt_experiment(params: SolverParams, t, n_replicas, rng, sigma2=None,
                   gamma=None) -> CltResult:
    """Distribution of (h(t,0) - gamma t) / (sigma sqrt(t)) against N(0,1).

    gamma defaults to the closed form (white noise); sigma^2 to the
    three-bridge Monte Carlo value.  Replicas start from independent
    stationary densities.
    """
    if params.beta == 0:
        raise ValueError("beta = 0: the height is deterministic, nothing to test")
    underpowered = n_replicas < 100
    gen = as_generator(rng)
    if gamma is None:
        if not params.is_white:
            raise ValueError("pass gamma explicitly for smooth noise")
        gamma = bf.gamma_white_closed(params.beta, params.L)
    if sigma2 is None:
        sigma2 = bf.sigma2_white_mc(params.beta, params.L, 200_000, gen).value
    sigma = math.sqrt(sigma2)

    p = SolverParams(beta=params.beta, L=params.L, n=params.n, dt=params.dt,
                     noise=params.noise, T=t)
    z0 = stationary_density_values(p.beta, p.L, p.n, gen, size=n_replicas)
    traj = solve(z0, p, gen, checkpoints=[t / 2, t], batch=n_replicas)
    var_by_time = {}
    for i, tc in enumerate(traj.times):
        h = np.log(traj.fields[i, :, 0])
        var_by_time[float(tc)] = float(np.var(h - gamma * tc, ddof=1))
    h_t = np.log(traj.fields[-1, :, 0])
    sample = HeightSample(t=t, h=h_t, gamma=gamma, sigma=sigma)
    ks = sps.kstest(sample.normalized, "norm")
    return CltResult(sample=sample, ks_stat=float(ks.statistic),
                     ks_pvalue=float(ks.pvalue), var_by_time=var_by_time,
                     underpowered=underpowered, gamma=gamma, sigma2=sigma2)


@dataclass
class RegimeScanConfig:
    alpha: float
    lam: float = 1.0
    t_list: tuple = (4.0, 8.0, 16.0, 32.0)
    n_replicas: int = 400

    def __post_init__(self):
        if not 0 <= self.alpha <= 2 / 3:
            raise ValueError("alpha must lie in [0, 2/3]")

    def L_of(self, t) -> float:
        return self.lam * t**self.alpha


@dataclass
class RegimeScanResult:
    table: list                      # rows (t, L, var, var_stderr)
    exponent: float
    exponent_stderr: float
    alpha: float
    var_over_t23: np.ndarray

    @property
    def predicted_exponent(self) -> float:
        return 1 - self.alpha / 2


def regime_scan(config: RegimeScanConfig, params: SolverParams, rng) -> RegimeScanResult:
    """Var h(t,0) along L = lam t^alpha, with a log-log fit of the growth
    exponent.  The grid size is held fixed across the scan so the relative
    resolution dx/L stays constant."""
    gen = as_generator(rng)
    rows = []
    for t in config.t_list:
        L = config.L_of(t)
        p = SolverParams(beta=params.beta, L=L, n=params.n, dt=params.dt,
                         noise=params.noise, T=t)
        z0 = stationary_density_values(p.beta, L, p.n, gen, size=config.n_replicas)
        traj = solve(z0, p, gen, checkpoints=[t], batch=config.n_replicas)
        h = np.log(traj.fields[-1, :, 0])
        v = float(np.var(h, ddof=1))
        se = v * math.sqrt(2.0 / (config.n_replicas - 1))
        rows.append((float(t), float(L), v, se))
    tv = np.array([[r[0], r[2], r[3]] for r in rows])
    x = np.log(tv[:, 0])
    y = np.log(tv[:, 1])
    wts = (tv[:, 1] / tv[:, 2]) ** 2  # 1/var of log(Var)
    coef, cov = np.polyfit(x, y, 1, w=np.sqrt(wts), cov="unscaled")
    return RegimeScanResult(table=rows, exponent=float(coef[0]),
                            exponent_stderr=float(np.sqrt(cov[0, 0])),
                            alpha=config.alpha,
                            var_over_t23=tv[:, 1] / tv[:, 0] ** (2 / 3))


@dataclass
class LilResult:
    times: np.ndarray
    r: np.ndarray                # (n_times, n_replicas)
    running_max: np.ndarray
    running_min: np.ndarray
    sigma_L: float
    within_band: np.ndarray      # per replica: whole path inside |r| <= 2 sigma_L

    @property
    def band_fraction(self) -> float:
        return float(np.mean(self.within_band))


def lil_diagnostic(traj: Trajectory, gamma=None, sigma_L=None) -> LilResult:
    """Running statistic r(t) = (h(t,0) - gamma t) / sqrt(2 t log log t) at
    the trajectory's checkpoint times, compared to the band +-sigma_L."""
    times = traj.times
    if times.min() <= math.e:
        raise ValueError("iterated logarithm undefined: need times > e")
    params = traj.params
    if gamma is None:
        if not params.is_white:
            raise ValueError("pass gamma explicitly for smooth noise")
        gamma = bf.gamma_white_closed(params.beta, params.L)
    if sigma_L is None:
        g = as_generator(np.random.default_rng(0))
        sigma_L = math.sqrt(bf.sigma2_white_mc(params.beta, params.L, 100_000, g).value)
    h = np.log(traj.fields[:, :, 0])
    denom = np.sqrt(2 * times * np.log(np.log(times)))
    r = (h - gamma * times[:, None]) / denom[:, None]
    return LilResult(times=times, r=r,
                     running_max=np.maximum.accumulate(r, axis=0),
                     running_min=np.minimum.accumulate(r, axis=0),
                     sigma_L=sigma_L,
                     within_band=(np.abs(r) <= 2 * sigma_L).all(axis=0))
