"""Winding-number Markov chain of the periodic polymer.

The horizon [0, t] splits into unit intervals (plus a fractional tail); each
interval carries a covering-space kernel whose sectors give the conditional
law of the winding number accumulated in the interval, given the torus
positions at the endpoints.  Torus positions at integer times follow a
time-inhomogeneous Markov chain sampled by a forward/backward recursion, and
quenched moments of the total displacement are obtained exactly by moment
message passing, with no path sampling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .noise import stationary_density_values
from .rng import as_generator
from .she import CoveringKernel, SolverParams, covering
from .stats import Estimate, Stopwatch, mc_estimate


def _boundary_weights(spec, n, dx, gen, beta, L):
    """Measure weights on the grid: w_i >= 0, sum = total mass."""
    if isinstance(spec, np.ndarray):
        return np.asarray(spec, dtype=float)
    if spec == "lebesgue":
        return np.full(n, dx)
    if spec == "delta0":
        w = np.zeros(n)
        w[0] = 1.0
        return w
    if spec == "stationary":
        return stationary_density_values(beta, L, n, gen) * dx
    raise ValueError(f"unknown boundary measure {spec!r}")


@dataclass
class WindingChain:
    t: float
    params: SolverParams
    J: int
    times: np.ndarray                  # chain times [0, 1, ..., N, (t)]
    kernels: list                      # CoveringKernel per link
    nu_start: np.ndarray               # measure weights at x_0
    nu_end: np.ndarray                 # measure weights at the terminal point
    fwd: list = dc_field(default_factory=list)   # normalized forward messages
    bwd: list = dc_field(default_factory=list)

    @property
    def n_links(self) -> int:
        return len(self.kernels)

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def dx(self) -> float:
        return self.params.dx

    def link_G(self, k) -> np.ndarray:
        return self.kernels[k].Kj.sum(axis=0)

    def sector_probs(self, k) -> np.ndarray:
        """P[eta_{k+1} = j | x_{k+1} = i, x_k = m], shape (2J+1, n, n)."""
        kj = self.kernels[k].Kj
        return kj / kj.sum(axis=0)

    def own_weight(self, k):
        """Measure weight attached to position k itself: the boundary
        measures at the ends, the dx volume element in the interior."""
        if k == 0:
            return self.nu_start
        if k == self.n_links:
            return self.nu_end
        return self.dx

    def marginal(self, k) -> np.ndarray:
        """Density of the torus position at chain time index k."""
        p = self.fwd[k] * self.own_weight(k) * self.bwd[k]
        return p / (p.sum() * self.dx)

    def displacement_moments(self, k):
        """Conditional mean and second moment of the per-link displacement
        j*L + (x_i - x_m), as (n, n) matrices."""
        L = self.params.L
        x = np.arange(self.n) * self.dx
        probs = self.sector_probs(k)
        js = (np.arange(probs.shape[0]) - self.J) * L
        base = x[:, None] - x[None, :]
        m1 = np.tensordot(js, probs, axes=(0, 0)) + base
        m2 = np.tensordot(js**2, probs, axes=(0, 0)) + 2 * base * np.tensordot(
            js, probs, axes=(0, 0)
        ) + base**2
        return m1, m2


def build_chain(t, params: SolverParams, boundary=("lebesgue", "delta0"),
                rng=None, J=8, tol=1e-6) -> WindingChain:
    """Build the per-interval covering kernels and position messages.

    boundary = (nu1, nu2) with nu1 the measure at the terminal time and nu2
    at time 0, each "lebesgue", "delta0", "stationary", or explicit weights.
    """
    if t < 2:
        raise ValueError("need horizon t >= 2")
    gen = as_generator(rng)
    N = int(math.floor(t + 1e-9))
    frac = t - N
    times = list(range(N + 1))
    if frac > 1e-9:
        times.append(t)
    times = np.array(times, dtype=float)

    kernels = []
    for k in range(len(times) - 1):
        kernels.append(covering(times[k], times[k + 1], J, params, gen, tol=tol))

    n, dx = params.n, params.dx
    nu1 = _boundary_weights(boundary[0], n, dx, gen, params.beta, params.L)
    nu2 = _boundary_weights(boundary[1], n, dx, gen, params.beta, params.L)
    chain = WindingChain(t=t, params=params, J=J, times=times, kernels=kernels,
                         nu_start=nu2, nu_end=nu1)
    _build_messages(chain)
    return chain


def _build_messages(chain: WindingChain):
    """Forward/backward recursion for the position marginals.

    Messages are kept normalized to unit sum; each interior position carries
    a dx weight and the two boundary measures enter at the ends.
    """
    M = chain.n_links
    n = chain.n
    # fwd[k] integrates out x_0..x_{k-1} with their own weights; it excludes
    # the weight of x_k itself, and symmetrically for bwd[k].
    fwd = [np.ones(n) / n]
    for k in range(M):
        f = chain.link_G(k) @ (fwd[-1] * chain.own_weight(k))
        fwd.append(f / f.sum())
    bwd = [None] * (M + 1)
    bwd[M] = np.ones(n) / n
    for k in range(M - 1, -1, -1):
        b = chain.link_G(k).T @ (bwd[k + 1] * chain.own_weight(k + 1))
        bwd[k] = b / b.sum()
    chain.fwd = fwd
    chain.bwd = bwd


def _sample_rows(probs, gen):
    c = np.cumsum(probs, axis=1)
    c /= c[:, -1:]
    u = gen.random((probs.shape[0], 1))
    return (u > c).sum(axis=1)


@dataclass
class DisplacementSample:
    Y: np.ndarray            # total winding number per path
    frac: np.ndarray         # x_end - x_0 on the torus fundamental domain
    eta: np.ndarray          # (n_paths, n_links) per-link winding numbers
    d: np.ndarray            # per-link real displacements j*L + x_k - x_{k-1}
    positions: np.ndarray    # (n_paths, n_links + 1) grid indices

    @property
    def displacement(self) -> np.ndarray:
        return self.d.sum(axis=1)


def sample_displacement(chain: WindingChain, n_paths, rng) -> DisplacementSample:
    """Two-stage sampler: positions from the chain marginal recursion, then
    per-link winding numbers independently given the positions."""
    gen = as_generator(rng)
    M = chain.n_links
    n, dx, L = chain.n, chain.dx, chain.params.L
    x = np.arange(n) * dx

    idx = np.empty((n_paths, M + 1), dtype=np.int64)
    pM = chain.fwd[M] * chain.own_weight(M)
    idx[:, M] = _sample_rows(np.broadcast_to(pM, (n_paths, n)), gen)
    for k in range(M, 0, -1):
        g = chain.link_G(k - 1)
        w = g[idx[:, k], :] * (chain.fwd[k - 1] * chain.own_weight(k - 1))[None, :]
        idx[:, k - 1] = _sample_rows(w, gen)

    eta = np.empty((n_paths, M), dtype=np.int64)
    for k in range(M):
        probs = chain.sector_probs(k)[:, idx[:, k + 1], idx[:, k]].T
        eta[:, k] = _sample_rows(probs, gen) - chain.J

    d = eta * L + x[idx[:, 1:]] - x[idx[:, :-1]]
    return DisplacementSample(Y=eta.sum(axis=1), frac=x[idx[:, -1]] - x[idx[:, 0]],
                              eta=eta, d=d, positions=idx)


@dataclass
class QuenchedLaw:
    offsets: np.ndarray      # winding values j
    probs: np.ndarray        # P[Y_total = j] for this environment
    mean: float              # quenched mean of the real displacement
    var: float               # quenched variance of the real displacement
    total_mass: float

    def __post_init__(self):
        if self.var < -1e-10:
            raise ValueError("quenched variance must be nonnegative")


def quenched_moments(chain: WindingChain) -> QuenchedLaw:
    """Exact quenched law of the total winding number and exact quenched
    mean/variance of the displacement, by message passing over sectors."""
    M = chain.n_links
    n, dx = chain.n, chain.dx
    jtot = chain.J * M

    # sector-resolved forward messages F[i, y]
    F = np.zeros((n, 2 * jtot + 1))
    F[:, jtot] = chain.nu_start
    for k in range(M):
        kj = chain.kernels[k].Kj
        w = dx if k < M - 1 else 1.0
        Fn = np.zeros_like(F)
        for j in range(-chain.J, chain.J + 1):
            block = kj[j + chain.J] @ F * w
            if j > 0:
                Fn[:, j:] += block[:, :-j]
            elif j < 0:
                Fn[:, :j] += block[:, -j:]
            else:
                Fn += block
        if k == M - 1:
            Fn *= chain.nu_end[:, None]
        F = Fn / Fn.sum()
    probs = F.sum(axis=0)
    mass = float(probs.sum())

    # moment messages for the real displacement
    A = chain.nu_start.copy()
    B = np.zeros(n)
    C = np.zeros(n)
    for k in range(M):
        g = chain.link_G(k)
        m1, m2 = chain.displacement_moments(k)
        w = dx if k < M - 1 else 1.0
        T = g * w
        A2 = T @ A
        B2 = T @ B + (T * m1) @ A
        C2 = T @ C + 2 * (T * m1) @ B + (T * m2) @ A
        if k == M - 1:
            A2, B2, C2 = A2 * chain.nu_end, B2 * chain.nu_end, C2 * chain.nu_end
        s = A2.sum()
        A, B, C = A2 / s, B2 / s, C2 / s
    z = A.sum()
    mean = float(B.sum() / z)
    second = float(C.sum() / z)
    return QuenchedLaw(offsets=np.arange(-jtot, jtot + 1), probs=probs / mass,
                       mean=mean, var=second - mean**2, total_mass=mass)


@dataclass
class SigmaRoutes:
    """Diffusivity estimates by path variance and by covariance summation."""

    paths: Estimate
    covsum: Estimate
    cov_tail: float
    n_env: int

    # duck-type as an Estimate via the path route
    @property
    def value(self):
        return self.paths.value

    @property
    def stderr(self):
        return self.paths.stderr

    @property
    def n(self):
        return self.paths.n

    def agrees_with(self, other, k=3.0):
        return self.paths.agrees_with(other, k)


def sigma_empirical(params: SolverParams, t, n_env, rng, n_paths=16, K=10,
                    J=8, collect=None) -> SigmaRoutes:
    """Empirical diffusivity from n_env independent environments, each with
    stationary boundary measures.

    Route (a): Var(displacement)/t over pooled paths, environment-clustered
    stderr.  Route (b): truncated sum over lags |k| <= K of the stationary
    autocovariance of per-interval displacements.  `collect`, if given, is
    called with (env_index, chain, sample) so other diagnostics can reuse
    the ensemble without rebuilding it.
    """
    if t < 50:
        raise ValueError("need t >= 50 for a stationary window")
    gen = as_generator(rng)
    M = int(math.floor(t + 1e-9))
    burn = max(2, K)
    if M - 2 * burn <= K:
        raise ValueError("covariance truncation K exceeds the stationary window")

    d2_env = np.empty(n_env)
    dmean_env = np.empty(n_env)
    covsum_env = np.empty(n_env)
    tail_env = np.empty(n_env)
    with Stopwatch() as sw:
        for e in range(n_env):
            chain = build_chain(t, params, boundary=("stationary", "stationary"),
                                rng=gen, J=J)
            sample = sample_displacement(chain, n_paths, gen)
            if collect is not None:
                collect(e, chain, sample)
            D = sample.displacement
            d2_env[e] = np.mean(D**2)
            dmean_env[e] = np.mean(D)
            dd = sample.d[:, burn : M - burn]
            mu = dd.mean()
            c = np.empty(K + 1)
            for lag in range(K + 1):
                a = dd[:, : dd.shape[1] - lag] - mu
                b = dd[:, lag:] - mu
                c[lag] = np.mean(a * b)
            covsum_env[e] = c[0] + 2 * c[1:].sum()
            tail_env[e] = abs(c[K])

    mean_D = dmean_env.mean()
    vals_a = (d2_env - mean_D**2) / t
    est_a = mc_estimate(vals_a, runtime_s=sw.elapsed,
                        t=t, n_paths=n_paths)
    est_b = mc_estimate(covsum_env, K=K)
    return SigmaRoutes(paths=est_a, covsum=est_b,
                       cov_tail=float(tail_env.mean()), n_env=n_env)
