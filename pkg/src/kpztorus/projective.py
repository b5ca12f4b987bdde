"""Projective (normalized) process rho = Z / integral(Z) and its bookkeeping.

The log of the total mass decomposes as a martingale minus half its bracket,
with the bracket density beta^2 * R(rho), where R(f) is the double integral
of f(x) f(y) against the noise covariance (f squared integrated, for white
noise).  The ledger below records that decomposition step by step.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .noise import LatticeField
from .rng import as_generator
from .she import SolverParams, Trajectory, _rho_overlap, solve


@dataclass
class DensityField:
    """Probability density on the torus grid (nonnegative, unit integral)."""

    L: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    @property
    def dx(self) -> float:
        return self.L / self.n

    def grid(self) -> np.ndarray:
        return np.arange(self.n) * self.dx


def normalize(field) -> DensityField:
    """Project a positive field onto the simplex of grid densities."""
    if isinstance(field, LatticeField):
        L, values = field.L, field.values
    elif isinstance(field, DensityField):
        L, values = field.L, field.values
    else:
        raise TypeError("expected LatticeField or DensityField")
    if np.any(values < 0) or np.all(values == 0, axis=-1).any():
        raise ValueError("field must be nonnegative with positive mass")
    dx = L / values.shape[-1]
    mass = values.sum(axis=-1, keepdims=True) * dx
    return DensityField(L=L, values=values / mass)


def overlap(rho: DensityField, noise="white", spec=None) -> np.ndarray:
    """Quadratic form R(rho): integral of rho^2 for white noise, or
    rho (R * rho) for a smooth covariance (circular convolution)."""
    if noise == "white":
        rhat_fft = None
    else:
        if spec is None:
            spec = noise
        rhat_fft = np.fft.rfft(spec.r_grid(rho.n))
    out = _rho_overlap(rho.values, rho.dx, rhat_fft)
    return out if out.ndim else float(out)


def forward_density(rho0: DensityField, t, params: SolverParams, rng,
                    batch=None, checkpoints=None) -> Trajectory:
    """Evolve a density forward under the normalized SHE flow.

    Runs the linear solver on rho0 as initial data and renormalizes the
    checkpoint fields; the two operations commute since the flow is linear.
    """
    p = SolverParams(beta=params.beta, L=params.L, n=params.n, dt=params.dt,
                     noise=params.noise, T=t)
    traj = solve(rho0.values, p, rng, checkpoints=checkpoints, batch=batch,
                 record_overlap=True)
    mass = traj.fields.sum(axis=-1, keepdims=True) * p.dx
    traj.fields = traj.fields / mass
    return traj


def total_variation(rho_a, rho_b, dx) -> np.ndarray:
    return 0.5 * np.sum(np.abs(rho_a - rho_b), axis=-1) * dx


@dataclass
class MixingCurve:
    times: np.ndarray
    tv: np.ndarray          # (n_times, n_pairs) total-variation distances
    rate: float             # fitted exponential decay rate
    rate_stderr: float
    log_tv_mean: np.ndarray

    def rate_ci(self, k=1.96):
        return (self.rate - k * self.rate_stderr, self.rate + k * self.rate_stderr)


def mixing_curve(params: SolverParams, t_max, rng, n_pairs=16,
                 times=None, init="random", metric="tv") -> MixingCurve:
    """Contraction of the projective flow: evolve pairs of distinct initial
    densities under the SAME noise and track their distance.

    init="random" draws smooth positive pairs; init="delta-lebesgue" starts
    every pair from a point mass versus the flat density.  metric is "tv"
    (total variation) or "sup" (pointwise sup distance).  The decay rate is
    fitted by least squares on log distance against t over the window
    [t_max/4, t_max], pooling pairs; its standard error comes from the
    spread of per-pair slopes.
    """
    gen = as_generator(rng)
    n, dx = params.n, params.dx
    if times is None:
        times = np.linspace(0.0, t_max, 21)[1:]
    times = np.asarray(times, dtype=float)

    x = np.arange(n) * dx
    tv = np.empty((len(times), n_pairs))
    for j in range(n_pairs):
        if init == "delta-lebesgue":
            a = np.zeros(n)
            a[gen.integers(n)] = 1.0 / dx
            b = np.full(n, 1.0 / params.L)
        elif init == "random":
            # random smooth positive pair, plus a rough pair on the first slot
            phase = gen.uniform(0, 2 * np.pi, size=2)
            amp = gen.uniform(0.3, 0.9, size=2)
            a = 1.0 + amp[0] * np.cos(2 * np.pi * x / params.L + phase[0])
            b = 1.0 + amp[1] * np.sin(4 * np.pi * x / params.L + phase[1])
            if j == 0:
                a = np.exp(gen.standard_normal(n) * 0.5)
        else:
            raise ValueError(f"unknown init {init!r}")
        z = np.stack([a, b])
        p = SolverParams(beta=params.beta, L=params.L, n=params.n,
                         dt=params.dt, noise=params.noise, T=t_max)
        # same noise for both rows: evolve jointly with shared slices
        traj = _solve_shared(z, p, gen, checkpoints=times)
        rho = traj.fields / (traj.fields.sum(axis=-1, keepdims=True) * dx)
        if metric == "sup":
            tv[:, j] = np.abs(rho[:, 0] - rho[:, 1]).max(axis=-1)
        else:
            tv[:, j] = total_variation(rho[:, 0], rho[:, 1], dx)

    # fit log tv ~ -rate * t on the late window, per pair; once the distance
    # reaches the round-off floor the slope carries no signal, so those
    # checkpoints are dropped
    slopes = []
    for j in range(n_pairs):
        above = tv[:, j] > 1e-9
        mask = above & (times >= t_max / 4)
        if mask.sum() < 4:
            mask = above
        if mask.sum() < 4:
            raise ValueError("total variation at the round-off floor everywhere; "
                             "reduce t_max or refine the checkpoint times")
        y = np.log(tv[mask, j])
        coef = np.polyfit(times[mask], y, 1)
        slopes.append(-coef[0])
    slopes = np.array(slopes)
    rate = float(slopes.mean())
    stderr = float(slopes.std(ddof=1) / np.sqrt(n_pairs))
    log_tv_mean = np.log(np.maximum(tv, 1e-300)).mean(axis=1)
    return MixingCurve(times=times, tv=tv, rate=rate, rate_stderr=stderr,
                       log_tv_mean=log_tv_mean)


def _solve_shared(z0, params: SolverParams, gen, checkpoints):
    """solve() variant where every batch row sees the same noise realization."""
    from .she import _heat_step, _draw_increments, heat_multiplier

    z = np.array(z0, dtype=float)
    steps = int(round(params.T / params.dt))
    cp_steps = sorted({int(round(t / params.dt)) for t in checkpoints})
    mult = heat_multiplier(params.n, params.L, params.dt)
    comp = 0.5 * params.beta**2 * params.cell_variance()
    fields = np.empty((len(cp_steps), z.shape[0], params.n))
    if 0 in cp_steps:
        fields[cp_steps.index(0)] = z
    for k in range(steps):
        z = _heat_step(z, mult)
        dw = _draw_increments(params, gen, None, shared=True)
        z *= np.exp(params.beta * dw - comp)
        if (k + 1) in cp_steps:
            fields[cp_steps.index(k + 1)] = z
    dx = params.dx
    logzbar = np.empty((1, z.shape[0]))
    logzbar[0] = np.log(z.sum(axis=-1) * dx)
    return Trajectory(params=params, times=np.array([s * params.dt for s in cp_steps]),
                      fields=fields, t_grid=np.arange(steps + 1) * params.dt,
                      logzbar=logzbar)


@dataclass
class MartingaleLedger:
    """Per-step decomposition log Zbar_t = log Zbar_0 + M_t - <M>_t / 2.

    The bracket increment over step k is beta^2 * R(rho_k) * dt evaluated at
    the step start; the martingale increment is defined as the log-mass
    change plus half the bracket increment, so the residual of the identity
    vanishes by construction and the useful checks are statistical
    (E[M_t] ~ 0) and structural (bracket positivity, additivity).
    """

    t_grid: np.ndarray
    log_mass: np.ndarray       # (steps+1, batch)
    bracket_increments: np.ndarray   # (steps, batch)
    martingale_increments: np.ndarray

    @property
    def martingale(self) -> np.ndarray:
        out = np.zeros_like(self.log_mass)
        np.cumsum(self.martingale_increments, axis=0, out=out[1:])
        return out

    @property
    def bracket(self) -> np.ndarray:
        out = np.zeros_like(self.log_mass)
        np.cumsum(self.bracket_increments, axis=0, out=out[1:])
        return out

    def residual(self) -> np.ndarray:
        """log Zbar - (log Zbar_0 + M - <M>/2), identically zero up to fp."""
        return self.log_mass - (self.log_mass[0] + self.martingale - 0.5 * self.bracket)


def ledger(traj: Trajectory) -> MartingaleLedger:
    if traj.rho_overlap is None or traj.dlogzbar is None:
        raise ValueError("trajectory must be recorded with record_martingale=True")
    beta = traj.params.beta
    dt = traj.params.dt
    bracket = beta**2 * traj.rho_overlap * dt
    mart = traj.dlogzbar + 0.5 * bracket
    return MartingaleLedger(
        t_grid=traj.t_grid,
        log_mass=traj.logzbar,
        bracket_increments=bracket,
        martingale_increments=mart,
    )
