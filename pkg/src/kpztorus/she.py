"""Time-stepping solver for the stochastic heat equation on the torus.

The scheme is Lie splitting: an exact spectral solve of the heat semigroup
over dt, followed by pointwise multiplication with the Ito-compensated
exponential of the noise increment,

    Z <- exp(beta*dW - 0.5*beta^2*v) * (heat step of Z),

where dW is the time-integrated noise over the step and v = Var(dW) per cell
(dt/dx for cell-averaged white noise, dt*R(0) for a smooth covariance).  The
multiplicative factor has unit mean, so E[Z] is preserved exactly, and every
factor is positive, so positivity is preserved.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .noise import CovarianceSpec, LatticeField, NoiseSlice, smooth_slice_values
from .rng import as_generator


class DomainError(ValueError):
    pass


@dataclass
class SolverParams:
    beta: float
    L: float = 1.0
    n: int = 128
    dt: float = 1e-3
    noise: str | CovarianceSpec = "white"
    T: float = 1.0

    def __post_init__(self):
        if self.beta < 0:
            raise DomainError("beta must be >= 0")
        if self.n < 2 or self.L <= 0 or self.dt <= 0:
            raise DomainError("invalid grid/time parameters")
        if isinstance(self.noise, str) and self.noise != "white":
            raise DomainError("noise must be 'white' or a CovarianceSpec")

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def is_white(self) -> bool:
        return isinstance(self.noise, str)

    def cell_variance(self) -> float:
        """Variance of the per-cell noise increment over one step."""
        if self.is_white:
            return self.dt / self.dx
        return self.dt * self.noise.r_zero()


def heat_multiplier(n, L, dt) -> np.ndarray:
    """Fourier multipliers of exp(dt * Laplacian / 2) in rfft layout."""
    k = np.arange(n // 2 + 1)
    return np.exp(-0.5 * (2 * np.pi * k / L) ** 2 * dt)


def _heat_step(values, mult):
    zhat = np.fft.rfft(values, axis=-1)
    zhat *= mult
    return np.fft.irfft(zhat, n=values.shape[-1], axis=-1)


def _draw_increments(params: SolverParams, gen, batch, shared: bool):
    """One step of noise increments on the base grid.

    shared=True draws a single slice (used when many columns must see the
    same realization); otherwise one independent slice per batch row.
    """
    size = None if shared or batch is None else batch
    if params.is_white:
        shape = (params.n,) if size is None else (size, params.n)
        return gen.standard_normal(shape) * np.sqrt(params.dt / params.dx)
    return smooth_slice_values(params.noise, params.n, params.dt, gen, size=size)


def step(field: LatticeField, slice_: NoiseSlice, params: SolverParams) -> LatticeField:
    """One splitting step applied to a field, using the given noise slice."""
    if np.any(field.values <= 0):
        raise DomainError("SHE step requires strictly positive input")
    if field.n != params.n or abs(field.L - params.L) > 1e-12:
        raise ValueError("field grid does not match params")
    if abs(slice_.dt - params.dt) > 1e-15:
        raise ValueError("noise slice dt does not match params")
    mult = heat_multiplier(params.n, params.L, params.dt)
    z = _heat_step(field.values, mult)
    comp = 0.5 * params.beta**2 * params.cell_variance()
    z = z * np.exp(params.beta * slice_.increments - comp)
    return LatticeField(L=params.L, values=z, t=field.t + params.dt)


@dataclass
class Trajectory:
    """Recorded output of solve(): checkpoint fields plus per-step records."""

    params: SolverParams
    times: np.ndarray                 # checkpoint times
    fields: np.ndarray                # (n_checkpoints, batch, n)
    t_grid: np.ndarray                # per-step times, length steps+1
    logzbar: np.ndarray               # (steps+1, batch) log of integral of Z
    rho_overlap: np.ndarray | None = None   # (steps, batch) R(rho) at step start
    dlogzbar: np.ndarray | None = None      # (steps, batch) per-step log Zbar change
    extras: dict = dc_field(default_factory=dict)

    @property
    def batch(self) -> int:
        return self.fields.shape[1]

    def field_at(self, t, replica=0) -> LatticeField:
        i = int(np.argmin(np.abs(self.times - t)))
        return LatticeField(
            L=self.params.L, values=self.fields[i, replica], t=float(self.times[i])
        )


def _overlap_kernel_fft(params: SolverParams):
    if params.is_white:
        return None
    r = params.noise.r_grid(params.n)
    return np.fft.rfft(r)


def _rho_overlap(z, dx, rhat_fft):
    zbar = z.sum(axis=-1, keepdims=True) * dx
    rho = z / zbar
    if rhat_fft is None:
        return np.sum(rho * rho, axis=-1) * dx
    conv = np.fft.irfft(np.fft.rfft(rho, axis=-1) * rhat_fft, n=rho.shape[-1], axis=-1) * dx
    return np.sum(rho * conv, axis=-1) * dx


def solve(
    Z0,
    params: SolverParams,
    rng,
    checkpoints=None,
    batch=None,
    record_overlap=False,
    record_martingale=False,
) -> Trajectory:
    """Evolve Z0 to time T, recording log of the spatial integral each step.

    Z0 may be a LatticeField, an (n,) array, or a (batch, n) array.  A (batch,
    n) input evolves all rows under independent noise drawn from the single
    stream `rng` (statistically equivalent to per-replica streams; for strict
    per-replica reproducibility run one solve per stream).
    """
    gen = as_generator(rng)
    if isinstance(Z0, LatticeField):
        z = np.atleast_2d(np.asarray(Z0.values, dtype=float).copy())
    else:
        z = np.atleast_2d(np.asarray(Z0, dtype=float).copy())
    single = z.shape[0] == 1 and batch is None
    if batch is not None and z.shape[0] == 1:
        z = np.repeat(z, batch, axis=0)
    if np.any(z <= 0):
        raise DomainError("initial data must be strictly positive")
    if z.shape[-1] != params.n:
        raise ValueError("initial data does not match params.n")

    steps = int(round(params.T / params.dt))
    t_grid = np.arange(steps + 1) * params.dt
    if checkpoints is None:
        checkpoints = [params.T]
    cp_steps = sorted({int(round(t / params.dt)) for t in checkpoints})
    cp_times = np.array([s * params.dt for s in cp_steps])

    dx = params.dx
    mult = heat_multiplier(params.n, params.L, params.dt)
    comp = 0.5 * params.beta**2 * params.cell_variance()
    rhat_fft = _overlap_kernel_fft(params)
    need_overlap = record_overlap or record_martingale

    nb = z.shape[0]
    logzbar = np.empty((steps + 1, nb))
    logzbar[0] = np.log(z.sum(axis=-1) * dx)
    overlap = np.empty((steps, nb)) if need_overlap else None
    dlog = np.empty((steps, nb)) if record_martingale else None
    fields = np.empty((len(cp_steps), nb, params.n))
    if 0 in cp_steps:
        fields[cp_steps.index(0)] = z

    shared = single  # single trajectory draws (n,) per step, matching greens()
    for k in range(steps):
        if need_overlap:
            overlap[k] = _rho_overlap(z, dx, rhat_fft)
        z = _heat_step(z, mult)
        dw = _draw_increments(params, gen, nb, shared)
        z *= np.exp(params.beta * dw - comp)
        logzbar[k + 1] = np.log(z.sum(axis=-1) * dx)
        if record_martingale:
            dlog[k] = logzbar[k + 1] - logzbar[k]
        if (k + 1) in cp_steps:
            fields[cp_steps.index(k + 1)] = z

    return Trajectory(
        params=params,
        times=cp_times,
        fields=fields,
        t_grid=t_grid,
        logzbar=logzbar,
        rho_overlap=overlap,
        dlogzbar=dlog,
    )


@dataclass
class GreensKernel:
    """Matrix K with K[i, j] ~ G_{t,s}(x_i, y_j); (K @ v) * dx applies the operator."""

    s: float
    t: float
    L: float
    K: np.ndarray

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def dx(self) -> float:
        return self.L / self.n

    def apply(self, v) -> np.ndarray:
        return (self.K @ np.asarray(v)) * self.dx

    def compose(self, earlier: "GreensKernel") -> "GreensKernel":
        if abs(earlier.t - self.s) > 1e-12:
            raise ValueError("kernels are not contiguous in time")
        return GreensKernel(s=earlier.s, t=self.t, L=self.L, K=(self.K @ earlier.K) * self.dx)


def greens(s, t, params: SolverParams, rng) -> GreensKernel:
    """Green's kernel on [s, t]: identity/dx columns evolved under one noise
    realization shared by all columns."""
    if t <= s:
        raise ValueError("need t > s")
    gen = as_generator(rng)
    n, dx = params.n, params.dx
    steps = int(round((t - s) / params.dt))
    mult = heat_multiplier(n, params.L, params.dt)
    comp = 0.5 * params.beta**2 * params.cell_variance()
    # row index = source point y_j, column = field point
    z = np.eye(n) / dx
    for _ in range(steps):
        z = _heat_step(z, mult)
        dw = _draw_increments(params, gen, None, shared=True)
        z *= np.exp(params.beta * dw - comp)
    return GreensKernel(s=s, t=t, L=params.L, K=z.T.copy())


class TruncationError(RuntimeError):
    pass


@dataclass
class CoveringKernel:
    """Winding-sector decomposition of the Green's kernel.

    Kj[j + J, i, k] ~ Z_{t,s}(x_i + j*L, y_k) for |j| <= J; summing over the
    sector index recovers the periodic kernel within truncation tolerance.
    """

    s: float
    t: float
    L: float
    J: int
    Kj: np.ndarray
    boundary_mass: float = 0.0

    @property
    def n(self) -> int:
        return self.Kj.shape[1]

    @property
    def dx(self) -> float:
        return self.L / self.n

    def periodic(self) -> GreensKernel:
        return GreensKernel(s=self.s, t=self.t, L=self.L, K=self.Kj.sum(axis=0))

    def sector_masses(self, source_index=0) -> np.ndarray:
        """Probability mass of each winding sector from a delta at y_k."""
        col = self.Kj[:, :, source_index]
        m = col.sum(axis=1) * self.dx
        return m / m.sum()


def covering(s, t, J, params: SolverParams, rng, tol=1e-10) -> CoveringKernel:
    """Covering-space kernels: one solve on the extended interval
    [-J*L, (J+1)*L] with periodically extended noise, sliced into sectors."""
    if t <= s:
        raise ValueError("need t > s")
    if J < 1:
        raise ValueError("J must be >= 1")
    gen = as_generator(rng)
    n, dx = params.n, params.dx
    nsec = 2 * J + 1
    n_ext = nsec * n
    L_ext = nsec * params.L
    steps = int(round((t - s) / params.dt))
    mult = heat_multiplier(n_ext, L_ext, params.dt)
    comp = 0.5 * params.beta**2 * params.cell_variance()
    # batch row k = source delta at x_k in the center copy
    z = np.zeros((n, n_ext))
    z[np.arange(n), J * n + np.arange(n)] = 1.0 / dx
    for _ in range(steps):
        z = _heat_step(z, mult)
        dw = _draw_increments(params, gen, None, shared=True)
        z *= np.exp(params.beta * np.tile(dw, nsec) - comp)
    # outermost sectors carry the truncation error
    total = z.sum(axis=1) * dx
    edge = (z[:, :n].sum(axis=1) + z[:, -n:].sum(axis=1)) * dx
    boundary_mass = float(np.max(edge / total))
    if boundary_mass > tol:
        raise TruncationError(
            f"sector truncation J={J} too small: boundary mass {boundary_mass:.2e} > {tol:.0e}"
        )
    kj = z.reshape(n, nsec, n).transpose(1, 2, 0).copy()  # (sector, i, k)
    return CoveringKernel(
        s=s, t=t, L=params.L, J=J, Kj=kj, boundary_mass=boundary_mass
    )
