"""Samplers for the stochastic inputs: Brownian bridges, stationary densities,
and spacetime noise increments (white and smooth-covariance).

Grid conventions
----------------
A periodic field on the torus [0, L) lives on the n points x_i = i*L/n,
i = 0..n-1, with dx = L/n.  Torus integrals use the rectangle rule dx*sum(),
which on a periodic grid coincides with the trapezoid rule and is spectrally
accurate for smooth periodic integrands.

A Brownian bridge on [0, L] is stored on the n+1 points x_i = i*L/n with
values[0] = values[n] = 0.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .rng import as_generator


class InvalidGridError(ValueError):
    pass


@dataclass
class LatticeField:
    """Real periodic field on the uniform torus grid (n values on [0, L))."""

    L: float
    values: np.ndarray
    t: float = 0.0

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    @property
    def dx(self) -> float:
        return self.L / self.n

    def integral(self) -> float:
        return float(np.sum(self.values, axis=-1) * self.dx)

    def grid(self) -> np.ndarray:
        return np.arange(self.n) * self.dx


@dataclass
class BridgePath:
    """Discretized Brownian bridge on [0, L]: n+1 values pinned to 0 at both ends."""

    L: float
    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[-1] - 1


@dataclass
class NoiseSlice:
    """Time-integrated noise increments over one step of length dt.

    White case: one value per cell, i.i.d. N(0, dt/dx) (cell-averaged
    spacetime white noise).  Smooth case: a Gaussian field with covariance
    dt*R(x-y) at grid lags.
    """

    dt: float
    increments: np.ndarray
    kind: str = "white"


def _check_grid(n: int, L: float):
    if n < 2:
        raise InvalidGridError(f"grid size n={n} must be >= 2")
    if L <= 0:
        raise InvalidGridError(f"torus length L={L} must be > 0")


def sample_bridge_values(L, n, rng, size=None) -> np.ndarray:
    """Bridge values on the n+1 grid points; shape (n+1,) or (size, n+1).

    Cumulative-sum random walk with linear endpoint correction:
    W_i = S_i - (i/n) S_n with S a scaled Gaussian walk.  Exact in law at the
    grid points.
    """
    _check_grid(n, L)
    gen = as_generator(rng)
    shape = (n,) if size is None else (size, n)
    steps = gen.standard_normal(shape) * np.sqrt(L / n)
    s = np.cumsum(steps, axis=-1)
    frac = np.arange(1, n + 1) / n
    w = s - frac * s[..., -1:]
    pad = np.zeros(w.shape[:-1] + (1,))
    out = np.concatenate([pad, w], axis=-1)
    out[..., -1] = 0.0
    return out


def sample_bridge(L, n, rng) -> BridgePath:
    return BridgePath(L=L, values=sample_bridge_values(L, n, rng))


def stationary_density_values(beta, L, n, rng, size=None) -> np.ndarray:
    """Periodic density exp(beta*W)/integral on the n torus points."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    w = sample_bridge_values(L, n, rng, size=size)[..., :n]
    f = np.exp(beta * w)
    dx = L / n
    f /= np.sum(f, axis=-1, keepdims=True) * dx
    return f


def sample_stationary_density(beta, L, n, rng) -> LatticeField:
    return LatticeField(L=L, values=stationary_density_values(beta, L, n, rng))


def sample_white_slice(n, dx, dt, rng, size=None) -> NoiseSlice:
    if dt <= 0 or dx <= 0:
        raise ValueError("dt and dx must be > 0")
    gen = as_generator(rng)
    shape = (n,) if size is None else (size, n)
    inc = gen.standard_normal(shape) * np.sqrt(dt / dx)
    return NoiseSlice(dt=dt, increments=inc, kind="white")


@dataclass
class CovarianceSpec:
    """Spatial covariance of the smooth noise, as a Fourier-coefficient table.

    rhat[k] holds R^(k/L) for k = 0..n_max under the convention
    g^(k) = L^{-d/2} * integral of g(x) exp(-2*pi*i*k*x/L); R is assumed even,
    so R^(-k) = R^(k).  Normalization: integral of R over the torus is 1,
    which pins rhat[0] = L^{-d/2}.
    """

    d: int
    L: float
    rhat: np.ndarray = field(default_factory=lambda: np.array([1.0]))

    def __post_init__(self):
        self.rhat = np.asarray(self.rhat, dtype=float)
        if self.d != 1:
            raise ValueError("only d=1 covariance tables are supported")
        if np.any(self.rhat < 0):
            raise ValueError("all Fourier coefficients must be nonnegative")
        if abs(self.rhat[0] - self.L ** (-self.d / 2)) > 1e-9:
            raise ValueError(
                f"rhat[0]={self.rhat[0]} inconsistent with unit mass "
                f"(expected L^(-d/2) = {self.L ** (-self.d / 2)})"
            )

    @property
    def n_max(self) -> int:
        return len(self.rhat) - 1

    def r_value(self, x) -> np.ndarray:
        """R evaluated at lag(s) x."""
        x = np.asarray(x, dtype=float)
        k = np.arange(1, len(self.rhat))
        c = np.cos(2 * np.pi * np.multiply.outer(x, k) / self.L) @ self.rhat[1:]
        return self.L ** (-0.5) * (self.rhat[0] + 2 * c)

    def r_zero(self) -> float:
        return float(self.L ** (-0.5) * (self.rhat[0] + 2 * self.rhat[1:].sum()))

    def r_grid(self, n) -> np.ndarray:
        """R at the n grid lags x_j = j*L/n."""
        return self.r_value(np.arange(n) * self.L / n)

    @classmethod
    def from_json(cls, path) -> "CovarianceSpec":
        with open(path) as fh:
            doc = json.load(fh)
        unknown = set(doc) - {"d", "L", "rhat"}
        if unknown:
            raise ValueError(f"unknown keys in covariance spec: {sorted(unknown)}")
        return cls(d=int(doc["d"]), L=float(doc["L"]), rhat=np.asarray(doc["rhat"]))

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump({"d": self.d, "L": self.L, "rhat": self.rhat.tolist()}, fh)


def smooth_slice_values(spec: CovarianceSpec, n, dt, rng, size=None) -> np.ndarray:
    """Spectral synthesis of a real Gaussian field with covariance dt*R(x-y)."""
    gen = as_generator(rng)
    batch = 1 if size is None else size
    nmodes = n // 2 + 1
    # per-mode variance dt * L^{-1/2} * rhat[k]; modes beyond the table are 0
    var = np.zeros(nmodes)
    kmax = min(spec.n_max, nmodes - 1)
    var[: kmax + 1] = dt * spec.L ** (-0.5) * spec.rhat[: kmax + 1]
    amp = np.zeros((batch, nmodes), dtype=complex)
    # real mean mode
    amp[:, 0] = gen.standard_normal(batch) * np.sqrt(var[0])
    hi = nmodes - 1 if n % 2 == 0 else nmodes
    if hi > 1:
        re = gen.standard_normal((batch, hi - 1))
        im = gen.standard_normal((batch, hi - 1))
        amp[:, 1:hi] = (re + 1j * im) * np.sqrt(var[1:hi] / 2)
    if n % 2 == 0:
        amp[:, -1] = gen.standard_normal(batch) * np.sqrt(var[-1])
    out = np.fft.irfft(amp * n, n=n, axis=-1)
    if not np.isrealobj(out):
        raise AssertionError("spectral synthesis produced a non-real field")
    return out[0] if size is None else out


def sample_smooth_slice(spec: CovarianceSpec, n, dt, rng, size=None) -> NoiseSlice:
    if dt <= 0:
        raise ValueError("dt must be > 0")
    return NoiseSlice(
        dt=dt, increments=smooth_slice_values(spec, n, dt, rng, size=size), kind="smooth"
    )
