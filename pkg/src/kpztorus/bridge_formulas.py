"""Closed forms and Brownian-bridge Monte Carlo / quadrature evaluators.

Covers the Lyapunov exponent on the unit-period torus, the density of the
exponential bridge functional Y_lambda = int_0^1 exp(lambda W), the height
variance sigma_L^2(beta) by three routes, the winding diffusivity Sigma(beta),
the small-beta expansion for smooth covariances, and the explicit corrector
chi together with its gradient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath as mp
import numpy as np

from .noise import CovarianceSpec, LatticeField, sample_bridge_values
from .projective import DensityField
from .rng import as_generator
from .stats import Estimate, Stopwatch, mc_estimate


class QuadratureError(RuntimeError):
    pass


@dataclass
class QuadratureSpec:
    """Node counts and truncations for the (y, z) integrals of the Y_lambda
    density, plus the bridge grid for Monte Carlo integrals.

    The y-integrand oscillates as sin(4*pi*y/lambda^2); panels are taken
    between consecutive zeros (spacing lambda^2/4), which keeps well over
    nodes_per_period quadrature nodes per oscillation.  Truncation is set
    where the Gaussian factor exp(-2y^2/lambda^2) drops below y_tail.
    """

    bridge_n: int = 512
    nodes_per_period: int = 20
    y_tail: float = 1e-16
    z_nodes: int = 600
    z_min: float = 1e-3
    z_max: float = 1e5
    check_convergence: bool = False

    def bridge_grid(self, beta, L) -> int:
        # rough-path error of the trapezoid bridge integral grows with
        # beta*sqrt(L); double the grid in that regime
        n = self.bridge_n
        if beta * math.sqrt(L) > 4:
            n *= 2
        return n


# ----------------------------------------------------------------------
# closed forms


def gamma_white_closed(beta, L) -> float:
    """Lyapunov exponent for white noise in one dimension."""
    if beta < 0 or L <= 0:
        raise ValueError("need beta >= 0 and L > 0")
    return -(beta**2) / (2 * L) - beta**4 / 24


def ey_minus2_closed(lam) -> float:
    """E[Y_lambda^{-2}] where Y_lambda = int_0^1 exp(lambda W), W a bridge."""
    if lam < 0:
        raise ValueError("need lambda >= 0")
    return 1 + lam**2 / 12


# ----------------------------------------------------------------------
# Yor-type density of Y_lambda


def _yor_dps(lam) -> int:
    # the prefactor exp(2 pi^2 / lambda^2) forces cancellation inside the
    # oscillatory integral of the same magnitude; scale precision with it
    return int(2 * math.pi**2 / lam**2 / math.log(10)) + 25


def _y_panels(lam, y_tail):
    """Panel breakpoints at zeros of sin(4 pi y / lambda^2)."""
    lam2 = lam * lam
    spacing = lam2 / 4
    # Gaussian factor below y_tail, with slack for the sinh growth
    y_max = math.sqrt(-0.5 * math.log(y_tail)) * lam + lam2 / 4 + 1.0
    m = int(math.ceil(y_max / spacing))
    return [mp.mpf(j) * spacing for j in range(m + 1)]


def _yor_y_integral(lam, weight, maxdegree=6):
    """integral of exp(-2y^2/lam^2) sinh(y) sin(4 pi y/lam^2) weight(y) dy
    over (0, inf), at working precision."""
    lam = mp.mpf(lam)
    lam2 = lam * lam

    def f(y):
        return mp.exp(-2 * y * y / lam2) * mp.sinh(y) * mp.sin(4 * mp.pi * y / lam2) * weight(y)

    panels = _y_panels(float(lam), 1e-16 if mp.mp.dps < 40 else mp.mpf(10) ** (-mp.mp.dps + 8))
    return mp.quad(f, panels, maxdegree=maxdegree)


def yor_density(lam, z, quad: QuadratureSpec | None = None) -> float:
    """Density f_lambda(z) of Y_lambda at z > 0."""
    if lam <= 0 or z <= 0:
        raise ValueError("need lambda > 0 and z > 0")
    quad = quad or QuadratureSpec()
    with mp.workdps(_yor_dps(lam)):
        lam_, z_ = mp.mpf(lam), mp.mpf(z)
        lam2 = lam_ * lam_
        pref = (4 / (mp.pi * lam2 * z_ * z_)) * mp.exp(-4 / (lam2 * z_) + 2 * mp.pi**2 / lam2)

        def weight(y):
            return mp.exp(-4 * mp.cosh(y) / (lam2 * z_))

        val = _yor_y_integral(lam_, weight)
        if quad.check_convergence:
            val2 = _yor_y_integral(lam_, weight, maxdegree=7)
            if abs(val2 - val) > mp.mpf(1e-10) * (abs(val) + mp.mpf(1e-30)):
                raise QuadratureError("y-integral did not self-converge")
            val = val2
        out = pref * val
    return float(out)


def yor_moment(lam, p, quad: QuadratureSpec | None = None, method="exchange") -> float:
    """integral of z^p f_lambda(z) dz over (0, inf).

    method="exchange" (p < 1 only) integrates out z analytically first,
    using int_0^inf z^{p-2} exp(-a/z) dz = Gamma(1-p) a^{p-1}, leaving a
    single oscillatory y-integral.  method="direct" integrates yor_density
    on a log grid in z with an algebraic tail correction.
    """
    if lam <= 0:
        raise ValueError("need lambda > 0")
    quad = quad or QuadratureSpec()
    if method == "exchange":
        if p >= 1:
            raise ValueError("exchange method requires p < 1")
        with mp.workdps(_yor_dps(lam)):
            lam_ = mp.mpf(lam)
            lam2 = lam_ * lam_
            q = mp.mpf(1 - p)

            def weight(y):
                a = 4 * (1 + mp.cosh(y)) / lam2
                return a ** (p - 1)

            val = _yor_y_integral(lam_, weight)
            if quad.check_convergence:
                val2 = _yor_y_integral(lam_, weight, maxdegree=7)
                if abs(val2 - val) > mp.mpf(1e-9) * abs(val):
                    raise QuadratureError("moment integral did not self-converge")
                val = val2
            out = (4 / (mp.pi * lam2)) * mp.exp(2 * mp.pi**2 / lam2) * mp.gamma(q) * val
        return float(out)
    if method == "direct":
        zg = np.exp(np.linspace(np.log(quad.z_min), np.log(quad.z_max), quad.z_nodes))
        fz = np.array([yor_density(lam, z, quad) for z in zg])
        vals = zg**p * fz
        total = float(np.trapezoid(vals, zg))
        # the density decays algebraically; estimate the tail from the last
        # node assuming f ~ c z^{-m} with m fitted on the final decade
        iz = zg > quad.z_max / 10
        m = -np.polyfit(np.log(zg[iz]), np.log(np.maximum(fz[iz], 1e-300)), 1)[0]
        if m - p > 1.05:
            total += vals[-1] * zg[-1] / (m - p - 1)
        return total
    raise ValueError(f"unknown method {method!r}")


# ----------------------------------------------------------------------
# bridge Monte Carlo helpers


def _chunks(n, chunk):
    done = 0
    while done < n:
        c = min(chunk, n - done)
        yield c
        done += c


def gamma_white_bridge_mc(beta, L, n, rng, quad: QuadratureSpec | None = None) -> Estimate:
    """-beta^2 L / 2 times the mean of (int_0^L exp(beta W))^{-2} over bridges."""
    if n < 1000:
        raise ValueError("need n >= 1000 samples")
    quad = quad or QuadratureSpec()
    gen = as_generator(rng)
    ng = quad.bridge_grid(beta, L)
    dx = L / ng
    vals = np.empty(n)
    with Stopwatch() as sw:
        done = 0
        for c in _chunks(n, 20000):
            w = sample_bridge_values(L, ng, gen, size=c)[:, :ng]
            integ = np.exp(beta * w).sum(axis=1) * dx
            vals[done : done + c] = -0.5 * beta**2 * L / integ**2
            done += c
    return mc_estimate(vals, runtime_s=sw.elapsed)


def sigma2_white_mc(beta, L, n, rng, quad: QuadratureSpec | None = None) -> Estimate:
    """Height-variance rate from the three-bridge representation:
    beta^2 E[ int e^{b(W1+W2+2W3)} / (int e^{b(W1+W3)} int e^{b(W2+W3)}) ]."""
    if n < 1000:
        raise ValueError("need n >= 1000 samples")
    quad = quad or QuadratureSpec()
    gen = as_generator(rng)
    ng = quad.bridge_grid(beta, L)
    dx = L / ng
    vals = np.empty(n)
    with Stopwatch() as sw:
        done = 0
        for c in _chunks(n, 8000):
            w = sample_bridge_values(L, ng, gen, size=3 * c)[:, :ng].reshape(c, 3, ng)
            e1 = np.exp(beta * (w[:, 0] + w[:, 2]))
            e2 = np.exp(beta * (w[:, 1] + w[:, 2]))
            num = (e1 * e2).sum(axis=1) * dx  # equals int e^{b(W1+W2+2W3)}
            den = (e1.sum(axis=1) * dx) * (e2.sum(axis=1) * dx)
            vals[done : done + c] = beta**2 * num / den
            done += c
    return mc_estimate(vals, runtime_s=sw.elapsed)


def sigma2_nested_mc(beta, L, n_outer, n_inner, rng,
                     quad: QuadratureSpec | None = None) -> Estimate:
    """Conditional-expectation route: beta^2 E_{W3}[ int g(y)^2 dy ] with
    g(y) = E_{W1}[ normalized e^{beta(W1+W3)}(y) ].

    The square of the inner expectation is estimated without bias by the
    product of two estimates built from independent halves of the inner
    sample; inner draws are fresh for every outer draw.
    """
    if n_inner < 4 or n_inner % 2:
        raise ValueError("n_inner must be even and >= 4")
    quad = quad or QuadratureSpec()
    gen = as_generator(rng)
    ng = quad.bridge_grid(beta, L)
    dx = L / ng
    vals = np.empty(n_outer)
    half = n_inner // 2
    with Stopwatch() as sw:
        done = 0
        for c in _chunks(n_outer, max(1, 2_000_000 // (n_inner * ng))):
            w3 = sample_bridge_values(L, ng, gen, size=c)[:, :ng]
            w1 = sample_bridge_values(L, ng, gen, size=c * n_inner)[:, :ng]
            w1 = w1.reshape(c, n_inner, ng)
            e = np.exp(beta * (w1 + w3[:, None, :]))
            rho = e / (e.sum(axis=2, keepdims=True) * dx)
            ga = rho[:, :half].mean(axis=1)
            gb = rho[:, half:].mean(axis=1)
            vals[done : done + c] = beta**2 * (ga * gb).sum(axis=1) * dx
            done += c
    return mc_estimate(vals, runtime_s=sw.elapsed, n_inner=n_inner)


def sigma2_corrector_mc(beta, L, n_outer, n_inner, rng,
                        quad: QuadratureSpec | None = None,
                        n_grid=None) -> Estimate:
    """Corrector route: beta^2 E_rho[ int rho(y)^2 A(rho,y)^2 dy ] with
    A(rho,y) = 1 - (beta^2/2) Dchi(rho,y) = E_{rho1}[ rho1(y) / int rho rho1 ].

    A^2 uses the split-half product estimator; rho and the rho1 samples are
    independent stationary densities exp(beta W)/normalization.
    """
    if n_inner < 4 or n_inner % 2:
        raise ValueError("n_inner must be even and >= 4")
    quad = quad or QuadratureSpec()
    gen = as_generator(rng)
    ng = n_grid or quad.bridge_grid(beta, L)
    dx = L / ng
    half = n_inner // 2
    vals = np.empty(n_outer)
    with Stopwatch() as sw:
        done = 0
        for c in _chunks(n_outer, max(1, 2_000_000 // (n_inner * ng))):
            w = sample_bridge_values(L, ng, gen, size=c)[:, :ng]
            e = np.exp(beta * w)
            rho = e / (e.sum(axis=1, keepdims=True) * dx)
            w1 = sample_bridge_values(L, ng, gen, size=c * n_inner)[:, :ng]
            e1 = np.exp(beta * w1).reshape(c, n_inner, ng)
            rho1 = e1 / (e1.sum(axis=2, keepdims=True) * dx)
            den = (rho[:, None, :] * rho1).sum(axis=2) * dx
            ratio = rho1 / den[:, :, None]
            aa = ratio[:, :half].mean(axis=1)
            ab = ratio[:, half:].mean(axis=1)
            vals[done : done + c] = beta**2 * (rho**2 * aa * ab).sum(axis=1) * dx
            done += c
    return mc_estimate(vals, runtime_s=sw.elapsed, n_inner=n_inner)


@dataclass
class DecayFit:
    slope: float
    slope_stderr: float
    L_values: np.ndarray
    estimates: list
    flagged: bool

    def as_dict(self):
        return {
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "L": list(map(float, self.L_values)),
            "sigma2": [e.value for e in self.estimates],
            "stderr": [e.stderr for e in self.estimates],
            "flagged": self.flagged,
        }


def sigma2_decay_fit(beta, L_list, n, rng, quad: QuadratureSpec | None = None) -> DecayFit:
    """Log-log slope of sigma2_white_mc against L."""
    L_list = np.asarray(sorted(L_list), dtype=float)
    if len(L_list) < 4 or L_list[-1] / L_list[0] < 10 ** 1.5:
        raise ValueError("need >= 4 values of L spanning >= 1.5 decades")
    gen = as_generator(rng)
    ests = [sigma2_white_mc(beta, L, n, gen, quad) for L in L_list]
    x = np.log(L_list)
    y = np.log([e.value for e in ests])
    # propagate MC noise: var(log sigma2) ~ (stderr/value)^2
    wts = 1.0 / np.array([(e.stderr / e.value) ** 2 for e in ests])
    coef, cov = np.polyfit(x, y, 1, w=np.sqrt(wts), cov="unscaled")
    slope = float(coef[0])
    slope_se = float(np.sqrt(cov[0, 0]))
    flagged = any(e.stderr / abs(e.value) > 0.05 for e in ests) or slope_se > 0.05
    return DecayFit(slope=slope, slope_stderr=slope_se, L_values=L_list,
                    estimates=ests, flagged=flagged)


def winding_diffusivity_mc(beta, n, rng, n_inner=64,
                           quad: QuadratureSpec | None = None) -> Estimate:
    """Sigma(beta) = 1 + beta^2 E_{W1,W3}[A^2] on the unit torus.

    A(beta, W1, W3) integrates Xi(beta, y, W1) against the centered Gibbs
    density of W1 + W3 restricted to [0, y]; Xi is the inner expectation
    over W2 of e^{beta(W2-W1)}(y) / (int e^{beta(W2-W1)})^2.  A^2 is
    estimated by the product of two independent inner halves (fresh inner
    bridges for every outer sample).
    """
    if n_inner < 4 or n_inner % 2:
        raise ValueError("n_inner must be even and >= 4")
    quad = quad or QuadratureSpec()
    gen = as_generator(rng)
    L = 1.0
    ng = quad.bridge_grid(beta, L)
    dx = L / ng
    half = n_inner // 2
    if beta == 0:
        return Estimate(value=1.0, stderr=0.0, n=n)
    vals = np.empty(n)
    with Stopwatch() as sw:
        done = 0
        for c in _chunks(n, max(1, 1_500_000 // (n_inner * ng))):
            w13 = sample_bridge_values(L, ng, gen, size=2 * c)[:, :ng].reshape(c, 2, ng)
            w1, w3 = w13[:, 0], w13[:, 1]
            e13 = np.exp(beta * (w1 + w3))
            g = e13 / (e13.sum(axis=1, keepdims=True) * dx) - 1.0  # centered Gibbs
            G = np.cumsum(g, axis=1) * dx  # int_0^y (density - 1)
            w2 = sample_bridge_values(L, ng, gen, size=c * n_inner)[:, :ng]
            e2 = np.exp(beta * (w2.reshape(c, n_inner, ng) - w1[:, None, :]))
            xi = e2 / (e2.sum(axis=2, keepdims=True) * dx) ** 2
            xa = xi[:, :half].mean(axis=1)
            xb = xi[:, half:].mean(axis=1)
            Aa = (xa * G).sum(axis=1) * dx
            Ab = (xb * G).sum(axis=1) * dx
            vals[done : done + c] = 1.0 + beta**2 * Aa * Ab
            done += c
    est = mc_estimate(vals, runtime_s=sw.elapsed, n_inner=n_inner)
    return est


def gamma_expansion_smooth(L, d, spec: CovarianceSpec, n_max, tail_tol=1e-8):
    """Small-beta expansion coefficients (gamma2, gamma4) for smooth noise.

    gamma4 sums hat-R(n/L)^2 / n^2 over 0 < |n| <= n_max, where hat-R is the
    full-space Fourier transform int R(x) e^{-2 pi i xi x} dx; the stored
    per-mode table uses the torus normalization with an extra L^{-d/2}, so
    entries are rescaled by L^{d/2} before squaring.
    """
    if d != 1 or spec.d != 1:
        raise ValueError("only d = 1 is implemented")
    modes = len(spec.rhat) - 1
    if n_max > modes:
        raise ValueError(f"rhat table covers |n| <= {modes} < n_max")
    gamma2 = -1.0 / (2 * L**d)
    ns = np.arange(1, n_max + 1)
    rth = L ** (d / 2) * np.asarray(spec.rhat)[1 : n_max + 1]
    s = np.sum(rth**2 / ns**2)
    gamma4 = -(1.0 / (8 * np.pi**2 * L ** (2 * d - 2))) * 2 * s
    # conservative tail bound: last retained coefficient times the 1/n^2 tail
    tail = (L ** (d / 2) * spec.rhat[n_max]) ** 2 * 2 / n_max / (8 * np.pi**2 * L ** (2 * d - 2))
    if tail > tail_tol:
        raise QuadratureError(f"mode truncation tail {tail:.2e} exceeds {tail_tol:.0e}")
    return gamma2, float(gamma4)


# ----------------------------------------------------------------------
# corrector

_CHI_CONST_CACHE: dict = {}


def _chi_constant(beta, L, n_grid, n_pairs, gen):
    """E log int rho1 rho2 over independent stationary-density pairs,
    cached per (beta, L, grid, sample size)."""
    key = (round(beta, 12), round(L, 12), n_grid, n_pairs)
    if key in _CHI_CONST_CACHE:
        return _CHI_CONST_CACHE[key]
    dx = L / n_grid
    vals = np.empty(n_pairs)
    done = 0
    for c in _chunks(n_pairs, 20000):
        w = sample_bridge_values(L, n_grid, gen, size=2 * c)[:, :n_grid]
        e = np.exp(beta * w)
        rho = (e / (e.sum(axis=1, keepdims=True) * dx)).reshape(c, 2, n_grid)
        vals[done : done + c] = np.log((rho[:, 0] * rho[:, 1]).sum(axis=1) * dx)
        done += c
    out = (float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_pairs)))
    _CHI_CONST_CACHE[key] = out
    return out


def corrector_chi(rho: DensityField, beta, n_inner, rng, n_const=200_000) -> Estimate:
    """chi(rho) = (2/beta^2) ( E E log int rho1 rho2  -  E log int rho rho1 )."""
    if beta == 0:
        raise ValueError("beta = 0: corrector is undefined")
    gen = as_generator(rng)
    n_grid = rho.n
    dx = rho.dx
    with Stopwatch() as sw:
        const, const_se = _chi_constant(beta, rho.L, n_grid, n_const, gen)
        vals = np.empty(n_inner)
        done = 0
        for c in _chunks(n_inner, 20000):
            w = sample_bridge_values(rho.L, n_grid, gen, size=c)[:, :n_grid]
            e = np.exp(beta * w)
            rho1 = e / (e.sum(axis=1, keepdims=True) * dx)
            vals[done : done + c] = np.log((rho1 * rho.values).sum(axis=1) * dx)
            done += c
    se1 = float(vals.std(ddof=1) / np.sqrt(n_inner))
    value = (2 / beta**2) * (const - float(vals.mean()))
    stderr = (2 / beta**2) * math.hypot(const_se, se1)
    return Estimate(value=value, stderr=stderr, n=n_inner, runtime_s=sw.elapsed,
                    extra={"constant": const, "constant_stderr": const_se})


def corrector_grad(rho: DensityField, beta, n_inner, rng) -> LatticeField:
    """Dchi(rho, y) = (2/beta^2) (1 - E_{rho1}[ rho1(y) / int rho rho1 ]),
    with one shared rho1 sample set across all y."""
    if beta == 0:
        raise ValueError("beta = 0: corrector is undefined")
    gen = as_generator(rng)
    n_grid, dx = rho.n, rho.dx
    acc = np.zeros(n_grid)
    for c in _chunks(n_inner, 20000):
        w = sample_bridge_values(rho.L, n_grid, gen, size=c)[:, :n_grid]
        e = np.exp(beta * w)
        rho1 = e / (e.sum(axis=1, keepdims=True) * dx)
        den = (rho1 * rho.values).sum(axis=1) * dx
        acc += (rho1 / den[:, None]).sum(axis=0)
    mean_ratio = acc / n_inner
    values = (2 / beta**2) * (1.0 - mean_ratio)
    return LatticeField(L=rho.L, values=values, t=0.0)
