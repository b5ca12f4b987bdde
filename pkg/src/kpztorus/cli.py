"""Experiment harness: config parsing, subcommand dispatch, atomic result
persistence, and report assembly.

Exit codes: 0 ok, 2 configuration error, 3 numerical-tolerance failure,
4 I/O failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import subprocess
import sys
import tempfile
import time

import numpy as np

from . import bridge_formulas as bf
from . import height, projective, winding
from .noise import CovarianceSpec
from .rng import RngStream
from .she import SolverParams, TruncationError, solve
from .stats import Estimate

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class UnknownKeyError(ConfigError):
    pass


class TypeMismatchError(ConfigError):
    pass


class ConstraintError(ConfigError):
    pass


# per-command option schema: name -> (type, default, constraint or None)
_POS = ("must be > 0", lambda v: v > 0)
_NONNEG = ("must be >= 0", lambda v: v >= 0)

_COMMON = {
    "seed": (int, 0, None),
    "threads": (int, 0, None),  # 0 = use KPZTORUS_THREADS or cpu count
    "outdir": (str, "results", None),
}

_SCHEMAS = {
    "she-solve": {"beta": (float, 1.0, _NONNEG), "L": (float, 1.0, _POS),
                  "n": (int, 128, _POS), "dt": (float, 1e-3, _POS),
                  "T": (float, 1.0, _POS)},
    "mixing": {"beta": (float, 1.0, _NONNEG), "L": (float, 1.0, _POS),
               "n": (int, 128, _POS), "dt": (float, 1e-3, _POS),
               "t_max": (float, 6.0, _POS), "n_pairs": (int, 16, _POS)},
    "gamma-closed": {"beta": (float, 1.0, _NONNEG), "L": (float, 1.0, _POS)},
    "gamma-bridge": {"beta": (float, 1.0, _NONNEG), "L": (float, 1.0, _POS),
                     "n": (int, 1_000_000, _POS)},
    "gamma-simulate": {"beta": (float, 1.0, _NONNEG), "L": (float, 1.0, _POS),
                       "n": (int, 128, _POS), "dt": (float, 1e-3, _POS),
                       "T": (float, 8.0, _POS), "n_replicas": (int, 200, _POS),
                       "extrapolate": (bool, False, None)},
    "gamma-expand": {"L": (float, 1.0, _POS), "covariance": (str, "", None),
                     "n_max": (int, 64, _POS)},
    "sigma2-mc": {"beta": (float, 1.0, _NONNEG), "L": (float, 1.0, _POS),
                  "n": (int, 1_000_000, _POS)},
    "sigma2-decay": {"beta": (float, 1.0, _NONNEG),
                     "L_list": (list, [1.0, 4.0, 16.0, 64.0], None),
                     "n": (int, 200_000, _POS)},
    "sigma2-corrector": {"beta": (float, 1.0, _NONNEG), "L": (float, 1.0, _POS),
                         "n_outer": (int, 4000, _POS), "n_inner": (int, 64, _POS)},
    "clt-height": {"beta": (float, 1.0, _NONNEG), "L": (float, 1.0, _POS),
                   "n": (int, 128, _POS), "dt": (float, 1e-3, _POS),
                   "t": (float, 50.0, _POS), "n_replicas": (int, 2000, _POS)},
    "clt-winding": {"beta": (float, 1.0, _NONNEG), "n": (int, 64, _POS),
                    "dt": (float, 4e-3, _POS), "t": (float, 50.0, _POS),
                    "n_env": (int, 100, _POS), "n_paths": (int, 16, _POS)},
    "winding-sample": {"beta": (float, 1.0, _NONNEG), "n": (int, 64, _POS),
                       "dt": (float, 4e-3, _POS), "t": (float, 10.0, _POS),
                       "n_paths": (int, 200, _POS),
                       "boundary": (str, "lebesgue-delta", None)},
    "winding-quenched": {"beta": (float, 1.0, _NONNEG), "n": (int, 64, _POS),
                         "dt": (float, 4e-3, _POS), "t": (float, 10.0, _POS),
                         "boundary": (str, "lebesgue-delta", None)},
    "winding-sigma": {"beta": (float, 1.0, _NONNEG), "n": (int, 64, _POS),
                      "dt": (float, 4e-3, _POS), "t": (float, 50.0, _POS),
                      "n_env": (int, 50, _POS), "n_paths": (int, 16, _POS),
                      "K": (int, 10, _POS),
                      "route": (str, "both", None)},
    "winding-mc": {"beta": (float, 1.0, _NONNEG), "n": (int, 20_000, _POS),
                   "n_inner": (int, 64, _POS)},
    "corrector-chi": {"beta": (float, 1.0, _POS), "L": (float, 1.0, _POS),
                      "n": (int, 256, _POS), "n_inner": (int, 20_000, _POS)},
    "corrector-grad": {"beta": (float, 1.0, _POS), "L": (float, 1.0, _POS),
                       "n": (int, 256, _POS), "n_inner": (int, 20_000, _POS)},
    "yor": {"lam": (float, 1.0, _POS), "z": (float, 0.0, None),
            "moments": (bool, True, None)},
    "lil": {"beta": (float, 1.0, _NONNEG), "L": (float, 1.0, _POS),
            "n": (int, 128, _POS), "dt": (float, 2e-3, _POS),
            "t_max": (float, 100.0, _POS), "n_replicas": (int, 20, _POS)},
    "report": {"dir": (str, "results", None)},
}


@dataclasses.dataclass
class ExperimentConfig:
    command: str
    options: dict
    seed: int = 0
    threads: int = 0
    outdir: str = "results"

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        keys = set(d)
        allowed = {"command", "options", "seed", "threads", "outdir"}
        extra = keys - allowed
        if extra:
            raise UnknownKeyError(f"unknown config keys: {sorted(extra)}")
        if "command" not in d:
            raise ConfigError("config needs a 'command'")
        cfg = cls(command=d["command"], options=dict(d.get("options", {})),
                  seed=d.get("seed", 0), threads=d.get("threads", 0),
                  outdir=d.get("outdir", "results"))
        cfg.validate()
        return cfg

    def validate(self):
        if self.command not in _SCHEMAS:
            raise ConfigError(f"unknown subcommand {self.command!r}")
        schema = _SCHEMAS[self.command]
        for key, val in self.options.items():
            if key not in schema:
                raise UnknownKeyError(
                    f"unknown option {key!r} for {self.command}")
            typ, _, constraint = schema[key]
            if typ is float and isinstance(val, int) and not isinstance(val, bool):
                val = float(val)
                self.options[key] = val
            if not isinstance(val, typ) or (typ is int and isinstance(val, bool)):
                raise TypeMismatchError(
                    f"option {key!r} must be {typ.__name__}, got {type(val).__name__}")
            if constraint is not None:
                msg, ok = constraint
                if not ok(val):
                    raise ConstraintError(f"option {key!r} {msg} (got {val})")
        for key, (typ, default, _) in schema.items():
            self.options.setdefault(key, default)
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise TypeMismatchError("seed must be an integer")

    def n_threads(self) -> int:
        if self.threads:
            return self.threads
        env = os.environ.get("KPZTORUS_THREADS")
        if env:
            return int(env)
        return os.cpu_count() or 1


def parse_config(argv=None) -> ExperimentConfig:
    """Build a config from a subcommand line, optionally seeded from a JSON
    file (--config); explicit flags override file values."""
    parser = _build_parser()
    ns = parser.parse_args(argv)
    if ns.command is None:
        parser.error("a subcommand is required")
    base = {}
    if ns.config:
        try:
            with open(ns.config) as fh:
                base = json.load(fh)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {ns.config}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}") from e
        if base.get("command", ns.command) != ns.command:
            raise ConfigError("config file command does not match the subcommand")
    opts = dict(base.get("options", {}))
    schema = _SCHEMAS[ns.command]
    for key in schema:
        flag = getattr(ns, key.replace("-", "_"), None)
        if flag is not None:
            opts[key] = flag
    d = {
        "command": ns.command,
        "options": opts,
        "seed": ns.seed if ns.seed is not None else base.get("seed", 0),
        "threads": ns.threads if ns.threads is not None else base.get("threads", 0),
        "outdir": ns.outdir if ns.outdir is not None else base.get("outdir", "results"),
    }
    return ExperimentConfig.from_dict(d)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="kpztorus",
        description="Numerical laboratory for the periodic stochastic heat "
                    "equation: Lyapunov exponents, height fluctuations, "
                    "winding diffusivity, and corrector checks.")
    parser.add_argument("--config", help="JSON config file; flags override it")
    sub = parser.add_subparsers(dest="command")

    def add(cmd, help_):
        p = sub.add_parser(cmd, help=help_)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None,
                       help="worker count (default: KPZTORUS_THREADS or cpu count)")
        p.add_argument("--outdir", default=None)
        for key, (typ, default, _) in _SCHEMAS[cmd].items():
            flag = "--" + key.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, action="store_const", const=True,
                               default=None, help=f"(default {default})")
            elif typ is list:
                p.add_argument(flag, type=float, nargs="+", default=None,
                               help=f"(default {default})")
            else:
                p.add_argument(flag, type=typ, default=None,
                               help=f"(default {default})")
        return p

    add("she-solve", "evolve one stochastic-heat-equation trajectory")
    add("mixing", "projective contraction rate between paired solutions")
    add("gamma-closed", "closed-form Lyapunov exponent (white noise)")
    add("gamma-bridge", "Lyapunov exponent by Brownian-bridge Monte Carlo")
    add("gamma-simulate", "Lyapunov exponent from direct simulation")
    add("gamma-expand", "small-coupling expansion for a smooth covariance")
    add("sigma2-mc", "height variance rate by three-bridge Monte Carlo")
    add("sigma2-decay", "decay exponent of the variance rate in the period")
    add("sigma2-corrector", "height variance rate via the corrector gradient")
    add("clt-height", "normalized height sample against the Gaussian law")
    add("clt-winding", "normalized winding sample against the Gaussian law")
    add("winding-sample", "sample winding displacements in one environment")
    add("winding-quenched", "exact quenched winding law in one environment")
    add("winding-sigma", "empirical winding diffusivity across environments")
    add("winding-mc", "winding diffusivity by bridge Monte Carlo")
    add("corrector-chi", "corrector value at a stationary density sample")
    add("corrector-grad", "corrector gradient at a stationary density sample")
    add("yor", "density of the exponential bridge functional and its moments")
    add("lil", "iterated-logarithm band diagnostic")
    add("report", "consolidated comparison table from a result directory")
    return parser


# ----------------------------------------------------------------------
# dispatch


def _estimate_dict(e) -> dict:
    d = {"value": e.value, "stderr": e.stderr, "n": e.n}
    if getattr(e, "extra", None):
        d["extra"] = e.extra
    return d


def _solver(o, noise="white") -> SolverParams:
    return SolverParams(beta=o["beta"], L=o.get("L", 1.0), n=o["n"],
                        dt=o["dt"], noise=noise, T=o.get("T", 1.0))


def _run_she_solve(cfg, gen):
    o = cfg.options
    p = _solver(o)
    z0 = np.ones(o["n"])
    traj = solve(z0, p, gen, record_martingale=True)
    led = projective.ledger(traj)
    return {
        "quantity": "log_mass",
        "log_mass_final": float(traj.logzbar[-1, 0]),
        "martingale_final": float(led.martingale[-1, 0]),
        "bracket_final": float(led.bracket[-1, 0]),
        "max_residual": float(np.max(np.abs(led.residual()))),
    }


def _run_mixing(cfg, gen):
    o = cfg.options
    p = _solver(o)
    curve = projective.mixing_curve(p, o["t_max"], gen, n_pairs=o["n_pairs"])
    lo, hi = curve.rate_ci()
    return {"quantity": "mixing_rate", "rate": curve.rate,
            "rate_stderr": curve.rate_stderr, "ci95": [lo, hi],
            "times": list(map(float, curve.times)),
            "log_tv_mean": list(map(float, curve.log_tv_mean))}


def _run_gamma_closed(cfg, gen):
    o = cfg.options
    return {"quantity": "gamma",
            "value": bf.gamma_white_closed(o["beta"], o["L"]), "route": "closed"}


def _run_gamma_bridge(cfg, gen):
    o = cfg.options
    est = bf.gamma_white_bridge_mc(o["beta"], o["L"], o["n"], gen)
    return {"quantity": "gamma", "route": "bridge-mc", **_estimate_dict(est)}


def _run_gamma_simulate(cfg, gen):
    o = cfg.options
    if o["extrapolate"]:
        ns = [o["n"] // 2, o["n"], o["n"] * 2]
        vals, ses = [], []
        levels = {}
        for n_i in ns:
            # keep dt * n^2 fixed across levels so the discretisation error
            # shrinks by a fixed factor per refinement
            dt_i = o["dt"] * (o["n"] / n_i) ** 2
            p = SolverParams(beta=o["beta"], L=o["L"], n=n_i, dt=dt_i, T=o["T"])
            est = height.estimate_gamma(p, gen, n_replicas=o["n_replicas"])
            vals.append(est.value)
            ses.append(est.stderr)
            levels[n_i] = _estimate_dict(est)
        value, stderr, pexp = height.richardson_gamma(vals, ses, ns)
        return {"quantity": "gamma", "route": "simulate-extrapolated",
                "value": value, "stderr": stderr, "order": pexp, "levels": levels}
    p = _solver(o)
    est = height.estimate_gamma(p, gen, n_replicas=o["n_replicas"])
    return {"quantity": "gamma", "route": "simulate", **_estimate_dict(est),
            "slope_route": _estimate_dict(est.slope)}


def _run_gamma_expand(cfg, gen):
    o = cfg.options
    if not o["covariance"]:
        raise ConfigError("gamma-expand needs --covariance <json file>")
    try:
        spec = CovarianceSpec.from_json(o["covariance"])
    except FileNotFoundError as e:
        raise ConfigError(f"covariance file not found: {o['covariance']}") from e
    n_max = min(o["n_max"], len(spec.rhat) - 1)
    g2, g4 = bf.gamma_expansion_smooth(o["L"], 1, spec, n_max)
    return {"quantity": "gamma_expansion", "gamma2": g2, "gamma4": g4,
            "n_max": n_max}


def _run_sigma2_mc(cfg, gen):
    o = cfg.options
    est = bf.sigma2_white_mc(o["beta"], o["L"], o["n"], gen)
    return {"quantity": "sigma2", "route": "bridge-mc", **_estimate_dict(est)}


def _run_sigma2_decay(cfg, gen):
    o = cfg.options
    fit = bf.sigma2_decay_fit(o["beta"], o["L_list"], o["n"], gen)
    return {"quantity": "sigma2_decay", **fit.as_dict()}


def _run_sigma2_corrector(cfg, gen):
    o = cfg.options
    est = bf.sigma2_corrector_mc(o["beta"], o["L"], o["n_outer"], o["n_inner"], gen)
    return {"quantity": "sigma2", "route": "corrector", **_estimate_dict(est)}


def _run_clt_height(cfg, gen):
    o = cfg.options
    p = _solver(o)
    res = height.clt_experiment(p, o["t"], o["n_replicas"], gen)
    return {"quantity": "clt_height", "ks_stat": res.ks_stat,
            "ks_pvalue": res.ks_pvalue, "gamma": res.gamma, "sigma2": res.sigma2,
            "var_by_time": {str(k): v for k, v in res.var_by_time.items()},
            "underpowered": res.underpowered,
            "samples": list(map(float, res.sample.normalized))}


def _winding_params(o) -> SolverParams:
    return SolverParams(beta=o["beta"], L=1.0, n=o["n"], dt=o["dt"], T=1.0)


def _run_clt_winding(cfg, gen):
    o = cfg.options
    p = _winding_params(o)
    disp = []
    for _ in range(o["n_env"]):
        chain = winding.build_chain(o["t"], p, boundary=("stationary", "stationary"),
                                    rng=gen)
        s = winding.sample_displacement(chain, o["n_paths"], gen)
        disp.append(s.displacement)
    disp = np.concatenate(disp)
    sig2 = float(np.var(disp, ddof=1) / o["t"])
    from scipy import stats as sps
    ks = sps.kstest(disp / math.sqrt(o["t"] * sig2), "norm")
    return {"quantity": "clt_winding", "ks_stat": float(ks.statistic),
            "ks_pvalue": float(ks.pvalue), "sigma2_hat": sig2,
            "n_samples": int(disp.size)}


def _boundary_pair(name):
    if name == "lebesgue-delta":
        return ("lebesgue", "delta0")
    if name == "stationary":
        return ("stationary", "stationary")
    raise ConfigError(f"unknown boundary {name!r}")


def _run_winding_sample(cfg, gen):
    o = cfg.options
    chain = winding.build_chain(o["t"], _winding_params(o),
                                boundary=_boundary_pair(o["boundary"]), rng=gen)
    s = winding.sample_displacement(chain, o["n_paths"], gen)
    d = s.displacement
    return {"quantity": "winding_sample", "mean": float(d.mean()),
            "var": float(d.var(ddof=1)), "n_paths": o["n_paths"],
            "Y": list(map(int, s.Y))}


def _run_winding_quenched(cfg, gen):
    o = cfg.options
    chain = winding.build_chain(o["t"], _winding_params(o),
                                boundary=_boundary_pair(o["boundary"]), rng=gen)
    law = winding.quenched_moments(chain)
    keep = law.probs > 1e-12
    return {"quantity": "winding_quenched", "mean": law.mean, "var": law.var,
            "total_mass": law.total_mass,
            "offsets": list(map(int, law.offsets[keep])),
            "probs": list(map(float, law.probs[keep]))}


def _run_winding_sigma(cfg, gen):
    o = cfg.options
    routes = winding.sigma_empirical(_winding_params(o), o["t"], o["n_env"], gen,
                                     n_paths=o["n_paths"], K=o["K"])
    out = {"quantity": "Sigma", "route": "empirical", "cov_tail": routes.cov_tail}
    if o["route"] in ("paths", "both"):
        out["paths"] = _estimate_dict(routes.paths)
        out.update(_estimate_dict(routes.paths))
    if o["route"] in ("quenched", "both"):
        out["covsum"] = _estimate_dict(routes.covsum)
    return out


def _run_winding_mc(cfg, gen):
    o = cfg.options
    est = bf.winding_diffusivity_mc(o["beta"], o["n"], gen, n_inner=o["n_inner"])
    return {"quantity": "Sigma", "route": "bridge-mc", **_estimate_dict(est)}


def _stationary_rho(o, gen):
    from .noise import sample_stationary_density
    return sample_stationary_density(o["beta"], o["L"], o["n"], gen)


def _run_corrector_chi(cfg, gen):
    o = cfg.options
    rho = _stationary_rho(o, gen)
    est = bf.corrector_chi(rho, o["beta"], o["n_inner"], gen)
    return {"quantity": "corrector_chi", **_estimate_dict(est)}


def _run_corrector_grad(cfg, gen):
    o = cfg.options
    rho = _stationary_rho(o, gen)
    grad = bf.corrector_grad(rho, o["beta"], o["n_inner"], gen)
    dx = rho.L / o["n"]
    centering = float(np.sum(grad.values * rho.values) * dx)
    return {"quantity": "corrector_grad",
            "centering_integral": centering,
            "max_abs": float(np.max(np.abs(grad.values))),
            "values": list(map(float, grad.values))}


def _run_yor(cfg, gen):
    o = cfg.options
    out = {"quantity": "yor", "lam": o["lam"]}
    if o["z"] > 0:
        out["density_at_z"] = bf.yor_density(o["lam"], o["z"])
        out["z"] = o["z"]
    if o["moments"]:
        out["mass"] = bf.yor_moment(o["lam"], 0)
        out["inv2_moment"] = bf.yor_moment(o["lam"], -2)
        out["inv2_closed"] = bf.ey_minus2_closed(o["lam"])
    return out


def _run_lil(cfg, gen):
    o = cfg.options
    p = SolverParams(beta=o["beta"], L=o["L"], n=o["n"], dt=o["dt"],
                     T=o["t_max"])
    from .noise import stationary_density_values
    z0 = stationary_density_values(o["beta"], o["L"], o["n"], gen,
                                   size=o["n_replicas"])
    ts = np.geomspace(10.0, o["t_max"], 24)
    traj = solve(z0, p, gen, checkpoints=list(ts), batch=o["n_replicas"])
    res = height.lil_diagnostic(traj)
    return {"quantity": "lil", "sigma_L": res.sigma_L,
            "band_fraction": res.band_fraction,
            "times": list(map(float, res.times)),
            "running_max": list(map(float, res.running_max.max(axis=1))),
            "running_min": list(map(float, res.running_min.min(axis=1)))}


_DISPATCH = {
    "she-solve": _run_she_solve,
    "mixing": _run_mixing,
    "gamma-closed": _run_gamma_closed,
    "gamma-bridge": _run_gamma_bridge,
    "gamma-simulate": _run_gamma_simulate,
    "gamma-expand": _run_gamma_expand,
    "sigma2-mc": _run_sigma2_mc,
    "sigma2-decay": _run_sigma2_decay,
    "sigma2-corrector": _run_sigma2_corrector,
    "clt-height": _run_clt_height,
    "clt-winding": _run_clt_winding,
    "winding-sample": _run_winding_sample,
    "winding-quenched": _run_winding_quenched,
    "winding-sigma": _run_winding_sigma,
    "winding-mc": _run_winding_mc,
    "corrector-chi": _run_corrector_chi,
    "corrector-grad": _run_corrector_grad,
    "yor": _run_yor,
    "lil": _run_lil,
}


@dataclasses.dataclass
class ResultRecord:
    schema_version: int
    config: dict
    results: dict
    build: str

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5,
                             cwd=os.path.dirname(__file__))
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _strip_runtime(obj):
    """Timing fields vary between runs and are kept out of the persisted
    record so identical configs produce identical files."""
    if isinstance(obj, dict):
        return {k: _strip_runtime(v) for k, v in obj.items() if k != "runtime_s"}
    if isinstance(obj, list):
        return [_strip_runtime(v) for v in obj]
    return obj


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(config: ExperimentConfig) -> ResultRecord:
    """Dispatch to the owning module and persist the record atomically."""
    if config.command == "report":
        return report(config.options["dir"])
    gen = RngStream(master_seed=config.seed).generator()
    t0 = time.perf_counter()
    results = _DISPATCH[config.command](config, gen)
    wall = time.perf_counter() - t0
    record = ResultRecord(schema_version=SCHEMA_VERSION,
                          config=dataclasses.asdict(config),
                          results=_strip_runtime(results),
                          build=_git_describe())
    base = os.path.join(config.outdir,
                        f"{config.command}-seed{config.seed}")
    _atomic_write(base + ".json", record.to_json() + "\n")
    _atomic_write(base + ".config.json", config.to_json() + "\n")
    with open(base + ".log", "w") as fh:
        fh.write(f"wall_clock_s: {wall:.3f}\n")
    return record


def report(result_dir) -> str:
    """Consolidated comparison table across persisted records, with 3-stderr
    agreement flags for every pair measuring the same quantity."""
    if not os.path.isdir(result_dir):
        raise ConfigError(f"no such result directory: {result_dir}")
    records = []
    for name in sorted(os.listdir(result_dir)):
        if not name.endswith(".json") or name.endswith(".config.json"):
            continue
        with open(os.path.join(result_dir, name)) as fh:
            rec = json.load(fh)
        if rec.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(
                f"schema version mismatch in {name}: "
                f"{rec.get('schema_version')} != {SCHEMA_VERSION}")
        records.append((name, rec))
    if not records:
        raise ConfigError(f"no records found in {result_dir}")

    rows = []
    for name, rec in records:
        res = rec["results"]
        q = res.get("quantity", "?")
        value = res.get("value")
        stderr = res.get("stderr", 0.0)
        route = res.get("route", "")
        if value is not None:
            rows.append({"file": name, "quantity": q, "route": route,
                         "value": value, "stderr": stderr})

    lines = ["| quantity | route | value | stderr | agrees |",
             "|---|---|---|---|---|"]
    csv_lines = ["quantity,route,value,stderr,agrees,file"]
    for row in rows:
        peers = [r for r in rows if r["quantity"] == row["quantity"] and r is not row]
        flags = []
        for p in peers:
            tol = 3 * math.hypot(row["stderr"], p["stderr"])
            ok = abs(row["value"] - p["value"]) <= max(tol, 1e-12)
            flags.append(f"{p['route'] or p['file']}:{'yes' if ok else 'NO'}")
        agrees = ";".join(flags) if flags else "-"
        lines.append(f"| {row['quantity']} | {row['route']} | {row['value']:.8g} "
                     f"| {row['stderr']:.3g} | {agrees} |")
        csv_lines.append(f"{row['quantity']},{row['route']},{row['value']!r},"
                         f"{row['stderr']!r},{agrees},{row['file']}")
    table = "\n".join(lines) + "\n"
    _atomic_write(os.path.join(result_dir, "report.md"), table)
    _atomic_write(os.path.join(result_dir, "report.csv"),
                  "\n".join(csv_lines) + "\n")
    return table


def main(argv=None) -> int:
    try:
        config = parse_config(argv)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        out = run(config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (bf.QuadratureError, TruncationError) as e:
        print(f"numerical tolerance failure: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"I/O failure: {e}", file=sys.stderr)
        return 4
    if isinstance(out, ResultRecord):
        print(json.dumps(out.results, indent=2, sort_keys=True))
    else:
        print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
