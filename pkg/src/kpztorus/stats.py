"""Monte-Carlo result records and small statistical helpers."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np


@dataclass
class Estimate:
    """A Monte-Carlo estimate with its sampling error and provenance."""

    value: float
    stderr: float
    n: int
    seed: int | None = None
    runtime_s: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("an Estimate needs at least 2 samples")

    def agrees_with(self, other, k: float = 3.0) -> bool:
        """|difference| within k combined standard errors."""
        if isinstance(other, Estimate):
            tol = k * np.hypot(self.stderr, other.stderr)
            return abs(self.value - other.value) <= tol
        return abs(self.value - float(other)) <= k * self.stderr

    def to_dict(self) -> dict:
        return asdict(self)


def mc_estimate(samples, seed=None, runtime_s=0.0, **extra) -> Estimate:
    """Sample mean with stderr = sample-std/sqrt(n)."""
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise ValueError("need at least 2 samples")
    return Estimate(
        value=float(np.mean(x)),
        stderr=float(np.std(x, ddof=1) / np.sqrt(n)),
        n=n,
        seed=seed,
        runtime_s=runtime_s,
        extra=dict(extra),
    )


def combine_means(values, stderrs, n_total, seed=None) -> Estimate:
    """Combine equally-weighted batch means into one Estimate.

    Batch means must be means of equally sized, independent batches; the
    stderr is computed across batches.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("need at least 2 batches")
    return Estimate(
        value=float(v.mean()),
        stderr=float(v.std(ddof=1) / np.sqrt(v.size)),
        n=int(n_total),
        seed=seed,
    )


class Stopwatch:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        return False
