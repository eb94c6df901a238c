"""Monte Carlo experiments on mutual nearest neighbors and peeled intervals.

For i.i.d. samples in R^d the probability that a point is its nearest
neighbor's nearest neighbor tends to b(d), the ratio of the volume of one unit
ball to the volume of the union of two unit balls at center distance one. Half
of that, c(d) = b(d)/2, lower-bounds the expected fraction of interval
summands. The trial harness estimates both fractions on seeded samples and
compares them against the closed form.

Reports are byte-stable for a fixed master seed: trials own independent
spawned RNG streams, aggregation folds in trial order no matter how trials
were scheduled, and wall-clock timings stay out of the rendered output.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .rooted import nn_graph, peel_all
from .space import AugmentedMetricSpace, attach_density

_BETA_EPS = 1e-15
_BETA_FPMIN = 1e-300
_BETA_MAXIT = 500


class ConvergenceError(ArithmeticError):
    """Continued fraction failed to converge (parameters far out of range)."""


def _beta_cont_frac(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function, modified Lentz."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETA_FPMIN:
        d = _BETA_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_FPMIN:
            d = _BETA_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETA_FPMIN:
            c = _BETA_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_FPMIN:
            d = _BETA_FPMIN
        c = 1.0 + aa / c
        if abs(c) < _BETA_FPMIN:
            c = _BETA_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise ConvergenceError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) by continued fractions, switching tails for stability."""
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    front = math.exp(
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cont_frac(a, b, x) / a
    return 1.0 - front * _beta_cont_frac(b, a, 1.0 - x) / b


def b_constant(d: int) -> float:
    """Limit probability that a point is mutual nearest neighbor, dimension d.

    The intersection of two unit balls at center distance one consists of two
    caps of height one half, each a fraction I_{3/4}((d+1)/2, 1/2) / 2 of the
    ball, so ball/union = 1 / (2 - I_{3/4}((d+1)/2, 1/2)).
    """
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise ValueError("dimension must be a positive integer")
    cap2 = regularized_incomplete_beta((d + 1) / 2.0, 0.5, 0.75)
    return 1.0 / (2.0 - cap2)


def c_constant(d: int) -> float:
    """Lower bound on the limiting interval fraction: half of b(d)."""
    return b_constant(d) / 2.0


# -- samplers ------------------------------------------------------------------


@dataclass(frozen=True)
class SamplerConfig:
    """Point sampler: "uniform" in the unit cube, or a "mixture" of Gaussians
    around peaks drawn uniformly in the cube."""

    kind: str
    dim: int
    peaks: int = 5
    spread: float = 0.05

    def __post_init__(self):
        if self.kind not in ("uniform", "mixture"):
            raise ValueError(f"unknown sampler kind: {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dimension must be at least 1")
        if self.kind == "mixture" and (self.peaks < 1 or self.spread <= 0):
            raise ValueError("mixture needs at least one peak and positive spread")


def _sample_with_rng(config: SamplerConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("need at least one point")
    if config.kind == "uniform":
        return rng.random((n, config.dim))
    centers = rng.random((config.peaks, config.dim))
    which = rng.integers(0, config.peaks, size=n)
    return centers[which] + rng.normal(0.0, config.spread, size=(n, config.dim))


def sample(config: SamplerConfig, n: int, seed) -> np.ndarray:
    """Seed-deterministic point sample."""
    return _sample_with_rng(config, n, np.random.default_rng(seed))


# -- trials ---------------------------------------------------------------------


@dataclass(frozen=True)
class TrialResult:
    trial: int
    n: int
    dim: int
    sampler: str
    density_mode: str
    mutual_pair_count: int
    peeled_interval_count: int
    elapsed_s: float

    @property
    def mutual_fraction(self) -> float:
        return 2.0 * self.mutual_pair_count / self.n

    @property
    def peeled_fraction(self) -> float:
        return self.peeled_interval_count / self.n


def _density_for(space: AugmentedMetricSpace, mode: str, rng, bandwidth) -> AugmentedMetricSpace:
    if mode == "kde":
        return attach_density(space, "kde", bandwidth=bandwidth)
    if mode == "random":
        return attach_density(space, "random", seed=rng)
    if mode == "explicit":
        # the sampling model's analog of a known flat density
        return space.with_density(np.zeros(space.n))
    raise ValueError(f"unknown density mode: {mode!r}")


def _run_one_trial(args) -> TrialResult:
    (trial, config, density_mode, n, seed_seq, bandwidth, max_bytes) = args
    rng = np.random.default_rng(seed_seq)
    pts = _sample_with_rng(config, n, rng)
    space = _density_for(AugmentedMetricSpace(points=pts), density_mode, rng, bandwidth)
    t0 = time.perf_counter()
    pairs = len(nn_graph(space).mutual_pairs) if n >= 2 else 0
    trace = peel_all(space, max_bytes=max_bytes)
    elapsed = time.perf_counter() - t0
    return TrialResult(
        trial=trial,
        n=n,
        dim=config.dim,
        sampler=config.kind,
        density_mode=density_mode,
        mutual_pair_count=pairs,
        peeled_interval_count=len(trace),
        elapsed_s=elapsed,
    )


def _job_count(trials: int, n_jobs: Optional[int]) -> int:
    cap = os.environ.get("ROOTPEEL_THREADS")
    cap = int(cap) if cap else (os.cpu_count() or 1)
    if n_jobs is None:
        n_jobs = cap
    return max(1, min(n_jobs, cap, trials))


@dataclass
class ExperimentReport:
    config: dict
    trials: List[TrialResult]

    @property
    def mean_mutual_fraction(self) -> float:
        return float(np.mean([t.mutual_fraction for t in self.trials]))

    @property
    def se_mutual_fraction(self) -> float:
        vals = [t.mutual_fraction for t in self.trials]
        if len(vals) < 2:
            return 0.0
        return float(np.std(vals, ddof=1) / math.sqrt(len(vals)))

    @property
    def mean_peeled_fraction(self) -> float:
        return float(np.mean([t.peeled_fraction for t in self.trials]))

    @property
    def min_peeled_fraction(self) -> float:
        return float(np.min([t.peeled_fraction for t in self.trials]))

    def to_csv(self) -> str:
        lines = [
            "trial,n,d,sampler,density_mode,mutual_pairs,mutual_fraction,"
            "peeled_intervals,peeled_fraction,decomposable_certificate"
        ]
        for t in self.trials:
            cert = "yes" if t.peeled_interval_count == t.n else "no"
            lines.append(
                f"{t.trial},{t.n},{t.dim},{t.sampler},{t.density_mode},"
                f"{t.mutual_pair_count},{t.mutual_fraction!r},"
                f"{t.peeled_interval_count},{t.peeled_fraction!r},{cert}"
            )
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        d = self.config["dim"]
        return {
            "config": self.config,
            "trials": len(self.trials),
            "mean_mutual_fraction": self.mean_mutual_fraction,
            "se_mutual_fraction": self.se_mutual_fraction,
            "mean_peeled_fraction": self.mean_peeled_fraction,
            "min_peeled_fraction": self.min_peeled_fraction,
            "b_reference": b_constant(d),
            "c_reference": c_constant(d),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


def run_trials(
    config: SamplerConfig,
    density_mode: str,
    n: int,
    trials: int,
    seed: int,
    n_jobs: Optional[int] = None,
    kde_bandwidth=None,
    max_bytes: int = 512 * 1024 * 1024,
) -> ExperimentReport:
    """Run seeded independent trials; aggregation is order-deterministic."""
    if trials < 1:
        raise ValueError("need at least one trial")
    seqs = np.random.SeedSequence(seed).spawn(trials)
    jobs = [
        (k, config, density_mode, n, seqs[k], kde_bandwidth, max_bytes)
        for k in range(trials)
    ]
    workers = _job_count(trials, n_jobs)
    if workers == 1:
        results = [_run_one_trial(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one_trial, jobs))
    results.sort(key=lambda t: t.trial)
    cfg = {
        "sampler": config.kind,
        "dim": config.dim,
        "peaks": config.peaks,
        "spread": config.spread,
        "density_mode": density_mode,
        "n": n,
        "trials": trials,
        "seed": seed,
    }
    return ExperimentReport(config=cfg, trials=results)


def table1_replica(
    config: SamplerConfig,
    density_mode: str,
    n: int,
    runs: int = 5,
    seed: int = 0,
    n_jobs: Optional[int] = None,
    max_bytes: int = 512 * 1024 * 1024,
) -> ExperimentReport:
    """Peeled-interval counts for a batch of runs in one table row.

    The counts are certified lower bounds for the number of intervals in the
    full decomposition, not the full decomposition itself; the certificate
    column fires exactly when the count reaches n, which proves the module
    interval-decomposable.
    """
    return run_trials(
        config, density_mode, n, trials=runs, seed=seed, n_jobs=n_jobs, max_bytes=max_bytes
    )
