"""Estimator plumbing shared by the simulation modules.

Random streams are derived from ``(master_seed, stream_index)`` pairs so that
every chunk of replicates owns an independent, reproducible generator. The
derivation is::

    GOLDEN = 0x9E3779B97F4A7C15
    key0 = splitmix64(seed ^ (index * GOLDEN mod 2**64))
    key1 = splitmix64(index)
    stream = numpy.random.Generator(Philox(key=[key0, key1]))

``splitmix64`` is the 64-bit finalizer of Steele, Lea and Flood. The map
``(seed, index) -> (key0, key1)`` is a bijection on 64-bit pairs, so distinct
pairs never share a Philox key.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats as sps

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
THREADS_ENV = "CANNINGS_ASG_THREADS"


class ParameterError(ValueError):
    """Raised when a model or estimator receives invalid parameters."""


def splitmix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class StreamSpec:
    master_seed: int
    stream_index: int = 0


def derive_stream(spec: StreamSpec | int, index: int | None = None) -> np.random.Generator:
    """Return the Philox generator for ``(master_seed, stream_index)``.

    Accepts either a :class:`StreamSpec` or a bare seed plus ``index``.
    """
    if not isinstance(spec, StreamSpec):
        spec = StreamSpec(int(spec), 0 if index is None else int(index))
    seed = spec.master_seed & MASK64
    idx = spec.stream_index & MASK64
    key0 = splitmix64(seed ^ ((idx * GOLDEN) & MASK64))
    key1 = splitmix64(idx)
    return np.random.Generator(np.random.Philox(key=[key0, key1]))


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_indexed(fn: Callable[[int], Any], n_tasks: int, threads: int | None = None) -> list:
    """Evaluate ``fn(0..n_tasks-1)`` on a thread pool; results keep index order.

    Each task must draw only from streams derived from its own index, so the
    output does not depend on ``threads``.
    """
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or n_tasks <= 1:
        return [fn(i) for i in range(n_tasks)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_tasks)))


def chunk_sizes(total: int, chunk: int) -> list[int]:
    """Split ``total`` replicates into fixed-size chunks (last one shorter)."""
    if total <= 0:
        return []
    full, rest = divmod(total, chunk)
    return [chunk] * full + ([rest] if rest else [])


@dataclass
class EstimatorResult:
    """Monte Carlo point estimate with its uncertainty.

    ``method`` is one of ``"wilson"``, ``"normal"``, ``"batch-means"`` or
    ``"exact"``. ``details`` carries estimator-specific diagnostics such as
    censoring counts or equilibrium flags.
    """

    point: float
    stderr: float
    ci95: tuple[float, float]
    replicates: int
    seed: int | None
    method: str
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.ci95
        if self.stderr < 0 or not (lo <= self.point <= hi):
            raise ParameterError(f"inconsistent estimate: {self}")

    def as_row(self) -> dict:
        return {
            "estimate": self.point,
            "stderr": self.stderr,
            "ci_lo": self.ci95[0],
            "ci_hi": self.ci95[1],
            "replicates": self.replicates,
            "seed": self.seed,
            "method": self.method,
        }


def _z(level: float) -> float:
    return float(sps.norm.ppf(0.5 + level / 2.0))


def wilson_interval(successes: int, trials: int, level: float = 0.95,
                    seed: int | None = None) -> EstimatorResult:
    if trials < 1 or not 0 <= successes <= trials:
        raise ParameterError("need 0 <= successes <= trials and trials >= 1")
    n = float(trials)
    p = successes / n
    z = _z(level)
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    lo, hi = max(0.0, center - half), min(1.0, center + half)
    # guard the endpoints against rounding
    lo, hi = min(lo, p), max(hi, p)
    return EstimatorResult(p, math.sqrt(p * (1 - p) / n), (lo, hi), trials, seed, "wilson")


def normal_estimate(samples: np.ndarray, seed: int | None = None,
                    level: float = 0.95) -> EstimatorResult:
    x = np.asarray(samples, dtype=float)
    if x.size < 1:
        raise ParameterError("need at least one sample")
    mean = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    z = _z(level)
    return EstimatorResult(mean, se, (mean - z * se, mean + z * se), int(x.size), seed, "normal")


def batch_means_stderr(samples: np.ndarray | Sequence[np.ndarray], n_batches: int = 32) -> float:
    """Standard error of the grand mean from non-overlapping batch means.

    ``samples`` may be one chain or a list of chains; in the latter case the
    batches are split evenly across chains and never straddle two chains.
    """
    if isinstance(samples, np.ndarray) and samples.ndim == 1:
        chains = [samples]
    else:
        chains = [np.asarray(c, dtype=float) for c in samples]
    per_chain = max(1, n_batches // len(chains))
    means = []
    for c in chains:
        c = np.asarray(c, dtype=float)
        if c.size < 2 * per_chain:
            raise ParameterError(
                f"batch means need >= {2 * per_chain} samples per chain, got {c.size}")
        size = c.size // per_chain
        trimmed = c[c.size - size * per_chain:]
        means.append(trimmed.reshape(per_chain, size).mean(axis=1))
    bm = np.concatenate(means)
    if bm.size < 2:
        raise ParameterError("need at least two batches")
    return float(bm.std(ddof=1) / math.sqrt(bm.size))


def ks_statistic(samples: np.ndarray, reference_cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """Sup-norm distance between the empirical CDF of ``samples`` and a
    continuous reference CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise ParameterError("samples must be nonempty")
    f = np.asarray(reference_cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_two_sample(a: np.ndarray, b: np.ndarray) -> float:
    return float(sps.ks_2samp(np.asarray(a), np.asarray(b)).statistic)


@dataclass(frozen=True)
class NormalityCheck:
    ks: float
    passed: bool
    mu: float
    sigma: float


def normality_check_casp(samples: np.ndarray, n_pop: int, s: float, rho2: float,
                         threshold: float = 0.05) -> NormalityCheck:
    """KS distance of standardized equilibrium ancestor counts to N(0, 1).

    Centering uses ``p = s / (rho2/2 + s)``, ``mu = N p`` and
    ``sigma**2 = N p (1 - p)``.
    """
    p = s / (rho2 / 2.0 + s)
    mu = n_pop * p
    sigma = math.sqrt(n_pop * p * (1 - p))
    z = (np.asarray(samples, dtype=float) - mu) / sigma
    ks = ks_statistic(z, sps.norm.cdf)
    return NormalityCheck(ks, ks < threshold, mu, sigma)


def tv_distance(pmf_a: np.ndarray, pmf_b: np.ndarray) -> float:
    a = np.asarray(pmf_a, dtype=float)
    b = np.asarray(pmf_b, dtype=float)
    if a.shape != b.shape:
        raise ParameterError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if abs(a.sum() - 1) > 1e-9 or abs(b.sum() - 1) > 1e-9:
        raise ParameterError("both vectors must sum to 1 within 1e-9")
    return float(0.5 * np.abs(a - b).sum())


def chisquare_pvalue(observed: np.ndarray, expected_probs: np.ndarray) -> float:
    """Pearson goodness-of-fit p-value; the last cell should absorb the tail."""
    obs = np.asarray(observed, dtype=float)
    exp = np.asarray(expected_probs, dtype=float) * obs.sum()
    return float(sps.chisquare(obs, exp).pvalue)
