"""Cannings ancestral selection process (CASP).

One step from ``a`` potential ancestors: every lineage branches into a
Geom(1-s) number of potential parents (``H`` in total, negative binomial),
then the ``H`` branches are thrown into ``N`` boxes with probabilities given
by a fresh paintbox vector; the new state is the number of occupied boxes.

The equilibrium mean divided by ``N`` is the fixation probability of a single
beneficial mutant, which :func:`estimate_fixation_dual` exploits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kern
from .paintbox import PopulationParams, check_weight_vector, sample_weights
from .stats import (EstimatorResult, ParameterError, batch_means_stderr, chunk_sizes,
                    derive_stream, run_indexed)

# stream indices >= this are reserved for the two-start diagnostic chains
DIAG_STREAM = 1 << 32
CHUNK = 4096


def branching_step(a: int, s: float, rng: np.random.Generator) -> int:
    """Total of ``a`` i.i.d. Geom(1-s) counts on {1, 2, ...}."""
    if a < 1 or not 0 <= s < 1:
        raise ParameterError("need a >= 1 and 0 <= s < 1")
    if s == 0:
        return a
    u = 1.0 - rng.random(a)
    g = np.maximum(np.ceil(np.log(u) / math.log(s)), 1)
    return int(g.sum())


def coalescence_step(h: int, w: np.ndarray, rng: np.random.Generator) -> int:
    """Number of distinct boxes hit by ``h`` independent throws with law ``w``."""
    if h < 1:
        raise ParameterError("h must be >= 1")
    w = check_weight_vector(w)
    cum = np.cumsum(w)
    cum[-1] = 1.0
    boxes = np.searchsorted(cum, rng.random(h), side="left")
    return len(set(boxes.tolist()))


def coalescence_counts(h: int, params: PopulationParams, replicates: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Many independent :func:`coalescence_step` draws, each with fresh weights."""
    if h < 1 or replicates < 1:
        raise ParameterError("need h >= 1 and replicates >= 1")
    mode, p1, p2 = kern.encode_model(params.weights)
    return kern.coalesce_many(rng, h, replicates, params.n_pop, mode, p1, p2)


def step_casp(a: int, params: PopulationParams, rng: np.random.Generator) -> int:
    if not 1 <= a <= params.n_pop:
        raise ParameterError(f"a={a} outside [1, {params.n_pop}]")
    h = branching_step(a, params.s, rng)
    return coalescence_step(h, sample_weights(params.weights, params.n_pop, rng), rng)


@dataclass
class CaspParams:
    """Run-length controls for equilibrium sampling.

    ``None`` entries take the defaults ``burn_in = ceil(20 ln(N) / s)`` and
    ``thinning = ceil(1 / s)``; with ``s = 0`` both fall back to small values
    since the chain is absorbed at 1.
    """

    pop: PopulationParams
    burn_in: int | None = None
    thinning: int | None = None
    n_samples: int = 1000
    n_chains: int = 1
    diag_samples: int = 500

    def __post_init__(self):
        s, n = self.pop.s, self.pop.n_pop
        if self.burn_in is None:
            self.burn_in = math.ceil(20 * math.log(n) / s) if s > 0 else math.ceil(20 * math.log(n))
        if self.thinning is None:
            self.thinning = math.ceil(1 / s) if s > 0 else 1
        if self.burn_in < 0 or self.thinning < 1 or self.n_samples < 1 or self.n_chains < 1:
            raise ParameterError("need burn_in >= 0, thinning >= 1, n_samples >= 1, n_chains >= 1")

    @property
    def start_state(self) -> int:
        p = self.pop
        return min(max(math.ceil(2 * p.n_pop * p.s / p.rho2), 1), p.n_pop)


@dataclass
class CaspEquilibriumSample:
    values: np.ndarray
    chains: list[np.ndarray]
    diagnostics: dict = field(default_factory=dict)

    @property
    def flagged(self) -> bool:
        return bool(self.diagnostics.get("flagged", False))


def _chain(cfg: CaspParams, rng, a0: int, n_samples: int) -> np.ndarray:
    p = cfg.pop
    mode, p1, p2 = kern.encode_model(p.weights)
    return kern.casp_chain(rng, a0, cfg.burn_in, cfg.thinning, n_samples, p.n_pop, p.s,
                           mode, p1, p2)


def sample_equilibrium(cfg: CaspParams, seed: int = 0,
                       threads: int | None = None) -> CaspEquilibriumSample:
    """Thinned draws approximating the stationary law of the CASP.

    ``cfg.n_chains`` chains start at ``ceil(2 N s / rho2)`` (clamped to
    ``[1, N]``), chain ``c`` on stream ``(seed, c)``; their records are
    concatenated in chain order. Two extra chains started at 1 and at N run
    the same burn-in and ``diag_samples`` records; a relative gap above 5%
    between their means sets ``diagnostics["flagged"]``.
    """
    n_chains = cfg.n_chains
    per = chunk_sizes(cfg.n_samples, math.ceil(cfg.n_samples / n_chains))
    starts = [cfg.start_state] * len(per) + [1, cfg.pop.n_pop]
    lengths = per + [cfg.diag_samples, cfg.diag_samples]
    streams = list(range(len(per))) + [DIAG_STREAM, DIAG_STREAM + 1]

    def work(i):
        return _chain(cfg, derive_stream(seed, streams[i]), starts[i], lengths[i])

    runs = run_indexed(work, len(starts), threads)
    chains = runs[:-2]
    low, high = float(runs[-2].mean()), float(runs[-1].mean())
    rel = abs(high - low) / max(0.5 * (high + low), 1e-300)
    diag = {"start_low_mean": low, "start_high_mean": high, "relative_gap": rel,
            "flagged": bool(rel > 0.05)}
    return CaspEquilibriumSample(np.concatenate(chains), chains, diag)


def estimate_fixation_dual(cfg: CaspParams, seed: int = 0, threads: int | None = None,
                           n_batches: int = 32) -> EstimatorResult:
    """Fixation probability of one beneficial mutant as ``E[A_eq] / N``."""
    sample = sample_equilibrium(cfg, seed, threads)
    n = cfg.pop.n_pop
    point = float(sample.values.mean()) / n
    if np.all(sample.values == sample.values[0]):
        se = 0.0
    else:
        # fewer batches when chains are short; at least two per chain
        shortest = min(c.size for c in sample.chains)
        per = max(1, min(n_batches // len(sample.chains), shortest // 2))
        if per * len(sample.chains) < 2:
            raise ParameterError("too few equilibrium samples for a standard error")
        se = batch_means_stderr(sample.chains, per * len(sample.chains)) / n
    ci = (point - 1.959963984540054 * se, point + 1.959963984540054 * se)
    return EstimatorResult(point, se, ci, int(sample.values.size), seed, "batch-means",
                           dict(sample.diagnostics))


def casp_after(params: PopulationParams, a0: int, m: int, replicates: int,
               rng: np.random.Generator) -> np.ndarray:
    """``A_m`` for ``replicates`` independent chains from ``a0`` on one stream."""
    mode, p1, p2 = kern.encode_model(params.weights)
    return kern.casp_after(rng, a0, m, replicates, params.n_pop, params.s, mode, p1, p2)


def sample_casp_after(params: PopulationParams, a0: int, m: int, replicates: int,
                      seed: int = 0, threads: int | None = None) -> np.ndarray:
    """``A_m`` for independent chains started at ``a0``, chunked over streams."""
    sizes = chunk_sizes(replicates, CHUNK)

    def work(c):
        return casp_after(params, a0, m, sizes[c], derive_stream(seed, c))

    return np.concatenate(run_indexed(work, len(sizes), threads))


def one_step_pmf_empirical(k: int, params: PopulationParams, replicates: int,
                           rng: np.random.Generator) -> dict[int, float]:
    """Empirical law of the jump ``A_{m+1} - k`` given ``A_m = k``."""
    if not 1 <= k <= params.n_pop or replicates < 1:
        raise ParameterError("need 1 <= k <= N and replicates >= 1")
    mode, p1, p2 = kern.encode_model(params.weights)
    nxt = kern.casp_after(rng, k, 1, replicates, params.n_pop, params.s, mode, p1, p2)
    jumps, counts = np.unique(nxt - k, return_counts=True)
    return {int(d): c / replicates for d, c in zip(jumps, counts)}


@dataclass(frozen=True)
class TransitionReference:
    """Moran-like one-step probabilities and their error allowance."""

    p_stay: float
    p_up: float
    p_down: float
    error_budget: float


def jump_rate_reference(k: int, n_pop: int, s: float, rho2: float,
                        c_err: float = 10.0) -> TransitionReference:
    if not 1 <= k <= n_pop:
        raise ParameterError("need 1 <= k <= N")
    up = k * s
    down = k * (k - 1) / 2 * rho2 / n_pop
    budget = c_err * (k * k * s * s + k ** 4 / n_pop ** 2)
    return TransitionReference(1 - up - down, up, down, budget)
