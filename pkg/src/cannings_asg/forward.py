"""Forward Cannings frequency process under directional selection.

``K_g`` counts wildtype individuals. Given ``K_{g-1} = k`` and a fresh weight
vector ``W``, ``K_g`` is Binomial(N, P(k, W)). The beneficial type fixes when
``K`` hits 0; a single beneficial mutant is ``k0 = N - 1``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as kern
from .paintbox import PopulationParams, check_weight_vector, sample_weights
from .stats import (EstimatorResult, ParameterError, chunk_sizes, derive_stream,
                    run_indexed, wilson_interval)

CHUNK = 4096


class Outcome(enum.Enum):
    BENEFICIAL_FIXED = "beneficial-fixed"
    BENEFICIAL_LOST = "beneficial-lost"
    CENSORED = "censored"


@dataclass(frozen=True)
class AbsorptionOutcome:
    state: Outcome
    generations: int


def wildtype_success_prob(k: int, w: np.ndarray, s: float) -> float:
    """Probability that a child picks a wildtype parent.

    The first ``k`` entries of ``w`` belong to wildtype parents, whose weight
    is scaled by ``1 - s``.
    """
    w = check_weight_vector(w)
    n = w.size
    if not 0 <= k <= n:
        raise ParameterError(f"k={k} outside [0, {n}]")
    if not 0 <= s < 1:
        raise ParameterError("need 0 <= s < 1")
    if k == 0:
        return 0.0
    if k == n:
        return 1.0
    wild = (1 - s) * w[:k].sum()
    return float(wild / (wild + w[k:].sum()))


def step_frequency(k: int, params: PopulationParams, rng: np.random.Generator) -> int:
    n = params.n_pop
    if not 0 <= k <= n:
        raise ParameterError(f"k={k} outside [0, {n}]")
    if k in (0, n):
        return k
    w = sample_weights(params.weights, n, rng)
    return int(rng.binomial(n, wildtype_success_prob(k, w, params.s)))


def default_max_gens(params: PopulationParams) -> int:
    n = params.n_pop
    return int(math.ceil(50 * n / max(params.s, 1.0 / n)))


def run_to_absorption(params: PopulationParams, k0: int, max_gens: int | None,
                      rng: np.random.Generator) -> AbsorptionOutcome:
    n = params.n_pop
    if not 0 <= k0 <= n:
        raise ParameterError(f"k0={k0} outside [0, {n}]")
    max_gens = default_max_gens(params) if max_gens is None else max_gens
    if max_gens < 1:
        raise ParameterError("max_gens must be >= 1")
    k, g = k0, 0
    while 0 < k < n and g < max_gens:
        k = step_frequency(k, params, rng)
        g += 1
    if k == 0:
        return AbsorptionOutcome(Outcome.BENEFICIAL_FIXED, g)
    if k == n:
        return AbsorptionOutcome(Outcome.BENEFICIAL_LOST, g)
    return AbsorptionOutcome(Outcome.CENSORED, g)


def estimate_fixation_forward(params: PopulationParams, k0: int, replicates: int,
                              max_gens: int | None = None, seed: int = 0,
                              threads: int | None = None) -> EstimatorResult:
    """Wilson estimate of P(beneficial type fixes | K_0 = k0) by direct runs.

    Replicates are split into chunks of 4096; chunk ``c`` uses the stream
    ``(seed, c)``, so the result does not depend on ``threads``. Censored runs
    are excluded from the denominator and reported in ``details``; more than
    1% censoring marks the result unreliable.
    """
    n = params.n_pop
    if replicates < 1:
        raise ParameterError("replicates must be >= 1")
    if not 0 <= k0 <= n:
        raise ParameterError(f"k0={k0} outside [0, {n}]")
    max_gens = default_max_gens(params) if max_gens is None else int(max_gens)
    mode, p1, p2 = kern.encode_model(params.weights)
    sizes = chunk_sizes(replicates, CHUNK)

    def work(c):
        rng = derive_stream(seed, c)
        codes, _ = kern.frequency_absorb(rng, k0, sizes[c], max_gens, n, params.s,
                                         mode, p1, p2)
        return np.bincount(codes, minlength=3)

    counts = np.sum(run_indexed(work, len(sizes), threads), axis=0)
    fixed, lost, censored = (int(c) for c in counts)
    decided = fixed + lost
    if decided == 0:
        raise ParameterError("every replicate was censored; raise max_gens")
    res = wilson_interval(fixed, decided, seed=seed)
    res.replicates = replicates
    res.details.update(censored=censored, fixed=fixed, lost=lost,
                       unreliable=censored > 0.01 * replicates)
    return res


def frequency_after(params: PopulationParams, k0: int, g: int, replicates: int,
                    rng: np.random.Generator) -> np.ndarray:
    """``K_g`` for ``replicates`` independent runs from ``k0`` on one stream."""
    mode, p1, p2 = kern.encode_model(params.weights)
    return kern.frequency_after(rng, k0, g, replicates, params.n_pop, params.s, mode, p1, p2)


def sample_frequency_after(params: PopulationParams, k0: int, g: int, replicates: int,
                           seed: int = 0, threads: int | None = None) -> np.ndarray:
    """``K_g`` for independent runs started at ``k0``, chunked over streams."""
    sizes = chunk_sizes(replicates, CHUNK)

    def work(c):
        return frequency_after(params, k0, g, sizes[c], derive_stream(seed, c))

    return np.concatenate(run_indexed(work, len(sizes), threads))
