"""Graphical construction of the Cannings ancestral selection graph.

Every individual ``(j, g)`` owns a sequence of uniform picks in the unit
square. The vertical axis is cut into stripes of heights ``W^(g-1)`` (one per
parent); the horizontal axis into ``[0, 1-s]`` and ``(1-s, 1]``.

* Forward: the parent is the stripe of the first pick that lands either in a
  beneficial stripe or left of ``1-s``; the child copies the parent's type.
* Backward: ``G(j, g)`` is the index of the first pick left of ``1-s``; all
  stripes hit by picks ``1..G`` are potential parents.

Both passes read the same stored picks, so the event "sample ``J`` at
generation ``g`` is all wildtype" coincides realisation by realisation with
"all potential ancestors of ``J`` in generation 0 are wildtype".

Individuals are indexed ``0..N-1``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kern
from .casp import casp_after
from .exact import falling_ratio
from .forward import frequency_after
from .paintbox import PopulationParams, dirichlet_alpha, is_uniform, sample_weights
from .stats import (EstimatorResult, ParameterError, chunk_sizes, derive_stream,
                    normal_estimate, run_indexed, wilson_interval)

MAX_N = 1000
MAX_G = 1000
CHUNK = 4096


@dataclass
class GraphicalRealization:
    """Stored randomness and derived genealogy of one run.

    Lists are indexed by ``g - 1`` for the step from generation ``g - 1`` to
    ``g``; ``wildtype`` is indexed by ``g`` itself (``0..g_max``). Picks of
    child ``j`` at step ``g`` are ``picks_*[g-1][offsets[g-1][j]:offsets[g-1][j+1]]``.
    """

    n_pop: int
    s: float
    g_max: int
    weights: list[np.ndarray] = field(default_factory=list)
    offsets: list[np.ndarray] = field(default_factory=list)
    picks_x: list[np.ndarray] = field(default_factory=list)
    picks_y: list[np.ndarray] = field(default_factory=list)
    picks_box: list[np.ndarray] = field(default_factory=list)
    counts: list[np.ndarray] = field(default_factory=list)
    gammas: list[np.ndarray] = field(default_factory=list)
    parents: list[np.ndarray] = field(default_factory=list)
    wildtype: list[np.ndarray] = field(default_factory=list)

    def wildtype_set(self, g: int) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.wildtype[g]).tolist())

    def potential_parents(self, j: int, g: int) -> np.ndarray:
        off = self.offsets[g - 1]
        return self.picks_box[g - 1][off[j]:off[j + 1]]

    def to_json(self, path) -> None:
        """Write the full realisation as JSON for manual audit."""
        gens = []
        for i in range(self.g_max):
            off = self.offsets[i]
            gens.append({
                "generation": i + 1,
                "parent_weights": self.weights[i].tolist(),
                "children": [{
                    "j": j,
                    "picks": [[float(x), float(y), int(b)] for x, y, b in zip(
                        self.picks_x[i][off[j]:off[j + 1]],
                        self.picks_y[i][off[j]:off[j + 1]],
                        self.picks_box[i][off[j]:off[j + 1]])],
                    "G": int(self.counts[i][j]),
                    "gamma": int(self.gammas[i][j]),
                    "parent": int(self.parents[i][j]),
                } for j in range(self.n_pop)],
            })
        doc = {"n_pop": self.n_pop, "s": self.s, "g_max": self.g_max,
               "wildtype": [np.flatnonzero(w).tolist() for w in self.wildtype],
               "generations": gens}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)


def simulate_graphical(params: PopulationParams, g_max: int, initial_wildtype,
                       rng: np.random.Generator) -> GraphicalRealization:
    n, s = params.n_pop, params.s
    if g_max < 1:
        raise ParameterError("g_max must be >= 1")
    if n > MAX_N or g_max > MAX_G:
        raise ParameterError(f"realisations limited to N <= {MAX_N}, g <= {MAX_G}")
    if not 0 <= s < 1:
        raise ParameterError("need 0 <= s < 1; s = 1 never ends a pick sequence")
    wild = np.zeros(n, dtype=np.bool_)
    init = np.fromiter(initial_wildtype, dtype=np.int64)
    if init.size and (init.min() < 0 or init.max() >= n):
        raise ParameterError("initial wildtype indices must lie in [0, N)")
    wild[init] = True
    real = GraphicalRealization(n, s, g_max, wildtype=[wild])
    cap = max(16, int(2 * n / (1 - s)) + 16)
    for _ in range(g_max):
        w = sample_weights(params.weights, n, rng)
        cum = np.cumsum(w)
        cum[-1] = 1.0
        offsets = np.empty(n + 1, dtype=np.int64)
        counts = np.empty(n, dtype=np.int64)
        gammas = np.empty(n, dtype=np.int64)
        parents = np.empty(n, dtype=np.int64)
        nxt = np.empty(n, dtype=np.bool_)
        px, py, pb, used = kern.graphical_generation(
            rng, cum, real.wildtype[-1], s, np.empty(cap), np.empty(cap),
            np.empty(cap, dtype=np.int64), offsets, counts, gammas, parents, nxt)
        real.weights.append(w)
        real.offsets.append(offsets)
        real.picks_x.append(px[:used].copy())
        real.picks_y.append(py[:used].copy())
        real.picks_box.append(pb[:used].copy())
        real.counts.append(counts)
        real.gammas.append(gammas)
        real.parents.append(parents)
        real.wildtype.append(nxt)
    return real


def extract_ancestors(real: GraphicalRealization, sample, g: int) -> list[frozenset[int]]:
    """Potential-ancestor sets ``A_0 = sample, A_1, ..., A_g`` of a sample
    taken in generation ``g``; ``A_m`` lives in generation ``g - m``."""
    if not 0 <= g <= real.g_max:
        raise ParameterError(f"g={g} outside [0, {real.g_max}]")
    current = frozenset(int(j) for j in sample)
    if any(not 0 <= j < real.n_pop for j in current):
        raise ParameterError("sample indices must lie in [0, N)")
    out = [current]
    for m in range(g):
        gen = g - m
        off = real.offsets[gen - 1]
        boxes = real.picks_box[gen - 1]
        nxt = set()
        for j in current:
            nxt.update(boxes[off[j]:off[j + 1]].tolist())
        current = frozenset(nxt)
        out.append(current)
    return out


def pathwise_duality_assert(real: GraphicalRealization, sample, g: int) -> bool:
    """Whether ``{J all wildtype at g}`` and ``{A_g(J) all wildtype at 0}``
    agree in this realisation. Any False is a bug."""
    sample = frozenset(int(j) for j in sample)
    forward = sample <= real.wildtype_set(g)
    backward = extract_ancestors(real, sample, g)[-1] <= real.wildtype_set(0)
    return forward == backward


@dataclass
class PathwiseSummary:
    realizations: int
    failures: int
    failing: list = field(default_factory=list)


def run_pathwise_checks(params: PopulationParams, g: int, replicates: int, seed: int = 0,
                        threads: int | None = None, keep_failures: int = 3) -> PathwiseSummary:
    """Check the pathwise identity on independent realisations.

    Realisation ``r`` uses stream ``(seed, r)``; its initial wildtype set and
    sample ``J`` are uniform subsets of random size.
    """
    n = params.n_pop

    def work(r):
        rng = derive_stream(seed, r)
        k = int(rng.integers(0, n + 1))
        init = rng.choice(n, size=k, replace=False)
        size = int(rng.integers(1, n + 1))
        sample = rng.choice(n, size=size, replace=False)
        real = simulate_graphical(params, g, init, rng)
        ok = all(pathwise_duality_assert(real, sample, gg) for gg in range(1, g + 1))
        return None if ok else (r, real, sample)

    bad = [x for x in run_indexed(work, replicates, threads) if x is not None]
    return PathwiseSummary(replicates, len(bad), bad[:keep_failures])


@dataclass(frozen=True)
class DualityEstimate:
    lhs: EstimatorResult
    rhs: EstimatorResult

    @property
    def combined_se(self) -> float:
        return float(np.hypot(self.lhs.stderr, self.rhs.stderr))

    @property
    def z_score(self) -> float:
        d = self.lhs.point - self.rhs.point
        se = self.combined_se
        return 0.0 if d == 0 else (float("inf") if se == 0 else d / se)


def _check_kn(params, k, n, g):
    if not (1 <= k <= params.n_pop and 1 <= n <= params.n_pop and g >= 0):
        raise ParameterError("need 1 <= k, n <= N and g >= 0")


def sampling_duality_mc(params: PopulationParams, k: int, n: int, g: int, replicates: int,
                        seed: int = 0, threads: int | None = None) -> DualityEstimate:
    """Monte Carlo estimates of both sides of the sampling duality.

    Left: run ``K`` forward ``g`` generations from ``k`` and check whether a
    fresh uniform ``n``-subset lies inside the wildtype set (the number of
    sampled wildtype individuals is hypergeometric). Right: run the CASP
    ``g`` steps from ``n`` and average ``(k)_A / (N)_A``. Chunk ``c`` draws
    from the streams ``(seed, 4c + i)``, ``i = 0..3``, one per random input.
    """
    _check_kn(params, k, n, g)
    big_n = params.n_pop
    if g == 0:
        v = float(falling_ratio(k, big_n, n))
        exact = EstimatorResult(v, 0.0, (v, v), replicates, seed, "exact")
        return DualityEstimate(exact, exact)
    sizes = chunk_sizes(replicates, CHUNK)

    def lhs_work(c):
        kg = frequency_after(params, k, g, sizes[c], derive_stream(seed, 4 * c))
        rng = derive_stream(seed, 4 * c + 1)
        hits = rng.hypergeometric(kg, big_n - kg, n) if n > 0 else np.zeros_like(kg)
        return int(np.count_nonzero(hits == n))

    def rhs_work(c):
        ag = casp_after(params, n, g, sizes[c], derive_stream(seed, 4 * c + 2))
        return falling_ratio(k, big_n, ag)

    hits = sum(run_indexed(lhs_work, len(sizes), threads))
    lhs = wilson_interval(hits, replicates, seed=seed)
    rhs = _mean_or_exact(np.concatenate(run_indexed(rhs_work, len(sizes), threads)), seed)
    return DualityEstimate(lhs, rhs)


def _mean_or_exact(x: np.ndarray, seed) -> EstimatorResult:
    if x.size > 1 and np.all(x == x[0]):
        v = float(x[0])
        return EstimatorResult(v, 0.0, (v, v), int(x.size), seed, "normal")
    return normal_estimate(x, seed)


def _wildtype_mass(params: PopulationParams, k: np.ndarray, rng) -> np.ndarray:
    """``sum_{i < k} W_i`` for one fresh weight vector per entry of ``k``."""
    n = params.n_pop
    k = np.asarray(k)
    if is_uniform(params.weights):
        return k / n
    alpha = dirichlet_alpha(params.weights)
    if alpha is not None:
        out = np.zeros(k.shape)
        inner = (k > 0) & (k < n)
        out[k >= n] = 1.0
        out[inner] = rng.beta(k[inner] * alpha, (n - k[inner]) * alpha)
        return out
    out = np.empty(k.shape)
    for i, kk in enumerate(k.ravel()):
        w = sample_weights(params.weights, n, rng)
        out.flat[i] = w[:kk].sum()
    return out


def _geom_sums(counts: np.ndarray, s: float, rng) -> np.ndarray:
    """Sum of ``counts[i]`` independent Geom(1-s) variables for each i."""
    counts = np.asarray(counts)
    if s == 0:
        return counts.astype(float)
    return counts + rng.negative_binomial(counts, 1 - s)


def moment_duality_mc(params: PopulationParams, k: int, n: int, g: int, replicates: int,
                      seed: int = 0, threads: int | None = None) -> DualityEstimate:
    """Both sides of the moment duality for ``g >= 1``.

    Left: ``E[(sum_{i<K_{g-1}} W_i)^(G_1+...+G_n)]`` with ``K`` run forward
    from ``k``. Right: ``E[(sum_{i<k} W_i)^(G_1+...+G_{A_{g-1}})]`` with the
    CASP run from ``n``. Both equal the probability that an ``n``-sample in
    generation ``g`` is all wildtype. Streams are assigned as in
    :func:`sampling_duality_mc`.
    """
    if g < 1:
        raise ParameterError("moment duality needs g >= 1")
    if not (0 <= k <= params.n_pop and 1 <= n <= params.n_pop):
        raise ParameterError("need 0 <= k <= N and 1 <= n <= N")
    sizes = chunk_sizes(replicates, CHUNK)

    def lhs_work(c):
        kg = frequency_after(params, k, g - 1, sizes[c], derive_stream(seed, 4 * c))
        rng = derive_stream(seed, 4 * c + 1)
        mass = _wildtype_mass(params, kg, rng)
        return mass ** _geom_sums(np.full(sizes[c], n), params.s, rng)

    def rhs_work(c):
        ag = casp_after(params, n, g - 1, sizes[c], derive_stream(seed, 4 * c + 2))
        rng = derive_stream(seed, 4 * c + 3)
        mass = _wildtype_mass(params, np.full(sizes[c], k), rng)
        return mass ** _geom_sums(ag, params.s, rng)

    lhs = np.concatenate(run_indexed(lhs_work, len(sizes), threads))
    rhs = np.concatenate(run_indexed(rhs_work, len(sizes), threads))
    return DualityEstimate(_mean_or_exact(lhs, seed), _mean_or_exact(rhs, seed))
