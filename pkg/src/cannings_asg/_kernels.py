"""Compiled inner loops.

All kernels draw exclusively from the ``numpy.random.Generator`` passed in,
so results are a deterministic function of the caller's stream. The paintbox
law is encoded as ``(mode, p1, p2)``:

* ``MODE_UNIFORM`` -- constant weights ``1/N``;
* ``MODE_DIRICHLET`` -- symmetric Dirichlet(``p1``); coalescence is simulated
  throw by throw through the equivalent Polya urn (weights integrated out);
* ``MODE_UNIFORM_Y`` -- ``Y ~ Uniform(p1, p2)`` normalised; weights are drawn
  explicitly each generation.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .paintbox import DirichletType, UniformY, WeightModel, dirichlet_alpha, is_uniform

MODE_UNIFORM = 0
MODE_DIRICHLET = 1
MODE_UNIFORM_Y = 2


def encode_model(model: WeightModel) -> tuple[int, float, float]:
    if is_uniform(model):
        return MODE_UNIFORM, 0.0, 0.0
    alpha = dirichlet_alpha(model)
    if alpha is not None:
        return MODE_DIRICHLET, float(alpha), 0.0
    if isinstance(model, DirichletType) and isinstance(model.y_law, UniformY):
        return MODE_UNIFORM_Y, model.y_law.a, model.y_law.b
    raise ValueError(f"no kernel encoding for {model!r}")


@njit(cache=True, nogil=True)
def geometric_inverse_cdf(rng, s):
    """Geom(1-s) on {1, 2, ...} via ceil(ln U / ln s)."""
    if s <= 0.0:
        return 1
    u = 1.0 - rng.random()  # (0, 1]
    g = math.ceil(math.log(u) / math.log(s))
    return g if g >= 1 else 1


@njit(cache=True, nogil=True)
def branch(rng, a, s):
    h = 0
    for _ in range(a):
        h += geometric_inverse_cdf(rng, s)
    return h


@njit(cache=True, nogil=True)
def _bisect_left(cum, y):
    lo, hi = 0, cum.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid] < y:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True, nogil=True)
def fill_uniform_y_cum(rng, n, a, b, cum):
    total = 0.0
    for i in range(n):
        total += rng.uniform(a, b)
        cum[i] = total
    for i in range(n):
        cum[i] /= total
    cum[n - 1] = 1.0


@njit(cache=True, nogil=True)
def coalesce(rng, h, n, mode, p1, p2, stamp, tag, cum):
    """Number of distinct boxes hit by ``h`` throws into ``n`` boxes.

    ``stamp`` is an int64 scratch array of length n whose entries are compared
    against ``tag`` (which must be fresh for every call) instead of clearing.
    """
    if mode == MODE_DIRICHLET:
        b = 0
        na = n * p1
        for i in range(h):
            if b == n:
                break
            if rng.random() * (na + i) < (n - b) * p1:
                b += 1
        return b
    b = 0
    if mode == MODE_UNIFORM:
        for _ in range(h):
            box = int(rng.random() * n)
            if box >= n:
                box = n - 1
            if stamp[box] != tag:
                stamp[box] = tag
                b += 1
        return b
    fill_uniform_y_cum(rng, n, p1, p2, cum)
    for _ in range(h):
        box = _bisect_left(cum, rng.random())
        if stamp[box] != tag:
            stamp[box] = tag
            b += 1
    return b


@njit(cache=True, nogil=True)
def casp_step(rng, a, n, s, mode, p1, p2, stamp, tag, cum):
    h = branch(rng, a, s)
    return coalesce(rng, h, n, mode, p1, p2, stamp, tag, cum)


@njit(cache=True, nogil=True)
def casp_chain(rng, a0, burn_in, thinning, n_samples, n, s, mode, p1, p2):
    """Run the ancestral chain and record every ``thinning``-th state."""
    stamp = np.full(n, -1, dtype=np.int64)
    cum = np.empty(n)
    out = np.empty(n_samples, dtype=np.int64)
    a = a0
    tag = 0
    for _ in range(burn_in):
        a = casp_step(rng, a, n, s, mode, p1, p2, stamp, tag, cum)
        tag += 1
    for i in range(n_samples):
        for _ in range(thinning):
            a = casp_step(rng, a, n, s, mode, p1, p2, stamp, tag, cum)
            tag += 1
        out[i] = a
    return out


@njit(cache=True, nogil=True)
def casp_after(rng, a0, m, reps, n, s, mode, p1, p2):
    """State after ``m`` steps for ``reps`` independent chains from ``a0``."""
    stamp = np.full(n, -1, dtype=np.int64)
    cum = np.empty(n)
    out = np.empty(reps, dtype=np.int64)
    tag = 0
    for r in range(reps):
        a = a0
        for _ in range(m):
            a = casp_step(rng, a, n, s, mode, p1, p2, stamp, tag, cum)
            tag += 1
        out[r] = a
    return out


@njit(cache=True, nogil=True)
def coalesce_many(rng, h, reps, n, mode, p1, p2):
    """Occupied-box counts for ``reps`` independent throws of ``h`` balls."""
    stamp = np.full(n, -1, dtype=np.int64)
    cum = np.empty(n)
    out = np.empty(reps, dtype=np.int64)
    for r in range(reps):
        out[r] = coalesce(rng, h, n, mode, p1, p2, stamp, r, cum)
    return out


@njit(cache=True, nogil=True)
def _wildtype_sums(rng, k, n, mode, p1, p2):
    """(sum of the first k weights, sum of the rest) for one fresh W."""
    if mode == MODE_UNIFORM:
        return k / n, (n - k) / n
    if mode == MODE_DIRICHLET:
        x = rng.beta(k * p1, (n - k) * p1)
        return x, 1.0 - x
    lo = 0.0
    hi = 0.0
    for i in range(n):
        y = rng.uniform(p1, p2)
        if i < k:
            lo += y
        else:
            hi += y
    t = lo + hi
    return lo / t, hi / t


@njit(cache=True, nogil=True)
def frequency_step(rng, k, n, s, mode, p1, p2):
    if k == 0 or k == n:
        return k
    lo, hi = _wildtype_sums(rng, k, n, mode, p1, p2)
    p = (1.0 - s) * lo / ((1.0 - s) * lo + hi)
    return rng.binomial(n, p)


@njit(cache=True, nogil=True)
def frequency_absorb(rng, k0, reps, max_gens, n, s, mode, p1, p2):
    """Outcome codes (0: hit 0, 1: hit N, 2: censored) and generation counts."""
    codes = np.empty(reps, dtype=np.int8)
    gens = np.empty(reps, dtype=np.int64)
    for r in range(reps):
        k = k0
        g = 0
        while 0 < k < n and g < max_gens:
            k = frequency_step(rng, k, n, s, mode, p1, p2)
            g += 1
        codes[r] = 0 if k == 0 else (1 if k == n else 2)
        gens[r] = g
    return codes, gens


@njit(cache=True, nogil=True)
def frequency_after(rng, k0, g, reps, n, s, mode, p1, p2):
    out = np.empty(reps, dtype=np.int64)
    for r in range(reps):
        k = k0
        for _ in range(g):
            k = frequency_step(rng, k, n, s, mode, p1, p2)
        out[r] = k
    return out


@njit(cache=True, nogil=True)
def masp_jumps(rng, b0, n_jumps, n, s, gamma):
    """Embedded jump chain of the Moran ancestral selection process."""
    out = np.empty(n_jumps + 1, dtype=np.int64)
    k = b0
    out[0] = k
    for i in range(1, n_jumps + 1):
        up = k * s * (n - k) / n
        down = gamma * k * (k - 1) / (2.0 * n)
        tot = up + down
        if tot > 0.0:
            if rng.random() * tot < up:
                k += 1
            else:
                k -= 1
        out[i] = k
    return out


@njit(cache=True, nogil=True)
def graphical_generation(rng, cum, wild_prev, s, picks_x, picks_y, picks_box,
                         offsets, counts, gammas, parents, wild_next):
    """Uniform picks for every child of one generation.

    Child j draws picks until the first with horizontal coordinate <= 1-s;
    that index is G(j). Its parent is the box of the first pick landing in
    the selective region (anywhere in a beneficial stripe, or left of 1-s in
    a wildtype stripe). Pick buffers grow by doubling; the (possibly
    reallocated) buffers and the total pick count are returned.
    """
    n = cum.shape[0]
    thr = 1.0 - s
    used = 0
    for j in range(n):
        offsets[j] = used
        found = False
        ell = 0
        while True:
            if used == picks_x.shape[0]:
                size = 2 * picks_x.shape[0]
                nx = np.empty(size)
                ny = np.empty(size)
                nb = np.empty(size, dtype=np.int64)
                nx[:used] = picks_x[:used]
                ny[:used] = picks_y[:used]
                nb[:used] = picks_box[:used]
                picks_x, picks_y, picks_box = nx, ny, nb
            x = rng.random()
            y = rng.random()
            box = _bisect_left(cum, y)
            picks_x[used] = x
            picks_y[used] = y
            picks_box[used] = box
            used += 1
            ell += 1
            if not found and (x <= thr or not wild_prev[box]):
                found = True
                gammas[j] = ell
                parents[j] = box
            if x <= thr:
                counts[j] = ell
                break
        wild_next[j] = wild_prev[parents[j]]
    offsets[n] = used
    return picks_x, picks_y, picks_box, used
