"""Exact small-N computations for the frequency chain and the CASP.

Dense transition matrices, absorption probabilities, stationary vectors and
both sides of the hypergeometric sampling duality

    E[(K_g)_n / (N)_n | K_0 = k] = E[(k)_{A_g} / (N)_{A_g} | A_0 = n]

with ``(x)_m`` the falling factorial.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special
from scipy import stats as sps

from .paintbox import PopulationParams, SymmetricDirichlet, dirichlet_alpha, is_uniform
from .stats import ParameterError

log = logging.getLogger(__name__)

MAX_FORWARD_N = 200
MAX_CASP_N = 50
MAX_BRANCHES = 1_000_000


@dataclass
class TransitionMatrix:
    """Row-stochastic matrix; row/column ``i`` is state ``i + state_offset``."""

    entries: np.ndarray
    state_offset: int
    residual: float = 0.0

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def check(self, tol: float = 1e-12) -> None:
        m = self.entries
        if np.any(m < -tol) or np.any(m > 1 + tol):
            raise ParameterError("entries outside [0, 1]")
        dev = np.max(np.abs(m.sum(axis=1) - 1))
        if dev > tol:
            raise ParameterError(f"row sums deviate from 1 by {dev:.3g}")

    def to_csv(self, path) -> None:
        """Row-major CSV preceded by a ``# dim=.. state_offset=..`` header."""
        with open(path, "w") as fh:
            fh.write(f"# dim={self.dim} state_offset={self.state_offset}\n")
            for row in self.entries:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "TransitionMatrix":
        lines = Path(path).read_text().splitlines()
        head = dict(tok.split("=") for tok in lines[0].lstrip("# ").split())
        rows = [[float(v) for v in ln.split(",")] for ln in lines[1:] if ln]
        m = np.array(rows)
        if m.shape != (int(head["dim"]),) * 2:
            raise ParameterError("matrix shape does not match header")
        return cls(m, int(head["state_offset"]))


def occupancy_pmf_uniform(h: int, n_pop: int) -> np.ndarray:
    """Law of the number of occupied boxes after ``h`` uniform throws.

    Entry ``b-1`` is ``S2(h, b) (N)_b / N**h``. It is built by the Stirling
    recursion normalised by ``N**h`` at each step, which keeps every entry
    a probability and avoids overflow for any ``h``.
    """
    return occupancy_table(h, n_pop, None)[h, 1:min(h, n_pop) + 1]


def occupancy_table(h_max: int, n_pop: int, alpha: float | None) -> np.ndarray:
    """``T[h, b] = P(b boxes occupied after h throws)`` for ``h <= h_max``.

    ``alpha=None`` means uniform weights; otherwise weights are symmetric
    Dirichlet(alpha) and a throw after ``i`` earlier throws opens a new box
    with probability ``(N - b) alpha / (N alpha + i)`` (Polya urn).
    """
    if h_max < 1:
        raise ParameterError("h must be >= 1")
    n = n_pop
    width = min(h_max, n) + 1
    t = np.zeros((h_max + 1, width))
    t[0, 0] = 1.0
    b = np.arange(width, dtype=float)
    for i in range(h_max):
        prev = t[i]
        if alpha is None:
            stay, new = b / n, (n - b) / n
        else:
            stay = (b * alpha + i) / (n * alpha + i)
            new = (n - b) * alpha / (n * alpha + i)
        t[i + 1] = prev * stay
        t[i + 1, 1:] += prev[:-1] * new[:-1]
    return t


def _supported_alpha(params: PopulationParams) -> float | None:
    if is_uniform(params.weights):
        return None
    alpha = dirichlet_alpha(params.weights)
    if alpha is None:
        raise ParameterError(f"no exact kernel for {params.weights}")
    return alpha


def forward_transition_matrix(params: PopulationParams,
                              quadrature_nodes: int = 256) -> TransitionMatrix:
    """Transition matrix of ``K`` on ``{0..N}``.

    Uniform weights give exact Binomial rows. For Dirichlet(alpha) weights
    the wildtype mass ``S`` of ``k`` parents is Beta(k alpha, (N-k) alpha)
    and each row integrates the Binomial kernel against that density by
    Gauss-Jacobi quadrature, whose weight function is the Beta density
    itself.
    """
    n, s = params.n_pop, params.s
    if n > MAX_FORWARD_N:
        raise ParameterError(f"exact forward matrix limited to N <= {MAX_FORWARD_N}")
    alpha = _supported_alpha(params)
    m = np.zeros((n + 1, n + 1))
    m[0, 0] = m[n, n] = 1.0
    j = np.arange(n + 1)
    for k in range(1, n):
        if alpha is None:
            x = np.array([k / n])
            wq = np.array([1.0])
        else:
            a, b = k * alpha, (n - k) * alpha
            # weight (1-t)^(b-1) (1+t)^(a-1) on [-1, 1] with S = (1+t)/2
            t, wq = special.roots_jacobi(quadrature_nodes, b - 1, a - 1)
            x = (1 + t) / 2
            wq = wq / wq.sum()
        p = (1 - s) * x / ((1 - s) * x + (1 - x))
        m[k] = wq @ sps.binom.pmf(j[None, :], n, p[:, None])
    dev = float(np.max(np.abs(m.sum(axis=1) - 1)))
    if dev > 1e-9:
        raise ParameterError(f"quadrature row-sum deviation {dev:.3g} exceeds 1e-9")
    return TransitionMatrix(m, 0, dev)


def negbin_cutoff(a: int, s: float, tail_tol: float) -> int:
    """Smallest ``h`` with ``P(H > h) < tail_tol`` for ``H ~ NegBin(a, 1-s)``."""
    if s == 0:
        return a
    extra = int(sps.nbinom.isf(tail_tol, a, 1 - s))
    while sps.nbinom.sf(extra, a, 1 - s) >= tail_tol:
        extra += 1
    while extra > 0 and sps.nbinom.sf(extra - 1, a, 1 - s) < tail_tol:
        extra -= 1
    return a + extra


def casp_transition_matrix(params: PopulationParams,
                           tail_tol: float = 1e-14) -> TransitionMatrix:
    """Transition matrix of the CASP on ``{1..N}``.

    Entry ``(a, b)`` sums ``P(H = h) P(b boxes | h throws)`` over ``h`` up to
    the point where the negative-binomial tail drops below ``tail_tol``; rows
    are renormalised and the largest dropped mass is kept in ``residual``.
    """
    n, s = params.n_pop, params.s
    if n > MAX_CASP_N:
        raise ParameterError(f"exact CASP matrix limited to N <= {MAX_CASP_N}")
    if tail_tol > 1e-12:
        raise ParameterError("tail_tol must be <= 1e-12")
    alpha = _supported_alpha(params)
    h_max = negbin_cutoff(n, s, tail_tol)
    if h_max > MAX_BRANCHES:
        raise ParameterError(f"truncation needs h up to {h_max}, cap is {MAX_BRANCHES}")
    occ = occupancy_table(h_max, n, alpha)
    width = occ.shape[1]
    m = np.zeros((n, n))
    resid = 0.0
    for a in range(1, n + 1):
        hs = np.arange(a, negbin_cutoff(a, s, tail_tol) + 1)
        ph = sps.nbinom.pmf(hs - a, a, 1 - s) if s > 0 else np.ones(1)
        row = ph @ occ[hs]
        mass = row.sum()
        resid = max(resid, 1 - mass)
        m[a - 1, :width - 1] = row[1:] / mass
    log.debug("CASP truncation residual %.3g", resid)
    return TransitionMatrix(m, 1, resid)


def absorption_probability(m: TransitionMatrix, k0: int, target: int) -> float:
    """P(absorb at ``target``) for a chain with absorbing states 0 and N."""
    p = m.entries
    n = m.dim - 1
    if m.state_offset != 0 or target not in (0, n):
        raise ParameterError("need a {0..N} chain and target in {0, N}")
    if not 0 <= k0 <= n:
        raise ParameterError(f"k0={k0} outside [0, {n}]")
    if k0 in (0, n):
        return 1.0 if k0 == target else 0.0
    inner = np.arange(1, n)
    q = p[np.ix_(inner, inner)]
    r = p[inner, target]
    try:
        x = np.linalg.solve(np.eye(n - 1) - q, r)
    except np.linalg.LinAlgError as exc:
        raise ParameterError("singular absorption system") from exc
    return float(min(max(x[k0 - 1], 0.0), 1.0))


def stationary_distribution(m: TransitionMatrix, tol: float = 1e-13,
                            max_iter: int = 1_000_000) -> np.ndarray:
    """Left eigenvector for eigenvalue 1 by power iteration."""
    p = m.entries
    pi = np.full(m.dim, 1.0 / m.dim)
    for _ in range(max_iter):
        nxt = pi @ p
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) <= tol:
            return nxt
        pi = nxt
    raise ParameterError(f"power iteration did not converge in {max_iter} steps")


def falling_ratio(x: np.ndarray | int, n_pop: int, m: np.ndarray | int) -> np.ndarray:
    """``(x)_m / (N)_m``, zero when ``m > x``."""
    x = np.asarray(x, dtype=float)
    m = np.asarray(m)
    x, m = np.broadcast_arrays(x, m)
    out = np.ones(x.shape)
    for idx in np.ndindex(x.shape):
        xi, mi = x[idx], int(m[idx])
        v = 1.0
        for i in range(mi):
            v *= max(xi - i, 0.0) / (n_pop - i)
        out[idx] = v
    return out


@dataclass(frozen=True)
class DualityGap:
    lhs: float
    rhs: float

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)


def exact_duality_check(params: PopulationParams, k: int, n: int, g: int,
                        tail_tol: float = 1e-14,
                        forward: TransitionMatrix | None = None,
                        casp: TransitionMatrix | None = None) -> DualityGap:
    """Both sides of the sampling duality after ``g`` generations.

    Precomputed matrices may be passed to avoid rebuilding them on a grid.
    """
    big_n = params.n_pop
    if not (1 <= k <= big_n and 1 <= n <= big_n and g >= 0):
        raise ParameterError("need 1 <= k, n <= N and g >= 0")
    if isinstance(params.weights, SymmetricDirichlet) and big_n > 10:
        raise ParameterError("Dirichlet duality check limited to N <= 10")
    if big_n > 20:
        raise ParameterError("duality check limited to N <= 20")
    forward = forward or forward_transition_matrix(params)
    casp = casp or casp_transition_matrix(params, tail_tol)
    fk = np.linalg.matrix_power(forward.entries, g)[k]
    states = np.arange(big_n + 1)
    lhs = float(fk @ falling_ratio(states, big_n, n))
    an = np.linalg.matrix_power(casp.entries, g)[n - 1]
    rhs = float(an @ falling_ratio(k, big_n, np.arange(1, big_n + 1)))
    return DualityGap(lhs, rhs)
