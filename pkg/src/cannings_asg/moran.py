"""Moran ancestral selection process (MASP) and Moran fixation formulas.

The MASP jumps ``k -> k+1`` at rate ``k s (N-k)/N`` and ``k -> k-1`` at rate
``gamma/N * C(k, 2)``. Its equilibrium is Binomial(N, p) conditioned to be
positive with ``p = 2s / (2s + gamma)``, and the fixation probability of one
beneficial mutant equals the equilibrium mean divided by ``N``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from . import _kernels as kern
from .stats import ParameterError


@dataclass(frozen=True)
class MoranParams:
    n_pop: int
    s: float
    gamma: float = 1.0

    def __post_init__(self):
        if self.n_pop < 1 or not self.gamma > 0 or self.s < 0:
            raise ParameterError("need N >= 1, gamma > 0 and s >= 0")

    @property
    def p_eq(self) -> float:
        return 2 * self.s / (2 * self.s + self.gamma)


@dataclass(frozen=True)
class Rates:
    up: float
    down: float


def masp_rates(k: int, p: MoranParams) -> Rates:
    n = p.n_pop
    if not 1 <= k <= n:
        raise ParameterError(f"k={k} outside [1, {n}]")
    return Rates(k * p.s * (n - k) / n, p.gamma * k * (k - 1) / (2 * n))


def masp_generator(p: MoranParams) -> np.ndarray:
    """Dense generator matrix on states ``1..N`` (row/column ``k-1``)."""
    n = p.n_pop
    k = np.arange(1, n + 1, dtype=float)
    up = k * p.s * (n - k) / n
    down = p.gamma * k * (k - 1) / (2 * n)
    q = np.diag(-(up + down))
    q[np.arange(n - 1), np.arange(1, n)] = up[:-1]
    q[np.arange(1, n), np.arange(n - 1)] = down[1:]
    return q


def _tail_mass(p: float, n: int) -> float:
    """``1 - (1-p)**N`` without cancellation."""
    return -math.expm1(n * math.log1p(-p))


def masp_equilibrium_pmf(p: MoranParams) -> np.ndarray:
    """Binomial(N, 2s/(2s+gamma)) conditioned positive, indexed by ``k-1``."""
    if p.s <= 0:
        raise ParameterError("equilibrium degenerates at s = 0")
    q = p.p_eq
    k = np.arange(1, p.n_pop + 1)
    return sps.binom.pmf(k, p.n_pop, q) / _tail_mass(q, p.n_pop)


def moran_fixation_exact(p: MoranParams) -> float:
    if p.s <= 0:
        raise ParameterError("need s > 0")
    q = p.p_eq
    return q / _tail_mass(q, p.n_pop)


def haldane_approx(s: float, rho2: float) -> float:
    if s < 0 or rho2 < 1:
        raise ParameterError("need s >= 0 and rho2 >= 1")
    return 2 * s / rho2


def kimura_approx(alpha: float, gamma: float, n_pop: int) -> float:
    """Weak-selection value with ``s = alpha / N``."""
    if not (alpha > 0 and gamma > 0):
        raise ParameterError("need alpha > 0 and gamma > 0")
    return 2 * alpha / (n_pop * gamma) / -math.expm1(-2 * alpha / gamma)


def strong_selection_approx(s: float, gamma: float) -> float:
    if not (s > 0 and gamma > 0):
        raise ParameterError("need s > 0 and gamma > 0")
    return 2 * s / (2 * s + gamma)


def simulate_masp_embedded(p: MoranParams, b0: int, n_jumps: int,
                           rng: np.random.Generator) -> np.ndarray:
    """Trajectory of the embedded jump chain (length ``n_jumps + 1``).

    States with total rate 0 (``k = 1`` when ``s = 0``) are absorbing.
    """
    if not 1 <= b0 <= p.n_pop:
        raise ParameterError(f"b0={b0} outside [1, {p.n_pop}]")
    return kern.masp_jumps(rng, b0, n_jumps, p.n_pop, p.s, p.gamma)


def occupation_pmf(trajectory: np.ndarray, p: MoranParams) -> np.ndarray:
    """Time-weighted occupation law of an embedded trajectory.

    Each visit to ``k`` is weighted by the mean holding time ``1/q(k)``,
    which turns the jump-chain occupation into the continuous-time one.
    """
    n = p.n_pop
    k = np.arange(1, n + 1, dtype=float)
    total = k * p.s * (n - k) / n + p.gamma * k * (k - 1) / (2 * n)
    with np.errstate(divide="ignore"):
        hold = np.where(total > 0, 1.0 / total, 0.0)
    visits = np.bincount(np.asarray(trajectory) - 1, minlength=n)[:n]
    w = visits * hold
    return w / w.sum()
