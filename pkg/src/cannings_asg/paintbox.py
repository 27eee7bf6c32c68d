"""Exchangeable paintbox weight laws on the simplex.

A Cannings generation draws a random weight vector ``W`` on the simplex and
every child picks its parent independently with probabilities ``W``. Three
families are supported:

* :class:`WrightFisher` -- the constant vector ``(1/N, ..., 1/N)``;
* :class:`SymmetricDirichlet` -- ``Dirichlet(alpha, ..., alpha)``;
* :class:`DirichletType` -- ``W_i = Y_i / sum(Y)`` with i.i.d. ``Y`` drawn from
  one of :class:`ConstantY`, :class:`GammaY`, :class:`UniformY`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .stats import EstimatorResult, ParameterError, normal_estimate


@dataclass(frozen=True)
class ConstantY:
    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ParameterError("ConstantY needs c > 0")

    def moments(self) -> tuple[float, float]:
        return self.c, self.c ** 2


@dataclass(frozen=True)
class GammaY:
    shape: float
    scale: float = 1.0

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ParameterError("GammaY needs shape > 0 and scale > 0")

    def moments(self) -> tuple[float, float]:
        k, th = self.shape, self.scale
        return k * th, k * (k + 1) * th * th


@dataclass(frozen=True)
class UniformY:
    a: float
    b: float

    def __post_init__(self):
        if not 0 < self.a < self.b:
            raise ParameterError("UniformY needs 0 < a < b")

    def moments(self) -> tuple[float, float]:
        a, b = self.a, self.b
        return (a + b) / 2, (a * a + a * b + b * b) / 3


YLaw = Union[ConstantY, GammaY, UniformY]


@dataclass(frozen=True)
class WrightFisher:
    def __str__(self):
        return "wf"


@dataclass(frozen=True)
class SymmetricDirichlet:
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ParameterError("SymmetricDirichlet needs alpha > 0")

    def __str__(self):
        return f"dirichlet:{self.alpha:g}"


@dataclass(frozen=True)
class DirichletType:
    y_law: YLaw

    def __post_init__(self):
        if not isinstance(self.y_law, (ConstantY, GammaY, UniformY)):
            raise ParameterError(f"unsupported Y law {self.y_law!r}")

    def __str__(self):
        y = self.y_law
        if isinstance(y, ConstantY):
            return f"dirichlet-type:const:{y.c:g}"
        if isinstance(y, GammaY):
            return f"dirichlet-type:gamma:{y.shape:g}:{y.scale:g}"
        return f"dirichlet-type:uniform:{y.a:g}:{y.b:g}"


WeightModel = Union[WrightFisher, SymmetricDirichlet, DirichletType]


def parse_weight_model(text: str) -> WeightModel:
    """Parse ``wf``, ``dirichlet:ALPHA`` or ``dirichlet-type:LAW:...``."""
    parts = text.strip().lower().split(":")
    try:
        if parts == ["wf"]:
            return WrightFisher()
        if parts[0] == "dirichlet" and len(parts) == 2:
            return SymmetricDirichlet(float(parts[1]))
        if parts[0] == "dirichlet-type":
            law, args = parts[1], [float(v) for v in parts[2:]]
            if law == "const" and len(args) == 1:
                return DirichletType(ConstantY(*args))
            if law == "gamma" and len(args) == 2:
                return DirichletType(GammaY(*args))
            if law == "uniform" and len(args) == 2:
                return DirichletType(UniformY(*args))
    except (ValueError, IndexError) as exc:
        raise ParameterError(f"cannot parse weight model {text!r}: {exc}") from exc
    raise ParameterError(f"cannot parse weight model {text!r}")


def is_uniform(model: WeightModel) -> bool:
    """True when the law puts all mass on the constant vector."""
    return isinstance(model, WrightFisher) or (
        isinstance(model, DirichletType) and isinstance(model.y_law, ConstantY))


def dirichlet_alpha(model: WeightModel) -> float | None:
    """Return alpha if the law is exactly a symmetric Dirichlet, else None.

    Gamma-distributed ``Y`` normalised by its sum is Dirichlet(shape).
    """
    if isinstance(model, SymmetricDirichlet):
        return model.alpha
    if isinstance(model, DirichletType) and isinstance(model.y_law, GammaY):
        return model.y_law.shape
    return None


def rho_squared(model: WeightModel) -> float:
    """Limit of ``N**2 * E[W_1**2]``, the pair-coalescence scale."""
    if isinstance(model, WrightFisher):
        return 1.0
    if isinstance(model, SymmetricDirichlet):
        return 1.0 + 1.0 / model.alpha
    if isinstance(model.y_law, ConstantY):
        return 1.0
    m1, m2 = model.y_law.moments()
    return m2 / (m1 * m1)


@dataclass(frozen=True)
class PopulationParams:
    """Population size, selection strength and paintbox law of one model."""

    n_pop: int
    s: float
    weights: WeightModel = field(default_factory=WrightFisher)

    def __post_init__(self):
        if int(self.n_pop) != self.n_pop or self.n_pop < 2:
            raise ParameterError("n_pop must be an integer >= 2")
        if not 0 <= self.s < 1:
            raise ParameterError("selection strength must satisfy 0 <= s < 1")

    @property
    def b(self) -> float:
        """Selection exponent with ``s = N**-b``."""
        if self.s <= 0:
            return math.inf
        return -math.log(self.s) / math.log(self.n_pop)

    @property
    def rho2(self) -> float:
        return rho_squared(self.weights)

    @classmethod
    def from_exponent(cls, n_pop: int, b: float, weights: WeightModel | None = None):
        return cls(n_pop, float(n_pop) ** (-b), weights or WrightFisher())


def check_weight_vector(w: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size < 1:
        raise ParameterError("weight vector must be 1-D and nonempty")
    if np.any(w < 0) or abs(w.sum() - 1.0) > atol:
        raise ParameterError("weight vector must be nonnegative and sum to 1")
    return w


def _sample_y(law: YLaw, size, rng: np.random.Generator) -> np.ndarray:
    if isinstance(law, GammaY):
        return rng.gamma(law.shape, law.scale, size)
    if isinstance(law, UniformY):
        return rng.uniform(law.a, law.b, size)
    return np.full(size, law.c, dtype=float)


def sample_weights(model: WeightModel, n_pop: int, rng: np.random.Generator) -> np.ndarray:
    """Draw one weight vector of length ``n_pop`` from ``model``."""
    if n_pop < 2:
        raise ParameterError("n_pop must be >= 2")
    if is_uniform(model):
        return np.full(n_pop, 1.0 / n_pop)
    if isinstance(model, SymmetricDirichlet):
        y = rng.gamma(model.alpha, 1.0, n_pop)
    else:
        y = _sample_y(model.y_law, n_pop, rng)
    total = y.sum()
    if not total > 0:
        # all gammas underflowed; only possible for tiny alpha
        raise ParameterError("weight normalisation underflowed; alpha too small")
    return y / total


def sample_first_weight(model: WeightModel, n_pop: int, size: int,
                        rng: np.random.Generator, chunk: int = 1 << 22) -> np.ndarray:
    """Draw ``size`` independent copies of the marginal ``W_1``.

    Dirichlet marginals are Beta(alpha, (N-1) alpha); other laws normalise a
    full vector, processed in chunks to bound memory.
    """
    if is_uniform(model):
        return np.full(size, 1.0 / n_pop)
    alpha = dirichlet_alpha(model)
    if alpha is not None:
        return rng.beta(alpha, (n_pop - 1) * alpha, size)
    law = model.y_law
    out = np.empty(size)
    rows = max(1, chunk // n_pop)
    for start in range(0, size, rows):
        m = min(rows, size - start)
        y = _sample_y(law, (m, n_pop), rng)
        out[start:start + m] = y[:, 0] / y.sum(axis=1)
    return out


def analytic_moment(model: WeightModel, n_pop: int, order: int) -> float | None:
    """Exact ``E[W_1**order]`` where a closed form is available, else None."""
    if order < 1:
        raise ParameterError("order must be >= 1")
    if is_uniform(model):
        return float(n_pop) ** (-order)
    a = dirichlet_alpha(model)
    if a is not None:
        return math.prod((a + j) / (n_pop * a + j) for j in range(order))
    return None


def empirical_moment(model: WeightModel, n_pop: int, order: int, replicates: int,
                     rng: np.random.Generator) -> EstimatorResult:
    if replicates < 1:
        raise ParameterError("replicates must be >= 1")
    if is_uniform(model):
        v = float(n_pop) ** (-order)
        return EstimatorResult(v, 0.0, (v, v), replicates, None, "exact")
    w1 = sample_first_weight(model, n_pop, replicates, rng)
    if replicates == 1:
        v = float(w1[0] ** order)
        return EstimatorResult(v, 0.0, (v, v), 1, None, "normal")
    return normal_estimate(w1 ** order)


def h_sequence(n_pop: int) -> int:
    """Slowly growing cutoff ``ceil(ln ln N)``, floored at 1."""
    return max(1, math.ceil(math.log(math.log(n_pop)))) if n_pop > 2 else 1


@dataclass(frozen=True)
class ConditionRow:
    n_pop: int
    m2_scaled: float
    m3_scaled: float
    mohle: float
    moment_bound_ok: bool
    h_n: int
    k_min: float
    source: str


@dataclass
class ConditionReport:
    model: str
    k_const: float
    rows: list[ConditionRow]

    @property
    def k_min(self) -> float:
        """Smallest K making the moment bound hold on the whole grid."""
        return max(r.k_min for r in self.rows)


def check_regularity(model: WeightModel, n_grid, k_const: float = 8.0,
                     rng: np.random.Generator | None = None,
                     replicates: int = 100_000) -> ConditionReport:
    """Tabulate the scaled moments behind the Kingman-attraction conditions.

    For each ``N`` this reports ``N**2 E[W^2]``, ``N**3 E[W^3]``,
    ``N E[W^2]`` and whether ``E[W^n] <= (K h_N / N)**n`` holds for all
    ``n <= 2 h_N``. Moments are exact where :func:`analytic_moment` has a
    closed form, otherwise Monte Carlo with ``replicates`` draws.
    """
    grid = [int(n) for n in n_grid]
    if not grid or min(grid) < 2:
        raise ParameterError("n_grid must be nonempty with entries >= 2")
    if replicates < 100_000:
        raise ParameterError("empirical moments need >= 1e5 replicates")
    rng = rng if rng is not None else np.random.default_rng(0)
    rows = []
    for n in grid:
        h = h_sequence(n)
        orders = range(1, max(3, 2 * h) + 1)
        if analytic_moment(model, n, 1) is not None:
            mom = {k: analytic_moment(model, n, k) for k in orders}
            source = "analytic"
        else:
            w1 = sample_first_weight(model, n, replicates, rng)
            mom = {k: float(np.mean(w1 ** k)) for k in orders}
            source = "empirical"
        k_min = max(n * mom[k] ** (1.0 / k) / h for k in range(1, 2 * h + 1))
        ok = all(mom[k] <= (k_const * h / n) ** k for k in range(1, 2 * h + 1))
        rows.append(ConditionRow(n, n * n * mom[2], n ** 3 * mom[3], n * mom[2], ok, h,
                                 k_min, source))
    return ConditionReport(str(model), k_const, rows)
