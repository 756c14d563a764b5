"""Subsystem depolarizing gauges of incoherent SPAM models.

Qudit subsets ``omega`` are tuples of 1-based qudit indices.  Internally a
subset is also an n-bit mask with qudit 1 as the most significant bit, the
same convention as :func:`quditspam.model.pattern_table`.

Every parameter of an :class:`EpsilonVector` belongs to exactly one support
pattern P (``pt(j)`` for ``S(j)``, the set of differing qudits for
``M(l,k)``).  In the inclusion-exclusion ("pattern") coordinates
``u_P = sum_{omega >= P} t_omega`` a linearized gauge shift moves every
preparation parameter of pattern P by ``+u_P`` and every measurement
parameter of pattern P by ``-u_P``, so the positivity-feasible gauge region
is a box.  :func:`gauge_box` exposes that box directly; :func:`interval_table`
solves the same problem as a linear program over the original gauge
parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .exceptions import DivergentInverse, GaugeInfeasible, InfeasibleEstimate
from .model import (
    EpsilonVector,
    SpamModel,
    SystemShape,
    layout,
)
from .polytope import linear_range

FEASIBILITY_TOL = 1e-12
RANK_RTOL = 1e-9


def subsets(n: int) -> list[tuple[int, ...]]:
    """Non-empty subsets of {1..n}, by size then lexicographically."""
    out = []
    for r in range(1, n + 1):
        out.extend(combinations(range(1, n + 1), r))
    return out


def subset_mask(n: int, omega: Sequence[int]) -> int:
    mask = 0
    for i in omega:
        if not 1 <= i <= n:
            raise ValueError(f"qudit index {i} outside 1..{n}")
        mask |= 1 << (n - i)
    return mask


def mask_subset(n: int, mask: int) -> tuple[int, ...]:
    return tuple(i for i in range(1, n + 1) if mask >> (n - i) & 1)


def format_subset(omega: Sequence[int]) -> str:
    return "{" + ",".join(map(str, omega)) + "}"


def _check_omega(n: int, omega) -> tuple[int, ...]:
    omega = tuple(sorted(set(int(i) for i in omega)))
    if not omega:
        raise ValueError("omega must be non-empty")
    subset_mask(n, omega)
    return omega


def inverse_parameter(p: float) -> float:
    """Strength of the depolarizing map inverting one of strength ``p``."""
    if p == 1:
        raise DivergentInverse("the p = 1 depolarizing map is not invertible")
    if p > 1:
        raise ValueError(f"depolarizing strength must be < 1, got {p}")
    return -p / (1.0 - p)


@dataclass(frozen=True)
class SubsystemDepolarizing:
    omega: tuple[int, ...]
    p: float

    def __post_init__(self):
        omega = tuple(sorted(set(self.omega)))
        if not omega:
            raise ValueError("omega must be non-empty")
        if not self.p < 1:
            raise ValueError(f"p must be < 1, got {self.p}")
        object.__setattr__(self, "omega", omega)

    def inverse(self) -> "SubsystemDepolarizing":
        return SubsystemDepolarizing(self.omega, inverse_parameter(self.p))


@dataclass(frozen=True)
class GaugeVector:
    shape: SystemShape
    p_by_omega: Mapping[tuple[int, ...], float] = field(default_factory=dict)

    def __post_init__(self):
        full = {omega: 0.0 for omega in subsets(self.shape.n)}
        for omega, p in dict(self.p_by_omega).items():
            omega = _check_omega(self.shape.n, omega)
            full[omega] = float(p)
        object.__setattr__(self, "p_by_omega", full)

    def as_array(self) -> np.ndarray:
        return np.array([self.p_by_omega[o] for o in subsets(self.shape.n)])


@dataclass(frozen=True)
class AmbiguityInterval:
    label: str
    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError(f"empty interval [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def __contains__(self, x: float) -> bool:
        return self.lower <= x <= self.upper


def _depolarize(arr: np.ndarray, shape: SystemShape, omega, p: float, axis0: int) -> np.ndarray:
    """(1-p) arr + p * (average of arr over the omega digits), along basis axes."""
    n, d = shape.n, shape.d
    lead = arr.shape[:axis0]
    t = arr.reshape(lead + (d,) * n)
    axes = tuple(axis0 + i - 1 for i in omega)
    avg = t.mean(axis=axes, keepdims=True)
    return ((1.0 - p) * t + p * avg).reshape(arr.shape)


def apply_gauge_exact(model: SpamModel, g: SubsystemDepolarizing) -> SpamModel:
    """Depolarize the preparation on ``g.omega``; invert the map on the POVM."""
    shape = model.shape
    omega = _check_omega(shape.n, g.omega)
    p_inv = inverse_parameter(g.p)
    prep = _depolarize(model.prep, shape, omega, g.p, 0)
    conf = _depolarize(model.confusion, shape, omega, p_inv, 1)
    worst = min(prep.min(), conf.min())
    if worst < -FEASIBILITY_TOL:
        raise GaugeInfeasible(
            f"gauge {format_subset(omega)} p={g.p:.3g} makes an entry negative ({worst:.3g})"
        )
    return SpamModel(shape, np.maximum(prep, 0.0), np.maximum(conf, 0.0))


def _linear_feasible(base: np.ndarray, slope: np.ndarray) -> tuple[float, float]:
    """Range of x with base + x * slope >= 0 everywhere."""
    lo, hi = -np.inf, np.inf
    pos, neg = slope > 0, slope < 0
    if np.any(pos):
        lo = float(np.max(-base[pos] / slope[pos]))
    if np.any(neg):
        hi = float(np.min(-base[neg] / slope[neg]))
    return lo, hi


def gauge_feasible_range(model: SpamModel, omega) -> tuple[float, float]:
    """Exact interval of p for which the omega gauge keeps the model positive."""
    shape = model.shape
    omega = _check_omega(shape.n, omega)
    c = model.prep
    p_lo, p_hi = _linear_feasible(c, _depolarize(c, shape, omega, 1.0, 0) - c)
    S = model.confusion
    q_lo, q_hi = _linear_feasible(S.ravel(), (_depolarize(S, shape, omega, 1.0, 1) - S).ravel())
    # p -> p* = -p/(1-p) is a decreasing involution on p < 1
    q_hi = min(q_hi, 1.0 - 1e-15)
    lo2 = inverse_parameter(q_hi)
    hi2 = inverse_parameter(q_lo) if np.isfinite(q_lo) else 1.0
    return max(p_lo, lo2), min(p_hi, hi2, 1.0 - 1e-15)


def apply_gauge_vector(model: SpamModel, gauge: GaugeVector) -> SpamModel:
    """Apply every subsystem gauge in canonical subset order."""
    for omega, p in gauge.p_by_omega.items():
        if p != 0:
            model = apply_gauge_exact(model, SubsystemDepolarizing(omega, p))
    return model


def linearized_generator(shape: SystemShape, omega) -> np.ndarray:
    """Normalized first-order direction of the omega gauge in parameter space."""
    mask = subset_mask(shape.n, _check_omega(shape.n, omega))
    lay = layout(shape)
    inside = (lay.classes & ~mask) == 0
    return np.where(inside, lay.signs, 0.0)


def mobius_generator(shape: SystemShape, omega) -> np.ndarray:
    """Generator acting only on parameters whose support pattern equals omega."""
    mask = subset_mask(shape.n, _check_omega(shape.n, omega))
    lay = layout(shape)
    return np.where(lay.classes == mask, lay.signs, 0.0)


@lru_cache(maxsize=None)
def _generator_matrix(shape: SystemShape) -> np.ndarray:
    G = np.array([linearized_generator(shape, o) for o in subsets(shape.n)])
    G.setflags(write=False)
    return G


def gauge_generator_matrix(shape: SystemShape) -> np.ndarray:
    """Rows are the linearized generators, one per non-empty subset."""
    return _generator_matrix(shape)


def numerical_rank(M: np.ndarray, rtol: float = RANK_RTOL) -> int:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    sv = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(sv > rtol * sv[0])) if sv[0] > 0 else 0


@lru_cache(maxsize=None)
def _learnable_projector(shape: SystemShape) -> np.ndarray:
    G = _generator_matrix(shape)
    P = np.eye(shape.num_params) - G.T @ np.linalg.solve(G @ G.T, G)
    P.setflags(write=False)
    return P


def learnable_projector(shape: SystemShape) -> np.ndarray:
    """Orthogonal projector onto the complement of the gauge directions."""
    return _learnable_projector(shape)


def is_learnable(f, shape: SystemShape, tol: float = 1e-12) -> bool:
    f = np.asarray(f, dtype=float)
    return bool(np.all(np.abs(gauge_generator_matrix(shape) @ f) <= tol))


def gauge_shift(eps: EpsilonVector, t) -> EpsilonVector:
    """First-order gauge move ``eps + sum_omega t_omega * g~_omega``."""
    return EpsilonVector(eps.shape, eps.values + np.asarray(t) @ gauge_generator_matrix(eps.shape))


# --- pattern (inclusion-exclusion) coordinates ------------------------------

def patterns(n: int) -> np.ndarray:
    return np.array([subset_mask(n, o) for o in subsets(n)], dtype=np.int64)


def gauge_box(values: np.ndarray, shape: SystemShape):
    """Per-pattern feasible range [lo, hi] of the pattern coordinate u_P.

    Arrays are ordered like :func:`subsets`.  ``lo > hi`` means the point has
    no positive gauge representative for that pattern.
    """
    lay = layout(shape)
    values = np.asarray(values, dtype=float)
    pats = patterns(shape.n)
    lo = np.empty(len(pats))
    hi = np.empty(len(pats))
    is_prep = lay.signs > 0
    for i, P in enumerate(pats):
        cls = lay.classes == P
        lo[i] = -values[cls & is_prep].min()
        hi[i] = values[cls & ~is_prep].min()
    return lo, hi


def pattern_shift(values: np.ndarray, shape: SystemShape, u) -> np.ndarray:
    """Apply pattern-coordinate gauge shifts ``u`` (ordered like :func:`subsets`)."""
    lay = layout(shape)
    pats = patterns(shape.n)
    per_pattern = np.zeros(2**shape.n)
    per_pattern[pats] = u
    return np.asarray(values, dtype=float) + lay.signs * per_pattern[lay.classes]


def pattern_to_gauge(u, n: int) -> np.ndarray:
    """Gauge parameters t with ``u_P = sum_{omega >= P} t_omega`` (Moebius inversion)."""
    pats = patterns(n)
    u_full = np.zeros(2**n)
    u_full[pats] = u
    t = np.empty(len(pats))
    for i, om in enumerate(pats):
        t[i] = sum(
            (-1) ** bin(Q ^ om).count("1") * u_full[Q]
            for Q in range(1, 2**n)
            if Q & om == om
        )
    return t


# --- positivity-constrained ambiguity ---------------------------------------

def clip_estimate(values) -> tuple[np.ndarray, float]:
    """Clip negative entries to zero; return the clipped point and the clip size."""
    values = np.asarray(values, dtype=float)
    neg = float(max(0.0, -values.min()))
    return np.maximum(values, 0.0), neg


def _check_feasible(eps: EpsilonVector, tol: float):
    worst = eps.values.min()
    if worst < -tol:
        raise InfeasibleEstimate(
            f"estimate has a negative entry ({worst:.3g}); clip or widen it first"
        )


def interval_table(eps_hat: EpsilonVector, tol: float = FEASIBILITY_TOL):
    """Lower and upper ends of every parameter's ambiguity interval.

    The range of each parameter over all first-order gauge moves that keep
    every entry non-negative, solved as a linear program in the gauge
    parameters.
    """
    _check_feasible(eps_hat, tol)
    G = gauge_generator_matrix(eps_hat.shape)
    # constraints: eps + G^T t >= 0 ; objectives: e-th row of G^T
    return linear_range(G.T, eps_hat.values, G.T, eps_hat.values, tol=tol)


def parameter_interval(eps_hat: EpsilonVector, label, tol: float = FEASIBILITY_TOL) -> AmbiguityInterval:
    _check_feasible(eps_hat, tol)
    pos = eps_hat.position(label)
    G = gauge_generator_matrix(eps_hat.shape)
    lo, hi = linear_range(G.T, eps_hat.values, G.T[pos:pos + 1], eps_hat.values[pos:pos + 1],
                          tol=tol)
    return AmbiguityInterval(eps_hat.label_strings[pos], float(lo[0]), float(hi[0]))


def functional_range(eps_hat: EpsilonVector, f, tol: float = FEASIBILITY_TOL) -> tuple[float, float]:
    """Range of the linear functional ``f @ eps`` over the feasible gauge orbit."""
    _check_feasible(eps_hat, tol)
    f = np.asarray(f, dtype=float)
    G = gauge_generator_matrix(eps_hat.shape)
    lo, hi = linear_range(G.T, eps_hat.values, (G @ f)[None, :], [f @ eps_hat.values], tol=tol)
    return float(lo[0]), float(hi[0])
