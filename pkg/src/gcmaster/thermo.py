"""Model definition, partition sums, weights and weighted-space geometry.

A model is a pair of level sequences (energies ``lambda_m`` and particle
numbers ``N_m``, indexed from 1) together with an inverse temperature
``beta`` and a chemical potential ``mu``.  Every infinite sum is truncated
at ``TruncationPolicy.max_index`` and the neglected tail is bounded through
a summability witness; after that the truncated model is treated as an
exact finite model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    IndexOutOfRange,
    InvalidParams,
    OverflowRisk,
    TailNotConverged,
)

EXPONENT_CAP = 700.0

LevelRule = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Witness:
    """Growth certificate for the exponent ``lambda_m - mu' N_m``.

    Declares ``E(m) >= E(m0) + growth * (m - m0)`` for every ``m >= m0``.
    The inequality is re-checked on the truncated range each time a tail is
    bounded; beyond the range it is taken on trust.
    """

    m0: int = 1
    growth: float = 1.0

    def __post_init__(self):
        if self.m0 < 1:
            raise InvalidParams(f"witness m0 must be >= 1, got {self.m0}")


@dataclass(frozen=True)
class TruncationPolicy:
    max_index: int
    tail_tol: float = 1e-8

    def __post_init__(self):
        # a one-level chain is allowed: A = [[0]] is a valid (trivial) generator
        if int(self.max_index) != self.max_index or self.max_index < 1:
            raise InvalidParams(f"max_index must be a positive integer, got {self.max_index}")
        if not self.tail_tol > 0:
            raise InvalidParams(f"tail_tol must be > 0, got {self.tail_tol}")


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Energies, particle numbers and thermodynamic parameters.

    ``energy`` and ``particles`` are vectorised rules ``m -> value`` over
    1-based integer arrays.  Finite tables set ``size``; they need no witness
    since the tail beyond the truncation is an explicit finite sum.
    """

    energy: LevelRule
    particles: LevelRule
    beta: float
    mu: float = 0.0
    witness: Optional[Witness] = None
    size: Optional[int] = None
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise InvalidParams(f"beta must be > 0, got {self.beta}")
        if not np.isfinite(self.mu):
            raise InvalidParams(f"mu must be finite, got {self.mu}")

    @classmethod
    def harmonic(cls, beta: float, mu: float = 0.0, witness: Optional[Witness] = None) -> "ModelSpec":
        """Harmonic ladder: ``lambda_m = m`` and ``N_m = m``."""
        return cls.affine(1.0, 0.0, 1, 0, beta=beta, mu=mu, witness=witness, kind="harmonic")

    @classmethod
    def affine(cls, a: float, b: float, c: int, d: int, beta: float, mu: float = 0.0,
               witness: Optional[Witness] = None, kind: str = "affine") -> "ModelSpec":
        """``lambda_m = a m + b`` and ``N_m = c m + d``."""
        if int(c) != c or int(d) != d:
            raise InvalidParams("particle-number coefficients c, d must be integers")
        c, d = int(c), int(d)
        if c < 0 or c + d < 0:
            raise InvalidParams("N_m = c m + d must be non-negative for all m >= 1")
        if witness is None:
            # exact per-step growth of lambda - mu' N for every mu' the package evaluates
            scales = (mu, -mu, -3.0 * mu, -mu / 3.0)
            growth = min(a - s * c for s in scales)
            witness = Witness(1, growth)
        return cls(
            energy=lambda m: a * np.asarray(m, dtype=float) + b,
            particles=lambda m: c * np.asarray(m, dtype=np.int64) + d,
            beta=float(beta),
            mu=float(mu),
            witness=witness,
            kind=kind,
            params={"a": a, "b": b, "c": c, "d": d},
        )

    @classmethod
    def table(cls, energies: Sequence[float], particles: Optional[Sequence[int]] = None,
              beta: float = 1.0, mu: float = 0.0) -> "ModelSpec":
        lam = np.array(energies, dtype=float)
        n = np.zeros(lam.shape, dtype=np.int64) if particles is None else np.asarray(particles)
        if lam.ndim != 1 or n.shape != lam.shape:
            raise DimensionMismatch("energy and particle tables must be 1-d and of equal length")
        if not np.all(np.isfinite(lam)):
            raise InvalidParams("energy table contains non-finite values")
        if np.any(n != np.round(n)) or np.any(n < 0):
            raise InvalidParams("particle numbers must be non-negative integers")
        n = n.astype(np.int64)
        lam.setflags(write=False)
        n.setflags(write=False)
        return cls(
            energy=lambda m: lam[np.asarray(m) - 1],
            particles=lambda m: n[np.asarray(m) - 1],
            beta=float(beta),
            mu=float(mu),
            size=len(lam),
            kind="table",
            params={"lambda": lam, "nparticles": n},
        )

    def with_params(self, beta: Optional[float] = None, mu: Optional[float] = None) -> "ModelSpec":
        """Same level sequences at different thermodynamic parameters."""
        beta = self.beta if beta is None else beta
        mu = self.mu if mu is None else mu
        if self.kind in ("harmonic", "affine"):
            p = self.params
            return ModelSpec.affine(p["a"], p["b"], p["c"], p["d"], beta=beta, mu=mu, kind=self.kind)
        return ModelSpec(self.energy, self.particles, float(beta), float(mu), self.witness,
                         self.size, self.kind, self.params)

    def levels(self, max_index: int) -> tuple[np.ndarray, np.ndarray]:
        """``(lambda_m, N_m)`` for ``m = 1..max_index``."""
        if self.size is not None and max_index > self.size:
            raise IndexOutOfRange(f"table has {self.size} levels, requested {max_index}")
        m = np.arange(1, max_index + 1)
        lam = np.asarray(self.energy(m), dtype=float)
        n = np.asarray(self.particles(m))
        if np.any(n < 0) or np.any(n != np.round(n)):
            raise InvalidParams("particle numbers must be non-negative integers")
        return lam, n.astype(float)

    def exponent(self, max_index: int, mu: Optional[float] = None) -> np.ndarray:
        """``lambda_m - mu N_m`` on the truncated range."""
        lam, n = self.levels(max_index)
        return lam - (self.mu if mu is None else mu) * n


class PartitionSum(NamedTuple):
    value: float
    tail: float


def _check_cap(exponents: np.ndarray, cap: float, what: str) -> None:
    worst = float(np.max(np.abs(exponents))) if exponents.size else 0.0
    if not worst <= cap:
        raise OverflowRisk(f"{what}: exponent magnitude {worst:.4g} exceeds cap {cap:g}; "
                           "rescale the model or lower the truncation")


def tail_bound(model: ModelSpec, trunc: TruncationPolicy, beta: float, mu: float) -> float:
    """Upper bound on ``sum_{m > M} exp[-beta (lambda_m - mu N_m)]``."""
    M = trunc.max_index
    if model.size is not None:
        if M == model.size:
            return 0.0
        e = model.exponent(model.size, mu)[M:]
        return math.fsum(np.exp(-beta * e))
    w = model.witness
    if w is None:
        raise TailNotConverged("model has no summability witness")
    if not w.growth > 0:
        raise TailNotConverged(f"witness growth {w.growth} is not positive")
    if w.m0 > M:
        raise TailNotConverged(f"witness index m0={w.m0} lies beyond the truncation M={M}")
    e = model.exponent(M, mu)
    base = e[w.m0 - 1]
    steps = np.arange(M - w.m0 + 1)
    slack = 1e-12 * max(1.0, float(np.max(np.abs(e))))
    bad = np.nonzero(e[w.m0 - 1:] < base + w.growth * steps - slack)[0]
    if bad.size:
        m_bad = int(bad[0]) + w.m0
        raise TailNotConverged(
            f"witness (m0={w.m0}, growth={w.growth}) fails at m={m_bad} for mu'={mu}")
    first = base + w.growth * (M + 1 - w.m0)
    return math.exp(-beta * first) / -math.expm1(-beta * w.growth)


def partition_function(model: ModelSpec, trunc: TruncationPolicy, beta: Optional[float] = None,
                       mu: Optional[float] = None, cap: float = EXPONENT_CAP) -> PartitionSum:
    """Truncated ``Theta_{beta, mu}`` and a certified bound on its tail.

    ``beta`` and ``mu`` default to the model's own values; other scalings
    such as ``(2 beta, -mu)`` are needed by the trace and norm identities.
    """
    beta = model.beta if beta is None else float(beta)
    mu = model.mu if mu is None else float(mu)
    if not beta > 0:
        raise InvalidParams(f"scale beta must be > 0, got {beta}")
    x = -beta * model.exponent(trunc.max_index, mu)
    _check_cap(x, cap, f"partition sum at beta={beta:g}, mu={mu:g}")
    value = math.fsum(np.exp(x))
    tail = tail_bound(model, trunc, beta, mu)
    if tail > trunc.tail_tol:
        raise TailNotConverged(
            f"tail bound {tail:.3e} of Theta_({beta:g},{mu:g}) exceeds tail_tol {trunc.tail_tol:.3e}")
    return PartitionSum(value, tail)


def weight_sequence(model: ModelSpec, trunc: TruncationPolicy, cap: float = EXPONENT_CAP) -> np.ndarray:
    """``w_m = exp[beta (lambda_m - mu N_m)]`` for ``m = 1..M``."""
    x = model.beta * model.exponent(trunc.max_index)
    _check_cap(x, cap, "weight sequence")
    return np.exp(x)


@dataclass(frozen=True, eq=False)
class WeightedVector:
    """Coordinates together with the weights that define their norm."""

    coords: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if c.ndim != 1 or c.shape != w.shape:
            raise DimensionMismatch(f"coords {c.shape} and weights {w.shape} differ")
        if not np.all(w > 0):
            raise InvalidParams("weights must be strictly positive")
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.coords)

    def norm(self) -> float:
        val = float(np.sqrt(np.sum(self.weights * self.coords ** 2)))
        if not np.isfinite(val):
            raise OverflowRisk("weighted norm is not finite")
        return val

    def inner(self, other: "WeightedVector") -> float:
        return weighted_inner_product(self, other)


def weighted_inner_product(p: WeightedVector, q: WeightedVector) -> float:
    """``sum_m w_m p_m q_m``."""
    if p.coords.shape != q.coords.shape:
        raise DimensionMismatch(f"lengths {len(p)} and {len(q)} differ")
    if p.weights is not q.weights and not np.array_equal(p.weights, q.weights):
        raise DimensionMismatch("vectors live in differently weighted spaces")
    return float(np.sum(p.weights * p.coords * q.coords))


def equilibrium_distribution(model: ModelSpec, trunc: TruncationPolicy) -> WeightedVector:
    """Truncation-normalised equilibrium probabilities with their weights."""
    partition_function(model, trunc)  # certifies the tail, raises otherwise
    weights = weight_sequence(model, trunc)
    e = model.beta * model.exponent(trunc.max_index)
    z = np.exp(-(e - e.min()))
    return WeightedVector(z / math.fsum(z), weights)
