"""Transition rates, closed-truncation generator assembly and its identities.

Convention: ``r[m, n]`` is the rate from level ``n`` to level ``m`` and the
generator acts on column vectors, so every column of ``A`` sums to zero.
Indices are 1-based in the public scalar API and 0-based in arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import IndexOutOfRange, InvalidParams, SameIndex
from .thermo import (
    EXPONENT_CAP,
    ModelSpec,
    PartitionSum,
    TruncationPolicy,
    _check_cap,
    partition_function,
    weight_sequence,
)

ALGEBRAIC_TOL = 1e-12


def rate_factors(model: ModelSpec, trunc: TruncationPolicy) -> tuple[np.ndarray, np.ndarray]:
    """Exponents of the separable rates, ``r[m, n] = exp(x_m + y_n)``.

    ``x_m = -(beta/2)(3 lambda_m + mu N_m)`` is the arrival factor and
    ``y_n = -(beta/2)(lambda_n + 3 mu N_n)`` the departure factor.
    """
    lam, n = model.levels(trunc.max_index)
    b, mu = model.beta, model.mu
    return -0.5 * b * (3.0 * lam + mu * n), -0.5 * b * (lam + 3.0 * mu * n)


def transition_rate(model: ModelSpec, m: int, n: int, trunc: TruncationPolicy | None = None) -> float:
    """Rate from level ``n`` to level ``m`` (both 1-based)."""
    if m == n:
        raise SameIndex(f"transition rate needs distinct levels, got m = n = {m}")
    if m < 1 or n < 1:
        raise IndexOutOfRange(f"levels are 1-based, got ({m}, {n})")
    if trunc is not None and max(m, n) > trunc.max_index:
        raise IndexOutOfRange(f"level {max(m, n)} beyond truncation {trunc.max_index}")
    lam, num = model.levels(max(m, n))
    b, mu = model.beta, model.mu
    x = -0.5 * b * (3.0 * lam[m - 1] + mu * num[m - 1]) - 0.5 * b * (lam[n - 1] + 3.0 * mu * num[n - 1])
    return math.exp(x)


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    entries: np.ndarray
    rates: np.ndarray
    weights: np.ndarray
    model: ModelSpec
    trunc: TruncationPolicy
    closed: bool = True

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def equilibrium(self) -> np.ndarray:
        """Stationary distribution implied by the weights, ``p_m ~ 1/w_m``."""
        inv = 1.0 / self.weights
        return inv / math.fsum(inv)

    def apply(self, p: np.ndarray) -> np.ndarray:
        return self.entries @ p


@dataclass(frozen=True, eq=False)
class SymmetricGenerator:
    entries: np.ndarray
    weights: np.ndarray
    parent: GeneratorMatrix


def _close(rates: np.ndarray) -> np.ndarray:
    a = rates.copy()
    np.fill_diagonal(a, 0.0)
    np.fill_diagonal(a, -a.sum(axis=0))
    return a


def build_generator(model: ModelSpec, trunc: TruncationPolicy, cap: float = EXPONENT_CAP) -> GeneratorMatrix:
    """Dense generator with the diagonal loss summed over retained levels only."""
    partition_function(model, trunc)
    weights = weight_sequence(model, trunc, cap)
    x, y = rate_factors(model, trunc)
    expo = x[:, None] + y[None, :]
    _check_cap(expo, cap, "transition rates")
    rates = np.exp(expo)
    return GeneratorMatrix(_close(rates), rates, weights, model, trunc)


def perturb_rate(G: GeneratorMatrix, m: int, n: int, factor: float) -> GeneratorMatrix:
    """Copy of ``G`` with ``r[m, n]`` scaled by ``factor`` and the diagonal re-closed."""
    if m == n:
        raise SameIndex("only off-diagonal rates can be perturbed")
    if not (1 <= m <= G.size and 1 <= n <= G.size):
        raise IndexOutOfRange(f"({m}, {n}) outside a {G.size}-level generator")
    if not factor > 0:
        raise InvalidParams("rate factor must be positive")
    rates = G.rates.copy()
    rates[m - 1, n - 1] *= factor
    return replace(G, entries=_close(rates), rates=rates)


class BalanceReport(NamedTuple):
    max_rel_violation: float
    worst_pair: tuple[int, int]
    passed: bool


def verify_detailed_balance(G: GeneratorMatrix, tol: float = ALGEBRAIC_TOL) -> BalanceReport:
    """Largest relative mismatch of ``r[m,n] p_n`` against ``r[n,m] p_m``."""
    p = G.equilibrium()
    flux = G.rates * p[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.abs(flux - flux.T) / flux
    np.fill_diagonal(rel, 0.0)
    if rel.size == 1:
        return BalanceReport(0.0, (1, 1), True)
    i, j = np.unravel_index(np.argmax(rel), rel.shape)
    worst = float(rel[i, j])
    return BalanceReport(worst, (int(i) + 1, int(j) + 1), worst <= tol)


class ColumnSumReport(NamedTuple):
    max_abs: float
    scale: float
    passed: bool


def column_sum_check(G: GeneratorMatrix, tol: float = 1e-13) -> ColumnSumReport:
    scale = float(np.max(np.abs(G.entries)))
    worst = float(np.max(np.abs(G.entries.sum(axis=0))))
    return ColumnSumReport(worst, scale, worst <= tol * scale)


def matrix_trace(G: GeneratorMatrix) -> float:
    return math.fsum(np.diag(G.entries))


def closed_form_trace(model: ModelSpec, trunc: TruncationPolicy) -> PartitionSum:
    """``Theta(2b,-mu) - Theta(b/2,-3mu) Theta(3b/2,-mu/3)`` from truncated sums.

    The returned ``tail`` bounds the distance to the same expression with
    untruncated sums.
    """
    b, mu = model.beta, model.mu
    t2 = partition_function(model, trunc, 2.0 * b, -mu)
    ta = partition_function(model, trunc, 0.5 * b, -3.0 * mu)
    tb = partition_function(model, trunc, 1.5 * b, -mu / 3.0)
    value = t2.value - ta.value * tb.value
    tail = t2.tail + ta.value * tb.tail + tb.value * ta.tail + ta.tail * tb.tail
    return PartitionSum(value, tail)


class HSReport(NamedTuple):
    hs_norm_sq: float
    bound: float
    passed: bool


def hs_bound_check(G: GeneratorMatrix, model: ModelSpec | None = None,
                   trunc: TruncationPolicy | None = None) -> HSReport:
    """Weighted Hilbert-Schmidt sum against its partition-function bound.

    ``sum_m w_m sum_n |a_mn|^2 / w_n`` equals the squared Frobenius norm of
    the symmetrised matrix, which avoids forming ``w_m / w_n`` directly.
    """
    model = G.model if model is None else model
    trunc = G.trunc if trunc is None else trunc
    s = symmetrize(G).entries
    hs = math.fsum((s * s).ravel())
    b, mu = model.beta, model.mu
    t1 = partition_function(model, trunc, b, -3.0 * mu).value
    t32 = partition_function(model, trunc, 1.5 * b, -mu / 3.0).value
    t2 = partition_function(model, trunc, 2.0 * b, -mu).value
    bound = t1 * t32 ** 2 + t2 ** 2
    return HSReport(hs, bound, hs <= bound * (1.0 + 1e-10))


def symmetrize(G: GeneratorMatrix) -> SymmetricGenerator:
    """``D A D^{-1}`` with ``D = diag(w^{1/2})``."""
    r = np.sqrt(G.weights)
    s = r[:, None] * G.entries / r[None, :]
    return SymmetricGenerator(s, G.weights, G)
