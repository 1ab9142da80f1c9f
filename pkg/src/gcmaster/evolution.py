"""Time evolution of the master equation and relaxation diagnostics.

Two independent propagators are provided: the spectral resolution
``exp(tau A) p = sum_k <p, q_k>_w exp(tau nu_k) q_k`` and a fixed-step
classical Runge-Kutta integrator of ``dp/dtau = A p``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidParams, ShrinkTooSevere, UnstableStep
from .generator import GeneratorMatrix
from .spectral import SpectralDecomposition
from .thermo import ModelSpec, TruncationPolicy, equilibrium_distribution

SUM_TOL = 1e-13
MIN_SHRINK = 1e-6


@dataclass(frozen=True, eq=False)
class InitialData:
    """Probability vector ``p*`` on the truncated levels.

    ``shrink`` and ``coefficients`` are filled in by the subspace
    constructors: the positivity scale factor that was applied and the
    resulting Fourier coefficients for ``k = 2..N``.
    """

    coords: np.ndarray
    shrink: float = 1.0
    coefficients: Optional[np.ndarray] = None

    def __post_init__(self):
        p = np.array(self.coords, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise DimensionMismatch("initial data must be a non-empty 1-d array")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise InvalidParams("initial data must be finite and non-negative")
        total = math.fsum(p)
        if abs(total - 1.0) > SUM_TOL:
            raise InvalidParams(f"initial data sums to {total!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "coords", p)

    def __len__(self):
        return len(self.coords)

    @classmethod
    def uniform(cls, size: int) -> "InitialData":
        return cls(np.full(size, 1.0 / size))

    @classmethod
    def delta(cls, m: int, size: int) -> "InitialData":
        if not 1 <= m <= size:
            raise InvalidParams(f"delta level {m} outside 1..{size}")
        p = np.zeros(size)
        p[m - 1] = 1.0
        return cls(p)

    @classmethod
    def equilibrium(cls, dec: SpectralDecomposition) -> "InitialData":
        return cls(_equilibrium(dec))


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Samples of ``p(tau)``; ``states`` is ``None`` when only errors were kept."""

    times: np.ndarray
    errors: np.ndarray
    fourier: np.ndarray
    sums: np.ndarray
    min_components: np.ndarray
    states: Optional[np.ndarray] = None
    method: str = "spectral"


def _equilibrium(dec: SpectralDecomposition) -> np.ndarray:
    inv = 1.0 / dec.weights
    return inv / math.fsum(inv)


def _coords(p) -> np.ndarray:
    return p.coords if isinstance(p, InitialData) else np.asarray(p, dtype=float)


def fourier_coefficients(dec: SpectralDecomposition, p) -> np.ndarray:
    """``c_k = <p, q_k>_w`` for ``k = 1..M``."""
    p = _coords(p)
    if p.shape != dec.weights.shape:
        raise DimensionMismatch(f"vector of length {p.size} against {dec.size} levels")
    return dec.coefficients(p)


def propagate_spectral(dec: SpectralDecomposition, p, tau: float) -> np.ndarray:
    """``exp(tau A) p`` from the spectral resolution."""
    if tau < 0:
        raise InvalidParams("tau must be >= 0")
    c = fourier_coefficients(dec, p)
    return dec.eigenvectors @ (c * np.exp(tau * dec.eigenvalues))


def _rk4_step_limit(G: GeneratorMatrix) -> float:
    return 0.1 / float(np.max(np.abs(np.diag(G.entries))))


def propagate_ode(G: GeneratorMatrix, p, tau: float, step: Optional[float] = None) -> np.ndarray:
    """Classical RK4 for ``dp/dtau = A p`` with uniform steps no longer than ``step``.

    ``step`` defaults to a fifth of the stability limit ``0.1 / max|a_mm|``.
    """
    limit = _rk4_step_limit(G)
    step = 0.2 * limit if step is None else float(step)
    if not 0 < step <= limit:
        raise InvalidParams(f"step {step:.3g} outside (0, {limit:.3g}]")
    if tau < 0:
        raise InvalidParams("tau must be >= 0")
    x = np.array(_coords(p), dtype=float)
    if x.shape != (G.size,):
        raise DimensionMismatch(f"vector of length {x.size} against {G.size} levels")
    a = G.entries
    n = math.ceil(tau / step) if tau > 0 else 0
    h = tau / n if n else 0.0
    start = math.fsum(x)
    for _ in range(n):
        k1 = a @ x
        k2 = a @ (x + 0.5 * h * k1)
        k3 = a @ (x + 0.5 * h * k2)
        k4 = a @ (x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    drift = abs(math.fsum(x) - start)
    if drift > 1e-6:
        raise UnstableStep(f"probability drifted by {drift:.2e} over {n} steps")
    return x


def weighted_distance(p: np.ndarray, q: np.ndarray, weights: np.ndarray) -> float:
    d = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
    return math.sqrt(math.fsum(weights * d * d))


def equilibrium_error(p, model: ModelSpec, trunc: TruncationPolicy) -> float:
    """``||p - p_eq||_w`` computed directly from the state."""
    eq = equilibrium_distribution(model, trunc)
    p = _coords(p)
    if p.shape != eq.coords.shape:
        raise DimensionMismatch(f"vector of length {p.size} against {len(eq)} levels")
    return weighted_distance(p, eq.coords, eq.weights)


def fourier_error(coefficients: np.ndarray, eigenvalues: np.ndarray, tau: float) -> float:
    """``sqrt(sum_{k>=2} c_k^2 exp(2 tau nu_k))``; needs no state vector."""
    c = np.asarray(coefficients, dtype=float)[1:]
    terms = c * c * np.exp(2.0 * tau * np.asarray(eigenvalues, dtype=float)[1:])
    return math.sqrt(math.fsum(terms))


def truncated_subspace_initial(dec: SpectralDecomposition, N: int, coeffs: Sequence[float]) -> InitialData:
    """``p_eq + s sum_{k=2..N} c_k q_k`` with the largest admissible ``s`` in (0, 1].

    The component along ``q_1`` is fixed by normalisation, and every excited
    mode sums to zero, so only positivity can limit ``s``.
    """
    if not 2 <= N <= dec.size:
        raise InvalidParams(f"N must lie in 2..{dec.size}, got {N}")
    c = np.asarray(coeffs, dtype=float)
    if c.shape != (N - 1,):
        raise DimensionMismatch(f"expected {N - 1} coefficients, got {c.size}")
    if not np.all(np.isfinite(c)):
        raise InvalidParams("coefficients must be finite")
    peq = _equilibrium(dec)
    d = dec.eigenvectors[:, 1:N] @ c
    s = _positivity_shrink(peq, d)
    p = peq + s * d
    # excited modes carry zero total mass; remove the rounding residue
    p = np.clip(p, 0.0, None)
    p /= math.fsum(p)
    return InitialData(p, shrink=s, coefficients=s * c)


def _positivity_shrink(peq: np.ndarray, d: np.ndarray) -> float:
    neg = d < 0
    if not neg.any():
        return 1.0
    s = min(1.0, float(np.min(peq[neg] / -d[neg])))
    if s < 1.0:
        s *= 1.0 - 1e-12
    if s < MIN_SHRINK:
        raise ShrinkTooSevere(f"positivity requires shrink factor {s:.3e} < {MIN_SHRINK:g}")
    return s


def evolve(dec: SpectralDecomposition, p, times: Sequence[float], method: str = "spectral",
           G: Optional[GeneratorMatrix] = None, step: Optional[float] = None,
           keep_states: bool = True) -> TrajectoryRecord:
    """Trajectory on an increasing time grid by spectral or RK4 propagation."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(times < 0) or np.any(np.diff(times) < 0):
        raise InvalidParams("times must be a non-decreasing grid of values >= 0")
    x0 = _coords(p)
    peq = _equilibrium(dec)
    coeffs = fourier_coefficients(dec, x0)
    if method == "spectral":
        states = [propagate_spectral(dec, x0, t) for t in times]
    elif method == "ode":
        if G is None:
            raise InvalidParams("ODE propagation needs the generator matrix")
        states, x, prev = [], x0, 0.0
        for t in times:
            x = propagate_ode(G, x, t - prev, step)
            prev = t
            states.append(x)
    else:
        raise InvalidParams(f"method must be 'spectral' or 'ode', got {method!r}")
    states = np.array(states).reshape(len(times), dec.size)
    errors = np.array([weighted_distance(x, peq, dec.weights) for x in states])
    return TrajectoryRecord(
        times=times,
        errors=errors,
        fourier=coeffs,
        sums=np.array([math.fsum(x) for x in states]),
        min_components=states.min(axis=1) if states.size else np.array([]),
        states=states if keep_states else None,
        method=method,
    )


def fourier_trajectory(dec: SpectralDecomposition, coefficients: np.ndarray,
                       times: Sequence[float]) -> TrajectoryRecord:
    """Errors from the Fourier side only; usable at arbitrarily large ``tau``."""
    times = np.asarray(times, dtype=float)
    errors = np.array([fourier_error(coefficients, dec.eigenvalues, t) for t in times])
    nan = np.full(times.shape, np.nan)
    return TrajectoryRecord(times, errors, np.asarray(coefficients, dtype=float), nan, nan,
                            None, "fourier")


class DecayBoundReport(NamedTuple):
    max_ratio: float
    ratios: np.ndarray
    passed: bool


def decay_bound_check(traj: TrajectoryRecord, nu_N: float, p_norm: float,
                      tol: float = 1e-9) -> DecayBoundReport:
    """``error(tau) / (exp(-tau |nu_N|) ||p*||_w)`` over the grid."""
    if not p_norm > 0:
        raise InvalidParams("initial norm must be positive")
    rate = abs(nu_N)
    with np.errstate(divide="ignore"):
        log_ratio = np.log(traj.errors) + traj.times * rate - math.log(p_norm)
    ratios = np.exp(log_ratio)
    worst = float(np.max(ratios)) if ratios.size else 0.0
    return DecayBoundReport(worst, ratios, worst <= 1.0 + tol)


def geometric_grid(tau_min: float, tau_max: float, points: int) -> np.ndarray:
    if not 0 < tau_min < tau_max or points < 2:
        raise InvalidParams("geometric grid needs 0 < tau_min < tau_max and at least 2 points")
    return np.geomspace(tau_min, tau_max, points)


def linear_grid(tau_min: float, tau_max: float, points: int) -> np.ndarray:
    if not 0 <= tau_min < tau_max or points < 2:
        raise InvalidParams("linear grid needs 0 <= tau_min < tau_max and at least 2 points")
    return np.linspace(tau_min, tau_max, points)
