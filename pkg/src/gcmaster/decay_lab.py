"""Slow relaxation from initial data with prescribed Fourier decay.

For the harmonic ladder at ``mu = 0`` the eigenvalues accumulate at 0, so
no spectral gap controls the approach to equilibrium.  Instead the decay
rate of the Fourier coefficients does:

* ``|c_k|^2 <= kappa exp(-delta k)`` gives ``error(tau) = O(tau^(-delta/beta))``
* ``|c_k|^2 <= kappa k^(-delta)``, ``delta > 1``, gives
  ``error(tau) = O((ln tau)^(-(delta-1)/2))``

Experiments set the coefficients at the bound and check that the error,
multiplied by the inverse envelope, stays bounded over a long time grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import DegenerateFit, GridTooShort, InvalidParams, ShrinkTooSevere
from .evolution import (
    MIN_SHRINK,
    InitialData,
    TrajectoryRecord,
    _equilibrium,
    _positivity_shrink,
    fourier_trajectory,
)
from .spectral import SpectralDecomposition

UNDERFLOW_FLOOR = 1e-280
SLOPE_MARGIN = 0.2
BOUNDED_RATIO = 10.0
MIN_FIT_POINTS = 4

LAWS = ("exp", "power")


@dataclass(frozen=True)
class DecaySpec:
    """``law="exp"``: ``|c_k|^2 = kappa e^(-delta k)``; ``law="power"``: ``kappa k^(-delta)``."""

    law: str
    kappa: float
    delta: float
    beta: float = 1.0

    def __post_init__(self):
        if self.law not in LAWS:
            raise InvalidParams(f"law must be one of {LAWS}, got {self.law!r}")
        if not self.kappa >= 0 or not math.isfinite(self.kappa):
            raise InvalidParams("kappa must be finite and >= 0")
        if self.law == "exp" and not self.delta > 0:
            raise InvalidParams("exponential law needs delta > 0")
        if self.law == "power" and not self.delta > 1:
            raise InvalidParams("power law needs delta > 1")
        if not self.beta > 0:
            raise InvalidParams("beta must be > 0")

    def magnitudes(self, size: int) -> np.ndarray:
        """``|c_k|`` at the bound for ``k = 2..size``."""
        k = np.arange(2, size + 1, dtype=float)
        if self.law == "exp":
            return math.sqrt(self.kappa) * np.exp(-0.5 * self.delta * k)
        return math.sqrt(self.kappa) * k ** (-0.5 * self.delta)

    @property
    def envelope_exponent(self) -> float:
        """Expected slope: of log error against log tau (exp law) or log ln tau (power law)."""
        if self.law == "exp":
            return -self.delta / self.beta
        return -(self.delta - 1.0) / 2.0

    @property
    def min_tau_max(self) -> float:
        return 1e8 if self.law == "exp" else 1e12


class EnvelopeReport(NamedTuple):
    law: str
    compensated_series: np.ndarray
    sup_value: float
    median_value: float
    slope: float
    intercept: float
    expected_slope: float
    slope_ok: bool
    non_power: bool
    passed: bool


class SynthesizedInitial(NamedTuple):
    initial: InitialData
    coefficients: np.ndarray
    shrink: float


def _check_harmonic(dec: SpectralDecomposition) -> None:
    model = dec.model
    if model is None or abs(model.mu) != 0.0:
        raise InvalidParams("decay experiments need a harmonic model at mu = 0")
    lam, _ = model.levels(dec.size)
    if not np.array_equal(lam, np.arange(1, dec.size + 1, dtype=float)):
        raise InvalidParams("decay experiments need energies lambda_m = m")


def synthesize_initial(dec: SpectralDecomposition, spec: DecaySpec, signs: str = "aligned") -> SynthesizedInitial:
    """Initial datum whose Fourier coefficients sit on the prescribed bound.

    ``signs="aligned"`` gives ``c_k`` the sign of ``q_k``'s own diagonal
    entry ``(q_k)_k``, so each mode adds mass at the level it is
    concentrated on; ``"alternating"`` uses ``(-1)^k``.  Positivity may
    force a common shrink factor ``s <= 1``, which only lowers ``|c_k|``.
    """
    _check_harmonic(dec)
    if spec.beta != dec.model.beta:
        raise InvalidParams(f"spec beta {spec.beta} differs from model beta {dec.model.beta}")
    mags = spec.magnitudes(dec.size)
    k = np.arange(2, dec.size + 1)
    if signs == "aligned":
        diag = np.diagonal(dec.eigenvectors)[1:]
        sg = np.where(diag < 0, -1.0, 1.0)
    elif signs == "alternating":
        sg = np.where(k % 2 == 0, 1.0, -1.0)
    else:
        raise InvalidParams(f"signs must be 'aligned' or 'alternating', got {signs!r}")
    c = mags * sg
    peq = _equilibrium(dec)
    d = dec.eigenvectors[:, 1:] @ c
    s = _positivity_shrink(peq, d)
    p = np.clip(peq + s * d, 0.0, None)
    p /= math.fsum(p)
    full = np.concatenate([[1.0 / math.sqrt(math.fsum(1.0 / dec.weights))], s * c])
    return SynthesizedInitial(InitialData(p, shrink=s, coefficients=s * c), full, s)


def fit_envelope(errors, times, law: str, beta: float, delta: float) -> EnvelopeReport:
    """Compensated series and a least-squares slope over the usable grid suffix.

    The fit uses log error against log tau for the exponential law and
    against log ln tau for the power law, restricted to the longest
    prefix of the grid whose errors stay above the underflow floor.  A
    power-law fit on data that decays faster than any power shows a slope
    that keeps steepening; that is reported as ``non_power``.
    """
    spec = DecaySpec(law, 1.0, delta, beta)
    errors = np.asarray(errors, dtype=float)
    times = np.asarray(times, dtype=float)
    if errors.shape != times.shape or errors.ndim != 1:
        raise InvalidParams("errors and times must be 1-d arrays of equal length")
    if law == "power" and np.any(times <= 1.0):
        raise InvalidParams("power-law envelope needs tau > 1")
    if np.all(errors == 0):
        zero = np.zeros_like(errors)
        return EnvelopeReport(law, zero, 0.0, 0.0, -math.inf, -math.inf, spec.envelope_exponent,
                              True, False, True)
    if np.any(errors < 0) or not np.all(np.isfinite(errors)):
        raise InvalidParams("errors must be finite and non-negative")
    above = errors > UNDERFLOW_FLOOR
    usable = int(np.argmin(above)) if not above.all() else len(errors)
    if usable < MIN_FIT_POINTS:
        raise DegenerateFit(f"only {usable} grid points above the underflow floor")
    e, t = errors[:usable], times[:usable]
    x = np.log(t) if law == "exp" else np.log(np.log(t))
    y = np.log(e)
    slope, intercept = np.polyfit(x, y, 1)
    comp = errors * envelope_inverse(times, spec)
    sup = float(np.max(comp[:usable]))
    med = float(np.median(comp[:usable]))
    half = usable // 2
    non_power = False
    if half >= 2 and usable - half >= 2:
        early = np.polyfit(x[:half], y[:half], 1)[0]
        late = np.polyfit(x[half:], y[half:], 1)[0]
        non_power = bool(late < early * (1.0 + SLOPE_MARGIN) - 1.0)
    expected = spec.envelope_exponent
    slope_ok = bool(slope <= expected * (1.0 - SLOPE_MARGIN))
    bounded = bool(np.all(np.isfinite(comp)) and sup <= BOUNDED_RATIO * med)
    return EnvelopeReport(law, comp, sup, med, float(slope), float(intercept), expected,
                          slope_ok, non_power, bounded)


def envelope_inverse(times: np.ndarray, spec: DecaySpec) -> np.ndarray:
    """``tau^(delta/beta)`` or ``(ln tau)^((delta-1)/2)``."""
    times = np.asarray(times, dtype=float)
    if spec.law == "exp":
        return times ** (spec.delta / spec.beta)
    return np.log(times) ** ((spec.delta - 1.0) / 2.0)


def run_decay_experiment(dec: SpectralDecomposition, spec: DecaySpec, tau_grid,
                         signs: str = "aligned") -> tuple[TrajectoryRecord, EnvelopeReport]:
    """Fourier-side error trajectory and its envelope verdict."""
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or tau.size < MIN_FIT_POINTS or np.any(np.diff(tau) <= 0):
        raise GridTooShort("tau grid must be increasing with at least 4 points")
    if tau[0] > 1e2 or tau[-1] < spec.min_tau_max:
        raise GridTooShort(f"tau grid must span [1e2, {spec.min_tau_max:.0e}], got "
                           f"[{tau[0]:.3g}, {tau[-1]:.3g}]")
    syn = synthesize_initial(dec, spec, signs)
    traj = fourier_trajectory(dec, syn.coefficients, tau)
    return traj, fit_envelope(traj.errors, tau, spec.law, spec.beta, spec.delta)
