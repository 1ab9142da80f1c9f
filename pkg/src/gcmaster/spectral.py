"""Eigenvalues and eigenvectors of the generator.

The symmetrised closed-truncation generator has the structure

    S = -diag(b) + s s^T,   s_m = exp[-beta (lambda_m + mu N_m)],

so its nonzero eigenvalues are the roots of the secular function

    a(nu) = sum_m s_m^2 / (nu + b_m) = 1,

one in each interval between consecutive poles ``-b_{k-1} < nu < -b_k``.
For large ``k`` the root sits within a relative distance of roughly
``exp(-beta k)`` of the pole ``-b_k``, far below double-precision
resolution of ``nu`` itself.  Roots are therefore stored as a pole index
plus an offset, and all denominators ``nu + b_m`` are formed as
``(b_m - b_pole) + offset``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .errors import (
    DegenerateDenominator,
    InvalidParams,
    NoConvergence,
    PoleHit,
    RootNotBracketed,
    SpectralConditionViolated,
)
from .generator import (
    GeneratorMatrix,
    SymmetricGenerator,
    build_generator,
    matrix_trace,
    rate_factors,
    symmetrize,
)
from .thermo import ModelSpec, TruncationPolicy, partition_function, weight_sequence

SPECTRAL_TOL = 1e-10
ROOT_TOL = 1e-12
MAX_ROOT_ITER = 200
DEGENERATE_RATIO = 1e-10


class NearDegeneratePoles(SpectralConditionViolated):
    """Consecutive poles too close for reliable bracketing."""


@dataclass(frozen=True, eq=False)
class BSequence:
    values: np.ndarray
    variant: str
    tail: float = 0.0

    def __len__(self):
        return len(self.values)


def b_sequence(model: ModelSpec, trunc: TruncationPolicy, variant: str = "closed") -> BSequence:
    """``b_m = Theta(3b/2, -mu/3) exp[-(b/2)(lambda_m + 3 mu N_m)]``.

    ``closed`` uses the truncated partition sum, which makes ``b_m`` the
    exact total departure rate of level ``m`` in the truncated chain.
    ``open`` adds the certified tail and serves as an infinite-model
    reference only.
    """
    if variant not in ("closed", "open"):
        raise InvalidParams(f"variant must be 'closed' or 'open', got {variant!r}")
    theta = partition_function(model, trunc, 1.5 * model.beta, -model.mu / 3.0)
    scale = theta.value if variant == "closed" else theta.value + theta.tail
    _, y = rate_factors(model, trunc)
    return BSequence(scale * np.exp(y), variant, theta.tail if variant == "open" else 0.0)


def secular_weights(model: ModelSpec, trunc: TruncationPolicy) -> np.ndarray:
    """Numerators ``s_m^2 = exp[-2 beta (lambda_m + mu N_m)]`` of the secular function."""
    x, y = rate_factors(model, trunc)
    return np.exp(x + y)


class SpectralConditionReport(NamedTuple):
    passed: bool
    first_violation: Optional[int]
    b_decreasing: bool


def verify_spectral_condition(model: ModelSpec, trunc: TruncationPolicy) -> SpectralConditionReport:
    """Check ``lambda_{m+1} - lambda_m > 3 mu (N_m - N_{m+1})`` for all ``m < M``."""
    lam, n = model.levels(trunc.max_index)
    ok = np.diff(lam) > 3.0 * model.mu * (n[:-1] - n[1:])
    bad = np.nonzero(~ok)[0]
    _, y = rate_factors(model, trunc)
    return SpectralConditionReport(
        passed=bool(ok.all()),
        first_violation=int(bad[0]) + 1 if bad.size else None,
        b_decreasing=bool(np.all(np.diff(y) < 0)),
    )


def secular_value(nu: float, model: ModelSpec, trunc: TruncationPolicy) -> float:
    """``a(nu) = sum_m s_m^2 / (nu + b_m)`` over the truncated range."""
    b = b_sequence(model, trunc).values
    den = nu + b
    if np.any(np.abs(den) < 1e-300):
        raise PoleHit(f"nu={nu!r} sits on a pole")
    return math.fsum(secular_weights(model, trunc) / den)


class SecularRoot(NamedTuple):
    """Root ``nu = -b[pole-1] + offset`` of the k-th interval (1-based ``k``, ``pole``)."""

    k: int
    pole: int
    offset: float
    iterations: int

    def value(self, b: np.ndarray) -> float:
        return -b[self.pole - 1] + self.offset


def _pole_gaps(b: np.ndarray, pole: int) -> np.ndarray:
    return b - b[pole - 1]


def _deflated(gaps: np.ndarray, weights: np.ndarray, offset: float) -> float:
    # (1 - a(nu)) / (-nu); same sign structure as a(nu) - 1 but free of the
    # cancellation against 1, because sum_m s_m^2 / b_m = 1 exactly
    return float(np.sum(weights / (gaps + offset)))


def _bisect(f, lo: float, hi: float, max_iter: int) -> tuple[float, float, int]:
    """Shrink ``(lo, hi)`` with ``f(lo) > 0 > f(hi)`` to floating-point resolution.

    Same-signed brackets spanning many decades are halved geometrically first.
    """
    for it in range(1, max_iter + 1):
        if lo * hi > 0 and max(abs(lo), abs(hi)) > 4.0 * min(abs(lo), abs(hi)):
            mid = math.copysign(math.sqrt(abs(lo)) * math.sqrt(abs(hi)), lo)
        else:
            mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            return lo, hi, it
        fm = f(mid)
        if fm > 0:
            lo = mid
        elif fm < 0:
            hi = mid
        else:
            return mid, mid, it
    raise NoConvergence(f"bisection did not reach resolution in {max_iter} iterations")


def _interval_root(k: int, b: np.ndarray, weights: np.ndarray, max_iter: int) -> SecularRoot:
    gap = b[k - 2] - b[k - 1]
    near_k = _pole_gaps(b, k)
    with np.errstate(divide="ignore"):
        at_mid = _deflated(near_k, weights / b, -0.5 * gap)
    if at_mid == 0:
        return SecularRoot(k, k, -0.5 * gap, 0)
    if at_mid > 0:
        pole, gaps, lo, hi = k, near_k, -0.5 * gap, -gap * 2.0 ** -60
    else:
        pole, gaps, lo, hi = k - 1, _pole_gaps(b, k - 1), gap * 2.0 ** -60, 0.5 * gap
    wb = weights / b

    def f(offset):
        return _deflated(gaps, wb, offset)

    # walk the inner end toward the pole until the sign flips
    inner_is_hi = pole == k
    for _ in range(20):
        inner = hi if inner_is_hi else lo
        fi = f(inner)
        if (fi < 0) if inner_is_hi else (fi > 0):
            break
        inner *= 2.0 ** -60
        if inner == 0.0:
            raise RootNotBracketed(f"interval {k}: no sign change next to pole {pole}")
        if inner_is_hi:
            hi = inner
        else:
            lo = inner
    else:
        raise RootNotBracketed(f"interval {k}: could not bracket the root")
    lo, hi, it = _bisect(f, lo, hi, max_iter)
    # whichever end is closer to the pole carries the smaller magnitude
    offset = 0.5 * (lo + hi)
    return SecularRoot(k, pole, offset, it)


def _check_poles(model: ModelSpec, trunc: TruncationPolicy, b: np.ndarray) -> None:
    rep = verify_spectral_condition(model, trunc)
    if not rep.passed or not np.all(np.diff(b) < 0):
        raise SpectralConditionViolated(
            f"spectral condition fails at m={rep.first_violation}; poles are not strictly decreasing")
    if b.size > 1:
        ratio = 1.0 - b[1:] / b[:-1]
        if np.any(ratio < DEGENERATE_RATIO):
            m = int(np.argmin(ratio)) + 1
            raise NearDegeneratePoles(f"b_{m} and b_{m + 1} agree to relative {ratio[m - 1]:.2e}")


def secular_roots(model: ModelSpec, trunc: TruncationPolicy, tol_root: float = ROOT_TOL,
                  max_iter: int = MAX_ROOT_ITER) -> list[SecularRoot]:
    """Roots of ``a(nu) = 1`` for ``k = 2..M``, one per pole interval."""
    b = b_sequence(model, trunc).values
    _check_poles(model, trunc, b)
    weights = secular_weights(model, trunc)
    roots = [_interval_root(k, b, weights, max_iter) for k in range(2, len(b) + 1)]
    for r in roots:
        gaps = _pole_gaps(b, r.pole) + r.offset
        resid = abs(math.fsum(weights / gaps) - 1.0)
        if not resid <= tol_root:
            raise NoConvergence(f"root {r.k}: |a(nu) - 1| = {resid:.2e} exceeds tol_root {tol_root:.1e}")
    return roots


def solve_eigenvalues(model: ModelSpec, trunc: TruncationPolicy, tol_root: float = ROOT_TOL) -> np.ndarray:
    """``[0, nu_2, ..., nu_M]`` with ``nu_2 < nu_3 < ... < nu_M < 0``."""
    b = b_sequence(model, trunc).values
    roots = secular_roots(model, trunc, tol_root)
    return np.array([0.0] + [r.value(b) for r in roots])


def eigenvector(nu: Union[float, SecularRoot], model: ModelSpec, trunc: TruncationPolicy) -> np.ndarray:
    """Unit-weighted-norm eigenvector ``q_k`` in probability coordinates.

    Pass a ``SecularRoot`` rather than a float for anything but the first
    few eigenvalues; a float ``nu`` cannot resolve ``nu + b_k`` near a pole.
    """
    b = b_sequence(model, trunc).values
    if isinstance(nu, SecularRoot):
        den = _pole_gaps(b, nu.pole) + nu.offset
    else:
        den = float(nu) + b
    if np.any(np.abs(den) < 1e-300):
        raise DegenerateDenominator("nu + b_m vanishes for some m")
    s = np.sqrt(secular_weights(model, trunc))
    y = s / den
    # nu + b_1 > 0 for every root, so the first component is already positive
    y /= np.linalg.norm(y)
    return y / np.sqrt(weight_sequence(model, trunc))


def _fix_sign(y: np.ndarray) -> np.ndarray:
    # first component resolved above rounding noise of a dense solver
    big = np.abs(y) > 1e-8 * np.max(np.abs(y))
    first = int(np.argmax(big))
    return -y if y[first] < 0 else y


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenpairs ordered ``nu_1 = 0`` first, then ``nu_2 < ... < nu_M``.

    ``eigenvectors[:, k-1]`` is ``q_k`` in probability coordinates with unit
    weighted norm.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    weights: np.ndarray
    residuals: np.ndarray
    method: str
    poles: np.ndarray
    roots: Optional[tuple] = None
    model: Optional[ModelSpec] = None
    trunc: Optional[TruncationPolicy] = None

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    def sym_vectors(self) -> np.ndarray:
        return self.eigenvectors * np.sqrt(self.weights)[:, None]

    def coefficients(self, p: np.ndarray) -> np.ndarray:
        """Fourier coefficients ``<p, q_k>_w`` for every ``k``."""
        return (self.weights * np.asarray(p, dtype=float)) @ self.eigenvectors

    def gram(self) -> np.ndarray:
        y = self.sym_vectors()
        return y.T @ y


def _residuals(S: np.ndarray, Y: np.ndarray, nus: np.ndarray) -> np.ndarray:
    return np.linalg.norm(S @ Y - Y * nus[None, :], axis=0)


def decompose(model: ModelSpec, trunc: TruncationPolicy, method: str = "secular",
              tol_root: float = ROOT_TOL) -> SpectralDecomposition:
    """Full eigendecomposition by the secular route or the dense oracle.

    The secular route falls back to the dense oracle, with a warning, when
    consecutive poles are numerically degenerate.
    """
    G = build_generator(model, trunc)
    S = symmetrize(G)
    if method == "dense":
        return dense_eig_oracle(S)
    if method != "secular":
        raise InvalidParams(f"method must be 'secular' or 'dense', got {method!r}")
    b = b_sequence(model, trunc).values
    try:
        roots = secular_roots(model, trunc, tol_root)
    except NearDegeneratePoles as exc:
        warnings.warn(f"secular method refused ({exc}); using dense oracle", RuntimeWarning)
        return dense_eig_oracle(S)
    nus = np.array([0.0] + [r.value(b) for r in roots])
    w = G.weights
    s = np.sqrt(secular_weights(model, trunc))
    Y = np.empty((len(b), len(b)))
    Y[:, 0] = s / b / np.linalg.norm(s / b)
    for r in roots:
        y = s / (_pole_gaps(b, r.pole) + r.offset)
        Y[:, r.k - 1] = y / np.linalg.norm(y)
    Q = Y / np.sqrt(w)[:, None]
    return SpectralDecomposition(nus, Q, w, _residuals(S.entries, Y, nus), "secular", b,
                                 tuple(roots), model, trunc)


def jacobi_eigh(a: np.ndarray, tol: float = np.finfo(float).eps, max_sweeps: int = 60
                ) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigensolver for a real symmetric matrix.

    A rotation is skipped once ``|a_pq| <= tol * sqrt(|a_pp a_qq|)``; this
    relative threshold keeps small eigenvalues of graded matrices accurate.
    Returns unsorted eigenvalues and the matrix of eigenvectors (columns).
    """
    A = np.array(a, dtype=float)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise InvalidParams("jacobi_eigh needs a square matrix")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                app, aqq = A[p, p], A[q, q]
                if abs(apq) <= tol * math.sqrt(abs(app * aqq)) or abs(apq) < 1e-300:
                    continue
                rotated = True
                theta = (aqq - app) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                A[p, :] = A[:, p]
                A[q, :] = A[:, q]
                A[p, p] = app - t * apq
                A[q, q] = aqq + t * apq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
        if not rotated:
            return np.diag(A).copy(), V
    raise NoConvergence(f"Jacobi iteration did not converge in {max_sweeps} sweeps")


def dense_eig_oracle(S: Union[SymmetricGenerator, np.ndarray], max_sweeps: int = 60) -> SpectralDecomposition:
    """Independent eigendecomposition of the symmetrised generator.

    The eigenpair aligned with the stationary direction ``w^{-1/2}`` is
    taken as ``nu_1``; the rest follow in ascending order to match the
    secular indexing.  Absolute eigenvalue accuracy is about
    ``eps * ||S||``, so eigenvalues smaller than that are not resolved.

    A plain symmetric array is also accepted; it gets unit weights and its
    largest eigenvalue is put first.
    """
    if isinstance(S, SymmetricGenerator):
        entries, weights, G = S.entries, S.weights, S.parent
    else:
        entries = np.asarray(S, dtype=float)
        weights, G = np.ones(entries.shape[0]), None
    evals, Y = jacobi_eigh(entries, max_sweeps=max_sweeps)
    if G is None:
        top = int(np.argmax(evals))
    else:
        top = int(np.argmax(np.abs((1.0 / np.sqrt(weights)) @ Y)))
    rest = [i for i in np.argsort(evals, kind="stable") if i != top]
    order = [top] + rest
    evals, Y = evals[order], Y[:, order]
    for k in range(Y.shape[1]):
        Y[:, k] = _fix_sign(Y[:, k])
    if G is None:
        poles = np.full(len(evals), np.nan)
    else:
        # total departure rate of each level, i.e. the closed b-sequence
        poles = -np.diag(G.entries) + np.diag(G.rates)
    return SpectralDecomposition(evals, Y / np.sqrt(weights)[:, None], weights,
                                 _residuals(entries, Y, evals), "dense", poles, None,
                                 None if G is None else G.model, None if G is None else G.trunc)


def localization_violations(dec: SpectralDecomposition) -> list[int]:
    """Indices ``k >= 2`` whose eigenvalue is not inside ``(-b_{k-1}, -b_k)``.

    Secular decompositions are judged on their exact pole-offset form; dense
    ones on the float eigenvalue, with the interval taken as closed since a
    float cannot resolve roots lying within an ulp of a pole.
    """
    b = dec.poles
    bad = []
    if dec.roots is not None:
        for r in dec.roots:
            gap = b[r.k - 2] - b[r.k - 1]
            if not gap > 0:
                bad.append(r.k)
            elif r.pole == r.k and not (-gap < r.offset < 0):
                bad.append(r.k)
            elif r.pole == r.k - 1 and not (0 < r.offset < gap):
                bad.append(r.k)
        return bad
    for k in range(2, dec.size + 1):
        lo, hi = -b[k - 2], -b[k - 1]
        nu = dec.eigenvalues[k - 1]
        if not (lo < hi and lo <= nu <= hi):
            bad.append(k)
    return bad


class TraceCheck(NamedTuple):
    sum_eigs: float
    matrix_trace: float
    passed: bool


def spectral_trace_check(dec: SpectralDecomposition, G: GeneratorMatrix, rel_tol: float = 1e-9) -> TraceCheck:
    total = math.fsum(dec.eigenvalues)
    tr = matrix_trace(G)
    return TraceCheck(total, tr, abs(total - tr) <= rel_tol * abs(tr))


class GapProfile(NamedTuple):
    magnitudes: np.ndarray
    inside_intervals: bool
    smallest: float
    no_spectral_gap: bool


def gap_profile(dec: SpectralDecomposition, refined: Optional[SpectralDecomposition] = None) -> GapProfile:
    """``|nu_k|`` for ``k = 2..M``, which decrease toward 0 as ``k`` grows.

    The no-gap flag needs a second decomposition at a larger truncation and
    is raised when its smallest magnitude is below this one's.
    """
    mags = np.abs(dec.eigenvalues[1:])
    if mags.size == 0:
        return GapProfile(mags, True, math.inf, False)
    inside = bool(np.all(mags <= dec.poles[:-1]))
    smallest = float(mags[-1])
    trend = refined is not None and refined.size > dec.size and abs(refined.eigenvalues[-1]) < smallest
    return GapProfile(mags, inside, smallest, bool(inside and trend))


def overlaps(a: SpectralDecomposition, b: SpectralDecomposition) -> np.ndarray:
    """``|<q_k^a, q_k^b>_w|`` for matching indices."""
    if a.size != b.size:
        raise InvalidParams("decompositions differ in size")
    return np.abs(np.sum(a.sym_vectors() * b.sym_vectors(), axis=0))


def reconstruction_error(dec: SpectralDecomposition) -> float:
    """Max-norm distance of ``sum_k q_k q_k^T`` (weighted) from the identity."""
    y = dec.sym_vectors()
    return float(np.max(np.abs(y @ y.T - np.eye(dec.size))))
