"""Acceptance gate: one test group per criterion, summarised as PASS/FAIL lines.

Run directly with ``python3 tests/test_acceptance.py`` or through pytest.
"""
import filecmp
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ladder
from gcmaster.decay_lab import DecaySpec, run_decay_experiment
from gcmaster.errors import SpectralConditionViolated
from gcmaster.evolution import (
    InitialData,
    decay_bound_check,
    evolve,
    fourier_coefficients,
    fourier_trajectory,
    geometric_grid,
    linear_grid,
    propagate_ode,
    propagate_spectral,
    truncated_subspace_initial,
    weighted_distance,
)
from gcmaster.generator import (
    build_generator,
    closed_form_trace,
    hs_bound_check,
    matrix_trace,
    symmetrize,
    verify_detailed_balance,
)
from gcmaster.spectral import (
    decompose,
    dense_eig_oracle,
    localization_violations,
    overlaps,
    spectral_trace_check,
)
from gcmaster.thermo import ModelSpec, TruncationPolicy

FIX = Path(__file__).parent / "fixtures"
SWEEP = [(beta, mu) for beta in (0.5, 1.0, 2.0) for mu in (-1.0, 0.0, 1.0)]
SWEEP_IDS = [f"beta={b}-mu={m}" for b, m in SWEEP]
NU2_HAND = -0.1122823820462173  # -(e^-2.5 + e^-3.5)


def sweep_point(beta, mu):
    return ladder(beta, mu, 60), TruncationPolicy(60)


def random_simplex(seed, size):
    p = np.random.default_rng(seed).dirichlet(np.ones(size))
    return InitialData(p / math.fsum(p))


def initial_family(size):
    yield InitialData.uniform(size)
    yield InitialData.delta(1, size)
    yield InitialData.delta(size, size)
    for seed in range(3):
        yield random_simplex(seed, size)


@pytest.mark.criterion(1, "detailed balance on the beta/mu sweep")
class TestDetailedBalance:
    @pytest.mark.parametrize("beta,mu", SWEEP, ids=SWEEP_IDS)
    def test_violation_below_tolerance(self, beta, mu):
        rep = verify_detailed_balance(build_generator(*sweep_point(beta, mu)))
        assert rep.max_rel_violation <= 1e-12

    def test_runtime(self):
        start = time.perf_counter()
        for beta, mu in SWEEP:
            verify_detailed_balance(build_generator(*sweep_point(beta, mu)))
        assert time.perf_counter() - start < 1.0


@pytest.mark.criterion(2, "secular and dense spectra agree")
class TestSecularVsDense:
    def test_agreement(self):
        start = time.perf_counter()
        model, trunc = ModelSpec.harmonic(1.0), TruncationPolicy(60)
        sec = decompose(model, trunc, "secular")
        den = decompose(model, trunc, "dense")
        elapsed = time.perf_counter() - start
        nu2 = abs(sec.eigenvalues[1])
        assert np.max(np.abs(sec.eigenvalues - den.eigenvalues)) <= 1e-8 * nu2
        assert np.min(overlaps(sec, den)) >= 1 - 1e-8
        assert elapsed < 5.0


@pytest.mark.criterion(3, "eigenvalues localized between consecutive poles")
class TestLocalization:
    @pytest.mark.parametrize("beta,mu", SWEEP, ids=SWEEP_IDS)
    def test_no_violations(self, beta, mu):
        model, trunc = sweep_point(beta, mu)
        try:
            dec = decompose(model, trunc, "secular")
        except SpectralConditionViolated:
            # poles out of order: judge the dense spectrum against the same intervals
            dec = decompose(model, trunc, "dense")
        assert localization_violations(dec) == []


@pytest.mark.criterion(4, "trace identities")
class TestTraces:
    @pytest.mark.parametrize("beta,mu", SWEEP, ids=SWEEP_IDS)
    def test_spectral_trace(self, beta, mu):
        model, trunc = sweep_point(beta, mu)
        G = build_generator(model, trunc)
        dec = dense_eig_oracle(symmetrize(G))
        assert spectral_trace_check(dec, G, 1e-9).passed
        if mu >= 0:
            assert spectral_trace_check(decompose(model, trunc), G, 1e-9).passed

    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
    def test_closed_form_within_certified_tail(self, beta):
        model, trunc = ModelSpec.harmonic(beta), TruncationPolicy(60, 1e-5)
        closed = closed_form_trace(model, trunc)
        infinite = (1 / math.expm1(2 * beta)
                    - 1 / (math.expm1(beta / 2) * math.expm1(1.5 * beta)))
        tr = matrix_trace(build_generator(model, trunc))
        assert abs(tr - closed.value) <= 1e-13 * abs(closed.value)
        # certified tail plus rounding of the summed series
        assert abs(tr - infinite) <= closed.tail + 1e-13 * abs(infinite)

    @pytest.mark.parametrize("beta,mu", SWEEP, ids=SWEEP_IDS)
    def test_closed_form_on_finite_ladder(self, beta, mu):
        model, trunc = sweep_point(beta, mu)
        closed = closed_form_trace(model, trunc)
        tr = matrix_trace(build_generator(model, trunc))
        assert abs(tr - closed.value) <= 1e-12 * abs(closed.value) + closed.tail


@pytest.mark.criterion(5, "Hilbert-Schmidt bound")
class TestHSBound:
    @pytest.mark.parametrize("beta,mu", SWEEP, ids=SWEEP_IDS)
    def test_bound(self, beta, mu):
        rep = hs_bound_check(build_generator(*sweep_point(beta, mu)))
        assert rep.passed


@pytest.mark.criterion(6, "conservation and positivity along trajectories")
class TestConservation:
    @pytest.mark.parametrize("method", ["spectral", "ode"])
    def test_trajectories(self, dec40, method):
        G = build_generator(dec40.model, dec40.trunc)
        taus = linear_grid(0.0, 100.0, 51)
        for p in initial_family(40):
            traj = evolve(dec40, p, taus, method, G)
            assert np.max(np.abs(traj.sums - 1.0)) <= 1e-10
            assert np.min(traj.min_components) >= -1e-12


@pytest.mark.criterion(7, "exponential decay on truncated subspaces")
class TestSubspaceDecay:
    @pytest.mark.parametrize("N", [2, 5, 10])
    def test_ratio_bounded(self, dec60, N):
        taus = np.concatenate([[0.0], geometric_grid(1e-2, 1e4, 49)])
        nu_N = dec60.eigenvalues[N - 1]
        for seed in range(20):
            coeffs = np.random.default_rng(1000 * N + seed).normal(scale=0.1, size=N - 1)
            p = truncated_subspace_initial(dec60, N, coeffs)
            norm = math.sqrt(math.fsum(dec60.weights * p.coords ** 2))
            # exact coefficients: modes above N are zero by construction, not rounding noise
            exact = np.zeros(60)
            exact[0] = fourier_coefficients(dec60, p)[0]
            exact[1:N] = p.coefficients
            np.testing.assert_allclose(fourier_coefficients(dec60, p), exact, atol=1e-10)
            rep = decay_bound_check(fourier_trajectory(dec60, exact, taus), nu_N, norm)
            assert rep.max_ratio <= 1 + 1e-9
            direct = decay_bound_check(evolve(dec60, p, taus[taus <= 10.0]), nu_N, norm)
            assert direct.max_ratio <= 1 + 1e-9


@pytest.mark.criterion(8, "global convergence to equilibrium")
class TestGlobalConvergence:
    @pytest.mark.parametrize("size", [40, 60])
    def test_monotone_and_converged(self, dec40, dec60, size):
        dec = dec40 if size == 40 else dec60
        tau_end = 50.0 / abs(dec.eigenvalues[-1])
        taus = np.concatenate([[0.0], geometric_grid(1e-2, tau_end, 120)])
        for p in initial_family(size):
            err = evolve(dec, p, taus, keep_states=False).errors
            assert np.all(np.diff(err) <= 0)
            assert err[-1] <= 1e-8


@pytest.mark.criterion(9, "polynomial decay for exponentially small Fourier data")
class TestPolynomialDecay:
    @pytest.mark.parametrize("delta", [1.0, 2.0])
    def test_compensated_series_bounded(self, dec80, delta):
        start = time.perf_counter()
        _, rep = run_decay_experiment(dec80, DecaySpec("exp", 1.0, delta, 1.0), geometric_grid(1e2, 1e8, 61))
        assert rep.passed and rep.sup_value <= 10 * rep.median_value
        assert np.all(np.isfinite(rep.compensated_series))
        assert time.perf_counter() - start < 10.0


@pytest.mark.criterion(10, "logarithmic decay for power-law Fourier data")
class TestLogarithmicDecay:
    def test_compensated_series_bounded(self, dec80):
        _, rep = run_decay_experiment(dec80, DecaySpec("power", 1.0, 3.0, 1.0), geometric_grid(1e2, 1e12, 61))
        assert rep.passed and rep.sup_value <= 10 * rep.median_value


@pytest.mark.criterion(11, "spectral propagation agrees with RK4 and the two-level oracle")
class TestOracleEquivalence:
    def test_rk4(self, dec40):
        G = build_generator(dec40.model, dec40.trunc)
        for p in (InitialData.uniform(40), InitialData.delta(1, 40), random_simplex(0, 40), random_simplex(1, 40)):
            for tau in (1.0, 10.0, 100.0):
                gap = weighted_distance(propagate_spectral(dec40, p, tau), propagate_ode(G, p, tau), dec40.weights)
                assert gap <= 1e-6

    def test_two_level_eigenvalue(self, hand):
        nu = decompose(*hand).eigenvalues
        assert abs(nu[1] - NU2_HAND) <= 1e-12
        assert NU2_HAND == pytest.approx(-(math.exp(-2.5) + math.exp(-3.5)), rel=1e-15)


@pytest.mark.criterion(12, "repeated CLI runs are byte-identical")
class TestDeterminism:
    @pytest.mark.parametrize("argv", [
        ["spectrum", "--config", str(FIX / "h60.ini")],
        ["evolve", "--config", str(FIX / "h40.ini"), "--initial", "delta:1", "--oracle", "--modes", "5"],
        ["decay", "--law", "power", "--delta", "3", "--emit", "csv"],
    ], ids=["spectrum", "evolve", "decay"])
    def test_identical_outputs(self, tmp_path, argv):
        outs = []
        for i in range(2):
            target = tmp_path / f"run{i}.out"
            proc = subprocess.run([sys.executable, "-m", "gcmaster.cli", *argv, "--out", str(target)],
                                  capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            outs.append(target)
        assert outs[0].stat().st_size > 0
        assert filecmp.cmp(outs[0], outs[1], shallow=False)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
