import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcmaster.errors import (
    DimensionMismatch,
    IndexOutOfRange,
    InvalidParams,
    OverflowRisk,
    TailNotConverged,
)
from gcmaster.generator import build_generator
from gcmaster.thermo import (
    ModelSpec,
    TruncationPolicy,
    WeightedVector,
    Witness,
    equilibrium_distribution,
    partition_function,
    tail_bound,
    weight_sequence,
    weighted_inner_product,
)

# Closed-form geometric sums, evaluated once and frozen.
INV_E_MINUS_1 = 0.5819767068693265      # 1/(e-1)
INV_E2_MINUS_1 = 0.15651764274966568    # 1/(e^2-1)
P1_BETA1 = 0.6321205588285577           # 1 - 1/e
P2_BETA1 = 0.23254415793482963          # (1-1/e)/e


def test_frozen_oracles_match_closed_forms():
    assert INV_E_MINUS_1 == pytest.approx(1.0 / math.expm1(1.0), rel=1e-15)
    assert INV_E2_MINUS_1 == pytest.approx(1.0 / math.expm1(2.0), rel=1e-15)
    assert P1_BETA1 == pytest.approx(-math.expm1(-1.0), rel=1e-15)
    assert P2_BETA1 == pytest.approx(-math.expm1(-1.0) * math.exp(-1.0), rel=1e-15)


def levels_only(beta=1.0, mu=0.0):
    """lambda_m = m with no particles."""
    return ModelSpec.affine(1.0, 0.0, 0, 0, beta=beta, mu=mu)


class TestPartitionFunction:
    def test_ln2_geometric_series_sums_to_one(self):
        z = partition_function(levels_only(), TruncationPolicy(60), math.log(2.0))
        assert z.value == pytest.approx(1.0, abs=1e-15)
        assert z.tail == pytest.approx(2.0 ** -60, rel=1e-12)

    def test_beta_one(self):
        z = partition_function(levels_only(), TruncationPolicy(60), 1.0)
        assert z.value == pytest.approx(INV_E_MINUS_1, rel=1e-14)
        assert abs(z.value + z.tail - INV_E_MINUS_1) <= z.tail

    def test_rescaled_mu(self, harmonic):
        model, trunc = harmonic(1.0, 60)
        z = partition_function(model, trunc, 1.0, -1.0)
        assert z.value == pytest.approx(INV_E2_MINUS_1, rel=1e-14)

    def test_tail_is_rigorous(self):
        model, trunc = levels_only(), TruncationPolicy(20, 1e-3)
        exact_tail = math.exp(-20.0) / math.expm1(1.0)
        assert tail_bound(model, trunc, 1.0, 0.0) >= exact_tail * (1 - 1e-12)

    @pytest.mark.parametrize("beta", [0.0, -1.0])
    def test_nonpositive_scale_rejected(self, beta):
        with pytest.raises(InvalidParams):
            partition_function(levels_only(), TruncationPolicy(10), beta)

    def test_tail_above_tolerance(self):
        with pytest.raises(TailNotConverged):
            partition_function(levels_only(), TruncationPolicy(5, 1e-8))

    def test_flat_exponent_has_no_witness(self, harmonic):
        # lambda_m - N_m = 0 at mu = 1: the sum diverges
        model = ModelSpec.harmonic(1.0, mu=1.0)
        with pytest.raises(TailNotConverged):
            partition_function(model, TruncationPolicy(60))

    def test_false_witness_detected_on_truncated_range(self):
        model = ModelSpec(lambda m: np.asarray(m, float), lambda m: np.zeros_like(m),
                          beta=1.0, witness=Witness(1, 2.0))
        with pytest.raises(TailNotConverged, match="fails at m=2"):
            partition_function(model, TruncationPolicy(30))

    def test_table_tail_is_exact_remainder(self):
        model = ModelSpec.table([1.0, 2.0, 3.0], beta=1.0)
        z = partition_function(model, TruncationPolicy(2, 1.0))
        assert z.tail == pytest.approx(math.exp(-3.0), rel=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(b1=st.floats(0.3, 3.0), b2=st.floats(0.3, 3.0))
    def test_strictly_decreasing_in_beta(self, b1, b2):
        if abs(b1 - b2) < 1e-6:
            return
        model, trunc = levels_only(), TruncationPolicy(80, 1e-2)
        lo, hi = sorted((b1, b2))
        assert partition_function(model, trunc, lo).value > partition_function(model, trunc, hi).value


class TestWeights:
    def test_exponentials(self):
        w = weight_sequence(levels_only(), TruncationPolicy(3))
        np.testing.assert_allclose(w, [math.e, math.e ** 2, math.e ** 3], rtol=1e-15)

    def test_unit_weights_at_balanced_mu(self):
        w = weight_sequence(ModelSpec.harmonic(1.0, mu=1.0), TruncationPolicy(10))
        np.testing.assert_array_equal(w, np.ones(10))

    def test_double_particles(self):
        model = ModelSpec.affine(1.0, 0.0, 2, 0, beta=2.0, mu=1.0)
        np.testing.assert_allclose(weight_sequence(model, TruncationPolicy(2)),
                                   [math.exp(-2.0), math.exp(-4.0)], rtol=1e-15)

    def test_overflow_cap(self):
        with pytest.raises(OverflowRisk):
            weight_sequence(levels_only(), TruncationPolicy(800))

    def test_table_bounds(self):
        with pytest.raises(IndexOutOfRange):
            weight_sequence(ModelSpec.table([1.0, 2.0]), TruncationPolicy(3))


class TestModelValidation:
    @pytest.mark.parametrize("beta", [0.0, -1.0, float("nan")])
    def test_beta_positive(self, beta):
        with pytest.raises(InvalidParams):
            ModelSpec.harmonic(beta)

    def test_particle_numbers_are_integers(self):
        with pytest.raises(InvalidParams):
            ModelSpec.table([1.0, 2.0], [0.5, 1.0])
        with pytest.raises(InvalidParams):
            ModelSpec.table([1.0, 2.0], [0, -1])

    def test_truncation_policy(self):
        with pytest.raises(InvalidParams):
            TruncationPolicy(0)
        with pytest.raises(InvalidParams):
            TruncationPolicy(5, 0.0)

    def test_with_params_keeps_levels(self):
        model = ModelSpec.harmonic(1.0).with_params(beta=2.0, mu=0.5)
        lam, n = model.levels(3)
        np.testing.assert_array_equal(lam, [1, 2, 3])
        np.testing.assert_array_equal(n, [1, 2, 3])
        assert (model.beta, model.mu) == (2.0, 0.5)


class TestEquilibrium:
    def test_ln2_normalisation(self):
        M = 30
        p = equilibrium_distribution(levels_only(math.log(2.0)), TruncationPolicy(M)).coords
        m = np.arange(1, M + 1)
        np.testing.assert_allclose(p, 2.0 ** -m / (1 - 2.0 ** -M), rtol=1e-14)

    def test_lowest_levels_beta_one(self):
        # p_m = (e - 1) e^{-m} / (1 - e^{-M})
        p = equilibrium_distribution(levels_only(), TruncationPolicy(60)).coords
        assert p[0] == pytest.approx(P1_BETA1 / -math.expm1(-60.0), rel=1e-14)
        assert p[1] == pytest.approx(P2_BETA1 / -math.expm1(-60.0), rel=1e-14)
        assert p[1] == pytest.approx(0.232544, abs=5e-7)

    def test_stationary_under_generator(self, harmonic):
        model, trunc = harmonic(1.0, 60)
        G = build_generator(model, trunc)
        p = equilibrium_distribution(model, trunc).coords
        assert math.fsum(p) == pytest.approx(1.0, abs=1e-15)
        assert np.max(np.abs(G.entries @ p)) <= 1e-12 * np.max(np.abs(G.entries))

    def test_squared_norm_is_inverse_partition_sum(self, harmonic):
        model, trunc = harmonic(1.0, 60)
        eq = equilibrium_distribution(model, trunc)
        theta = partition_function(model, trunc).value
        assert eq.inner(eq) == pytest.approx(1.0 / theta, rel=1e-13)
        # and, up to the truncation tail, the infinite-model value e - 1
        assert eq.inner(eq) == pytest.approx(math.expm1(1.0), rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(
        energies=st.lists(st.floats(-3.0, 8.0), min_size=2, max_size=15),
        data=st.data(),
        beta=st.floats(0.2, 3.0),
        mu=st.floats(-1.0, 1.0),
    )
    def test_positive_normalised_and_balanced_against_weights(self, energies, data, beta, mu):
        n = data.draw(st.lists(st.integers(0, 3), min_size=len(energies), max_size=len(energies)))
        model = ModelSpec.table(energies, n, beta=beta, mu=mu)
        eq = equilibrium_distribution(model, TruncationPolicy(len(energies)))
        assert np.all(eq.coords > 0)
        assert math.fsum(eq.coords) == pytest.approx(1.0, abs=1e-14)
        wp = eq.weights * eq.coords
        np.testing.assert_allclose(wp, wp[0], rtol=1e-12)


class TestInnerProduct:
    def test_unit_vectors_orthonormal(self):
        w = weight_sequence(levels_only(), TruncationPolicy(5))
        f = [WeightedVector(np.eye(5)[m] / np.sqrt(w[m]), w) for m in range(5)]
        assert weighted_inner_product(f[2], f[2]) == pytest.approx(1.0, rel=1e-15)
        assert weighted_inner_product(f[1], f[3]) == 0.0

    def test_dimension_mismatch(self):
        a = WeightedVector(np.ones(3), np.ones(3))
        b = WeightedVector(np.ones(4), np.ones(4))
        with pytest.raises(DimensionMismatch):
            weighted_inner_product(a, b)
        with pytest.raises(DimensionMismatch):
            weighted_inner_product(a, WeightedVector(np.ones(3), 2 * np.ones(3)))
        with pytest.raises(DimensionMismatch):
            WeightedVector(np.ones(3), np.ones(2))

    def test_nonpositive_weights_rejected(self):
        with pytest.raises(InvalidParams):
            WeightedVector(np.ones(2), np.array([1.0, 0.0]))

    @settings(max_examples=50, deadline=None)
    @given(
        data=st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)), min_size=3, max_size=10),
        a=st.floats(-5, 5),
        b=st.floats(-5, 5),
    )
    def test_bilinear_and_symmetric(self, data, a, b):
        arr = np.array(data)
        w = np.exp(np.linspace(0.0, 3.0, len(arr)))
        p, q, r = (WeightedVector(arr[:, i], w) for i in range(3))
        assert weighted_inner_product(p, q) == pytest.approx(weighted_inner_product(q, p), abs=1e-14)
        lhs = weighted_inner_product(WeightedVector(a * p.coords + b * q.coords, w), r)
        rhs = a * weighted_inner_product(p, r) + b * weighted_inner_product(q, r)
        scale = 1 + abs(a) + abs(b)
        assert lhs == pytest.approx(rhs, abs=1e-14 * scale * np.sum(w))
