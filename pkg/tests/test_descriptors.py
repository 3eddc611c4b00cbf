import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from placemine.descriptors import (
    AggregationParams,
    GlobalDescriptor,
    PatchDescriptorSet,
    SoftPParams,
    TwoLayerMLP,
    cfp_aggregate,
    default_aggregation_params,
    default_softp_params,
    l2_normalize,
    random_mlp,
    softp_modulate,
    variance_shift_estimate,
)


def identity_mlp(dim):
    """1-hidden-unit-per-output net that passes positive inputs through."""
    return TwoLayerMLP(
        w1=np.eye(dim), b1=np.zeros(dim), w2=np.eye(dim), b2=np.zeros(dim),
        activation="identity",
    )


class TestPatchDescriptorSet:
    def test_rejects_non_finite_naming_row(self):
        bad = np.ones((3, 2))
        bad[1, 0] = np.nan
        with pytest.raises(ValueError, match="row 1"):
            PatchDescriptorSet(bad, image_id="img7")

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            PatchDescriptorSet(np.empty((0, 4)))


class TestSoftPModulate:
    def test_alpha_zero_is_bitwise_identity(self):
        x = PatchDescriptorSet(np.random.default_rng(0).standard_normal((8, 5)))
        params = default_softp_params(seed=1, alpha=0.0)
        out, beta = softp_modulate(x, params)
        assert np.array_equal(out.descriptors, x.descriptors)
        assert np.all(beta == 0.0)

    def test_hand_row(self):
        # Row (3, 4) with beta 0.5 scales to (4.5, 6.0): force beta = alpha/2
        # by a phi that outputs logit 0 for any input.
        phi = TwoLayerMLP(
            w1=np.zeros((1, 1)), b1=np.zeros(1), w2=np.zeros((1, 1)), b2=np.zeros(1)
        )
        params = SoftPParams(alpha=1.0, epsilon=1e-12, phi=phi)
        x = PatchDescriptorSet(np.array([[3.0, 4.0]]))
        out, beta = softp_modulate(x, params)
        assert beta[0] == pytest.approx(0.5)
        assert out.descriptors[0] == pytest.approx([4.5, 6.0])

    @pytest.mark.parametrize("alpha", [0.0, 0.3, 1.0, 5.0])
    def test_beta_bounded(self, alpha):
        rng = np.random.default_rng(3)
        x = PatchDescriptorSet(rng.standard_normal((32, 8)) * 10)
        _, beta = softp_modulate(x, default_softp_params(seed=4, alpha=alpha))
        assert np.all(beta >= 0.0) and np.all(beta <= alpha)

    def test_preserves_direction(self):
        rng = np.random.default_rng(5)
        x = PatchDescriptorSet(rng.standard_normal((16, 6)))
        out, beta = softp_modulate(x, default_softp_params(seed=6))
        # each output row is a non-negative multiple of the input row
        ratio = out.descriptors / x.descriptors
        for i in range(16):
            assert np.allclose(ratio[i], 1.0 + beta[i])


class TestVarianceShift:
    def test_hand_example_small_beta(self):
        x = PatchDescriptorSet(np.array([[1.0, 0.0], [-1.0, 0.0]]))
        exact, est = variance_shift_estimate(x, np.array([0.05, 0.05]))
        assert exact == pytest.approx(1.1025)
        assert est == pytest.approx(1.1)

    def test_hand_example_large_beta(self):
        x = PatchDescriptorSet(np.array([[1.0, 0.0], [-1.0, 0.0]]))
        exact, est = variance_shift_estimate(x, np.array([0.5, 0.5]))
        assert exact == pytest.approx(2.25)
        assert est == pytest.approx(2.0)

    def test_zero_beta_collapses_to_sample_variance(self):
        rng = np.random.default_rng(7)
        mat = rng.standard_normal((10, 4))
        x = PatchDescriptorSet(mat)
        exact, est = variance_shift_estimate(x, np.zeros(10))
        centered = mat - mat.mean(axis=0)
        expected = np.mean(np.sum(centered**2, axis=1))
        assert exact == pytest.approx(expected)
        assert est == pytest.approx(expected)

    def test_rejects_single_patch(self):
        with pytest.raises(ValueError):
            variance_shift_estimate(PatchDescriptorSet(np.ones((1, 3))), np.array([0.1]))

    def test_first_order_gap_shrinks_quadratically(self):
        # Centered inputs kill the linear mean-shift term, so the gap is
        # exactly quadratic in the beta scale.
        rng = np.random.default_rng(8)
        for _ in range(20):
            mat = rng.standard_normal((12, 5))
            mat -= mat.mean(axis=0)
            x = PatchDescriptorSet(mat)
            beta = rng.uniform(0, 1, 12)
            ratios = []
            for t in (0.1, 0.05, 0.025):
                exact, est = variance_shift_estimate(x, t * beta)
                ratios.append(abs(exact - est) / t**2)
            assert max(ratios) / min(ratios) < 4


class TestCfpAggregate:
    def test_single_patch_identity_maps(self):
        params = AggregationParams(compress=identity_mlp(1), probe=identity_mlp(1))
        x = PatchDescriptorSet(np.array([[3.0]]))
        out = cfp_aggregate(x, None, params)
        assert out.vector == pytest.approx([9.0])

    def test_output_dimension_8448(self):
        params = default_aggregation_params(16, compress_dim=128, probe_dim=64, token_dim=256)
        assert params.output_dim == 8448
        x = PatchDescriptorSet(np.random.default_rng(0).standard_normal((4, 16)))
        out = cfp_aggregate(x, np.zeros(16), params)
        assert len(out) == 8448

    def test_matches_per_patch_loop_oracle(self):
        rng = np.random.default_rng(9)
        params = default_aggregation_params(4, compress_dim=3, probe_dim=2, token_dim=None, seed=10)
        mat = rng.standard_normal((8, 4))
        x = PatchDescriptorSet(mat)
        out = cfp_aggregate(x, None, params)
        acc = np.zeros((3, 2))
        for i in range(8):
            ci = params.compress.apply(mat[i : i + 1])[0]
            pi = params.probe.apply(mat[i : i + 1])[0]
            acc += np.outer(ci, pi)
        acc /= 8
        np.testing.assert_allclose(out.vector, acc.ravel(), rtol=1e-6)

    def test_dimension_mismatch_rejected(self):
        params = default_aggregation_params(4, compress_dim=3, probe_dim=2, token_dim=None)
        with pytest.raises(ValueError, match="dim"):
            cfp_aggregate(PatchDescriptorSet(np.ones((2, 5))), None, params)

    def test_token_without_projection_rejected(self):
        params = default_aggregation_params(4, compress_dim=3, probe_dim=2, token_dim=None)
        with pytest.raises(ValueError, match="token"):
            cfp_aggregate(PatchDescriptorSet(np.ones((2, 4))), np.ones(4), params)


class TestL2Normalize:
    def test_hand_example(self):
        out = l2_normalize(GlobalDescriptor(np.array([3.0, 4.0])))
        assert out.vector == pytest.approx([0.6, 0.8])
        assert out.normalized

    def test_idempotent(self):
        once = l2_normalize(GlobalDescriptor(np.array([1.0, 2.0, -2.0])))
        twice = l2_normalize(once)
        np.testing.assert_allclose(twice.vector, once.vector, atol=1e-12)

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            l2_normalize(GlobalDescriptor(np.zeros(3)))

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=16))
    @settings(max_examples=50, deadline=None)
    def test_unit_norm_property(self, entries):
        vec = np.array(entries)
        if np.linalg.norm(vec) == 0:
            return
        out = l2_normalize(GlobalDescriptor(vec))
        assert abs(np.linalg.norm(out.vector) - 1.0) < 1e-9


class TestMlp:
    def test_random_mlp_shapes(self):
        mlp = random_mlp(np.random.default_rng(0), 5, 7, 3)
        assert mlp.in_dim == 5 and mlp.out_dim == 3
        assert mlp.apply(np.ones((2, 5))).shape == (2, 3)

    def test_rejects_non_finite_weights(self):
        with pytest.raises(ValueError, match="w1"):
            TwoLayerMLP(
                w1=np.array([[np.inf]]), b1=np.zeros(1),
                w2=np.ones((1, 1)), b2=np.zeros(1),
            )
