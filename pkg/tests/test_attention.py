import numpy as np
import pytest

from weaksal import attention as A
from weaksal import tensor as T
from weaksal.gradcheck import check_gradients
from weaksal.tensor import Tensor


def make_params(rng, d, d_prime, zero=False):
    p = A.init_attention_params(rng, d, d_prime)
    if zero:
        for t in p.named().values():
            t.data[...] = 0.0
    return p


def rand_features(rng, d=8, h=4, w=4):
    return Tensor(rng.standard_normal((d, h, w)).astype(np.float32))


class TestRegionSaliency:
    def test_zero_params_give_uniform_half(self):
        rng = np.random.default_rng(0)
        p = make_params(rng, 8, 4, zero=True)
        s = A.region_saliency(rand_features(rng), p)
        assert s.shape == (4, 4)
        np.testing.assert_allclose(s.data, 0.5, atol=1e-7)

    def test_large_negative_bias_suppresses(self):
        rng = np.random.default_rng(1)
        p = make_params(rng, 8, 4, zero=True)
        p.b_s.data[...] = -10.0
        s = A.region_saliency(rand_features(rng), p)
        assert np.all(s.data < 1e-4)
        assert np.all(s.data > 0.0)

    def test_matches_dot_product_oracle(self):
        rng = np.random.default_rng(2)
        feats = rng.standard_normal((8, 4, 4)).astype(np.float32)
        p = make_params(rng, 8, 4)
        p.w_s.data[...] = rng.standard_normal(8)
        p.b_s.data[...] = 0.3
        s = A.region_saliency(Tensor(feats), p)
        for i in range(4):
            for j in range(4):
                z = float(p.w_s.data @ feats[:, i, j]) + 0.3
                want = 1.0 / (1.0 + np.exp(-z))
                assert s.data[i, j] == pytest.approx(want, abs=1e-6)

    def test_batched_rank_mirrored(self):
        rng = np.random.default_rng(3)
        p = make_params(rng, 8, 4)
        s = A.region_saliency(Tensor(rng.standard_normal((2, 8, 4, 4)).astype(np.float32)), p)
        assert s.shape == (2, 4, 4)


class TestAttendedFeatures:
    def test_zero_map_zeroes_features(self):
        rng = np.random.default_rng(4)
        feats = rand_features(rng)
        p = make_params(rng, 8, 4)
        f = A.attended_features(feats, Tensor(np.zeros((4, 4), np.float32)), p)
        np.testing.assert_allclose(f.data, 0.0)

    def test_ones_map_is_plain_projection(self):
        rng = np.random.default_rng(5)
        feats = rng.standard_normal((8, 4, 4)).astype(np.float32)
        p = make_params(rng, 8, 4)
        f = A.attended_features(Tensor(feats), Tensor(np.ones((4, 4), np.float32)), p)
        want = np.einsum("dk,dhw->khw", p.w_f.data, feats) + p.b_f.data[:, None, None]
        np.testing.assert_allclose(f.data, want, rtol=1e-6)

    def test_half_map_halves_output(self):
        rng = np.random.default_rng(6)
        feats = rand_features(rng)
        p = make_params(rng, 8, 4)
        f1 = A.attended_features(feats, Tensor(np.ones((4, 4), np.float32)), p)
        fh = A.attended_features(feats, Tensor(np.full((4, 4), 0.5, np.float32)), p)
        np.testing.assert_allclose(fh.data, 0.5 * f1.data, rtol=1e-6)

    def test_grid_mismatch_rejected(self):
        rng = np.random.default_rng(7)
        p = make_params(rng, 8, 4)
        with pytest.raises(ValueError, match="grid"):
            A.attended_features(rand_features(rng), Tensor(np.ones((3, 3), np.float32)), p)


class TestAttentionWeights:
    def test_identical_features_give_uniform(self):
        rng = np.random.default_rng(8)
        p = make_params(rng, 8, 4)
        f = Tensor(np.tile(rng.standard_normal((4, 1, 1)), (1, 3, 5)).astype(np.float32))
        alpha = A.attention_weights(f, p)
        assert alpha.shape == (15,)
        np.testing.assert_allclose(alpha.data, 1.0 / 15.0, rtol=1e-6)

    def test_dominant_logit_saturates(self):
        rng = np.random.default_rng(9)
        p = make_params(rng, 8, 4, zero=True)
        p.w_a.data[...] = [1.0, 0.0, 0.0, 0.0]
        f = np.zeros((4, 2, 2), np.float32)
        f[0, 1, 1] = 20.0
        alpha = A.attention_weights(Tensor(f), p)
        assert alpha.data.reshape(2, 2)[1, 1] > 0.999

    def test_hand_computed_pair(self):
        rng = np.random.default_rng(10)
        p = make_params(rng, 8, 1, zero=True)
        p.w_a.data[...] = 1.0
        f = np.array([[[0.0, np.log(3.0)]]], dtype=np.float32)  # [D'=1, 1, 2]
        alpha = A.attention_weights(Tensor(f), p)
        np.testing.assert_allclose(alpha.data, [0.25, 0.75], rtol=1e-7)

    def test_sums_to_one_randomised(self):
        rng = np.random.default_rng(11)
        p = make_params(rng, 8, 4)
        for _ in range(5):
            f = Tensor((rng.standard_normal((4, 3, 4)) * 5).astype(np.float32))
            alpha = A.attention_weights(f, p)
            assert abs(alpha.data.sum() - 1.0) < 1e-6
            assert np.all(alpha.data > 0)


class TestGlobalFeature:
    def test_one_hot_selects_region(self):
        rng = np.random.default_rng(12)
        f = rng.standard_normal((5, 2, 3))
        alpha = np.zeros(6)
        alpha[4] = 1.0
        g = A.global_feature(Tensor(f), Tensor(alpha))
        np.testing.assert_allclose(g.data, f.reshape(5, 6)[:, 4], rtol=1e-6)

    def test_uniform_gives_mean(self):
        rng = np.random.default_rng(13)
        f = rng.standard_normal((5, 2, 2))
        g = A.global_feature(Tensor(f), Tensor(np.full(4, 0.25)))
        np.testing.assert_allclose(g.data, f.reshape(5, 4).mean(axis=1), rtol=1e-6)

    def test_hand_computed_pair(self):
        f = np.array([[4.0, 0.0], [0.0, 4.0]]).reshape(2, 1, 2)
        g = A.global_feature(Tensor(f), Tensor(np.array([0.25, 0.75])))
        np.testing.assert_allclose(g.data, [1.0, 3.0], rtol=1e-7)


class TestAttentionForward:
    def test_zero_params_composition(self):
        rng = np.random.default_rng(14)
        out = A.attention_forward(rand_features(rng), make_params(rng, 8, 4, zero=True))
        np.testing.assert_allclose(out.s.data, 0.5, atol=1e-7)
        np.testing.assert_allclose(out.alpha.data, 1.0 / 16.0, rtol=1e-6)
        np.testing.assert_allclose(out.g.data, out.f.data.reshape(4, 16).mean(axis=1),
                                   rtol=1e-6)

    def test_convex_hull_bound(self):
        rng = np.random.default_rng(15)
        p = make_params(rng, 8, 4)
        p.w_s.data[...] = rng.standard_normal(8)
        out = A.attention_forward(rand_features(rng), p)
        fr = out.f.data.reshape(4, -1)
        assert np.all(out.g.data >= fr.min(axis=1) - 1e-9)
        assert np.all(out.g.data <= fr.max(axis=1) + 1e-9)

    def test_widening_d_prime_leaves_s_unchanged(self):
        rng = np.random.default_rng(16)
        feats = rng.standard_normal((8, 4, 4)).astype(np.float32)
        p = make_params(rng, 8, 4)
        p.w_s.data[...] = rng.standard_normal(8)
        p.b_s.data[...] = 0.7
        s1 = A.region_saliency(Tensor(feats), p).data
        p2 = make_params(rng, 8, 8, zero=True)
        p2.w_s.data[...] = p.w_s.data
        p2.b_s.data[...] = p.b_s.data
        p2.w_f.data[:, :4] = p.w_f.data
        p2.b_f.data[:4] = p.b_f.data
        p2.w_a.data[:4] = p.w_a.data
        s2 = A.attention_forward(Tensor(feats), p2).s.data
        np.testing.assert_allclose(s1, s2, atol=1e-7)

    def test_gradients_all_six_parameter_groups(self):
        rng = np.random.default_rng(17)
        feats = rng.standard_normal((6, 3, 3))
        p = make_params(rng, 6, 4)
        p.w_s.data[...] = rng.standard_normal(6) * 0.5
        p.b_s.data[...] = 0.2
        names = ["w_s", "b_s", "w_f", "b_f", "w_a", "b_a"]
        arrs = [p.named()[k].data for k in names]
        coef = rng.standard_normal(4)

        def build(ts):
            params = A.AttentionParams(**dict(zip(names, ts)))
            out = A.attention_forward(Tensor(feats), params)
            return T.mul(out.g, Tensor(coef)).sum()

        assert check_gradients(build, arrs) < 1e-5

    def test_gradient_reaches_features(self):
        rng = np.random.default_rng(18)
        p32 = make_params(rng, 6, 4)
        p = A.AttentionParams(**{k: Tensor(v.data.astype(np.float64))
                                 for k, v in p32.named().items()})
        feats = rng.standard_normal((6, 3, 3))

        def build(ts):
            return A.attention_forward(ts[0], p).g.sum()

        assert check_gradients(build, [feats]) < 1e-5
