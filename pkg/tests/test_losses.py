import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uscbench.losses import (
    FocalParams,
    LossWeights,
    attention_loss,
    downsample_nearest,
    focal_grad_check,
    focal_loss,
    focal_term,
    focal_term_grad,
    total_loss,
)
from uscbench.masks import ShapeMismatchError, TernaryMask, TernaryProbMap


def one_pixel(p_target, label=1, others=None):
    probs = np.zeros((1, 1, 3))
    rest = (1 - p_target) / 2 if others is None else others
    probs[0, 0, :] = rest
    probs[0, 0, label] = p_target
    return TernaryProbMap(probs), TernaryMask(np.array([[label]], dtype=np.uint8))


unit = FocalParams(gamma=2.0, alpha=(1.0, 1.0, 1.0))


class TestFocalValue:
    def test_half_probability(self):
        probs, gt = one_pixel(0.5)
        v = focal_loss(probs, gt, unit).value
        assert abs(v - 0.25 * math.log(2)) <= 1e-12
        assert abs(v - 0.17328679513998632) <= 1e-12

    def test_gamma_zero_is_cross_entropy(self):
        probs, gt = one_pixel(0.5)
        v = focal_loss(probs, gt, FocalParams(0.0, (1.0, 1.0, 1.0))).value
        assert abs(v - math.log(2)) <= 1e-12

    def test_gamma_zero_random_pixels(self, rng):
        raw = rng.random((6, 5, 3)) + 0.01
        probs = TernaryProbMap(raw / raw.sum(axis=2, keepdims=True))
        gt = TernaryMask(rng.integers(0, 3, (6, 5)).astype(np.uint8))
        p_t = np.take_along_axis(probs.probs, gt.labels[..., None].astype(np.intp), axis=2)
        ce = -np.log(p_t).mean()
        assert abs(focal_loss(probs, gt, FocalParams(0.0, (1.0, 1.0, 1.0))).value - ce) <= 1e-12

    def test_certain_prediction_is_zero(self):
        probs, gt = one_pixel(1.0, label=2)
        lv = focal_loss(probs, gt)
        assert lv.value == 0.0
        assert np.all(np.isfinite(lv.grad))

    def test_zero_probability_is_finite(self):
        probs, gt = one_pixel(0.0, label=0)
        lv = focal_loss(probs, gt)
        assert lv.value == pytest.approx(-math.log(1e-12))
        assert np.all(lv.grad == 0.0)

    def test_alpha_weights_by_target_class(self):
        lab = np.array([[0, 1, 2]], dtype=np.uint8)
        probs = TernaryProbMap(np.full((1, 3, 3), 1 / 3))
        v = focal_loss(probs, TernaryMask(lab)).value
        want = (1 + 4 + 6) * (2 / 3) ** 2 * math.log(3) / 3
        assert abs(v - want) <= 1e-12

    def test_grad_on_target_channel_only(self, rng):
        raw = rng.random((4, 4, 3)) + 0.05
        probs = TernaryProbMap(raw / raw.sum(axis=2, keepdims=True))
        gt = TernaryMask(rng.integers(0, 3, (4, 4)).astype(np.uint8))
        g = focal_loss(probs, gt).grad
        assert g.shape == (4, 4, 3)
        mask = np.zeros_like(g, dtype=bool)
        np.put_along_axis(mask, gt.labels[..., None].astype(np.intp), True, axis=2)
        assert np.all(g[~mask] == 0.0) and np.all(g[mask] < 0.0)

    def test_loss_grad_matches_finite_difference(self, rng):
        raw = rng.random((3, 3, 3)) + 0.1
        p = raw / raw.sum(axis=2, keepdims=True)
        gt = TernaryMask(rng.integers(0, 3, (3, 3)).astype(np.uint8))
        params = FocalParams()
        t = gt.labels.astype(np.intp)
        p_t = np.take_along_axis(p, t[..., None], axis=2)[..., 0]
        alpha = np.asarray(params.alpha)[t]
        g = focal_loss(TernaryProbMap(p), gt, params).grad
        h = 1e-6
        for y in range(3):
            for x in range(3):
                up, dn = p_t.copy(), p_t.copy()
                up[y, x] += h
                dn[y, x] -= h
                num = (focal_term(up, alpha, 2.0).mean() - focal_term(dn, alpha, 2.0).mean()) / (2 * h)
                assert g[y, x, t[y, x]] == pytest.approx(num, rel=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            focal_loss(TernaryProbMap(np.full((2, 2, 3), 1 / 3)), TernaryMask(np.zeros((2, 3), dtype=np.uint8)))

    @pytest.mark.parametrize("kwargs", [{"gamma": -1.0}, {"alpha": (1.0, 0.0, 1.0)}, {"alpha": (1.0, 2.0)}])
    def test_params_validated(self, kwargs):
        with pytest.raises(ValueError):
            FocalParams(**kwargs)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.01, 0.99), st.floats(0.0, 5.0))
    def test_monotone_in_p(self, p, gamma):
        a = focal_term(p, 1.0, gamma)
        b = focal_term(min(p + 0.005, 1.0), 1.0, gamma)
        assert b <= a


class TestFocalGradient:
    def test_half_probability(self):
        g = float(focal_term_grad(0.5, 1.0, 2.0))
        assert g == pytest.approx(2 * 0.5 * math.log(0.5) - 0.25 / 0.5, abs=1e-15)
        assert g == pytest.approx(-1.19315, abs=1e-5)

    def test_cross_entropy_case(self, rng):
        for p in rng.uniform(0.05, 0.95, 20):
            assert float(focal_term_grad(p, 1.0, 0.0)) == pytest.approx(-1 / p, rel=1e-15)

    def test_grad_check_seed_7(self):
        assert focal_grad_check(7, 100) < 1e-5

    @pytest.mark.parametrize("gamma,alpha", [(0.0, 1.0), (0.5, 4.0), (1.0, 6.0), (3.0, 1.0)])
    def test_grad_check_other_settings(self, gamma, alpha):
        assert focal_grad_check(11, 100, gamma=gamma, alpha=alpha) < 1e-5

    def test_grad_at_one_is_zero_for_small_gamma(self):
        assert float(focal_term_grad(1.0, 1.0, 0.5)) == 0.0

    def test_trials_validated(self):
        with pytest.raises(ValueError):
            focal_grad_check(0, 0)


class TestTotalLoss:
    def test_defaults(self):
        assert total_loss(1.0, 2.0) == 2.0

    def test_no_attention_term(self):
        assert total_loss(0.7, 0.0) == 0.7

    def test_homogeneous_in_weights(self):
        w = LossWeights(1.0, 0.5)
        w2 = LossWeights(2.0, 1.0)
        assert total_loss(0.3, 0.9, w2) == 2 * total_loss(0.3, 0.9, w)

    @settings(max_examples=80, deadline=None)
    @given(st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 64), st.integers(0, 64))
    def test_bilinear_exact(self, lp, la, a, b):
        # dyadic inputs keep every product and sum exact in binary floating point
        lp, la, a, b = lp / 8, la / 8, a / 4, b / 4
        w = LossWeights(lp, la)
        assert total_loss(a, b, w) == lp * a + la * b
        assert total_loss(2 * a, 2 * b, w) == 2 * total_loss(a, b, w)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            total_loss(-0.1, 0.0)
        with pytest.raises(ValueError):
            LossWeights(-1.0, 0.5)


class TestAttentionLoss:
    def test_downsample(self):
        lab = np.kron(np.array([[0, 1], [2, 0]], dtype=np.uint8), np.ones((4, 4), dtype=np.uint8))
        assert downsample_nearest(TernaryMask(lab), 2, 2).labels.tolist() == [[0, 1], [2, 0]]

    def test_matches_softmax_focal(self, rng):
        logits = rng.normal(size=(4, 4, 3))
        gt = TernaryMask(rng.integers(0, 3, (4, 4)).astype(np.uint8))
        e = np.exp(logits)
        probs = TernaryProbMap(e / e.sum(axis=2, keepdims=True))
        assert attention_loss(logits, gt).value == pytest.approx(focal_loss(probs, gt).value, abs=1e-12)

    def test_resizes_gt(self, rng):
        lab = np.kron(rng.integers(0, 3, (3, 3)).astype(np.uint8), np.ones((5, 5), dtype=np.uint8))
        logits = rng.normal(size=(3, 3, 3))
        small = TernaryMask(lab[::5, ::5])
        assert attention_loss(logits, TernaryMask(lab)).value == attention_loss(logits, small).value

    def test_bad_shape(self):
        with pytest.raises(ValueError):
            attention_loss(np.zeros((2, 2, 2)), TernaryMask(np.zeros((2, 2), dtype=np.uint8)))
