import dataclasses
import math

import numpy as np
import pytest

from oracles import arm_straight_line, attention_loop, conv3x3_dense
from uscbench.arm import (
    MaskTriplet,
    Queries,
    arm_forward,
    attention_head,
    conv3x3,
    cross_attention,
    fuse_predictions,
    init_params,
    intra_spq_from_map,
    mask_decode_standin,
    prompt_gen,
    random_feature,
    run_invariant_checks,
    self_attention,
)


def zeroed(params, *names):
    return dataclasses.replace(params, **{n: np.zeros_like(getattr(params, n)) for n in names})


class TestInit:
    def test_same_seed_identical(self):
        assert init_params(4, 6, 5, 3, 2).to_bytes() == init_params(4, 6, 5, 3, 2).to_bytes()

    def test_different_seed_differs(self):
        assert init_params(4, 6, 5, 3, 2).to_bytes() != init_params(5, 6, 5, 3, 2).to_bytes()

    def test_bounds_follow_fan_in(self):
        c = 7
        p = init_params(0, 8, 8, c, 3)
        s = 1 / math.sqrt(9 * c)
        assert np.abs(p.conv1_w).max() <= s
        # 2016 uniform draws reach well past 95% of the bound
        assert np.abs(p.conv1_w).max() > 0.95 * s
        assert np.abs(p.down_w).max() <= 1 / math.sqrt(64)
        assert np.abs(p.mlp_w2).max() <= 1 / math.sqrt(2 * c)

    def test_shapes(self):
        p = init_params(0, 5, 6, 4, 3)
        assert p.conv1_w.shape == (4, 4, 3, 3) and p.conv2_w.shape == (3, 4, 3, 3)
        assert p.down_w.shape == (3, 3, 30) and p.inter_spq.shape == (3, 3, 4)
        assert p.mlp_w1.shape == (4, 8) and p.dec_w.shape == (3, 4, 4)

    def test_read_only(self):
        with pytest.raises(ValueError):
            init_params(0, 3, 3, 1, 1).sa_q[0, 0] = 1.0

    @pytest.mark.parametrize("dims", [(2, 5, 2, 1), (5, 5, 0, 1), (5, 5, 2, 0)])
    def test_minimum_dims(self, dims):
        with pytest.raises(ValueError):
            init_params(0, *dims)


class TestAttentionHead:
    def test_matches_dense_oracle(self):
        p = init_params(3, 5, 5, 2, 2)
        F = random_feature(3, 5, 5, 2)
        hidden = np.maximum(conv3x3_dense(F, p.conv1_w, p.conv1_b), 0.0)
        want = conv3x3_dense(hidden, p.conv2_w, p.conv2_b)
        got = attention_head(F, p)
        assert got.shape == (5, 5, 3)
        assert np.max(np.abs(got - want)) <= 1e-12

    def test_single_conv_matches_dense(self, rng):
        x = rng.normal(size=(4, 6, 3))
        w = rng.normal(size=(5, 3, 3, 3))
        b = rng.normal(size=5)
        assert np.max(np.abs(conv3x3(x, w, b) - conv3x3_dense(x, w, b))) <= 1e-12

    def test_zero_input_zero_bias(self):
        p = zeroed(init_params(1, 4, 4, 3, 1), "conv1_b", "conv2_b")
        assert not attention_head(np.zeros((4, 4, 3)), p).any()

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            attention_head(np.zeros((4, 5, 3)), init_params(1, 4, 4, 3, 1))


class TestIntraSPQ:
    def test_closed_gate_gives_bias(self):
        p = init_params(2, 4, 4, 3, 2)
        F = random_feature(2, 4, 4, 3)
        q = intra_spq_from_map(F, np.full((4, 4, 3), -1000.0), p)
        for lbl in (0, 1, 2):
            want = np.repeat(p.down_b[lbl][:, None], 3, axis=1)
            assert np.array_equal(q.by_label(lbl), want)

    def test_open_gate_is_plain_projection(self):
        p = init_params(2, 4, 4, 3, 2)
        F = random_feature(2, 4, 4, 3)
        q = intra_spq_from_map(F, np.full((4, 4, 3), 1000.0), p)
        flat = F.reshape(16, 3)
        for lbl in (0, 1, 2):
            want = p.down_w[lbl] @ flat + p.down_b[lbl][:, None]
            assert np.max(np.abs(q.by_label(lbl) - want)) <= 1e-12

    def test_input_sensitivity(self):
        p = init_params(9, 6, 6, 4, 2)
        a = prompt_gen(random_feature(9, 6, 6, 4, 0), p).intra
        b = prompt_gen(random_feature(9, 6, 6, 4, 1), p).intra
        assert max(np.max(np.abs(x - y)) for x, y in zip(a, b)) > 1e-9


class TestAttention:
    def test_self_attention_oracle(self):
        p = init_params(11, 4, 4, 4, 2)
        tokens = np.random.Generator(np.random.PCG64(11)).uniform(-1, 1, (6, 4))
        out, w = self_attention(tokens, p)
        want_out, want_w = attention_loop(tokens, tokens, p.sa_q, p.sa_k, p.sa_v)
        assert np.max(np.abs(out - want_out)) <= 1e-12
        assert np.max(np.abs(w - want_w)) <= 1e-12
        assert np.max(np.abs(w.sum(axis=1) - 1)) <= 1e-9

    def test_cross_attention_oracle(self):
        p = init_params(5, 5, 5, 4, 1)
        rng = np.random.Generator(np.random.PCG64(5))
        q, ctx = rng.uniform(-1, 1, (3, 4)), rng.uniform(-1, 1, (25, 4))
        for direction, (wq, wk, wv) in {"Q2I": (p.q2i_q, p.q2i_k, p.q2i_v),
                                        "I2Q": (p.i2q_q, p.i2q_k, p.i2q_v)}.items():
            out, w = cross_attention(q, ctx, p, direction)
            want_out, want_w = attention_loop(q, ctx, wq, wk, wv)
            assert np.max(np.abs(out - want_out)) <= 1e-12
            assert np.max(np.abs(w - want_w)) <= 1e-12

    def test_single_token_self(self):
        p = init_params(0, 3, 3, 4, 1)
        t = np.ones((1, 4))
        out, w = self_attention(t, p)
        assert w.tolist() == [[1.0]]
        assert np.allclose(out, t + t @ p.sa_v, atol=1e-15)

    def test_single_context_token(self, rng):
        p = init_params(0, 3, 3, 4, 1)
        q, ctx = rng.normal(size=(5, 4)), rng.normal(size=(1, 4))
        out, w = cross_attention(q, ctx, p, "Q2I")
        assert np.all(w == 1.0)
        assert np.allclose(out, q + ctx @ p.q2i_v, atol=1e-14)

    def test_errors(self):
        p = init_params(0, 3, 3, 4, 1)
        with pytest.raises(ValueError):
            cross_attention(np.zeros((2, 4)), np.zeros((3, 5)), p, "Q2I")
        with pytest.raises(ValueError):
            cross_attention(np.zeros((2, 4)), np.zeros((3, 4)), p, "sideways")


class TestComposition:
    def test_straight_line_oracle(self):
        p = init_params(1, 8, 8, 4, 2)
        F = random_feature(1, 8, 8, 4)
        res = arm_forward(F, p)
        ref = arm_straight_line(F, p)
        pr = res.prompt
        assert np.max(np.abs(pr.attention_map - ref["attention_map"])) <= 1e-10
        for lbl in (0, 1, 2):
            assert np.max(np.abs(pr.intra.by_label(lbl) - ref["intra"][lbl])) <= 1e-10
            assert np.max(np.abs(pr.prompts.by_label(lbl) - ref["prompts"][lbl])) <= 1e-10
        assert np.max(np.abs(pr.enriched - ref["enriched"])) <= 1e-10
        logits = np.stack([res.masks.background, res.masks.salient, res.masks.camouflaged], axis=-1)
        assert np.max(np.abs(logits - ref["logits"])) <= 1e-10
        assert np.max(np.abs(res.probs.probs - ref["probs"])) <= 1e-10

    def test_prompt_shapes(self):
        pr = prompt_gen(random_feature(0, 5, 7, 3), init_params(0, 5, 7, 3, 4))
        assert all(q.shape == (4, 3) for q in pr.prompts)
        assert pr.enriched.shape == (5, 7, 3) and pr.attention_map.shape == (5, 7, 3)

    def test_inter_constant_across_inputs(self):
        p = init_params(1, 6, 6, 4, 2)
        before = p.inter_spq.tobytes()
        a = prompt_gen(random_feature(1, 6, 6, 4, 0), p).inter
        b = prompt_gen(random_feature(1, 6, 6, 4, 7), p).inter
        assert all(x.tobytes() == y.tobytes() for x, y in zip(a, b))
        assert p.inter_spq.tobytes() == before

    def test_bit_identical_runs(self):
        p = init_params(1, 8, 8, 4, 2)
        F = random_feature(1, 8, 8, 4)
        a, b = arm_forward(F, p), arm_forward(F.copy(), init_params(1, 8, 8, 4, 2))
        assert a.probs.probs.tobytes() == b.probs.probs.tobytes()
        assert a.prompt.enriched.tobytes() == b.prompt.enriched.tobytes()

    def test_finite_for_large_inputs(self, rng):
        p = init_params(3, 6, 6, 4, 2)
        res = arm_forward(rng.uniform(-10, 10, (6, 6, 4)), p)
        assert np.all(np.isfinite(res.probs.probs)) and np.all(np.isfinite(res.prompt.enriched))


class TestDecoderAndFusion:
    def test_zero_features_give_bias(self):
        p = init_params(2, 4, 4, 3, 2)
        prompts = prompt_gen(random_feature(2, 4, 4, 3), p).prompts
        m = mask_decode_standin(prompts, np.zeros((4, 4, 3)), p)
        assert np.all(m.salient == p.dec_b[1]) and np.all(m.camouflaged == p.dec_b[2])
        assert np.all(m.background == p.dec_b[0])

    def test_linear_in_prompt(self):
        p = init_params(2, 4, 4, 3, 2)
        pr = prompt_gen(random_feature(2, 4, 4, 3), p)
        doubled = Queries(2 * pr.prompts.salient, pr.prompts.camouflaged, pr.prompts.background)
        a = mask_decode_standin(pr.prompts, pr.enriched, p)
        b = mask_decode_standin(doubled, pr.enriched, p)
        assert np.allclose(b.salient - p.dec_b[1], 2 * (a.salient - p.dec_b[1]), atol=1e-13)
        assert np.array_equal(a.camouflaged, b.camouflaged)

    def test_per_pixel_oracle(self):
        p = init_params(4, 8, 8, 4, 3)
        pr = prompt_gen(random_feature(4, 8, 8, 4), p)
        m = mask_decode_standin(pr.prompts, pr.enriched, p)
        for lbl, got in ((0, m.background), (1, m.salient), (2, m.camouflaged)):
            pooled = pr.prompts.by_label(lbl).sum(axis=0) / 3
            d = p.dec_w[lbl] @ pooled
            for y in range(8):
                for x in range(8):
                    want = sum(pr.enriched[y, x, j] * d[j] for j in range(4)) + p.dec_b[lbl]
                    assert abs(got[y, x] - want) <= 1e-12

    def test_width_mismatch(self):
        p = init_params(2, 4, 4, 3, 2)
        q = Queries(*(np.zeros((2, 3)),) * 3)
        with pytest.raises(ValueError):
            mask_decode_standin(q, np.zeros((4, 4, 5)), p)

    def test_equal_logits(self):
        z = np.zeros((2, 2))
        probs = fuse_predictions(MaskTriplet(z, z, z)).probs
        assert np.allclose(probs, 1 / 3, atol=1e-15)

    def test_shift_invariance(self, rng):
        s, c, b = rng.normal(size=(3, 5, 5))
        k = rng.normal(size=(5, 5)) * 10
        p1 = fuse_predictions(MaskTriplet(s, c, b)).probs
        p2 = fuse_predictions(MaskTriplet(s + k, c + k, b + k)).probs
        assert np.max(np.abs(p1 - p2)) <= 1e-12
        assert np.max(np.abs(p1.sum(axis=2) - 1)) <= 1e-9

    def test_channel_order(self):
        z = np.zeros((1, 1))
        probs = fuse_predictions(MaskTriplet(z + 5, z, z)).probs
        assert probs[0, 0].argmax() == 1


class TestInvariantSuite:
    def test_all_pass(self):
        checks = run_invariant_checks(1, 8, 8, 4, 2)
        assert len(checks) == 8
        assert all(c.passed for c in checks), [c for c in checks if not c.passed]

    def test_corruption_detected(self):
        checks = {c.name: c.passed for c in run_invariant_checks(1, 8, 8, 4, 2, corrupt_weight=True)}
        assert checks["two runs bit-identical"] is False
        assert sum(not v for v in checks.values()) == 1
