"""Kernel tests: every expected value here comes from an independent oracle
(triple loops, hand arithmetic, closed forms) computed apart from the library path."""

from __future__ import annotations

import math

import numpy as np
import pytest

from gda.errors import ConfigurationError, DimensionError, ValidationError
from gda.numerics import (
    AdamState,
    adam_step,
    attention_weights,
    avgpool2_backward,
    avgpool2_forward,
    cross_entropy,
    dense_forward,
    dense_backward,
    depthwise_separable_conv,
    fresh_adam_state,
    global_avgpool_backward,
    global_avgpool_forward,
    identity_attention_params,
    init_uniform,
    mae_in_months,
    make_attention_params,
    mha_backward,
    mha_forward,
    multi_head_attention,
    numerical_gradient_check,
    separable_conv_backward,
    separable_conv_forward,
    softmax_cross_entropy_backward,
    softmax_cross_entropy_forward,
    tanh_backward,
    tanh_forward,
)


def conv_oracle(x, depth, point, stride=1, pad=None):
    """Brute-force separable convolution: explicit depthwise stage via quintuple
    loops, then explicit pointwise mixing. Deliberately dumb and independent."""
    k = depth.shape[0]
    if pad is None:
        pad = (k - 1) // 2
    h, w, c = x.shape
    co = point.shape[1]
    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    mid = np.zeros((ho, wo, c))
    for i in range(ho):
        for j in range(wo):
            for ch in range(c):
                acc = 0.0
                for a in range(k):
                    for b in range(k):
                        acc += xp[i * stride + a, j * stride + b, ch] * depth[a, b, ch]
                mid[i, j, ch] = acc
    out = np.zeros((ho, wo, co))
    for i in range(ho):
        for j in range(wo):
            for o in range(co):
                out[i, j, o] = sum(mid[i, j, ch] * point[ch, o] for ch in range(c))
    return out


class TestSeparableConv:
    def test_identity_kernels_pass_value_through(self):
        x = np.array([[[2.0]]])
        y = depthwise_separable_conv(x, np.ones((1, 1, 1)), np.ones((1, 1)))
        assert y.shape == (1, 1, 1)
        assert y[0, 0, 0] == 2.0

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(8, 8, 3))
        depth = rng.normal(size=(3, 3, 3))
        point = rng.normal(size=(3, 4))
        y = depthwise_separable_conv(x, depth, point)
        np.testing.assert_allclose(y, conv_oracle(x, depth, point), atol=1e-10)

    @pytest.mark.parametrize("seed", range(6))
    def test_oracle_agreement_on_random_shapes(self, seed):
        rng = np.random.default_rng(seed)
        h = int(rng.integers(3, 17))
        w = int(rng.integers(3, 17))
        c = int(rng.integers(1, 5))
        co = int(rng.integers(1, 5))
        k = int(rng.choice([1, 3, 5]))
        stride = int(rng.choice([1, 2]))
        if h + 2 * ((k - 1) // 2) < k or w + 2 * ((k - 1) // 2) < k:
            pytest.skip("degenerate geometry")
        x = rng.normal(size=(h, w, c))
        depth = rng.normal(size=(k, k, c))
        point = rng.normal(size=(c, co))
        y = depthwise_separable_conv(x, depth, point, stride=stride)
        np.testing.assert_allclose(y, conv_oracle(x, depth, point, stride=stride), atol=1e-10)

    def test_parameter_count_advantage(self):
        depth = np.zeros((3, 3, 3))
        point = np.zeros((3, 4))
        assert depth.size + point.size == 39
        assert 3 * 3 * 3 * 4 == 108  # full convolution for the same mapping

    def test_even_kernel_rejected(self):
        x = np.zeros((4, 4, 1))
        with pytest.raises(ConfigurationError):
            depthwise_separable_conv(x, np.zeros((2, 2, 1)), np.zeros((1, 1)))

    def test_channel_mismatch_rejected(self):
        x = np.zeros((4, 4, 2))
        with pytest.raises(DimensionError):
            depthwise_separable_conv(x, np.zeros((3, 3, 3)), np.zeros((3, 1)))
        with pytest.raises(DimensionError):
            depthwise_separable_conv(x, np.zeros((3, 3, 2)), np.zeros((3, 1)))


class TestAttention:
    def test_single_position_weight_is_one(self):
        x = np.array([[0.3, -0.7, 1.1, 0.2]])
        params = make_attention_params(np.random.default_rng(0), d=4, heads=2)
        w = attention_weights(x, params)
        np.testing.assert_allclose(w, np.ones((2, 1, 1)))

    def test_single_position_output_is_projected_value(self):
        x = np.array([[0.3, -0.7, 1.1, 0.2]])
        params = identity_attention_params(d=4, heads=1)
        y = multi_head_attention(x, params)
        np.testing.assert_allclose(y, x)  # value projection of the lone token

    def test_identical_rows_give_identical_outputs(self):
        row = np.array([0.5, -0.2, 0.9, 0.1])
        x = np.stack([row, row])
        y = multi_head_attention(x, identity_attention_params(d=4, heads=1))
        np.testing.assert_allclose(y[0], y[1])

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(4, 8))
        params = make_attention_params(rng, d=8, heads=2)
        perm = [2, 0, 3, 1]
        y = multi_head_attention(x, params)
        y_perm = multi_head_attention(x[perm], params)
        np.testing.assert_allclose(y_perm, y[perm], atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_weight_rows_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        l = int(rng.integers(1, 7))
        x = rng.normal(size=(l, 8)) * 3.0
        params = make_attention_params(rng, d=8, heads=4)
        w = attention_weights(x, params)
        np.testing.assert_allclose(w.sum(axis=-1), np.ones((4, l)), atol=1e-9)

    def test_head_count_must_divide_dim(self):
        with pytest.raises(ConfigurationError):
            make_attention_params(np.random.default_rng(0), d=8, heads=3)


class TestCrossEntropy:
    def test_one_hot_correct_is_zero(self):
        assert cross_entropy(np.array([0.0, 1.0, 0.0]), 1) == 0.0

    def test_uniform_four_classes(self):
        got = cross_entropy(np.full(4, 0.25), 2)
        assert got == pytest.approx(math.log(4.0), abs=1e-12)

    def test_clamp_engages_below_floor(self):
        p = np.array([1e-15, 1.0 - 1e-15])
        assert cross_entropy(p, 0) == pytest.approx(-math.log(1e-12), abs=1e-9)

    def test_label_out_of_range(self):
        with pytest.raises(IndexError):
            cross_entropy(np.array([0.5, 0.5]), 2)

    def test_non_distribution_rejected(self):
        with pytest.raises(ValidationError):
            cross_entropy(np.array([0.9, 0.3]), 0)
        with pytest.raises(ValidationError):
            cross_entropy(np.array([1.5, -0.5]), 0)

    @pytest.mark.parametrize("seed", range(8))
    def test_nonnegative_and_zero_only_at_certainty(self, seed):
        rng = np.random.default_rng(seed)
        raw = rng.uniform(0.01, 1.0, size=5)
        p = raw / raw.sum()
        label = int(rng.integers(0, 5))
        loss = cross_entropy(p, label)
        assert loss >= 0.0
        assert (loss == 0.0) == (p[label] == 1.0)


class TestMae:
    def test_exact_prediction_is_zero(self):
        assert mae_in_months([10.0, 20.0], [10.0, 20.0]) == 0.0

    def test_reported_error_column_mean(self):
        errors = [1.41, 2.32, 0.89, 1.34, 1.21]
        assert mae_in_months(errors, [0.0] * 5) == pytest.approx(1.434, abs=1e-12)

    def test_hand_arithmetic(self):
        assert mae_in_months([60.0], [57.6]) == pytest.approx(2.4, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            mae_in_months([], [])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            mae_in_months([1.0], [1.0, 2.0])


class TestAdam:
    def test_zero_gradient_is_identity_from_fresh_state(self):
        p = np.array([1.5, -2.0])
        state = fresh_adam_state(p.shape)
        for _ in range(3):
            p2, state = adam_step(p, np.zeros_like(p), state)
            np.testing.assert_array_equal(p2, p)
            np.testing.assert_array_equal(state.first_moment, np.zeros_like(p))
            np.testing.assert_array_equal(state.second_moment, np.zeros_like(p))
            p = p2

    def test_single_step_hand_oracle(self):
        p = np.array([0.0])
        state = fresh_adam_state((1,))
        p1, s1 = adam_step(p, np.array([1.0]), state)
        # m=0.1, v=0.001, mhat=1, vhat=1 -> step = 0.001/(1+1e-7)
        assert s1.step_count == 1
        assert s1.first_moment[0] == pytest.approx(0.1, abs=1e-15)
        assert s1.second_moment[0] == pytest.approx(0.001, abs=1e-15)
        assert p1[0] == pytest.approx(-0.001 / (1.0 + 1e-7), abs=1e-15)
        assert p1[0] == pytest.approx(-0.00099999990, abs=1e-12)

    def test_two_step_trace_matches_scalar_reference(self):
        # independent scalar loop, plain Python floats
        lr, b1, b2, eps = 0.001, 0.9, 0.999, 1e-7
        rp, rm, rv = 0.0, 0.0, 0.0
        expected = []
        for t in (1, 2):
            rm = b1 * rm + (1 - b1) * 1.0
            rv = b2 * rv + (1 - b2) * 1.0
            rp = rp - lr * (rm / (1 - b1 ** t)) / ((rv / (1 - b2 ** t)) ** 0.5 + eps)
            expected.append(rp)

        p = np.array([0.0])
        state = fresh_adam_state((1,))
        trace = []
        for _ in range(2):
            p, state = adam_step(p, np.array([1.0]), state)
            trace.append(float(p[0]))
        assert trace[0] == pytest.approx(expected[0], abs=1e-12)
        assert trace[1] == pytest.approx(expected[1], abs=1e-12)

    def test_shape_mismatch_rejected(self):
        state = fresh_adam_state((2,))
        with pytest.raises(ValidationError):
            adam_step(np.zeros(2), np.zeros(3), state)

    def test_amsgrad_keeps_max_second_moment(self):
        p = np.array([0.0])
        state = fresh_adam_state((1,), amsgrad=True)
        p, state = adam_step(p, np.array([2.0]), state)
        peak = state.max_second_moment.copy()
        p, state = adam_step(p, np.array([0.01]), state)
        assert state.max_second_moment[0] >= peak[0]

    def test_defaults_match_standard_settings(self):
        state = fresh_adam_state((1,))
        assert (state.learning_rate, state.beta_1, state.beta_2) == (0.001, 0.9, 0.999)
        assert state.epsilon == 1e-7
        assert state.amsgrad is False
        assert state.decay == 0.0


class TestGradientChecks:
    def test_quadratic_loss(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-1.0, 1.0, size=(6,))

        def loss_fn(params):
            (v,) = params
            return 0.5 * float(v @ v), [v.copy()]

        report = numerical_gradient_check(loss_fn, [x])
        assert report.max_relative_error < 1e-7

    def test_separable_conv_block_with_cross_entropy(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(4, 4, 1))
        depth = init_uniform(rng, (3, 3, 1)) * 10
        point = init_uniform(rng, (1, 3)) * 10

        def loss_fn(params):
            d, p = params
            y, cache = separable_conv_forward(x, d, p)
            pooled, pool_cache = global_avgpool_forward(y)
            loss, ce_cache = softmax_cross_entropy_forward(pooled, 1)
            gl = softmax_cross_entropy_backward(ce_cache)
            gy = global_avgpool_backward(gl, pool_cache)
            _, gd, gp = separable_conv_backward(gy, cache)
            return loss, [gd, gp]

        report = numerical_gradient_check(loss_fn, [depth, point])
        assert report.max_relative_error < 1e-4

    def test_attention_layer_with_cross_entropy(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(3, 4))
        params = make_attention_params(rng, d=4, heads=2)

        def loss_fn(plist):
            from gda.numerics import AttentionParams

            ap = AttentionParams(*plist)
            y, cache = mha_forward(x, ap)
            pooled = y.mean(axis=0)
            loss, ce_cache = softmax_cross_entropy_forward(pooled, 2)
            gl = softmax_cross_entropy_backward(ce_cache)
            gy = np.broadcast_to(gl / x.shape[0], y.shape).copy()
            _, grads = mha_backward(gy, cache)
            return loss, grads.as_list()

        report = numerical_gradient_check(loss_fn, params.as_list())
        assert report.max_relative_error < 1e-4

    def test_dense_tanh_pool_composite(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=(4, 4, 2))
        w = init_uniform(rng, (2, 3)) * 10
        b = init_uniform(rng, (3,)) * 10

        def loss_fn(params):
            wp, bp = params
            pooled, pc = avgpool2_forward(x)
            act, tc = tanh_forward(pooled)
            feat, gc = global_avgpool_forward(act)
            logits, dc = dense_forward(feat, wp, bp)
            loss, cec = softmax_cross_entropy_forward(logits, 0)
            gl = softmax_cross_entropy_backward(cec)
            _, gw, gb = dense_backward(gl, dc)
            return loss, [gw, gb]

        report = numerical_gradient_check(loss_fn, [w, b])
        assert report.max_relative_error < 1e-4

    def test_input_gradients_through_conv(self):
        rng = np.random.default_rng(21)
        x0 = rng.normal(size=(4, 4, 2))
        depth = rng.normal(size=(3, 3, 2))
        point = rng.normal(size=(2, 2))

        def loss_fn(params):
            (xv,) = params
            y, cache = separable_conv_forward(xv, depth, point)
            loss = 0.5 * float(np.sum(y * y))
            gx, _, _ = separable_conv_backward(y, cache)
            return loss, [gx]

        report = numerical_gradient_check(loss_fn, [x0])
        assert report.max_relative_error < 1e-4
