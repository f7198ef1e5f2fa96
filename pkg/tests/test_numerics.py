import io
import math

import numpy as np
import pytest

import reference
from fd import REL_TOL, max_rel_error, numeric_grad
from stackprop.numerics import (
    LSTMWeights,
    OptimizerConfig,
    Parameter,
    Tape,
    backward,
    dropout_mask,
    ema_update,
    feedforward_cell,
    layer_norm,
    linear,
    lstm_cell,
    lstm_sequence,
    self_normalized_nll,
    softmax_with_logz,
    unit_norm_then_adam,
)
from stackprop.numerics import autodiff as ad
from stackprop.numerics.serialize import CheckpointFormatError, dumps, loads


def leaf(value):
    return Parameter("p", np.asarray(value, dtype=float))


def run(fn, *params):
    """Evaluate ``fn`` on tape leaves for ``params``; return (value, [grads])."""
    tape = Tape()
    out = fn(*(tape.param(p) for p in params))
    loss = ad.total(out) if out.value.size > 1 else out
    g = backward(tape, loss, accumulate=False)
    return float(loss.value), [g.get(p.name, np.zeros_like(p.value)) for p in params]


def gradcheck(fn, *values):
    params = [Parameter(f"p{i}", np.array(v, dtype=float)) for i, v in enumerate(values)]
    _, grads = run(fn, *params)

    def f():
        return run(fn, *params)[0]

    for p, g in zip(params, grads):
        assert max_rel_error(g, numeric_grad(f, p.value)) < REL_TOL, p.name


class TestLayerNorm:
    def test_hand_value(self):
        t = Tape(record=False)
        out = layer_norm(t.constant([1.0, 2.0, 3.0]), t.constant(np.ones(3)), t.constant(np.zeros(3)))
        expected = np.array([-1, 0, 1]) / math.sqrt(2 / 3)
        np.testing.assert_allclose(out.value, expected, atol=1e-4)

    def test_constant_input(self):
        t = Tape(record=False)
        out = layer_norm(t.constant([5.0] * 3), t.constant(np.ones(3)), t.constant(np.zeros(3)))
        np.testing.assert_array_equal(out.value, 0.0)

    def test_zero_gain_gives_bias(self, rng):
        t = Tape(record=False)
        bias = rng.normal(size=6)
        out = layer_norm(t.constant(rng.normal(size=6)), t.constant(np.zeros(6)), t.constant(bias))
        np.testing.assert_array_equal(out.value, bias)

    def test_moments(self, rng):
        t = Tape(record=False)
        for _ in range(10):
            x = rng.normal(scale=5.0, size=17)
            y = layer_norm(t.constant(x), t.constant(np.ones(17)), t.constant(np.zeros(17))).value
            assert abs(y.mean()) < 1e-10
            assert abs(y.var() - 1.0) < 1e-6

    def test_gradient(self, rng):
        for _ in range(10):
            w = rng.normal(size=5)
            gradcheck(lambda x, g, b: ad.mul(layer_norm(x, g, b), w),
                      rng.normal(size=5), rng.normal(size=5), rng.normal(size=5))

    def test_batched_rows_match_single(self, rng):
        t = Tape(record=False)
        x = rng.normal(size=(3, 4))
        g, b = t.constant(rng.normal(size=4)), t.constant(rng.normal(size=4))
        batch = layer_norm(t.constant(x), g, b).value
        for i in range(3):
            np.testing.assert_allclose(batch[i], layer_norm(t.constant(x[i]), g, b).value, rtol=0, atol=1e-15)


def scalar_lstm_reference(x, h, c, *weights):
    return reference.lstm_step(x, h, c, *weights)


def lstm_params(rng, d_in, d_h):
    return [
        Parameter("w_x", rng.uniform(-1, 1, (4 * d_h, d_in))),
        Parameter("w_h", rng.uniform(-1, 1, (4 * d_h, d_h))),
        Parameter("bias", rng.uniform(-0.5, 0.5, 4 * d_h)),
        Parameter("ln_x_gain", rng.uniform(0.5, 1.5, 4 * d_h)),
        Parameter("ln_x_bias", rng.uniform(-0.2, 0.2, 4 * d_h)),
        Parameter("ln_h_gain", rng.uniform(0.5, 1.5, 4 * d_h)),
        Parameter("ln_h_bias", rng.uniform(-0.2, 0.2, 4 * d_h)),
    ]


class TestLSTM:
    def test_shapes(self, rng):
        ps = lstm_params(rng, 3, 5)
        t = Tape(record=False)
        w = LSTMWeights(*(t.param(p) for p in ps))
        h, c = lstm_cell(t.constant(rng.normal(size=3)), t.constant(np.zeros(5)), t.constant(np.zeros(5)), w)
        assert h.shape == (5,) and c.shape == (5,)

    def test_shape_mismatch(self, rng):
        ps = lstm_params(rng, 3, 5)
        t = Tape(record=False)
        w = LSTMWeights(*(t.param(p) for p in ps))
        with pytest.raises(ValueError):
            lstm_cell(t.constant(np.zeros(4)), t.constant(np.zeros(5)), t.constant(np.zeros(5)), w)

    def test_pinned_two_dim_cell(self):
        rng = np.random.default_rng(7)
        ps = lstm_params(rng, 2, 2)
        t = Tape(record=False)
        w = LSTMWeights(*(t.param(p) for p in ps))
        x = [1.0, 0.0]
        h, c = lstm_cell(t.constant(x), t.constant(np.zeros(2)), t.constant(np.zeros(2)), w)
        ref_h, ref_c = scalar_lstm_reference(x, [0.0, 0.0], [0.0, 0.0], *(p.value.tolist() for p in ps))
        np.testing.assert_allclose(h.value, ref_h, rtol=0, atol=1e-9)
        np.testing.assert_allclose(c.value, ref_c, rtol=0, atol=1e-9)

    def test_nonzero_state_against_reference(self, rng):
        ps = lstm_params(rng, 3, 4)
        x, h0, c0 = rng.normal(size=3), rng.normal(size=4), rng.normal(size=4)
        t = Tape(record=False)
        h, c = lstm_cell(t.constant(x), t.constant(h0), t.constant(c0), LSTMWeights(*(t.param(p) for p in ps)))
        ref_h, ref_c = scalar_lstm_reference(x.tolist(), h0.tolist(), c0.tolist(), *(p.value.tolist() for p in ps))
        np.testing.assert_allclose(h.value, ref_h, atol=1e-12)
        np.testing.assert_allclose(c.value, ref_c, atol=1e-12)

    def test_gradient_of_summed_hidden(self, rng):
        for _ in range(10):
            ps = lstm_params(rng, 3, 2)
            xs = [Parameter(n, rng.normal(size=d)) for n, d in (("x", 3), ("h", 2), ("c", 2))]

            def loss(*leaves):
                x, h, c = leaves[:3]
                return lstm_cell(x, h, c, LSTMWeights(*leaves[3:]))[0]

            allp = xs + ps
            _, grads = run(loss, *allp)
            for p, g in zip(allp, grads):
                num = numeric_grad(lambda: run(loss, *allp)[0], p.value)
                assert max_rel_error(g, num) < REL_TOL, p.name

    def test_sequence_matches_stepwise_and_reverse_indexing(self, rng):
        ps = lstm_params(rng, 3, 4)
        xs = rng.normal(size=(5, 3))
        t = Tape(record=False)
        w = LSTMWeights(*(t.param(p) for p in ps))
        fwd = lstm_sequence(t.constant(xs), w).value
        rev = lstm_sequence(t.constant(xs), w, reverse=True).value
        h, c = np.zeros(4), np.zeros(4)
        for i in range(5):
            h, c = scalar_lstm_reference(xs[i].tolist(), list(h), list(c), *(p.value.tolist() for p in ps))
            np.testing.assert_allclose(fwd[i], h, atol=1e-12)
        h, c = np.zeros(4), np.zeros(4)
        for i in reversed(range(5)):
            h, c = scalar_lstm_reference(xs[i].tolist(), list(h), list(c), *(p.value.tolist() for p in ps))
            np.testing.assert_allclose(rev[i], h, atol=1e-12)


class TestFeedforwardAndLinear:
    def test_zero_weights(self):
        t = Tape(record=False)
        out = feedforward_cell(t.constant(np.ones(3)), t.constant(np.zeros((4, 3))), t.constant(np.zeros(4)),
                               t.constant(np.ones(4)), t.constant(np.zeros(4)))
        np.testing.assert_array_equal(out.value, 0.0)

    def test_negative_preactivations_are_exact_zeros(self):
        t = Tape(record=False)
        out = feedforward_cell(t.constant([1.0, 0.0]), t.constant(np.eye(2)), t.constant(np.zeros(2)),
                               t.constant(np.ones(2)), t.constant(np.array([-5.0, -5.0])))
        assert np.all(out.value == 0.0)

    def test_shape_mismatch(self):
        t = Tape(record=False)
        with pytest.raises(ValueError):
            feedforward_cell(t.constant(np.ones(3)), t.constant(np.zeros((4, 2))), t.constant(np.zeros(4)),
                             t.constant(np.ones(4)), t.constant(np.zeros(4)))

    def test_feedforward_gradient(self, rng):
        for _ in range(10):
            gradcheck(lambda x, w, b, g, be: feedforward_cell(x, w, b, g, be),
                      rng.normal(size=3), rng.normal(size=(4, 3)), rng.normal(size=4),
                      rng.uniform(0.5, 1.5, 4), rng.normal(size=4))

    def test_linear_identity_and_zero(self, rng):
        t = Tape(record=False)
        x = rng.normal(size=3)
        np.testing.assert_array_equal(linear(t.constant(x), t.constant(np.eye(3)), t.constant(np.zeros(3))).value, x)
        b = rng.normal(size=2)
        np.testing.assert_array_equal(linear(t.constant(x), t.constant(np.zeros((2, 3))), t.constant(b)).value, b)

    def test_linear_by_hand(self):
        t = Tape(record=False)
        w = [[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]]
        out = linear(t.constant([2.0, -1.0]), t.constant(w), t.constant([0.1, 0.2, 0.3])).value
        # rows: 1*2 + 2*(-1) = 0; 0.5*2 + (-1)*(-1) = 2; 3*2 + 0 = 6
        np.testing.assert_allclose(out, [0.1, 2.2, 6.3], atol=1e-15)

    def test_linear_gradient(self, rng):
        for _ in range(10):
            gradcheck(lambda x, w, b: ad.square(linear(x, w, b)),
                      rng.normal(size=(2, 3)), rng.normal(size=(4, 3)), rng.normal(size=4))


class TestPrimitiveGradients:
    @pytest.mark.parametrize("name,fn,shapes", [
        ("add", lambda a, b: ad.mul(ad.add(a, b), ad.add(a, b)), [(3, 2), (2,)]),
        ("sub", lambda a, b: ad.square(ad.sub(a, b)), [(4,), (4,)]),
        ("mul", lambda a, b: ad.mul(a, b), [(3,), (3,)]),
        ("sigmoid", lambda a: ad.sigmoid(a), [(5,)]),
        ("tanh", lambda a: ad.square(ad.tanh(a)), [(5,)]),
        ("relu", lambda a: ad.square(ad.relu(a)), [(5,)]),
        ("concat", lambda a, b: ad.square(ad.concat([a, b])), [(2,), (3,)]),
        ("stack", lambda a, b: ad.square(ad.stack([a, b])), [(3,), (3,)]),
        ("row", lambda a: ad.square(ad.row(a, np.array([2, 0, 2]))), [(4, 2)]),
        ("unstack", lambda a: ad.square(ad.unstack(a)[1]), [(3, 2)]),
        ("reshape", lambda a: ad.square(ad.reshape(a, (-1,))), [(2, 3)]),
        ("matmul", lambda a, b: ad.square(ad.matmul(a, b)), [(2, 3), (3, 2)]),
        ("lstm_pointwise", lambda g, c: ad.add(ad.lstm_pointwise(g, c)[0], ad.lstm_pointwise(g, c)[1]),
         [(8,), (2,)]),
    ])
    def test_against_finite_differences(self, name, fn, shapes, rng):
        for _ in range(10):
            gradcheck(fn, *(rng.normal(size=s) for s in shapes))

    def test_self_normalized_nll_gradient(self, rng):
        for _ in range(10):
            gold = rng.integers(0, 5, size=3)
            gradcheck(lambda z: self_normalized_nll(z, gold, 0.3)[0], rng.normal(size=(3, 5)))

    def test_masked_entries_get_no_gradient(self, rng):
        p = Parameter("z", rng.normal(size=4))
        legal = np.array([True, False, True, True])
        _, (g,) = run(lambda z: self_normalized_nll(ad.mask_illegal(z, legal), [0], 0.1)[0], p)
        assert g[1] == 0.0


class TestSoftmax:
    def test_uniform(self):
        probs, log_z = softmax_with_logz([0.0, 0.0])
        np.testing.assert_allclose(probs, [0.5, 0.5])
        assert log_z == pytest.approx(math.log(2), abs=1e-15)

    def test_already_normalized(self):
        _, log_z = softmax_with_logz([math.log(0.3), math.log(0.7)])
        assert log_z == pytest.approx(0.0, abs=1e-15)

    def test_direct_sum(self):
        _, log_z = softmax_with_logz([1.0, 2.0, 3.0])
        assert log_z == pytest.approx(math.log(math.e + math.e ** 2 + math.e ** 3), abs=1e-12)
        assert log_z == pytest.approx(3.40761, abs=1e-5)

    def test_sum_and_shift(self, rng):
        for _ in range(20):
            z = rng.normal(scale=30, size=7)
            p, lz = softmax_with_logz(z)
            assert abs(p.sum() - 1.0) < 1e-12
            p2, lz2 = softmax_with_logz(z + 4.25)
            np.testing.assert_allclose(p2, p, atol=1e-15)
            assert lz2 - lz == pytest.approx(4.25, abs=1e-12)

    def test_masked_entries(self):
        p, lz = softmax_with_logz([0.0, -np.inf, 0.0])
        np.testing.assert_allclose(p, [0.5, 0.0, 0.5])
        assert lz == pytest.approx(math.log(2))


class TestDropout:
    def test_keep_one(self, rng):
        np.testing.assert_array_equal(dropout_mask((3, 4), 1.0, rng), 1.0)

    def test_mean(self):
        m = dropout_mask(10 ** 6, 0.8, np.random.default_rng(0))
        assert abs(m.mean() - 1.0) < 0.01
        assert set(np.unique(m)) <= {0.0, 1.25}

    def test_seeded(self):
        a = dropout_mask(50, 0.7, np.random.default_rng(3))
        b = dropout_mask(50, 0.7, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("keep", [0.0, -0.5, 1.5])
    def test_bad_keep(self, keep, rng):
        with pytest.raises(ValueError):
            dropout_mask(3, keep, rng)


class TestBackward:
    def test_product(self):
        w = Parameter("w", 3.0)
        tape = Tape()
        loss = ad.mul(tape.param(w), 2.5)
        backward(tape, loss)
        assert w.grad == 2.5

    def test_accumulates_over_reuse(self):
        w = Parameter("w", 3.0)
        tape = Tape()
        loss = ad.add(tape.param(w), tape.param(w))
        backward(tape, loss)
        assert w.grad == 2.0

    def test_loss_not_on_tape(self):
        w = Parameter("w", 1.0)
        other = Tape()
        loss = ad.mul(other.param(w), 2.0)
        with pytest.raises(ValueError):
            backward(Tape(), loss)

    def test_non_scalar_loss(self):
        w = Parameter("w", np.ones(3))
        tape = Tape()
        with pytest.raises(ValueError):
            backward(tape, ad.mul(tape.param(w), 2.0))

    def test_unreached_parameters_stay_zero(self):
        a, b = Parameter("a", 1.0), Parameter("b", 1.0)
        tape = Tape()
        tape.param(b)
        backward(tape, ad.square(tape.param(a)))
        assert a.grad == 2.0 and b.grad == 0.0

    def test_no_record_tape_builds_nothing(self):
        tape = Tape(record=False)
        out = ad.square(tape.param(Parameter("a", np.ones(3))))
        assert len(tape) == 0 and not out.requires_grad


class TestOptimizer:
    def test_first_adam_step_closed_form(self):
        p = Parameter("w", 0.0)
        p.grad[...] = 2.0
        cfg = OptimizerConfig(learning_rate=1e-3, epsilon=1e-4)
        unit_norm_then_adam([p], cfg, step=1)
        assert float(p.value) == pytest.approx(-1e-3 / (1.0 + 1e-4), abs=1e-12)
        assert float(p.value) == pytest.approx(-9.9990e-4, abs=1e-8)
        assert p.grad == 0.0

    def test_zero_gradients_change_nothing(self, rng):
        ps = [Parameter(f"p{i}", rng.normal(size=3)) for i in range(3)]
        before = [p.value.copy() for p in ps]
        unit_norm_then_adam(ps, OptimizerConfig(), step=1)
        for p, b in zip(ps, before):
            np.testing.assert_array_equal(p.value, b)

    @pytest.mark.parametrize("c", [0.001, 3.0, 1e6])
    def test_gradient_scale_absorbed(self, c, rng):
        g = [rng.normal(size=(2, 3)), rng.normal(size=4)]
        runs = []
        for scale in (1.0, c):
            ps = [Parameter("a", np.zeros((2, 3))), Parameter("b", np.zeros(4))]
            for p, gi in zip(ps, g):
                p.grad[...] = gi * scale
            unit_norm_then_adam(ps, OptimizerConfig(), step=1)
            runs.append([p.value.copy() for p in ps])
        for a, b in zip(*runs):
            np.testing.assert_allclose(a, b, rtol=1e-14, atol=0)

    def test_global_norm_is_unit(self, rng):
        from stackprop.numerics.optim import normalize_gradients
        out = normalize_gradients([rng.normal(size=5), rng.normal(size=(2, 2))])
        assert math.sqrt(sum(float((g * g).sum()) for g in out)) == pytest.approx(1.0, abs=1e-14)
        per = normalize_gradients([rng.normal(size=5), rng.normal(size=3)], "per_parameter")
        for g in per:
            assert np.linalg.norm(g) == pytest.approx(1.0, abs=1e-14)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            OptimizerConfig(beta1=1.0)
        with pytest.raises(ValueError):
            OptimizerConfig(epsilon=0.0)
        assert OptimizerConfig(epsilon=3e-7).epsilon == 3e-7

    def test_ema_single_step(self):
        p = Parameter("w", 1.0)
        p.ema[...] = 0.0
        ema_update([p], 0.9)
        assert float(p.ema) == pytest.approx(0.1)

    def test_ema_geometric_closed_form(self):
        p = Parameter("w", 2.5)
        p.ema[...] = 0.0
        for k in range(1, 40):
            ema_update([p], 0.9)
            assert float(p.ema) == pytest.approx(2.5 * (1 - 0.9 ** k), rel=1e-12)

    def test_ema_bad_decay(self):
        with pytest.raises(ValueError):
            ema_update([Parameter("w", 1.0)], 1.0)


class TestSerialization:
    def params(self, rng):
        ps = [Parameter("a/w", rng.normal(size=(3, 2))), Parameter("b", rng.normal(size=4)),
              Parameter("scalar", 1.5)]
        for p in ps:
            p.ema = p.value + rng.normal(size=p.shape)
        return ps

    def test_round_trip_bit_identity(self, rng):
        ps = self.params(rng)
        loaded, header = loads(dumps(ps, {"k": [1, "ß"]}))
        assert header == {"k": [1, "ß"]}
        for a, b in zip(ps, loaded):
            assert a.name == b.name
            assert a.value.tobytes() == b.value.tobytes()
            assert a.ema.tobytes() == b.ema.tobytes()

    def test_bad_magic(self, rng):
        data = bytearray(dumps(self.params(rng), {}))
        data[0] ^= 0xFF
        with pytest.raises(CheckpointFormatError, match="magic"):
            loads(bytes(data))

    def test_version_mismatch(self, rng):
        data = bytearray(dumps(self.params(rng), {}))
        data[8] = 99
        with pytest.raises(CheckpointFormatError, match="version"):
            loads(bytes(data))

    def test_truncated(self, rng):
        data = dumps(self.params(rng), {})
        with pytest.raises(CheckpointFormatError, match="truncated"):
            loads(data[:-3])

    def test_little_endian_layout(self):
        data = dumps([Parameter("x", [1.0])], {})
        assert data[:8] == b"STKPROP\x00"
        assert data[8:12] == (1).to_bytes(4, "little")
        assert data.endswith(np.array([1.0, 1.0], dtype="<f8").tobytes())

    def test_duplicate_names(self):
        with pytest.raises(ValueError):
            dumps([Parameter("x", 1.0), Parameter("x", 2.0)], {})

    def test_stream_api(self, rng):
        from stackprop.numerics.serialize import read_parameters, write_parameters
        buf = io.BytesIO()
        write_parameters(buf, self.params(rng), {})
        buf.seek(0)
        assert len(read_parameters(buf)[0]) == 3
