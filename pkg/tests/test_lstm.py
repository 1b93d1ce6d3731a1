import math

import numpy as np
import pytest

from motionrec.lstm import (
    BidirectionalStack,
    BiLstmLayer,
    ConfigurationError,
    LstmState,
    LstmWeights,
    bidirectional_stack_forward,
    lstm_step,
    unroll_backward,
    unroll_forward,
)
from motionrec.optim import ParameterStore, grad_check


def random_weights(input_dim, hidden_dim, seed=0):
    return LstmWeights.create(input_dim, hidden_dim, np.random.default_rng(seed))


class TestCell:
    def test_init_layout(self):
        w = random_weights(3, 4, seed=1)
        assert w.W.shape == (16, 7)
        bound = 1.0 / np.sqrt(7)
        assert np.abs(w.W).max() <= bound
        assert np.array_equal(w.b_forget, np.ones(4))
        assert np.array_equal(w.b_input, np.zeros(4))
        assert np.array_equal(w.b_output, np.zeros(4))
        assert np.array_equal(w.b_candidate, np.zeros(4))

    def test_gate_views_share_memory(self):
        w = random_weights(2, 3)
        w.w_input[0, 0] = 99.0
        assert w.W[0, 0] == 99.0
        w.b_candidate[0] = -7.0
        assert w.b[9] == -7.0

    def test_bad_dims_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            LstmWeights.create(0, 4, rng)
        with pytest.raises(ValueError):
            LstmWeights(2, 3, np.zeros((12, 4)), np.zeros(12))
        with pytest.raises(ValueError):
            LstmWeights(2, 3, np.zeros((12, 5)), np.zeros(11))

    def test_zero_weights_zero_input_gives_zero_hidden(self):
        # i=f=o=sigmoid(0)=0.5, g=tanh(0)=0, so c and h stay exactly 0
        w = LstmWeights(2, 3, np.zeros((12, 5)), np.zeros(12))
        state = w.zero_state()
        for _ in range(10):
            state = lstm_step(np.zeros(2), state, w)
            assert np.array_equal(state.h, np.zeros(3))
            assert np.array_equal(state.c, np.zeros(3))

    def test_saturated_gates_preserve_cell(self):
        """Forget bias +50, input bias -50: the cell state passes through
        essentially untouched (f = 1 - 2e-22, i*g = 0)."""
        b = np.zeros(8)
        b[0:2] = -50.0  # input gate shut
        b[2:4] = 50.0   # forget gate open
        w = LstmWeights(1, 2, np.zeros((8, 3)), b)
        c0 = np.array([0.7, -1.3])
        state = LstmState(np.zeros(2), c0.copy())
        for _ in range(100):
            state = lstm_step(np.array([0.5]), state, w)
        assert np.allclose(state.c, c0, atol=1e-15)

    def test_scalar_cell_against_pure_python(self):
        """Single-unit cell recomputed with math.* only."""
        rng = np.random.default_rng(7)
        W = rng.uniform(-1, 1, size=(4, 2))
        b = rng.uniform(-0.5, 0.5, size=4)
        w = LstmWeights(1, 1, W, b)

        def sig(z):
            return 1.0 / (1.0 + math.exp(-z))

        h, c = 0.0, 0.0
        state = w.zero_state()
        for x in [0.3, -1.1, 0.8, 0.0, 2.5]:
            ai = W[0, 0] * x + W[0, 1] * h + b[0]
            af = W[1, 0] * x + W[1, 1] * h + b[1]
            ao = W[2, 0] * x + W[2, 1] * h + b[2]
            ag = W[3, 0] * x + W[3, 1] * h + b[3]
            c = sig(af) * c + sig(ai) * math.tanh(ag)
            h = sig(ao) * math.tanh(c)
            state = lstm_step(np.array([x]), state, w)
            assert state.h[0] == pytest.approx(h, rel=1e-12, abs=1e-14)
            assert state.c[0] == pytest.approx(c, rel=1e-12, abs=1e-14)

    def test_hidden_state_bounded(self):
        # h = sigmoid * tanh, so |h| < 1 no matter how wild weights/inputs are
        rng = np.random.default_rng(8)
        w = LstmWeights(
            4, 6, rng.standard_normal((24, 10)) * 30, rng.standard_normal(24) * 30
        )
        state = w.zero_state()
        for _ in range(50):
            state = lstm_step(rng.standard_normal(4) * 100, state, w)
            assert np.abs(state.h).max() < 1.0

    def test_shape_validation(self):
        w = random_weights(3, 2)
        with pytest.raises(ValueError):
            lstm_step(np.zeros(4), w.zero_state(), w)
        with pytest.raises(ValueError):
            lstm_step(np.zeros(3), LstmState(np.zeros(5), np.zeros(5)), w)


class TestUnroll:
    def test_matches_repeated_steps(self):
        rng = np.random.default_rng(10)
        w = random_weights(3, 5, seed=11)
        xs = rng.standard_normal((7, 3))
        H, cache = unroll_forward(xs, w)
        state = w.zero_state()
        for t in range(7):
            state = lstm_step(xs[t], state, w)
            # unroll hoists the input projection into one GEMM; the rounding
            # can differ from per-step GEMV in the last bits
            assert np.allclose(H[t], state.h, atol=1e-13)
        assert np.allclose(cache.c[-1], state.c, atol=1e-13)

    def test_with_initial_state(self):
        rng = np.random.default_rng(12)
        w = random_weights(2, 3, seed=13)
        init = LstmState(rng.uniform(-0.5, 0.5, 3), rng.standard_normal(3))
        xs = rng.standard_normal((4, 2))
        H, _ = unroll_forward(xs, w, init=init)
        state = LstmState(init.h.copy(), init.c.copy())
        for t in range(4):
            state = lstm_step(xs[t], state, w)
        assert np.allclose(H[-1], state.h, atol=1e-13)

    def test_deterministic(self):
        rng = np.random.default_rng(14)
        w = random_weights(3, 4, seed=15)
        xs = rng.standard_normal((6, 3))
        H1, _ = unroll_forward(xs, w)
        H2, _ = unroll_forward(xs, w)
        assert np.array_equal(H1, H2)

    def test_input_validation(self):
        w = random_weights(3, 4)
        with pytest.raises(ValueError):
            unroll_forward(np.zeros((0, 3)), w)
        with pytest.raises(ValueError):
            unroll_forward(np.zeros((5, 2)), w)
        with pytest.raises(ValueError):
            unroll_forward(np.zeros(3), w)
        with pytest.raises(ValueError):
            unroll_forward(np.zeros((5, 3)), w, init=LstmState(np.zeros(2), np.zeros(2)))


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self):
        rng = np.random.default_rng(20)
        w = random_weights(3, 4, seed=21)
        xs = rng.standard_normal((6, 3))
        _, cache = unroll_forward(xs, w)
        dxs, dinit = unroll_backward(cache, np.zeros((6, 4)))
        assert np.array_equal(w.gW, np.zeros_like(w.gW))
        assert np.array_equal(w.gb, np.zeros_like(w.gb))
        assert np.array_equal(dxs, np.zeros((6, 3)))
        assert np.array_equal(dinit.h, np.zeros(4))
        assert np.array_equal(dinit.c, np.zeros(4))

    def test_single_step_hand_derivation(self):
        """T=1 single unit: every gradient written out symbolically."""
        rng = np.random.default_rng(22)
        W = rng.uniform(-1, 1, size=(4, 2))
        b = rng.uniform(-0.5, 0.5, size=4)
        w = LstmWeights(1, 1, W.copy(), b.copy())
        x = 0.6
        h0, c0 = 0.25, -0.4
        init = LstmState(np.array([h0]), np.array([c0]))
        H, cache = unroll_forward(np.array([[x]]), w, init=init)
        dxs, dinit = unroll_backward(cache, np.array([[1.0]]))

        def sig(z):
            return 1.0 / (1.0 + math.exp(-z))

        ai, af, ao, ag = (W[k, 0] * x + W[k, 1] * h0 + b[k] for k in range(4))
        i, f, o, g = sig(ai), sig(af), sig(ao), math.tanh(ag)
        c1 = f * c0 + i * g
        tc = math.tanh(c1)
        assert H[0, 0] == pytest.approx(o * tc, rel=1e-12)

        do = tc
        dc = o * (1.0 - tc * tc)
        da = np.array(
            [
                dc * g * i * (1 - i),
                dc * c0 * f * (1 - f),
                do * o * (1 - o),
                dc * i * (1 - g * g),
            ]
        )
        assert np.allclose(w.gb, da, rtol=1e-12)
        assert np.allclose(w.gW[:, 0], da * x, rtol=1e-12)
        assert np.allclose(w.gW[:, 1], da * h0, rtol=1e-12)
        assert dxs[0, 0] == pytest.approx(float(da @ W[:, 0]), rel=1e-12)
        assert dinit.h[0] == pytest.approx(float(da @ W[:, 1]), rel=1e-12)
        assert dinit.c[0] == pytest.approx(dc * f, rel=1e-12)

    def test_grads_accumulate(self):
        rng = np.random.default_rng(23)
        w = random_weights(2, 3, seed=24)
        xs = rng.standard_normal((4, 2))
        up = rng.standard_normal((4, 3))
        _, cache = unroll_forward(xs, w)
        unroll_backward(cache, up)
        once = w.gW.copy()
        _, cache = unroll_forward(xs, w)
        unroll_backward(cache, up)
        assert np.allclose(w.gW, 2.0 * once, rtol=1e-12)

    def test_finite_differences_full_sequence(self):
        """Sum(H * R) loss over T=12 frames, checking W, b, the inputs and
        the initial state all at once via the parameter store."""
        rng = np.random.default_rng(25)
        w = random_weights(3, 8, seed=26)
        xs = rng.standard_normal((12, 3))
        R = rng.standard_normal((12, 8))
        h0 = rng.uniform(-0.5, 0.5, 8)
        c0 = rng.standard_normal(8)
        gxs = np.zeros_like(xs)
        gh0 = np.zeros_like(h0)
        gc0 = np.zeros_like(c0)

        store = ParameterStore()
        w.register(store, "cell")
        store.add("xs", xs, gxs)
        store.add("h0", h0, gh0)
        store.add("c0", c0, gc0)

        def loss_fn():
            H, cache = unroll_forward(xs, w, init=LstmState(h0, c0))
            dxs, dinit = unroll_backward(cache, R)
            gxs[...] += dxs
            gh0[...] += dinit.h
            gc0[...] += dinit.c
            return float(np.sum(H * R))

        report = grad_check(loss_fn, store, epsilon=1e-5, n_coords=200, seed=0)
        assert report.max_rel_error < 1e-4


class TestBidirectional:
    def test_zeroed_backward_half(self):
        # kill the backward cell: first columns must equal a plain unroll
        rng = np.random.default_rng(30)
        fwd = random_weights(3, 4, seed=31)
        bwd = LstmWeights(3, 4, np.zeros((16, 7)), np.zeros(16))
        layer = BiLstmLayer(fwd, bwd)
        xs = rng.standard_normal((6, 3))
        out, _ = layer.forward_pass(xs)
        H, _ = unroll_forward(xs, fwd)
        assert np.array_equal(out[:, :4], H)
        assert np.array_equal(out[:, 4:], np.zeros((6, 4)))

    def test_time_reversal_symmetry(self):
        """Swapping the two cells and reversing the input reverses the output
        and swaps its halves, bit for bit."""
        rng = np.random.default_rng(32)
        a = random_weights(3, 4, seed=33)
        b = random_weights(3, 4, seed=34)
        xs = rng.standard_normal((7, 3))
        out, _ = BiLstmLayer(a, b).forward_pass(xs)
        out_swapped, _ = BiLstmLayer(b, a).forward_pass(np.ascontiguousarray(xs[::-1]))
        recombined = np.concatenate([out_swapped[:, 4:], out_swapped[:, :4]], axis=1)
        assert np.array_equal(recombined, out[::-1])

    def test_mismatched_directions_rejected(self):
        with pytest.raises(ConfigurationError):
            BiLstmLayer(random_weights(3, 4), random_weights(3, 5))

    def test_stack_output_shape(self):
        rng = np.random.default_rng(35)
        stack = BidirectionalStack.create(14, 64, 3, rng)
        out, _ = stack.forward(rng.standard_normal((20, 14)))
        assert out.shape == (20, 128)
        assert stack.output_dim == 128

    def test_stack_chain_validated(self):
        rng = np.random.default_rng(36)
        good = BiLstmLayer.create(5, 4, rng)
        bad_next = BiLstmLayer.create(7, 4, rng)  # needs width 8
        with pytest.raises(ConfigurationError):
            BidirectionalStack([good, bad_next])
        with pytest.raises(ConfigurationError):
            BidirectionalStack([])

    def test_forward_only_helper_accepts_weight_pairs(self):
        rng = np.random.default_rng(37)
        f0 = random_weights(3, 4, seed=38)
        b0 = random_weights(3, 4, seed=39)
        xs = rng.standard_normal((5, 3))
        out = bidirectional_stack_forward(xs, [(f0, b0)])
        ref, _ = BiLstmLayer(f0, b0).forward_pass(xs)
        assert np.array_equal(out, ref)

    def test_stack_finite_differences(self):
        """Two-layer stack, Sum(out * R) loss, all weights checked."""
        rng = np.random.default_rng(40)
        stack = BidirectionalStack.create(2, 3, 2, rng)
        store = ParameterStore()
        stack.register(store, "stack")
        xs = rng.standard_normal((6, 2))
        R = rng.standard_normal((6, 6))

        def loss_fn():
            out, caches = stack.forward(xs)
            stack.backward(caches, R)
            return float(np.sum(out * R))

        report = grad_check(loss_fn, store, epsilon=1e-5, n_coords=200, seed=1)
        assert report.max_rel_error < 1e-4

    def test_stack_backward_input_grad(self):
        # finite differences on the inputs through the whole stack
        rng = np.random.default_rng(41)
        stack = BidirectionalStack.create(2, 3, 2, rng)
        xs = rng.standard_normal((5, 2))
        R = rng.standard_normal((5, 6))
        out, caches = stack.forward(xs)
        dxs = stack.backward(caches, R)
        eps = 1e-6
        for (t, j) in [(0, 0), (2, 1), (4, 0)]:
            bumped = xs.copy()
            bumped[t, j] += eps
            up, _ = stack.forward(bumped)
            bumped[t, j] -= 2 * eps
            dn, _ = stack.forward(bumped)
            numeric = (np.sum(up * R) - np.sum(dn * R)) / (2 * eps)
            assert dxs[t, j] == pytest.approx(numeric, rel=1e-5, abs=1e-9)
