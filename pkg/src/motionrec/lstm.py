"""LSTM cell, sequence unrolling with exact backpropagation through time,
and bidirectional multilayer stacks.

The cell is the forget-gate variant without peepholes: sigmoid input, forget
and output gates, tanh candidate. The four gate blocks are stacked row-wise
(input, forget, output, candidate order) into a single matrix acting on the
concatenated (input, previous hidden) vector, which keeps the backward pass
to a handful of matrix products per sequence. Gradients are never truncated;
the backward recursion runs over the full sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as sigmoid


class ConfigurationError(ValueError):
    """Layer dimensions that cannot be chained into a stack."""


@dataclass
class LstmState:
    """Hidden/cell pair. h entries are products of a sigmoid and a tanh, so
    they always lie in (-1, 1); c is unbounded."""

    h: np.ndarray
    c: np.ndarray


class LstmWeights:
    """Gate weights for one recurrent direction.

    W has shape (4*hidden_dim, input_dim + hidden_dim): rows are the four
    gate blocks, columns act on (input, previous hidden). b holds the four
    bias blocks in the same order. Gradient buffers gW and gb live alongside
    the parameters so backward passes accumulate in place.
    """

    def __init__(self, input_dim: int, hidden_dim: int, W: np.ndarray, b: np.ndarray):
        expected = (4 * hidden_dim, input_dim + hidden_dim)
        if W.shape != expected:
            raise ValueError(f"W shape {W.shape}, expected {expected}")
        if b.shape != (4 * hidden_dim,):
            raise ValueError(f"b shape {b.shape}, expected {(4 * hidden_dim,)}")
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.W = W
        self.b = b
        self.gW = np.zeros_like(W)
        self.gb = np.zeros_like(b)

    @classmethod
    def create(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "LstmWeights":
        """Uniform +-1/sqrt(fan_in) weights with fan_in = input_dim + hidden_dim.

        The forget-gate bias starts at 1 so early training does not flush the
        cell state; all other biases start at 0.
        """
        if input_dim < 1 or hidden_dim < 1:
            raise ValueError("input_dim and hidden_dim must be positive")
        bound = 1.0 / np.sqrt(input_dim + hidden_dim)
        W = rng.uniform(-bound, bound, size=(4 * hidden_dim, input_dim + hidden_dim))
        b = np.zeros(4 * hidden_dim)
        b[hidden_dim : 2 * hidden_dim] = 1.0
        return cls(input_dim, hidden_dim, W, b)

    def register(self, store, prefix: str) -> None:
        store.add(prefix + ".W", self.W, self.gW)
        store.add(prefix + ".b", self.b, self.gb)

    def zero_state(self) -> LstmState:
        return LstmState(np.zeros(self.hidden_dim), np.zeros(self.hidden_dim))

    # Per-gate views, in the row layout documented above.
    @property
    def w_input(self):
        return self.W[: self.hidden_dim]

    @property
    def w_forget(self):
        return self.W[self.hidden_dim : 2 * self.hidden_dim]

    @property
    def w_output(self):
        return self.W[2 * self.hidden_dim : 3 * self.hidden_dim]

    @property
    def w_candidate(self):
        return self.W[3 * self.hidden_dim :]

    @property
    def b_input(self):
        return self.b[: self.hidden_dim]

    @property
    def b_forget(self):
        return self.b[self.hidden_dim : 2 * self.hidden_dim]

    @property
    def b_output(self):
        return self.b[2 * self.hidden_dim : 3 * self.hidden_dim]

    @property
    def b_candidate(self):
        return self.b[3 * self.hidden_dim :]


def lstm_step(x: np.ndarray, prev: LstmState, w: LstmWeights) -> LstmState:
    """One cell update: gates from the concatenated (x, prev.h) vector,
    c' = f*c + i*g, h' = o*tanh(c')."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (w.input_dim,):
        raise ValueError(f"input shape {x.shape}, expected {(w.input_dim,)}")
    if prev.h.shape != (w.hidden_dim,) or prev.c.shape != (w.hidden_dim,):
        raise ValueError("state dimension does not match the weights")
    n = w.hidden_dim
    a = x @ w.W[:, : w.input_dim].T + w.b + w.W[:, w.input_dim :] @ prev.h
    gates = sigmoid(a[: 3 * n])
    i, f, o = gates[:n], gates[n : 2 * n], gates[2 * n :]
    g = np.tanh(a[3 * n :])
    c = f * prev.c + i * g
    h = o * np.tanh(c)
    return LstmState(h, c)


@dataclass
class LstmCache:
    """Everything the backward recursion needs, recorded per step."""

    weights: LstmWeights
    xs: np.ndarray      # (T, input_dim)
    i: np.ndarray       # (T, n) post-sigmoid
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray       # (T, n) post-tanh
    c: np.ndarray       # (T, n) cell states
    tanh_c: np.ndarray
    h: np.ndarray       # (T, n) hidden states
    h_prev: np.ndarray  # h_prev[t] is the hidden state fed into step t
    c_prev: np.ndarray
    init: LstmState


def unroll_forward(
    xs: np.ndarray, w: LstmWeights, init: LstmState | None = None
) -> tuple[np.ndarray, LstmCache]:
    """Run the cell over a (T, input_dim) sequence from the given initial
    state (zeros by default). Returns the (T, hidden_dim) hidden sequence and
    the cache consumed by unroll_backward.

    The input projection for all steps is hoisted into one matrix product;
    only the recurrent term stays in the loop.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2:
        raise ValueError("xs must be a (T, input_dim) array")
    T = xs.shape[0]
    if T < 1:
        raise ValueError("sequence must contain at least one frame")
    if xs.shape[1] != w.input_dim:
        raise ValueError(f"input width {xs.shape[1]}, weights expect {w.input_dim}")
    if init is None:
        init = w.zero_state()
    elif init.h.shape != (w.hidden_dim,) or init.c.shape != (w.hidden_dim,):
        raise ValueError("initial state dimension does not match the weights")

    n = w.hidden_dim
    Wh = w.W[:, w.input_dim :]
    proj = xs @ w.W[:, : w.input_dim].T + w.b  # (T, 4n)

    i = np.empty((T, n))
    f = np.empty((T, n))
    o = np.empty((T, n))
    g = np.empty((T, n))
    c = np.empty((T, n))
    tanh_c = np.empty((T, n))
    H = np.empty((T, n))
    h_prev = np.empty((T, n))
    c_prev = np.empty((T, n))

    ht = init.h
    ct = init.c
    for t in range(T):
        h_prev[t] = ht
        c_prev[t] = ct
        a = proj[t] + Wh @ ht
        gates = sigmoid(a[: 3 * n])
        it, ft, ot = gates[:n], gates[n : 2 * n], gates[2 * n :]
        gt = np.tanh(a[3 * n :])
        ct = ft * ct + it * gt
        tc = np.tanh(ct)
        ht = ot * tc
        i[t] = it
        f[t] = ft
        o[t] = ot
        g[t] = gt
        c[t] = ct
        tanh_c[t] = tc
        H[t] = ht

    cache = LstmCache(w, xs, i, f, o, g, c, tanh_c, H, h_prev, c_prev, init)
    return H, cache


def unroll_backward(cache: LstmCache, grad_h: np.ndarray) -> tuple[np.ndarray, LstmState]:
    """Exact reverse-time gradients for an unrolled sequence.

    grad_h[t] is the loss gradient arriving at hidden state t. Weight
    gradients accumulate into the cache's weights (gW, gb); the return value
    is (gradient w.r.t. the inputs, gradient w.r.t. the initial state).
    """
    w = cache.weights
    T, n = cache.h.shape
    grad_h = np.asarray(grad_h, dtype=np.float64)
    if grad_h.shape != (T, n):
        raise ValueError(f"grad_h shape {grad_h.shape}, expected {(T, n)}")

    Wx = w.W[:, : w.input_dim]
    Wh = w.W[:, w.input_dim :]
    da = np.empty((T, 4 * n))
    dh = np.zeros(n)
    dc = np.zeros(n)
    for t in range(T - 1, -1, -1):
        dh = dh + grad_h[t]
        do = dh * cache.tanh_c[t]
        dc = dc + dh * cache.o[t] * (1.0 - cache.tanh_c[t] ** 2)
        di = dc * cache.g[t]
        df = dc * cache.c_prev[t]
        dg = dc * cache.i[t]
        da[t, :n] = di * cache.i[t] * (1.0 - cache.i[t])
        da[t, n : 2 * n] = df * cache.f[t] * (1.0 - cache.f[t])
        da[t, 2 * n : 3 * n] = do * cache.o[t] * (1.0 - cache.o[t])
        da[t, 3 * n :] = dg * (1.0 - cache.g[t] ** 2)
        dh = Wh.T @ da[t]
        dc = dc * cache.f[t]

    w.gW[:, : w.input_dim] += da.T @ cache.xs
    w.gW[:, w.input_dim :] += da.T @ cache.h_prev
    w.gb += da.sum(axis=0)
    dxs = da @ Wx
    return dxs, LstmState(dh, dc)


class BiLstmLayer:
    """One bidirectional layer: a forward cell, a backward cell run over the
    time-reversed input, outputs concatenated as (forward, backward)."""

    def __init__(self, forward: LstmWeights, backward: LstmWeights):
        if (forward.input_dim, forward.hidden_dim) != (backward.input_dim, backward.hidden_dim):
            raise ConfigurationError("forward/backward weights disagree on dimensions")
        self.fwd = forward
        self.bwd = backward
        self.input_dim = forward.input_dim
        self.hidden_dim = forward.hidden_dim

    @classmethod
    def create(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "BiLstmLayer":
        return cls(
            LstmWeights.create(input_dim, hidden_dim, rng),
            LstmWeights.create(input_dim, hidden_dim, rng),
        )

    def register(self, store, prefix: str) -> None:
        self.fwd.register(store, prefix + ".fwd")
        self.bwd.register(store, prefix + ".bwd")

    def forward_pass(self, xs: np.ndarray):
        Hf, cf = unroll_forward(xs, self.fwd)
        Hb_rev, cb = unroll_forward(np.ascontiguousarray(xs[::-1]), self.bwd)
        out = np.concatenate([Hf, Hb_rev[::-1]], axis=1)
        return out, (cf, cb)

    def backward_pass(self, caches, grad_out: np.ndarray) -> np.ndarray:
        cf, cb = caches
        n = self.hidden_dim
        dx_f, _ = unroll_backward(cf, grad_out[:, :n])
        dx_b_rev, _ = unroll_backward(cb, np.ascontiguousarray(grad_out[:, n:][::-1]))
        return dx_f + dx_b_rev[::-1]


class BidirectionalStack:
    """Stacked bidirectional layers. Layer k consumes the 2*hidden_dim wide
    output of layer k-1; the dimension chain is validated up front."""

    def __init__(self, layers: list[BiLstmLayer]):
        if not layers:
            raise ConfigurationError("a stack needs at least one layer")
        for k in range(1, len(layers)):
            need = 2 * layers[k - 1].hidden_dim
            if layers[k].input_dim != need:
                raise ConfigurationError(
                    f"layer {k} expects input width {layers[k].input_dim}, "
                    f"but layer {k - 1} produces {need}"
                )
        self.layers = layers
        self.input_dim = layers[0].input_dim
        self.output_dim = 2 * layers[-1].hidden_dim

    @classmethod
    def create(
        cls, input_dim: int, hidden_dim: int, n_layers: int, rng: np.random.Generator
    ) -> "BidirectionalStack":
        layers = []
        width = input_dim
        for _ in range(n_layers):
            layers.append(BiLstmLayer.create(width, hidden_dim, rng))
            width = 2 * hidden_dim
        return cls(layers)

    def register(self, store, prefix: str) -> None:
        for k, layer in enumerate(self.layers):
            layer.register(store, f"{prefix}.layer{k}")

    def forward(self, xs: np.ndarray):
        caches = []
        out = np.asarray(xs, dtype=np.float64)
        for layer in self.layers:
            out, cache = layer.forward_pass(out)
            caches.append(cache)
        return out, caches

    def backward(self, caches, grad_out: np.ndarray) -> np.ndarray:
        grad = grad_out
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            grad = layer.backward_pass(cache, grad)
        return grad


def bidirectional_stack_forward(xs: np.ndarray, layers) -> np.ndarray:
    """Forward-only convenience over a list of BiLstmLayer or
    (forward, backward) LstmWeights pairs."""
    normalized = [
        layer if isinstance(layer, BiLstmLayer) else BiLstmLayer(*layer) for layer in layers
    ]
    out, _ = BidirectionalStack(normalized).forward(xs)
    return out
