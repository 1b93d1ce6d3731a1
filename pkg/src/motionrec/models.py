"""The four sequence models and their shared training loop.

GenerativeModel is the autoregressive model: an LSTM consumes the previous
frame and a mixture-density head scores the current one, so the sequence
likelihood factors exactly over frames. Autoencoder and FuturePredictor share
a windowed encoder/decoder layout where the encoder's final hidden state is
the bottleneck. Recognizer is the supervised bidirectional stack with a
per-frame affine softmax readout.

All models register their tensors in a ParameterStore, expose loss(...) and
loss_and_grad(...) paths over the same forward code, and are trained by the
shared train() loop (one Adam step per trial, seeded shuffling). Checkpoints
are a flat binary tensor manifest documented at save_checkpoint.
"""

from __future__ import annotations

import struct

import numpy as np

from .lstm import (
    BidirectionalStack,
    LstmState,
    LstmWeights,
    lstm_step,
    unroll_backward,
    unroll_forward,
)
from .mdn import MdnWeights, mdn_head_backward, mdn_head_forward, mdn_head_nll, mdn_params, mdn_sample
from .numerics import log_softmax, softmax
from .optim import ParameterStore, adam_step, clip_gradients


def _as_sequence(x, width: int, what: str = "sequence") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != width:
        raise ValueError(f"{what} must be a (T, {width}) array, got shape {x.shape}")
    if x.shape[0] < 1:
        raise ValueError(f"{what} must contain at least one frame")
    return x


class GenerativeModel:
    """Autoregressive mixture-density model over multichannel frames.

    The first frame is scored from a zero input, every later frame from the
    LSTM state after reading its predecessor, so teacher forcing and the
    chain-rule likelihood line up index for index.
    """

    kind = "genmodel"

    def __init__(self, n_channels: int, hidden_size: int = 128, n_components: int = 8, seed: int = 0):
        self.n_channels = n_channels
        self.hidden_size = hidden_size
        self.n_components = n_components
        self.store = ParameterStore()
        rng = np.random.default_rng(seed)
        self.lstm = LstmWeights.create(n_channels, hidden_size, rng)
        self.lstm.register(self.store, "lstm")
        self.head = MdnWeights.create(hidden_size, n_components, n_channels, rng)
        self.head.register(self.store, "head")

    def _teacher_inputs(self, x: np.ndarray) -> np.ndarray:
        return np.vstack([np.zeros((1, self.n_channels)), x[:-1]])

    def _forward(self, x):
        x = _as_sequence(x, self.n_channels)
        H, lstm_cache = unroll_forward(self._teacher_inputs(x), self.lstm)
        head_cache = mdn_head_forward(H, self.head)
        per_frame = mdn_head_nll(head_cache, x)
        return float(per_frame.mean()), x, lstm_cache, head_cache

    def nll(self, x) -> float:
        """Mean negative log-likelihood per frame, in nats."""
        return self._forward(x)[0]

    def nll_and_grad(self, x) -> float:
        """Same value as nll; analytic gradients accumulate into the store."""
        loss, x, lstm_cache, head_cache = self._forward(x)
        T = x.shape[0]
        gH = mdn_head_backward(head_cache, x, np.full(T, 1.0 / T))
        unroll_backward(lstm_cache, gH)
        return loss

    def encode(self, x) -> np.ndarray:
        """Teacher-forced hidden states, one width-hidden_size row per frame."""
        x = _as_sequence(x, self.n_channels)
        H, _ = unroll_forward(self._teacher_inputs(x), self.lstm)
        return H

    def sample(self, prefix, horizon: int, rng: np.random.Generator) -> np.ndarray:
        """Continue a prefix: condition the state on it, then draw each next
        frame from the mixture and feed the draw back in."""
        if horizon < 1:
            raise ValueError("horizon must be at least 1")
        prefix = np.asarray(prefix, dtype=np.float64)
        if prefix.size == 0:
            prefix = np.zeros((0, self.n_channels))
        if prefix.ndim != 2 or prefix.shape[1] != self.n_channels:
            raise ValueError(f"prefix must be (P, {self.n_channels}), got {prefix.shape}")
        state = self.lstm.zero_state()
        for frame in np.vstack([np.zeros((1, self.n_channels)), prefix]):
            state = lstm_step(frame, state, self.lstm)
        out = np.empty((horizon, self.n_channels))
        for k in range(horizon):
            params = mdn_params(state.h, self.head)
            out[k] = mdn_sample(params, rng)
            if k + 1 < horizon:
                state = lstm_step(out[k], state, self.lstm)
        return out

    def training_loss_and_grad(self, item, rng: np.random.Generator) -> float:
        return self.nll_and_grad(item)

    def _checkpoint_meta(self) -> dict[str, float]:
        return {
            "kind": 0.0,
            "n_channels": float(self.n_channels),
            "hidden_size": float(self.hidden_size),
            "n_components": float(self.n_components),
        }

    @classmethod
    def _from_meta(cls, meta: dict[str, float]) -> "GenerativeModel":
        return cls(int(meta["n_channels"]), int(meta["hidden_size"]), int(meta["n_components"]))


class _WindowedModel:
    """Encoder/decoder pair over fixed-length windows.

    The encoder LSTM reads the window; its final hidden state is the
    bottleneck. The decoder LSTM starts from that bottleneck (h0 = bottleneck,
    c0 = 0) and runs on constant zero inputs, so reconstruction quality can
    only come from the bottleneck, never from peeking at the targets. A
    mixture-density head scores each target frame from the decoder states.
    """

    def __init__(
        self,
        n_channels: int,
        hidden_size: int = 64,
        n_components: int = 16,
        window_len: int = 64,
        seed: int = 0,
    ):
        if window_len < 1:
            raise ValueError("window_len must be at least 1")
        self.n_channels = n_channels
        self.hidden_size = hidden_size
        self.n_components = n_components
        self.window_len = window_len
        self.store = ParameterStore()
        rng = np.random.default_rng(seed)
        self.encoder = LstmWeights.create(n_channels, hidden_size, rng)
        self.encoder.register(self.store, "enc")
        self.decoder = LstmWeights.create(1, hidden_size, rng)
        self.decoder.register(self.store, "dec")
        self.head = MdnWeights.create(hidden_size, n_components, n_channels, rng)
        self.head.register(self.store, "head")

    def _check_window(self, window, what: str) -> np.ndarray:
        window = _as_sequence(window, self.n_channels, what)
        if window.shape[0] != self.window_len:
            raise ValueError(
                f"{what} has {window.shape[0]} frames, the model is configured for {self.window_len}"
            )
        return window

    def _decode_loss(self, window: np.ndarray, targets: np.ndarray, with_grad: bool) -> float:
        L = targets.shape[0]
        enc_H, enc_cache = unroll_forward(window, self.encoder)
        bottleneck = enc_H[-1]
        dec_init = LstmState(bottleneck, np.zeros(self.hidden_size))
        dec_H, dec_cache = unroll_forward(np.zeros((L, 1)), self.decoder, init=dec_init)
        head_cache = mdn_head_forward(dec_H, self.head)
        per_frame = mdn_head_nll(head_cache, targets)
        loss = float(per_frame.mean())
        if with_grad:
            gH_dec = mdn_head_backward(head_cache, targets, np.full(L, 1.0 / L))
            _, d_init = unroll_backward(dec_cache, gH_dec)
            gH_enc = np.zeros_like(enc_H)
            gH_enc[-1] = d_init.h  # decoder c0 is a constant, its gradient stops here
            unroll_backward(enc_cache, gH_enc)
        return loss

    def encode(self, x) -> np.ndarray:
        """Stride-1 sliding bottleneck: the feature for frame t is the
        encoder's final state over the window ending at t. The first
        window_len - 1 frames use the partial window that is available."""
        x = _as_sequence(x, self.n_channels)
        T = x.shape[0]
        out = np.empty((T, self.hidden_size))
        for t in range(T):
            start = max(0, t - self.window_len + 1)
            H, _ = unroll_forward(x[start : t + 1], self.encoder)
            out[t] = H[-1]
        return out

    def _window_meta(self) -> dict[str, float]:
        return {
            "n_channels": float(self.n_channels),
            "hidden_size": float(self.hidden_size),
            "n_components": float(self.n_components),
            "window_len": float(self.window_len),
        }

    @classmethod
    def _from_meta(cls, meta: dict[str, float]):
        return cls(
            int(meta["n_channels"]),
            int(meta["hidden_size"]),
            int(meta["n_components"]),
            int(meta["window_len"]),
        )


class Autoencoder(_WindowedModel):
    """Reconstruct a window through the bottleneck."""

    kind = "autoencoder"

    def loss(self, window) -> float:
        window = self._check_window(window, "window")
        return self._decode_loss(window, window, with_grad=False)

    def loss_and_grad(self, window) -> float:
        window = self._check_window(window, "window")
        return self._decode_loss(window, window, with_grad=True)

    def training_loss_and_grad(self, item, rng: np.random.Generator) -> float:
        x = _as_sequence(item, self.n_channels, "trial")
        T, L = x.shape[0], self.window_len
        if T < L:
            raise ValueError(f"trial has {T} frames, shorter than the {L}-frame window")
        s = int(rng.integers(0, T - L + 1))
        return self.loss_and_grad(x[s : s + L])

    def _checkpoint_meta(self) -> dict[str, float]:
        return {"kind": 1.0, **self._window_meta()}


class FuturePredictor(_WindowedModel):
    """Predict the next window from the current one through the bottleneck."""

    kind = "futurepred"

    def loss(self, past, future) -> float:
        past = self._check_window(past, "past window")
        future = self._check_window(future, "future window")
        return self._decode_loss(past, future, with_grad=False)

    def loss_and_grad(self, past, future) -> float:
        past = self._check_window(past, "past window")
        future = self._check_window(future, "future window")
        return self._decode_loss(past, future, with_grad=True)

    def training_loss_and_grad(self, item, rng: np.random.Generator) -> float:
        x = _as_sequence(item, self.n_channels, "trial")
        T, L = x.shape[0], self.window_len
        if T < 2 * L:
            raise ValueError(f"trial has {T} frames, need {2 * L} for a past/future pair")
        s = int(rng.integers(0, T - 2 * L + 1))
        return self.loss_and_grad(x[s : s + L], x[s + L : s + 2 * L])

    def _checkpoint_meta(self) -> dict[str, float]:
        return {"kind": 2.0, **self._window_meta()}


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log probability of the true class. Reference form used
    by the recognizer loss; probs rows must be distributions."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    T, K = probs.shape
    if labels.shape != (T,):
        raise ValueError(f"labels shape {labels.shape}, expected {(T,)}")
    if np.any(labels < 0) or np.any(labels >= K):
        raise ValueError(f"labels must lie in [0, {K})")
    return float(-np.mean(np.log(probs[np.arange(T), labels])))


class Recognizer:
    """Bidirectional stack with a per-frame affine softmax over activities.

    hidden_size counts units per direction by default (each layer emits
    2*hidden_size features); pass hidden_per_direction=False to treat it as
    the combined width instead.
    """

    kind = "recognizer"

    def __init__(
        self,
        input_dim: int,
        n_classes: int,
        n_layers: int = 3,
        hidden_size: int = 64,
        hidden_per_direction: bool = True,
        seed: int = 0,
    ):
        if n_classes < 2:
            raise ValueError("need at least two activity classes")
        if hidden_per_direction:
            per_dir = hidden_size
        else:
            if hidden_size % 2:
                raise ValueError("combined hidden_size must be even")
            per_dir = hidden_size // 2
        self.input_dim = input_dim
        self.n_classes = n_classes
        self.n_layers = n_layers
        self.hidden_size = hidden_size
        self.hidden_per_direction = hidden_per_direction
        self.store = ParameterStore()
        rng = np.random.default_rng(seed)
        self.stack = BidirectionalStack.create(input_dim, per_dir, n_layers, rng)
        self.stack.register(self.store, "stack")
        out_in = self.stack.output_dim
        self.W_out = rng.uniform(-1.0 / np.sqrt(out_in), 1.0 / np.sqrt(out_in), size=(n_classes, out_in))
        self.b_out = np.zeros(n_classes)
        self.gW_out = self.store.add("out.W", self.W_out)
        self.gb_out = self.store.add("out.b", self.b_out)

    def _logits(self, feats):
        feats = _as_sequence(feats, self.input_dim, "feature sequence")
        stack_out, caches = self.stack.forward(feats)
        return stack_out @ self.W_out.T + self.b_out, stack_out, caches

    def forward(self, feats) -> np.ndarray:
        """Per-frame class distributions, shape (T, n_classes)."""
        logits, _, _ = self._logits(feats)
        return softmax(logits, axis=1)

    def _check_labels(self, labels, T: int) -> np.ndarray:
        labels = np.asarray(labels)
        if labels.shape != (T,):
            raise ValueError(f"labels shape {labels.shape}, expected {(T,)}")
        if np.any(labels < 0) or np.any(labels >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        return labels.astype(np.int64)

    def loss(self, feats, labels) -> float:
        logits, _, _ = self._logits(feats)
        labels = self._check_labels(labels, logits.shape[0])
        logp = log_softmax(logits, axis=1)
        return float(-logp[np.arange(logits.shape[0]), labels].mean())

    def loss_and_grad(self, feats, labels) -> float:
        logits, stack_out, caches = self._logits(feats)
        T = logits.shape[0]
        labels = self._check_labels(labels, T)
        logp = log_softmax(logits, axis=1)
        loss = float(-logp[np.arange(T), labels].mean())
        dlogits = np.exp(logp)
        dlogits[np.arange(T), labels] -= 1.0
        dlogits /= T
        self.gW_out += dlogits.T @ stack_out
        self.gb_out += dlogits.sum(axis=0)
        self.stack.backward(caches, dlogits @ self.W_out)
        return loss

    def predict(self, feats) -> np.ndarray:
        """Most probable activity per frame; ties resolve to the lowest id."""
        return np.argmax(self.forward(feats), axis=1)

    def training_loss_and_grad(self, item, rng: np.random.Generator) -> float:
        feats, labels = item
        return self.loss_and_grad(feats, labels)

    def _checkpoint_meta(self) -> dict[str, float]:
        return {
            "kind": 3.0,
            "input_dim": float(self.input_dim),
            "n_classes": float(self.n_classes),
            "n_layers": float(self.n_layers),
            "hidden_size": float(self.hidden_size),
            "per_direction": 1.0 if self.hidden_per_direction else 0.0,
        }

    @classmethod
    def _from_meta(cls, meta: dict[str, float]) -> "Recognizer":
        return cls(
            int(meta["input_dim"]),
            int(meta["n_classes"]),
            int(meta["n_layers"]),
            int(meta["hidden_size"]),
            bool(int(meta["per_direction"])),
        )


def train(model, items, *, epochs: int, lr: float, seed: int = 0, clip_norm: float | None = None) -> list[float]:
    """Shared training loop: per epoch, visit the training items in a seeded
    shuffled order and take one Adam step per item (batch size 1). Returns
    the per-epoch mean loss, measured before each update as usual.

    Zero epochs is a no-op that returns an empty trace; a zero learning rate
    leaves the parameters untouched so the trace stays constant.
    """
    items = list(items)
    if not items:
        raise ValueError("training requires at least one trial")
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    rng = np.random.default_rng(seed)
    trace: list[float] = []
    for _ in range(epochs):
        order = rng.permutation(len(items))
        total = 0.0
        for idx in order:
            total += model.training_loss_and_grad(items[int(idx)], rng)
            if clip_norm is not None:
                clip_gradients(model.store, clip_norm)
            adam_step(model.store, lr)
        trace.append(total / len(items))
    return trace


# ---------------------------------------------------------------------------
# Checkpoints: a flat binary tensor manifest.
#
#   16-byte magic | u32 version | u32 tensor count | then per tensor:
#   u32 name length | name bytes (utf-8) | u32 rank | u64 per dimension |
#   float64 little-endian payload in C order.
#
# Model hyperparameters ride along as rank-0 tensors under the meta.* prefix,
# so the format stays a pure tensor manifest.
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"SEQMODEL-CKPT-01"
CHECKPOINT_VERSION = 1

_MODEL_CLASSES = {0: GenerativeModel, 1: Autoencoder, 2: FuturePredictor, 3: Recognizer}


def save_checkpoint(model, path) -> None:
    entries: list[tuple[str, np.ndarray]] = [
        (f"meta.{key}", np.float64(value)) for key, value in model._checkpoint_meta().items()
    ]
    entries += [(name, model.store.param(name)) for name in model.store.names()]
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(entries)))
        for name, arr in entries:
            arr = np.asarray(arr, dtype=np.float64)
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            if arr.ndim:
                f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ValueError(f"{self.path}: truncated checkpoint")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out


def load_checkpoint(path):
    """Rebuild a model from a checkpoint written by save_checkpoint."""
    with open(path, "rb") as f:
        blob = f.read()
    r = _Reader(blob, path)
    if r.take(16) != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint (bad magic)")
    version, count = struct.unpack("<II", r.take(8))
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", r.take(4))
        name = r.take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", r.take(4))
        shape = struct.unpack(f"<{rank}Q", r.take(8 * rank)) if rank else ()
        n_items = int(np.prod(shape)) if rank else 1
        payload = r.take(8 * n_items)
        arr = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
        tensors[name] = arr
    if r.pos != len(blob):
        raise ValueError(f"{path}: trailing bytes after the last tensor")

    meta = {k[len("meta.") :]: float(v) for k, v in tensors.items() if k.startswith("meta.")}
    if "kind" not in meta:
        raise ValueError(f"{path}: checkpoint is missing its model kind")
    kind = int(meta["kind"])
    if kind not in _MODEL_CLASSES:
        raise ValueError(f"{path}: unknown model kind {kind}")
    model = _MODEL_CLASSES[kind]._from_meta(meta)
    weights = {k: v for k, v in tensors.items() if not k.startswith("meta.")}
    expected = set(model.store.names())
    if set(weights) != expected:
        raise ValueError(f"{path}: tensor names do not match the model layout")
    model.store.load_values(weights)
    return model
