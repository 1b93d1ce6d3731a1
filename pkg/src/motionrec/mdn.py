"""Mixture-density output head: affine maps from a hidden state to Gaussian
mixture parameters, the exact mixture negative log-likelihood, its analytic
gradients, and ancestral sampling.

Mixture weights come from a softmax, variances from a softplus with a small
additive floor so repeated frames cannot collapse the likelihood. The NLL is
evaluated with log-sum-exp over per-component log densities; no linear-space
mixture sums appear anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as sigmoid

from .numerics import TWO_PI, log_softmax, log_sum_exp, softmax, softplus

VARIANCE_FLOOR = 1e-6


class MdnWeights:
    """Affine heads from a hidden state of width hidden_dim to mixture
    weights (n_components) and per-component means and diagonal variances
    (n_components x output_dim)."""

    def __init__(self, hidden_dim, n_components, output_dim, W_pi, b_pi, W_mu, b_mu, W_v, b_v):
        if W_pi.shape != (n_components, hidden_dim) or b_pi.shape != (n_components,):
            raise ValueError("mixture-weight head has the wrong shape")
        if W_mu.shape != (n_components, output_dim, hidden_dim) or b_mu.shape != (
            n_components,
            output_dim,
        ):
            raise ValueError("mean head has the wrong shape")
        if W_v.shape != W_mu.shape or b_v.shape != b_mu.shape:
            raise ValueError("variance head has the wrong shape")
        self.hidden_dim = hidden_dim
        self.n_components = n_components
        self.output_dim = output_dim
        self.W_pi = W_pi
        self.b_pi = b_pi
        self.W_mu = W_mu
        self.b_mu = b_mu
        self.W_v = W_v
        self.b_v = b_v
        self.gW_pi = np.zeros_like(W_pi)
        self.gb_pi = np.zeros_like(b_pi)
        self.gW_mu = np.zeros_like(W_mu)
        self.gb_mu = np.zeros_like(b_mu)
        self.gW_v = np.zeros_like(W_v)
        self.gb_v = np.zeros_like(b_v)

    @classmethod
    def create(
        cls, hidden_dim: int, n_components: int, output_dim: int, rng: np.random.Generator
    ) -> "MdnWeights":
        """Uniform +-1/sqrt(hidden_dim) weights, zero biases."""
        if min(hidden_dim, n_components, output_dim) < 1:
            raise ValueError("all head dimensions must be positive")
        bound = 1.0 / np.sqrt(hidden_dim)
        shape = (n_components, output_dim, hidden_dim)
        return cls(
            hidden_dim,
            n_components,
            output_dim,
            rng.uniform(-bound, bound, size=(n_components, hidden_dim)),
            np.zeros(n_components),
            rng.uniform(-bound, bound, size=shape),
            np.zeros((n_components, output_dim)),
            rng.uniform(-bound, bound, size=shape),
            np.zeros((n_components, output_dim)),
        )

    def register(self, store, prefix: str) -> None:
        store.add(prefix + ".W_pi", self.W_pi, self.gW_pi)
        store.add(prefix + ".b_pi", self.b_pi, self.gb_pi)
        store.add(prefix + ".W_mu", self.W_mu, self.gW_mu)
        store.add(prefix + ".b_mu", self.b_mu, self.gb_mu)
        store.add(prefix + ".W_v", self.W_v, self.gW_v)
        store.add(prefix + ".b_v", self.b_v, self.gb_v)


@dataclass
class MdnParams:
    """Mixture parameters for a single frame."""

    pi: np.ndarray  # (n_components,), positive, sums to 1
    mu: np.ndarray  # (n_components, output_dim)
    v: np.ndarray   # (n_components, output_dim), strictly positive

    def validate(self) -> None:
        if abs(float(self.pi.sum()) - 1.0) > 1e-12:
            raise ValueError("mixture weights do not sum to 1")
        if np.any(self.pi <= 0):
            raise ValueError("mixture weights must be positive")
        if np.any(self.v <= 0):
            raise ValueError("variances must be strictly positive")


@dataclass
class MdnSeqCache:
    """Forward intermediates for a (T, hidden_dim) hidden sequence."""

    weights: MdnWeights
    H: np.ndarray       # (T, hidden_dim)
    a_pi: np.ndarray    # (T, n_components) pre-softmax
    log_pi: np.ndarray  # (T, n_components)
    mu: np.ndarray      # (T, n_components, output_dim)
    a_v: np.ndarray     # (T, n_components, output_dim) pre-softplus
    v: np.ndarray       # (T, n_components, output_dim)
    s: np.ndarray | None = None  # (T, n_components) joint log terms, set by nll


def mdn_head_forward(H: np.ndarray, w: MdnWeights) -> MdnSeqCache:
    """Mixture parameters for every hidden state in a sequence."""
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[1] != w.hidden_dim:
        raise ValueError(f"hidden sequence shape {H.shape} does not match head width {w.hidden_dim}")
    T = H.shape[0]
    nc, nx = w.n_components, w.output_dim
    a_pi = H @ w.W_pi.T + w.b_pi
    log_pi = log_softmax(a_pi, axis=1)
    mu = (H @ w.W_mu.reshape(nc * nx, -1).T).reshape(T, nc, nx) + w.b_mu
    a_v = (H @ w.W_v.reshape(nc * nx, -1).T).reshape(T, nc, nx) + w.b_v
    v = softplus(a_v) + VARIANCE_FLOOR
    return MdnSeqCache(w, H, a_pi, log_pi, mu, a_v, v)


def mdn_head_nll(cache: MdnSeqCache, X: np.ndarray) -> np.ndarray:
    """Per-frame negative log-likelihood of targets X (T, output_dim)."""
    X = np.asarray(X, dtype=np.float64)
    T = cache.H.shape[0]
    if X.shape != (T, cache.weights.output_dim):
        raise ValueError(f"target shape {X.shape} does not match the head")
    diff = X[:, None, :] - cache.mu
    logpdf = -0.5 * np.sum(np.log(TWO_PI * cache.v) + diff**2 / cache.v, axis=2)
    cache.s = cache.log_pi + logpdf
    return -log_sum_exp(cache.s, axis=1)


def mdn_head_backward(cache: MdnSeqCache, X: np.ndarray, dnll: np.ndarray) -> np.ndarray:
    """Accumulate weight gradients and return the gradient w.r.t. the hidden
    sequence, given upstream gradients dnll (T,) on the per-frame NLL.

    Responsibilities are the softmax of the joint log terms; the gradients
    follow from differentiating -log sum_c exp(s_c) with
    s_c = log pi_c + log N(x; mu_c, v_c).
    """
    if cache.s is None:
        raise ValueError("call mdn_head_nll before the backward pass")
    w = cache.weights
    T = cache.H.shape[0]
    dnll = np.asarray(dnll, dtype=np.float64)
    if dnll.shape != (T,):
        raise ValueError(f"upstream gradient shape {dnll.shape}, expected {(T,)}")
    X = np.asarray(X, dtype=np.float64)
    nc, nx = w.n_components, w.output_dim

    r = softmax(cache.s, axis=1)
    ds = -dnll[:, None] * r
    # log-softmax jacobian; sum_c ds_c = -dnll
    da_pi = ds - softmax(cache.a_pi, axis=1) * ds.sum(axis=1, keepdims=True)

    diff = X[:, None, :] - cache.mu
    dmu = ds[:, :, None] * diff / cache.v
    dv = ds[:, :, None] * (-0.5 / cache.v + diff**2 / (2.0 * cache.v**2))
    da_v = dv * sigmoid(cache.a_v)

    H = cache.H
    w.gW_pi += da_pi.T @ H
    w.gb_pi += da_pi.sum(axis=0)
    dmu2 = dmu.reshape(T, nc * nx)
    dav2 = da_v.reshape(T, nc * nx)
    w.gW_mu += (dmu2.T @ H).reshape(nc, nx, -1)
    w.gb_mu += dmu.sum(axis=0)
    w.gW_v += (dav2.T @ H).reshape(nc, nx, -1)
    w.gb_v += da_v.sum(axis=0)

    gH = da_pi @ w.W_pi
    gH += dmu2 @ w.W_mu.reshape(nc * nx, -1)
    gH += dav2 @ w.W_v.reshape(nc * nx, -1)
    return gH


def mdn_params(h: np.ndarray, w: MdnWeights) -> MdnParams:
    """Mixture parameters for a single hidden state."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (w.hidden_dim,):
        raise ValueError(f"hidden state shape {h.shape}, expected {(w.hidden_dim,)}")
    cache = mdn_head_forward(h[None, :], w)
    return MdnParams(np.exp(cache.log_pi[0]), cache.mu[0], cache.v[0])


def mdn_nll(params: MdnParams, x: np.ndarray) -> float:
    """Negative log of the mixture density at x, via log-sum-exp over
    component log densities."""
    x = np.asarray(x, dtype=np.float64)
    nc, nx = params.mu.shape
    if x.shape != (nx,):
        raise ValueError(f"target shape {x.shape}, expected {(nx,)}")
    diff = x[None, :] - params.mu
    logpdf = -0.5 * np.sum(np.log(TWO_PI * params.v) + diff**2 / params.v, axis=1)
    return float(-log_sum_exp(np.log(params.pi) + logpdf))


def mdn_nll_backward(h: np.ndarray, x: np.ndarray, w: MdnWeights) -> tuple[float, np.ndarray]:
    """Single-frame NLL plus its gradient w.r.t. the hidden state; weight
    gradients accumulate on w."""
    h = np.asarray(h, dtype=np.float64)
    cache = mdn_head_forward(h[None, :], w)
    nll = mdn_head_nll(cache, np.asarray(x, dtype=np.float64)[None, :])
    gH = mdn_head_backward(cache, np.asarray(x, dtype=np.float64)[None, :], np.ones(1))
    return float(nll[0]), gH[0]


def mdn_sample(params: MdnParams, rng: np.random.Generator) -> np.ndarray:
    """Draw a component by its mixture weight, then a diagonal Gaussian draw
    from that component."""
    params.validate()
    c = int(rng.choice(params.pi.shape[0], p=params.pi))
    return params.mu[c] + np.sqrt(params.v[c]) * rng.standard_normal(params.mu.shape[1])
