"""Stable scalar and vector kernels used throughout the sequence models.

Everything is float64. The stable formulations (max subtraction in softmax
and log-sum-exp, the branch-split softplus) are load-bearing: sequence
likelihoods underflow plain exponentials long before trials end.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """Exponentials are shifted by the max before normalizing, so entries of
    any magnitude are safe. Output rows are positive and sum to one."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("softmax of an empty vector")
    shifted = v - v.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("log_softmax of an empty vector")
    shifted = v - v.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softplus(x):
    """ln(1 + e^x) computed as max(x, 0) + log1p(e^-|x|).

    The split keeps both asymptotes exact: large positive x returns x itself
    plus a vanishing correction, large negative x decays to e^x instead of
    rounding to zero.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    if out.ndim == 0:
        return float(out)
    return out


def log_sum_exp(v: np.ndarray, axis: int | None = None):
    """log(sum(exp(v))) with max subtraction.

    With axis=None a 1-d input reduces to a float. A single-element reduction
    returns that element unchanged.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty vector")
    if axis is None:
        v = v.reshape(-1)
        axis = 0
    m = v.max(axis=axis, keepdims=True)
    out = np.squeeze(m, axis=axis) + np.log(np.exp(v - m).sum(axis=axis))
    if out.ndim == 0:
        return float(out)
    return out


def diag_gaussian_logpdf(x: np.ndarray, mu: np.ndarray, v: np.ndarray) -> float:
    """Log density of a Gaussian with diagonal covariance.

    Sum over dimensions of -0.5*ln(2*pi*v_i) - (x_i - mu_i)^2 / (2*v_i),
    evaluated in log space throughout. Variances must be strictly positive.
    """
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if x.shape != mu.shape or x.shape != v.shape:
        raise ValueError(
            f"mismatched shapes: x {x.shape}, mu {mu.shape}, v {v.shape}"
        )
    if not np.all(v > 0.0):
        raise ValueError("variances must be strictly positive")
    return float(np.sum(-0.5 * np.log(TWO_PI * v) - (x - mu) ** 2 / (2.0 * v)))
