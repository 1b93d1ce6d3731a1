"""Flat named parameter store, in-place Adam, and a finite-difference
gradient checker that every model's backward pass is validated against."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class GradientError(RuntimeError):
    """A gradient buffer contains NaN or infinity; the update is aborted."""


class ParameterStore:
    """Named float64 tensors plus parallel gradient and Adam moment buffers.

    Parameter and gradient arrays are held by reference: model modules keep
    the same ndarray objects, so adam_step updates them in place and backward
    passes accumulate straight into the registered gradient buffers.
    """

    def __init__(self) -> None:
        self._params: dict[str, np.ndarray] = {}
        self._grads: dict[str, np.ndarray] = {}
        self._m: dict[str, np.ndarray] = {}
        self._u: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, param: np.ndarray, grad: np.ndarray | None = None) -> np.ndarray:
        """Register a tensor under a unique name; returns its gradient buffer."""
        if name in self._params:
            raise ValueError(f"parameter {name!r} already registered")
        if not isinstance(param, np.ndarray) or param.dtype != np.float64:
            raise ValueError(f"parameter {name!r} must be a float64 ndarray")
        if grad is None:
            grad = np.zeros_like(param)
        elif grad.shape != param.shape or grad.dtype != np.float64:
            raise ValueError(f"gradient buffer for {name!r} must match the parameter")
        self._params[name] = param
        self._grads[name] = grad
        self._m[name] = np.zeros_like(param)
        self._u[name] = np.zeros_like(param)
        return grad

    def names(self) -> list[str]:
        return list(self._params)

    def param(self, name: str) -> np.ndarray:
        return self._params[name]

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def moments(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        return self._m[name], self._u[name]

    def zero_grads(self) -> None:
        for g in self._grads.values():
            g[...] = 0.0

    def n_parameters(self) -> int:
        return sum(p.size for p in self._params.values())

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: p.copy() for name, p in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        """Overwrite registered tensors in place; shapes must match."""
        for name, arr in values.items():
            dest = self._params[name]
            if dest.shape != arr.shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: have {dest.shape}, got {arr.shape}"
                )
            dest[...] = arr


def adam_step(
    store: ParameterStore,
    lr: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
) -> None:
    """One bias-corrected Adam update over every registered tensor.

    Gradients are validated first (any non-finite entry aborts before any
    parameter moves) and zeroed after the update so the next backward pass
    accumulates from a clean slate.
    """
    for name in store.names():
        if not np.isfinite(store.grad(name)).all():
            raise GradientError(f"non-finite gradient in tensor {name!r}")
    t = store.step_count + 1
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name in store.names():
        g = store.grad(name)
        p = store.param(name)
        m, u = store.moments(name)
        m *= beta1
        m += (1.0 - beta1) * g
        u *= beta2
        u += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(u / c2) + eps)
        g[...] = 0.0
    store.step_count = t


def clip_gradients(store: ParameterStore, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm.

    Off by default in training; exposed for configurations that want it.
    Returns the pre-clip norm.
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    total = 0.0
    for name in store.names():
        g = store.grad(name)
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        scale = max_norm / norm
        for name in store.names():
            store.grad(name)[...] *= scale
    return norm


@dataclass
class GradCheckReport:
    """Worst relative error per tensor plus the overall worst case."""

    per_tensor: dict[str, float] = field(default_factory=dict)
    max_rel_error: float = 0.0
    n_checked: int = 0

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def grad_check(
    loss_fn,
    store: ParameterStore,
    epsilon: float = 1e-5,
    n_coords: int = 200,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    loss_fn() must return the scalar loss and accumulate analytic gradients
    into the store. It is called twice up front; differing values mean the
    loss is not deterministic and the check is refused, since finite
    differences would be meaningless. Up to n_coords coordinates are sampled
    (all of them when the model is smaller than that). Relative error per
    coordinate is |a - n| / max(|a|, |n|, 1e-8).
    """
    if not (1e-7 <= epsilon <= 1e-3):
        raise ValueError(f"epsilon {epsilon} outside [1e-7, 1e-3]")
    store.zero_grads()
    first = float(loss_fn())
    analytic = {name: store.grad(name).copy() for name in store.names()}
    store.zero_grads()
    second = float(loss_fn())
    store.zero_grads()
    if first != second:
        raise ValueError(
            f"loss is not deterministic ({first!r} != {second!r}); "
            "finite differences require repeatable evaluation"
        )

    names = store.names()
    sizes = [store.param(name).size for name in names]
    total = int(np.sum(sizes))
    offsets = np.cumsum([0] + sizes)
    if total <= n_coords:
        flat_ids = np.arange(total)
    else:
        rng = np.random.default_rng(seed)
        flat_ids = np.sort(rng.choice(total, size=n_coords, replace=False))

    report = GradCheckReport(per_tensor={name: 0.0 for name in names})
    for fid in flat_ids:
        k = int(np.searchsorted(offsets, fid, side="right") - 1)
        name = names[k]
        idx = int(fid - offsets[k])
        flat = store.param(name).reshape(-1)
        orig = flat[idx]
        flat[idx] = orig + epsilon
        plus = float(loss_fn())
        flat[idx] = orig - epsilon
        minus = float(loss_fn())
        flat[idx] = orig
        store.zero_grads()
        numeric = (plus - minus) / (2.0 * epsilon)
        a = float(analytic[name].reshape(-1)[idx])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        if rel > report.per_tensor[name]:
            report.per_tensor[name] = rel
        if rel > report.max_rel_error:
            report.max_rel_error = rel
        report.n_checked += 1
    return report
