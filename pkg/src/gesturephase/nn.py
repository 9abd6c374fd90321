"""Minimal dense numeric core.

Tensors are plain numpy arrays in float32 (training default) or float64
(required for gradient checks). Every layer in this package computes its
own backward pass by hand; ``grad_check`` compares those analytic
gradients against central differences and is the arbiter when they
disagree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GradientCheckError

PRECISIONS = {"float32": np.float32, "float64": np.float64}


def dtype_name(dtype) -> str:
    name = np.dtype(dtype).name
    if name not in PRECISIONS:
        raise ConfigError(f"unsupported precision {name!r}")
    return name


@dataclass
class ParamBlock:
    """A named trainable array with its gradient accumulator."""

    name: str
    value: np.ndarray
    grad: np.ndarray = None

    def __post_init__(self):
        self.value = np.asarray(self.value)
        dtype_name(self.value.dtype)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape or self.grad.dtype != self.value.dtype:
            raise ConfigError(f"param {self.name!r}: grad does not match value")

    def zero_grad(self):
        self.grad[...] = 0


def check_unique_names(blocks: list[ParamBlock]) -> None:
    names = [b.name for b in blocks]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ConfigError(f"duplicate parameter names: {dupes}")


def uniform_init(rng: np.random.Generator, shape, fan_in: int, fan_out: int,
                 dtype=np.float32) -> np.ndarray:
    """Uniform in +-sqrt(6 / (fan_in + fan_out))."""
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """log(sum(exp(a))) along ``axis`` with max subtraction for stability."""
    a = np.asarray(a)
    m = np.max(a, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a - m), axis=axis)) + np.squeeze(m, axis=axis)
    return out


def softmax(a: np.ndarray, axis: int = -1) -> np.ndarray:
    a = np.asarray(a)
    m = np.max(a, axis=axis, keepdims=True)
    e = np.exp(a - m)
    return e / np.sum(e, axis=axis, keepdims=True)


@dataclass(frozen=True)
class LrSchedule:
    """Warmup, plateau, single step decay."""

    base_lr: float = 0.1
    warmup_epochs: int = 20
    decay_epoch: int = 50
    decay_factor: float = 10.0
    total_epochs: int = 80

    def __post_init__(self):
        if self.base_lr <= 0 or self.decay_factor <= 0:
            raise ConfigError("base_lr and decay_factor must be positive")
        if not 0 < self.warmup_epochs <= self.decay_epoch <= self.total_epochs:
            raise ConfigError(
                f"need 0 < warmup ({self.warmup_epochs}) <= decay "
                f"({self.decay_epoch}) <= total ({self.total_epochs})"
            )


def lr_at(schedule: LrSchedule, epoch: int) -> float:
    """Learning rate for a 0-based epoch index."""
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    if epoch < schedule.warmup_epochs:
        return schedule.base_lr * (epoch + 1) / schedule.warmup_epochs
    if epoch < schedule.decay_epoch:
        return schedule.base_lr
    return schedule.base_lr / schedule.decay_factor


def sgd_step(params: list[ParamBlock], lr: float, l2_weight: float = 1e-4) -> None:
    """value <- value - lr * (grad + l2_weight * value); grads are zeroed."""
    if lr < 0 or l2_weight < 0:
        raise ConfigError("lr and l2_weight must be non-negative")
    for block in params:
        g = block.grad
        if l2_weight:
            g = g + l2_weight * block.value
        block.value -= np.asarray(lr * g, dtype=block.value.dtype)
        block.zero_grad()


def grad_check(forward, params: list[ParamBlock], epsilon: float = 1e-5) -> float:
    """Compare analytic gradients against central differences.

    Parameters
    ----------
    forward : callable () -> float
        Recomputes the scalar loss from the current parameter values and
        leaves the analytic gradient of that loss in every block's
        ``grad``. It is called repeatedly under small perturbations.
    params : list of ParamBlock
        Blocks to check; every entry of every block is perturbed. Must be
        float64, the tolerance is meaningless at 32-bit.
    epsilon : float
        Central difference step.

    Returns
    -------
    float
        max over entries of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    for block in params:
        if block.value.dtype != np.float64:
            raise GradientCheckError(
                f"param {block.name!r} is {block.value.dtype}, grad_check needs float64"
            )
    for block in params:
        block.zero_grad()
    loss = np.asarray(forward())
    if loss.size != 1:
        raise GradientCheckError(f"forward() must return a scalar, got shape {loss.shape}")
    loss = float(loss)
    if not math.isfinite(loss):
        raise GradientCheckError(f"forward() returned non-finite loss {loss}")
    analytic = {block.name: block.grad.copy() for block in params}
    worst = 0.0
    for block in params:
        flat = block.value.reshape(-1)
        a_flat = analytic[block.name].reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + epsilon
            f_plus = float(forward())
            flat[i] = saved - epsilon
            f_minus = float(forward())
            flat[i] = saved
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            a = a_flat[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
    # leave state as a clean forward pass would
    for block in params:
        block.grad[...] = analytic[block.name]
    return worst


def assert_finite(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        from .errors import DivergenceError

        raise DivergenceError(f"non-finite values in {name}")
    return arr


class Layer:
    """Forward caches what backward needs; backward accumulates into
    ``ParamBlock.grad`` and returns the gradient wrt its input."""

    def params(self) -> list[ParamBlock]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError
