"""Activation functions and small building blocks for the from-scratch models.

Everything operates on 64-bit numpy arrays.  Gradient helpers take the
pre-activation values so the backward passes stay allocation-light.
"""

from __future__ import annotations

import numpy as np

# opt-in NaN guard: when enabled, forward/backward passes validate their
# boundary tensors and raise on the first non-finite value
NAN_CHECKS = False


def set_nan_checks(enabled: bool) -> None:
    global NAN_CHECKS
    NAN_CHECKS = bool(enabled)


def check_finite(name: str, arr: np.ndarray) -> None:
    if NAN_CHECKS and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {name}")


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_grad(pre: np.ndarray) -> np.ndarray:
    return (pre > 0.0).astype(np.float64)


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(pre: np.ndarray) -> np.ndarray:
    return np.where(pre > 0.0, 1.0, np.exp(np.minimum(pre, 0.0)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form: saturates cleanly at both ends, no overflow anywhere
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray | None:
    """Inverted dropout mask (scaled at train time); None when rate is 0."""
    if rate <= 0.0:
        return None
    if not 0.0 < rate < 1.0:
        raise ValueError(f"dropout rate {rate} outside [0, 1)")
    keep = rng.random(shape) >= rate
    return keep.astype(np.float64) / (1.0 - rate)
