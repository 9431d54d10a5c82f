"""Focal loss over softmax probabilities, with its analytic logit gradient.

Per sample with true class c:  loss = -alpha[c] * (1 - p_c)^gamma * ln(p_c),
with p_c clamped to at least 1e-12.  gamma = 0 with unit alpha reduces the
expression to plain cross-entropy, which the tests pin down pointwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROBABILITY_CLAMP = 1e-12


@dataclass(frozen=True)
class FocalLossParams:
    gamma: float = 2.0
    alpha: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=np.float64))
        if self.gamma < 0.0:
            raise ValueError("gamma must be >= 0")
        if self.alpha.shape != (3,):
            raise ValueError("alpha must hold one weight per class (3)")
        if np.any(self.alpha < 0.0):
            raise ValueError("alpha weights must be >= 0")

    @classmethod
    def inverse_frequency(cls, labels: np.ndarray, gamma: float = 2.0) -> "FocalLossParams":
        """Per-class weights proportional to inverse frequency, normalized to mean 1."""
        labels = np.asarray(labels)
        counts = np.bincount(labels, minlength=3).astype(np.float64)
        counts = np.maximum(counts, 1.0)  # absent classes get a neutral-ish weight
        weights = 1.0 / counts
        return cls(gamma=gamma, alpha=weights / weights.mean())


def focal_loss_batch(probs: np.ndarray, classes: np.ndarray,
                     params: FocalLossParams) -> np.ndarray:
    """Per-sample focal losses for a (B, 3) probability batch."""
    probs = np.asarray(probs, dtype=np.float64)
    classes = np.asarray(classes)
    p = probs[np.arange(len(classes)), classes]
    pe = np.maximum(p, PROBABILITY_CLAMP)
    u = 1.0 - pe
    return -params.alpha[classes] * u ** params.gamma * np.log(pe)


def focal_loss(probs: np.ndarray, true_class: int, params: FocalLossParams) -> float:
    """Focal loss of a single softmax output vector."""
    probs = np.asarray(probs, dtype=np.float64)
    return float(focal_loss_batch(probs[None, :], np.asarray([true_class]), params)[0])


def focal_softmax_grad(probs: np.ndarray, classes: np.ndarray,
                       params: FocalLossParams) -> np.ndarray:
    """Per-sample d(loss)/d(logits), (B, 3), for softmax-produced probs.

    The clamp makes the loss flat below the probability floor, so the
    gradient there is zero; at p_c = 1 both terms vanish for gamma > 0.
    """
    probs = np.asarray(probs, dtype=np.float64)
    classes = np.asarray(classes)
    rows = np.arange(len(classes))
    p = probs[rows, classes]
    pe = np.maximum(p, PROBABILITY_CLAMP)
    u = 1.0 - pe
    u_safe = np.where(u > 0.0, u, 1.0)
    if params.gamma == 0.0:
        shrink_term = np.zeros_like(pe)
    else:
        shrink_term = np.where(
            u > 0.0, params.gamma * u_safe ** (params.gamma - 1.0) * np.log(pe), 0.0)
    dldp = np.where(p >= PROBABILITY_CLAMP,
                    params.alpha[classes] * (shrink_term - u ** params.gamma / pe),
                    0.0)
    onehot = np.zeros_like(probs)
    onehot[rows, classes] = 1.0
    return (dldp * p)[:, None] * (onehot - probs)
