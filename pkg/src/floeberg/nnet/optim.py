"""Adam with bias correction; moments keyed by parameter name."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_LEARNING_RATE = 0.003


@dataclass
class AdamState:
    lr: float = DEFAULT_LEARNING_RATE
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: list[tuple[str, np.ndarray]], **kwargs) -> "AdamState":
        state = cls(**kwargs)
        for name, arr in params:
            state.m[name] = np.zeros_like(arr)
            state.v[name] = np.zeros_like(arr)
        return state


def adam_step(state: AdamState, params: list[tuple[str, np.ndarray]],
              grads: list[tuple[str, np.ndarray]]) -> list[tuple[str, np.ndarray]]:
    """One in-place Adam update; the step counter advances once per call."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for (name, p), (gname, g) in zip(params, grads):
        if name != gname:
            raise ValueError(f"parameter/gradient mismatch: {name} vs {gname}")
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch for {name}: {p.shape} vs {g.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return params
