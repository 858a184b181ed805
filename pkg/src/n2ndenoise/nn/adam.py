from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericFaultError

DEFAULT_LR = 0.0004


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    lr: float = DEFAULT_LR
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model, lr: float = DEFAULT_LR) -> "AdamState":
        params = model.parameters()
        return cls([np.zeros_like(p) for p in params],
                   [np.zeros_like(p) for p in params], 0, lr)


def adam_step(model, grads, state: AdamState):
    """Apply one bias-corrected Adam update in place.

    Non-finite gradients raise before anything is modified.
    """
    params = model.parameters()
    if len(grads) != len(params):
        raise ValueError(f"{len(grads)} gradients for {len(params)} parameters")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericFaultError("non-finite gradient; step aborted")

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = g.astype(p.dtype, copy=False)
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        if state.lr:
            p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
    return model, state
