from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .params import GradientMap, ParameterSet
from .tape import DimensionError


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)
    step_count: int = 0

    @classmethod
    def zeros_like(cls, params: ParameterSet, **hyper) -> "AdamState":
        state = cls(**hyper)
        for e in params:
            if e.trainable:
                state.first_moment[e.name] = np.zeros_like(e.value)
                state.second_moment[e.name] = np.zeros_like(e.value)
        return state


def adam_step(params: ParameterSet, grads: GradientMap, state: AdamState) -> tuple[ParameterSet, AdamState]:
    """One bias-corrected Adam update. Inputs are left untouched."""
    if state.step_count < 0:
        raise ValueError("step_count must be non-negative")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    lr_t = state.learning_rate
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t

    updates, m_new, v_new = {}, {}, {}
    for e in params:
        if not e.trainable:
            continue
        if e.name not in grads:
            raise KeyError(f"no gradient for trainable layer {e.name!r}")
        g = grads[e.name]
        if g.shape != e.value.shape:
            raise DimensionError(f"{e.name}: gradient shape {g.shape} != parameter shape {e.value.shape}")
        # a finite sum implies finite entries; only fall back to the full scan otherwise
        if not math.isfinite(float(g.sum())) and not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in layer {e.name!r}")
        m = state.first_moment.get(e.name, np.zeros_like(g))
        v = state.second_moment.get(e.name, np.zeros_like(g))
        if m.shape != g.shape or v.shape != g.shape:
            raise DimensionError(f"{e.name}: Adam moment shape does not match parameter")
        # fresh arrays, updated in place to keep temporaries down on large layers
        m = np.multiply(m, b1)
        m += (1.0 - b1) * g
        v = np.multiply(v, b2)
        sq = np.square(g)
        sq *= 1.0 - b2
        v += sq
        denom = np.sqrt(v, out=sq)
        denom *= 1.0 / np.sqrt(c2)
        denom += state.epsilon
        step = np.multiply(m, lr_t / c1)
        step /= denom
        updates[e.name] = np.subtract(e.value, step, out=step)
        m_new[e.name] = m
        v_new[e.name] = v

    new_state = AdamState(
        learning_rate=state.learning_rate,
        beta1=b1,
        beta2=b2,
        epsilon=state.epsilon,
        first_moment=m_new,
        second_moment=v_new,
        step_count=t,
    )
    return params.replace(updates), new_state
