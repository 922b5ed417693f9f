"""Adam optimizer with bias correction, and the step-milestone LR schedule."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .net import Grads
from .params import PoseHeadParams


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam_state(params: PoseHeadParams, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    arrays = params.arrays()
    return AdamState(
        m=[np.zeros_like(a) for a in arrays],
        v=[np.zeros_like(a) for a in arrays],
        step=0,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(params: PoseHeadParams, grads: Grads, state: AdamState, lr: float) -> tuple:
    """One bias-corrected Adam update; returns (new params, new state)."""
    p_arrays = params.arrays()
    g_arrays = grads.arrays()
    if len(p_arrays) != len(g_arrays) or any(
        p.shape != g.shape for p, g in zip(p_arrays, g_arrays)
    ):
        raise ConfigError("gradient shapes do not match parameter shapes")

    t = state.step + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    new_params = params.copy()
    new_m, new_v = [], []
    for arr, g, m, v in zip(new_params.arrays(), g_arrays, state.m, state.v):
        m_t = state.beta1 * m + (1.0 - state.beta1) * g
        v_t = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        arr -= lr * (m_t / bc1) / (np.sqrt(v_t / bc2) + state.eps)
        new_m.append(m_t)
        new_v.append(v_t)
    return new_params, AdamState(
        m=new_m, v=new_v, step=t, beta1=state.beta1, beta2=state.beta2, eps=state.eps
    )


def lr_at_step(base_lr: float, step: int, total_steps: int, milestones: tuple) -> float:
    """LR divided by 10 after each milestone fraction of total steps.

    Steps are 0-indexed: with 100 total steps and milestones (0.5, 0.75, 0.9)
    the rate changes exactly at steps 50, 75, and 90.
    """
    drops = sum(1 for frac in milestones if int(np.floor(frac * total_steps)) <= step)
    return base_lr * (0.1**drops)
