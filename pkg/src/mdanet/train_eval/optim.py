"""
Adam optimiser with an L2 term added to the gradient.

Date: 2024-03-18
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import numpy as np

from dataclasses import dataclass, field
from typing import Mapping

from tensor_engine.tensor import Tensor

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS   = 1e-8


@dataclass
class AdamState:
    """First and second moment estimates per parameter name."""
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0      # Number of completed steps


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: AdamState, t: int,
    lr: float, l2_lambda: float = 0.0, beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS) -> dict:
    """One bias-corrected Adam step. The L2 gradient l2_lambda * theta is added before the moments are updated.

    Parameters:
        params    name -> current parameter tensor
        grads     name -> gradient array, missing names count as zero gradients
        state     Moment estimates, updated in place
        t         Step number starting at 1
        lr        Learning rate
        l2_lambda L2 regularisation strength

    Returns:
        dict name -> updated parameter tensor (gradient-requiring leaves)"""

    if t < 1:
        raise ValueError("Adam step numbers start at 1, got {}".format(t))

    updated = {}

    for name, tensor in params.items():
        theta = tensor.data.astype(np.float64)
        grad = np.asarray(grads.get(name, 0.0), dtype=np.float64) + l2_lambda * theta

        m = beta1 * state.m.get(name, 0.0) + (1.0 - beta1) * grad
        v = beta2 * state.v.get(name, 0.0) + (1.0 - beta2) * grad * grad
        state.m[name], state.v[name] = m, v

        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)

        updated[name] = Tensor(theta - lr * m_hat / (np.sqrt(v_hat) + eps), requires_grad=True, name=name)

    state.t = t

    return updated
