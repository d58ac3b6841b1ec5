"""
Adam (day prompt updates, source training) and plain SGD (night student
updates).
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Sequence

import numpy as np

from daynight.errors import ShapeError, UsageError


class OptimKind(Enum):
    adam = "ADAM"
    sgd = "SGD"


@dataclass
class OptimState:
    """
    Optimizer hyperparameters and per-parameter buffers.

    Buffers are created lazily on the first step and stay aligned with the
    parameter list passed to every later step.
    """

    kind: OptimKind
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def adam(cls, lr: float, **kwargs) -> "OptimState":
        return cls(OptimKind.adam, lr, **kwargs)

    @classmethod
    def sgd(cls, lr: float) -> "OptimState":
        return cls(OptimKind.sgd, lr)


def _check_aligned(
    params: Sequence[np.ndarray], grads: Sequence[np.ndarray]
) -> None:
    if len(params) != len(grads):
        count_message = (
            f"Got {len(params)} parameters but {len(grads)} gradients."
        )
        raise ShapeError(count_message)
    for i, (p, g) in enumerate(zip(params, grads)):
        if np.shape(p) != np.shape(g):
            grad_shape_message = (
                f"Parameter {i} has shape {np.shape(p)} but its gradient "
                f"has shape {np.shape(g)}."
            )
            raise ShapeError(grad_shape_message)


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: OptimState,
) -> List[np.ndarray]:
    """
    One bias-corrected Adam update; returns new parameter arrays.

    Examples:
        >>> import numpy as np
        >>> state = OptimState.adam(lr=0.05)
        >>> [p] = adam_step([np.array([1.0])], [np.array([0.0])], state)
        >>> float(p[0])
        1.0
    """
    if state.kind is not OptimKind.adam:
        wrong_kind_message = f"adam_step called with a {state.kind.value} state."
        raise UsageError(wrong_kind_message)
    _check_aligned(params, grads)
    if not state.m:
        state.m = [np.zeros_like(p, dtype=np.float64) for p in params]
        state.v = [np.zeros_like(p, dtype=np.float64) for p in params]
    elif len(state.m) != len(params):
        buffer_message = (
            f"Adam state holds {len(state.m)} buffers for "
            f"{len(params)} parameters."
        )
        raise ShapeError(buffer_message)

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step

    updated = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if state.m[i].shape != np.shape(p):
            buffer_shape_message = (
                f"Adam buffer {i} has shape {state.m[i].shape}, parameter "
                f"has {np.shape(p)}."
            )
            raise ShapeError(buffer_shape_message)
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / correction1
        v_hat = state.v[i] / correction2
        updated.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return updated


def sgd_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: OptimState,
) -> List[np.ndarray]:
    """
    Plain gradient descent, no momentum and no weight decay.

    Examples:
        >>> import numpy as np
        >>> [p] = sgd_step([np.array(1.0)], [np.array(2.0)], OptimState.sgd(0.001))
        >>> round(float(p), 12)
        0.998
    """
    if state.kind is not OptimKind.sgd:
        wrong_kind_message = f"sgd_step called with a {state.kind.value} state."
        raise UsageError(wrong_kind_message)
    _check_aligned(params, grads)
    state.step += 1
    return [p - state.lr * g for p, g in zip(params, grads)]
