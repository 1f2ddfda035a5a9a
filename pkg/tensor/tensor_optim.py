from typing import List, Optional, Sequence

import numpy as np

from tensor.constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPS
from tensor.tensor_core import Parameter


class AdamState:
    """
    First and second moment estimates plus the step counter.
    """
    def __init__(self, shapes: Sequence[tuple], dtype=np.float64) -> None:
        self.step = 0
        self.m: List[np.ndarray] = [np.zeros(shape, dtype=dtype) for shape in shapes]
        self.v: List[np.ndarray] = [np.zeros(shape, dtype=dtype) for shape in shapes]


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState, lr: float,
              beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2, eps: float = ADAM_EPS) -> None:
    """
    One bias-corrected Adam update, applied to `params` in place.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError(f'Adam received {len(params)} params, {len(grads)} grads and {len(state.m)} states.')
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for param, grad, m, v in zip(params, grads, state.m, state.v):
        if param.shape != m.shape or grad.shape != m.shape:
            raise ValueError(f'Adam state shape {m.shape} does not match param {param.shape} / grad {grad.shape}.')
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
        param -= update.astype(param.dtype, copy=False)


class Adam:
    """
    Adam over module parameters. Parameters without a gradient keep their moments and values untouched.
    """
    def __init__(self, params: Sequence[Parameter], lr: float = 1e-4, beta1: float = ADAM_BETA1,
                 beta2: float = ADAM_BETA2, eps: float = ADAM_EPS) -> None:
        if lr < 0:
            raise ValueError(f'Learning rate {lr} is invalid. Should be >= 0.')
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.states: List[Optional[AdamState]] = [None] * len(self.params)

    def step(self) -> None:
        for index, param in enumerate(self.params):
            if param.grad is None:
                continue
            if self.states[index] is None:
                self.states[index] = AdamState([param.shape])
            adam_step([param.data], [param.grad], self.states[index], self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()
