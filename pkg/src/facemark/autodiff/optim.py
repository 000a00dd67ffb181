"""Adam optimizer over engine tensors."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class OptimizerState:
    """Per-parameter Adam accumulators plus shared hyperparameters.

    Slots are keyed by parameter identity and created lazily on the first
    step, so one state object can drive any fixed set of tensors.  ``lr``
    may be reassigned between steps (learning-rate schedules).
    """

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ValueError(f"betas must lie in [0, 1), got {(beta1, beta2)}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._slots: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def slot(self, param: Tensor) -> tuple[np.ndarray, np.ndarray]:
        key = id(param)
        if key not in self._slots:
            self._slots[key] = (np.zeros_like(param.data), np.zeros_like(param.data))
        return self._slots[key]


def adam_step(params: list[Tensor], state: OptimizerState) -> None:
    """Apply one Adam update in place.

    Requires every parameter to carry a populated gradient; the first call
    moves each parameter by roughly ``lr`` per coordinate (bias-corrected
    moment estimates make the initial ratio m_hat/sqrt(v_hat) close to
    sign(grad)).
    """
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for i, p in enumerate(params):
        if p.grad is None:
            raise ValueError(f"adam_step: parameter {i} (shape {p.data.shape}) has no gradient")
        g = p.grad
        m, v = state.slot(p)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / c1
        vhat = v / c2
        p.data -= state.lr * mhat / (np.sqrt(vhat) + state.eps)


def zero_grads(params: list[Tensor]) -> None:
    """Clear accumulated gradients (the explicit end of an accumulation window)."""
    for p in params:
        p.grad = None
