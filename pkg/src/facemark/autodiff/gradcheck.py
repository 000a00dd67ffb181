"""Finite-difference verification of recorded gradients."""

from __future__ import annotations

import numpy as np

from .ops import weighted_sum
from .tensor import Tape, Tensor, backward


def finite_diff_check(op, inputs: list[Tensor], eps: float = 1e-5, seed: int = 0) -> float:
    """Compare analytic gradients of ``op`` against central differences.

    The op's output is projected to a scalar with a fixed random weighting,
    the tape produces analytic gradients, and every coordinate of every
    input with requires_grad is perturbed by +/-eps.  Returns the worst
    relative error max |analytic - numeric| / max(1e-8, |numeric|).

    Run this at 64-bit precision; 32-bit round-off swamps the differences.
    """
    for t in inputs:
        t.grad = None  # stale leaf grads would fold into the analytic side
    with Tape() as tape:
        out = op(*inputs)
        proj = np.random.default_rng(seed).standard_normal(out.data.shape).astype(out.data.dtype)
        loss = weighted_sum(out, proj)
        backward(loss, tape)
    analytic = [t.grad.copy() if t.grad is not None else None for t in inputs]

    def scalar() -> float:
        return float((op(*inputs).data * proj).sum())

    worst = 0.0
    for t, ana in zip(inputs, analytic):
        if not t.requires_grad:
            continue
        if ana is None:
            ana = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        aflat = ana.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = scalar()
            flat[i] = orig - eps
            f_minus = scalar()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            rel = abs(aflat[i] - numeric) / max(1e-8, abs(numeric))
            if rel > worst:
                worst = rel
    return worst
