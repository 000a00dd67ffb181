"""Reverse-mode automatic differentiation: Tensor values and the gradient Tape.

The engine is deliberately small: a Tensor wraps a numpy array plus an
optional gradient buffer, and a Tape is an ordered record of executed
operations.  Each op appends a closure that knows how to push the output's
gradient back to its inputs; ``backward`` replays those closures in reverse
execution order, which is a valid topological order by construction.
"""

from __future__ import annotations

import numpy as np

_VALID_DTYPES = (np.float32, np.float64)

_default_dtype = np.float32
_active_tape = None


def set_default_dtype(dtype) -> None:
    """Set the global dtype used when constructing tensors from raw data.

    Accepts ``np.float32`` or ``np.float64``.  Verification code runs at
    64-bit, training at 32-bit; the choice is global so a whole run is
    computed at one precision.
    """
    global _default_dtype
    dt = np.dtype(dtype).type
    if dt not in _VALID_DTYPES:
        raise ValueError(f"unsupported dtype {dtype!r}; use float32 or float64")
    _default_dtype = dt


def default_dtype():
    return _default_dtype


class using_dtype:
    """Context manager that temporarily switches the default dtype."""

    def __init__(self, dtype):
        self._dtype = dtype
        self._saved = None

    def __enter__(self):
        global _default_dtype
        self._saved = _default_dtype
        set_default_dtype(self._dtype)
        return self

    def __exit__(self, *exc):
        global _default_dtype
        _default_dtype = self._saved
        return False


class Tensor:
    """A dense float array with an optional gradient buffer.

    ``data`` holds the values, ``grad`` is either None or an array of the
    same shape, and ``requires_grad`` marks leaves that should receive
    gradients.  Gradients accumulate across backward passes until
    explicitly cleared (mirroring mini-batch accumulation).
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else _default_dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        # Internal: keep the computed dtype, do not re-cast to the default.
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        t.requires_grad = requires_grad
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def _acc(self, delta: np.ndarray, copy_on_assign: bool = False) -> None:
        # Accumulate a gradient contribution.  Callers hand over ownership of
        # `delta` unless copy_on_assign is set; a handed-over array may alias
        # an upstream grad that is already fully consumed.
        if self.grad is None:
            self.grad = np.array(delta, copy=True) if copy_on_assign else delta
        else:
            self.grad += delta

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of executed ops for one forward pass.

    Entering the tape as a context manager makes it the active recording
    target; ops executed while it is active append (output, backward_fn)
    records.  ``reset`` drops all records, releasing the closures and any
    intermediate arrays they captured.
    """

    __slots__ = ("_records", "_prev")

    def __init__(self):
        self._records = []
        self._prev = None

    def record(self, out: Tensor, backward_fn) -> None:
        self._records.append((out, backward_fn))

    def reset(self) -> None:
        self._records.clear()

    def __len__(self) -> int:
        return len(self._records)

    def __enter__(self) -> "Tape":
        global _active_tape
        self._prev = _active_tape
        _active_tape = self
        return self

    def __exit__(self, *exc):
        global _active_tape
        _active_tape = self._prev
        self._prev = None
        return False


def active_tape():
    return _active_tape


def backward(loss: Tensor, tape: Tape) -> None:
    """Run reverse-mode accumulation from a scalar loss over a tape.

    Gradients of leaf tensors (those not produced by ops on this tape)
    accumulate into their existing buffers, so calling backward on several
    tapes, or repeatedly on one tape, sums contributions.  Gradients of
    intermediate tensors are recomputed from scratch each call.
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    produced = {id(out) for out, _ in tape._records}
    if id(loss) not in produced:
        raise ValueError("loss was not produced by an op recorded on this tape")
    # Intermediate grads from any previous replay would double-count; clear
    # them while leaving leaf grads (parameters) untouched.
    for out, _ in tape._records:
        out.grad = None
    loss.grad = np.ones_like(loss.data)
    for out, fn in reversed(tape._records):
        if out.grad is not None:
            fn()
