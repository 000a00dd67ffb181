"""Differentiable operations over 3-D (C, H, W) feature tensors.

Convolutions are evaluated through an im2col lowering (k*k strided slices
feeding one BLAS matmul) so desk-scale training stays fast without any
native extensions.  Every op validates its geometry up front and raises
ValueError naming the offending values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, active_tape


# ---------------------------------------------------------------------------
# lowering helpers (pure numpy, no recording)

def _pad_hw(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (p, p), (p, p)))


def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """(C, Hp, Wp) -> (C, k, k, ho, wo) patch view stack (copied)."""
    c = xp.shape[0]
    cols = np.empty((c, k, k, ho, wo), dtype=xp.dtype)
    for u in range(k):
        for v in range(k):
            cols[:, u, v] = xp[:, u : u + stride * ho : stride, v : v + stride * wo : stride]
    return cols


def _col2im(cols: np.ndarray, k: int, stride: int, hp: int, wp: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add (C, k, k, ho, wo) back to (C, hp, wp)."""
    c, _, _, ho, wo = cols.shape
    out = np.zeros((c, hp, wp), dtype=cols.dtype)
    for u in range(k):
        for v in range(k):
            out[:, u : u + stride * ho : stride, v : v + stride * wo : stride] += cols[:, u, v]
    return out


def _crop_pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return x[:, p:-p, p:-p]


def _check_image(x: Tensor, name: str) -> None:
    if x.data.ndim != 3:
        raise ValueError(f"{name} must be 3-D (C, H, W), got shape {x.data.shape}")


def _conv_out_side(side: int, k: int, stride: int, padding: int) -> int:
    return (side + 2 * padding - k) // stride + 1


def _conv_forward_raw(x: np.ndarray, w: np.ndarray, stride: int, padding: int) -> np.ndarray:
    """Plain correlation forward used both by conv2d and by deconv's backward."""
    co, ci, k, _ = w.shape
    _, h, wd = x.shape
    ho = _conv_out_side(h, k, stride, padding)
    wo = _conv_out_side(wd, k, stride, padding)
    cols = _im2col(_pad_hw(x, padding), k, stride, ho, wo).reshape(ci * k * k, ho * wo)
    return (w.reshape(co, -1) @ cols).reshape(co, ho, wo)


# ---------------------------------------------------------------------------
# convolutions

def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D correlation: (C_in, H, W) x (C_out, C_in, k, k) -> (C_out, H', W').

    H' = floor((H + 2*padding - k) / stride) + 1.  The gradient with respect
    to the input is a transposed convolution with the same weight.
    """
    _check_image(x, "conv2d input")
    if weight.data.ndim != 4 or weight.data.shape[2] != weight.data.shape[3]:
        raise ValueError(f"conv2d weight must be (C_out, C_in, k, k), got {weight.data.shape}")
    co, ci, k, _ = weight.data.shape
    cx, h, wd = x.data.shape
    if cx != ci:
        raise ValueError(f"conv2d channel mismatch: input has {cx} channels, weight expects {ci}")
    if stride < 1:
        raise ValueError(f"conv2d stride must be >= 1, got {stride}")
    if k > h + 2 * padding or k > wd + 2 * padding:
        raise ValueError(f"conv2d kernel {k} exceeds padded input {(h + 2 * padding, wd + 2 * padding)}")
    if bias is not None and bias.data.shape != (co,):
        raise ValueError(f"conv2d bias must have shape ({co},), got {bias.data.shape}")

    ho = _conv_out_side(h, k, stride, padding)
    wo = _conv_out_side(wd, k, stride, padding)
    cols = _im2col(_pad_hw(x.data, padding), k, stride, ho, wo).reshape(ci * k * k, ho * wo)
    out_data = (weight.data.reshape(co, -1) @ cols).reshape(co, ho, wo)
    if bias is not None:
        out_data = out_data + bias.data[:, None, None]

    req = x.requires_grad or weight.requires_grad or (bias is not None and bias.requires_grad)
    out = Tensor._wrap(out_data, req)
    tape = active_tape()
    if tape is not None and req:
        def _bw():
            g = out.grad
            gflat = g.reshape(co, -1)
            if weight.requires_grad:
                weight._acc((gflat @ cols.T).reshape(weight.data.shape))
            if x.requires_grad:
                gcols = (weight.data.reshape(co, -1).T @ gflat).reshape(ci, k, k, ho, wo)
                gx = _crop_pad(_col2im(gcols, k, stride, h + 2 * padding, wd + 2 * padding), padding)
                x._acc(gx)
            if bias is not None and bias.requires_grad:
                bias._acc(g.sum(axis=(1, 2)))
        tape.record(out, _bw)
    return out


def depthwise_conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                     stride: int = 1, padding: int = 0) -> Tensor:
    """Per-channel 2-D correlation with weight (C, 1, k, k)."""
    _check_image(x, "depthwise_conv2d input")
    if weight.data.ndim != 4 or weight.data.shape[1] != 1 or weight.data.shape[2] != weight.data.shape[3]:
        raise ValueError(f"depthwise weight must be (C, 1, k, k), got {weight.data.shape}")
    c, _, k, _ = weight.data.shape
    cx, h, wd = x.data.shape
    if cx != c:
        raise ValueError(f"depthwise channel mismatch: input has {cx} channels, weight has {c}")
    if stride < 1:
        raise ValueError(f"depthwise stride must be >= 1, got {stride}")
    if k > h + 2 * padding or k > wd + 2 * padding:
        raise ValueError(f"depthwise kernel {k} exceeds padded input {(h + 2 * padding, wd + 2 * padding)}")
    if bias is not None and bias.data.shape != (c,):
        raise ValueError(f"depthwise bias must have shape ({c},), got {bias.data.shape}")

    ho = _conv_out_side(h, k, stride, padding)
    wo = _conv_out_side(wd, k, stride, padding)
    cols = _im2col(_pad_hw(x.data, padding), k, stride, ho, wo).reshape(c, k * k, ho * wo)
    w2 = weight.data.reshape(c, k * k)
    out_data = np.einsum("ck,ckp->cp", w2, cols, optimize=True).reshape(c, ho, wo)
    if bias is not None:
        out_data = out_data + bias.data[:, None, None]

    req = x.requires_grad or weight.requires_grad or (bias is not None and bias.requires_grad)
    out = Tensor._wrap(out_data, req)
    tape = active_tape()
    if tape is not None and req:
        def _bw():
            g = out.grad
            gflat = g.reshape(c, -1)
            if weight.requires_grad:
                gw = np.einsum("cp,ckp->ck", gflat, cols, optimize=True)
                weight._acc(gw.reshape(weight.data.shape))
            if x.requires_grad:
                gcols = np.einsum("ck,cp->ckp", w2, gflat, optimize=True)
                gcols = gcols.reshape(c, k, k, ho, wo)
                gx = _crop_pad(_col2im(gcols, k, stride, h + 2 * padding, wd + 2 * padding), padding)
                x._acc(gx)
            if bias is not None and bias.requires_grad:
                bias._acc(g.sum(axis=(1, 2)))
        tape.record(out, _bw)
    return out


def transposed_conv2d(x: Tensor, weight: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution: (C_in, H, W) x (C_in, C_out, k, k) -> (C_out, H', W').

    H' = (H - 1) * stride - 2 * padding + k.  This is the exact adjoint of
    conv2d with the same weight array, so <conv2d(x, w), y> equals
    <x, transposed_conv2d(y, w)>; its input gradient is a forward conv2d.
    """
    _check_image(x, "transposed_conv2d input")
    if weight.data.ndim != 4 or weight.data.shape[2] != weight.data.shape[3]:
        raise ValueError(f"transposed weight must be (C_in, C_out, k, k), got {weight.data.shape}")
    ci, co, k, _ = weight.data.shape
    cx, h, wd = x.data.shape
    if cx != ci:
        raise ValueError(f"transposed_conv2d channel mismatch: input has {cx} channels, weight expects {ci}")
    if stride < 1:
        raise ValueError(f"transposed_conv2d stride must be >= 1, got {stride}")
    ho = (h - 1) * stride - 2 * padding + k
    wo = (wd - 1) * stride - 2 * padding + k
    if ho <= 0 or wo <= 0:
        raise ValueError(f"transposed_conv2d output side must be positive, got {(ho, wo)}")

    wmat = weight.data.reshape(ci, co * k * k)
    gcols = (wmat.T @ x.data.reshape(ci, h * wd)).reshape(co, k, k, h, wd)
    out_data = _crop_pad(_col2im(gcols, k, stride, ho + 2 * padding, wo + 2 * padding), padding)

    req = x.requires_grad or weight.requires_grad
    out = Tensor._wrap(out_data, req)
    tape = active_tape()
    if tape is not None and req:
        def _bw():
            g = out.grad
            if x.requires_grad:
                # adjoint of the adjoint: a forward conv with the same weight
                x._acc(_conv_forward_raw(g, weight.data, stride, padding))
            if weight.requires_grad:
                cols_g = _im2col(_pad_hw(g, padding), k, stride, h, wd).reshape(co * k * k, h * wd)
                weight._acc((x.data.reshape(ci, -1) @ cols_g.T).reshape(weight.data.shape))
        tape.record(out, _bw)
    return out


def maxpool2d(x: Tensor, kernel: int = 2, stride: int | None = None, padding: int = 0) -> Tensor:
    """Max pooling; the gradient routes to the argmax cell of each window."""
    _check_image(x, "maxpool2d input")
    if stride is None:
        stride = kernel
    c, h, wd = x.data.shape
    if kernel > h + 2 * padding or kernel > wd + 2 * padding:
        raise ValueError(f"maxpool kernel {kernel} exceeds padded input {(h + 2 * padding, wd + 2 * padding)}")
    ho = _conv_out_side(h, kernel, stride, padding)
    wo = _conv_out_side(wd, kernel, stride, padding)
    if padding:
        xp = np.full((c, h + 2 * padding, wd + 2 * padding), -np.inf, dtype=x.data.dtype)
        xp[:, padding:-padding, padding:-padding] = x.data
    else:
        xp = x.data
    cols = _im2col(xp, kernel, stride, ho, wo).reshape(c, kernel * kernel, ho * wo)
    amax = cols.argmax(axis=1)
    out_data = np.take_along_axis(cols, amax[:, None, :], axis=1)[:, 0, :].reshape(c, ho, wo)

    out = Tensor._wrap(out_data, x.requires_grad)
    tape = active_tape()
    if tape is not None and x.requires_grad:
        def _bw():
            g = out.grad
            gcols = np.zeros((c, kernel * kernel, ho * wo), dtype=g.dtype)
            np.put_along_axis(gcols, amax[:, None, :], g.reshape(c, 1, -1), axis=1)
            gx = _col2im(gcols.reshape(c, kernel, kernel, ho, wo), kernel, stride,
                         h + 2 * padding, wd + 2 * padding)
            x._acc(_crop_pad(gx, padding))
        tape.record(out, _bw)
    return out


# ---------------------------------------------------------------------------
# normalization and activations

@dataclass
class BatchNormState:
    """Running statistics carried across training steps (not parameters)."""
    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def create(cls, channels: int, dtype=np.float32) -> "BatchNormState":
        return cls(mean=np.zeros(channels, dtype=dtype), var=np.ones(channels, dtype=dtype))


def batchnorm2d(x: Tensor, scale: Tensor, shift: Tensor, state: BatchNormState,
                mode: str = "train", momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Channel normalization over the spatial extent.

    Train mode normalizes with the current statistics and folds them into the
    running ones (state <- (1 - momentum) * state + momentum * batch); eval
    mode normalizes with the running statistics.  The variance estimator is
    the biased one in both roles.  eps keeps the division finite.
    """
    _check_image(x, "batchnorm2d input")
    c = x.data.shape[0]
    if scale.data.shape != (c,) or shift.data.shape != (c,):
        raise ValueError(
            f"batchnorm scale/shift must have shape ({c},), got {scale.data.shape} and {shift.data.shape}")
    if state.mean.shape != (c,) or state.var.shape != (c,):
        raise ValueError(f"batchnorm running stats must have shape ({c},), got {state.mean.shape}")
    if mode not in ("train", "eval"):
        raise ValueError(f"batchnorm mode must be 'train' or 'eval', got {mode!r}")

    if mode == "train":
        mu = x.data.mean(axis=(1, 2))
        var = x.data.var(axis=(1, 2))
        state.mean[...] = (1.0 - momentum) * state.mean + momentum * mu
        state.var[...] = (1.0 - momentum) * state.var + momentum * var
    else:
        mu = state.mean.astype(x.data.dtype, copy=False)
        var = state.var.astype(x.data.dtype, copy=False)
    istd = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[:, None, None]) * istd[:, None, None]
    out_data = scale.data[:, None, None] * xhat + shift.data[:, None, None]

    req = x.requires_grad or scale.requires_grad or shift.requires_grad
    out = Tensor._wrap(out_data, req)
    tape = active_tape()
    if tape is not None and req:
        def _bw():
            g = out.grad
            if scale.requires_grad:
                scale._acc((g * xhat).sum(axis=(1, 2)))
            if shift.requires_grad:
                shift._acc(g.sum(axis=(1, 2)))
            if x.requires_grad:
                gs = g * scale.data[:, None, None]
                if mode == "train":
                    m1 = gs.mean(axis=(1, 2))
                    m2 = (gs * xhat).mean(axis=(1, 2))
                    gx = istd[:, None, None] * (gs - m1[:, None, None] - xhat * m2[:, None, None])
                else:
                    gx = gs * istd[:, None, None]
                x._acc(gx)
        tape.record(out, _bw)
    return out


def _activation(x: Tensor, mask_fn, value_fn) -> Tensor:
    out_data = value_fn(x.data)
    out = Tensor._wrap(out_data, x.requires_grad)
    tape = active_tape()
    if tape is not None and x.requires_grad:
        mask = mask_fn(x.data)

        def _bw():
            x._acc(out.grad * mask)
        tape.record(out, _bw)
    return out


def relu(x: Tensor) -> Tensor:
    """max(x, 0); subgradient 0 at the kink."""
    return _activation(x, lambda d: d > 0, lambda d: np.maximum(d, 0))


def relu6(x: Tensor) -> Tensor:
    """min(max(x, 0), 6); subgradient 0 at both kinks."""
    return _activation(x, lambda d: (d > 0) & (d < 6), lambda d: np.clip(d, 0, 6))


# ---------------------------------------------------------------------------
# reductions and plumbing

def mse(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over all elements (scalar output)."""
    if pred.data.shape != target.data.shape:
        raise ValueError(f"mse shape mismatch: {pred.data.shape} vs {target.data.shape}")
    diff = pred.data - target.data
    out = Tensor._wrap(np.mean(diff * diff), pred.requires_grad or target.requires_grad)
    tape = active_tape()
    if tape is not None and out.requires_grad:
        n = diff.size

        def _bw():
            g = out.grad
            base = (2.0 / n) * diff * g
            if pred.requires_grad:
                pred._acc(base)
            if target.requires_grad:
                target._acc(-base)
        tape.record(out, _bw)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of same-shape tensors."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = Tensor._wrap(a.data + b.data, a.requires_grad or b.requires_grad)
    tape = active_tape()
    if tape is not None and out.requires_grad:
        def _bw():
            g = out.grad
            if a.requires_grad:
                a._acc(g)
            # the same buffer must not be assigned to two tensors
            if b.requires_grad:
                b._acc(g, copy_on_assign=True)
        tape.record(out, _bw)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"mul shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = Tensor._wrap(a.data * b.data, a.requires_grad or b.requires_grad)
    tape = active_tape()
    if tape is not None and out.requires_grad:
        def _bw():
            g = out.grad
            if a.requires_grad:
                a._acc(g * b.data)
            if b.requires_grad:
                b._acc(g * a.data)
        tape.record(out, _bw)
    return out


def mul_scalar(x: Tensor, c: float) -> Tensor:
    """Multiply by a python constant."""
    out = Tensor._wrap(x.data * c, x.requires_grad)
    tape = active_tape()
    if tape is not None and x.requires_grad:
        def _bw():
            x._acc(out.grad * c)
        tape.record(out, _bw)
    return out


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor._wrap(x.data.reshape(shape), x.requires_grad)
    tape = active_tape()
    if tape is not None and x.requires_grad:
        orig = x.data.shape

        def _bw():
            x._acc(out.grad.reshape(orig))
        tape.record(out, _bw)
    return out


def transpose2d(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ValueError(f"transpose2d needs a matrix, got shape {x.data.shape}")
    out = Tensor._wrap(np.ascontiguousarray(x.data.T), x.requires_grad)
    tape = active_tape()
    if tape is not None and x.requires_grad:
        def _bw():
            x._acc(np.ascontiguousarray(out.grad.T))
        tape.record(out, _bw)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul needs matrices, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul inner-dim mismatch: {a.data.shape} @ {b.data.shape}")
    out = Tensor._wrap(a.data @ b.data, a.requires_grad or b.requires_grad)
    tape = active_tape()
    if tape is not None and out.requires_grad:
        def _bw():
            g = out.grad
            if a.requires_grad:
                a._acc(g @ b.data.T)
            if b.requires_grad:
                b._acc(a.data.T @ g)
        tape.record(out, _bw)
    return out


def normalize_rows(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Scale each row to unit Euclidean norm.

    Rows whose norm falls below eps map to zero rows and pass no gradient,
    so downstream cosine products involving a degenerate vector are 0.
    """
    if x.data.ndim != 2:
        raise ValueError(f"normalize_rows needs a matrix, got shape {x.data.shape}")
    norms = np.sqrt((x.data * x.data).sum(axis=1))
    safe = norms >= eps
    inv = np.where(safe, 1.0 / np.where(safe, norms, 1.0), 0.0)
    u = x.data * inv[:, None]
    out = Tensor._wrap(u, x.requires_grad)
    tape = active_tape()
    if tape is not None and x.requires_grad:
        def _bw():
            g = out.grad
            dot = (g * u).sum(axis=1)
            x._acc((g - u * dot[:, None]) * inv[:, None])
        tape.record(out, _bw)
    return out


def weighted_sum(x: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar projection sum(x * weights) against a constant array."""
    w = np.asarray(weights, dtype=x.data.dtype)
    if w.shape != x.data.shape:
        raise ValueError(f"weighted_sum shape mismatch: {x.data.shape} vs {w.shape}")
    out = Tensor._wrap(np.asarray((x.data * w).sum()), x.requires_grad)
    tape = active_tape()
    if tape is not None and x.requires_grad:
        def _bw():
            x._acc(out.grad * w)
        tape.record(out, _bw)
    return out
