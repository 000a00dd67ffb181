"""Minimal reverse-mode autodiff engine over numpy arrays."""

from .gradcheck import finite_diff_check
from .optim import OptimizerState, adam_step, zero_grads
from .ops import (
    BatchNormState,
    add,
    batchnorm2d,
    conv2d,
    depthwise_conv2d,
    matmul,
    maxpool2d,
    mse,
    mul,
    mul_scalar,
    normalize_rows,
    relu,
    relu6,
    reshape,
    transpose2d,
    transposed_conv2d,
    weighted_sum,
)
from .tensor import Tape, Tensor, backward, default_dtype, set_default_dtype, using_dtype

__all__ = [
    "Tensor", "Tape", "backward",
    "default_dtype", "set_default_dtype", "using_dtype",
    "conv2d", "depthwise_conv2d", "transposed_conv2d", "maxpool2d",
    "batchnorm2d", "BatchNormState", "relu", "relu6",
    "mse", "add", "mul", "mul_scalar", "reshape", "transpose2d", "matmul",
    "normalize_rows", "weighted_sum",
    "OptimizerState", "adam_step", "zero_grads", "finite_diff_check",
]
