"""Executable networks: parameter storage, initialization, and the forward pass.

A Network binds a NetworkSpec to concrete parameter tensors.  Parameters live
in canonical spec order (block layers, then the block's projection shortcut;
encoder, decoder, head; within a unit: weight, bias, norm scale, norm shift)
so checkpoints can be written and restored positionally.

The forward pass processes one image at a time, shape (channels, side, side).
Batching is the trainer's job: it runs one tape per sample and lets gradients
accumulate in the shared parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import (
    BatchNormState,
    Tensor,
    add,
    batchnorm2d,
    conv2d,
    default_dtype,
    depthwise_conv2d,
    maxpool2d,
    relu,
    relu6,
    transposed_conv2d,
)
from .spec import BlockDef, ConvDef, NetworkSpec, count_params

_ACT_FNS = {"relu": relu, "relu6": relu6}


@dataclass
class ForwardResult:
    """Heatmap logits plus the three post-activation decoder taps, keyed 1..3
    from coarsest (quarter of output side) to finest (output side)."""
    heatmaps: Tensor
    decoder_feats: dict[int, Tensor]


class _UnitState:
    __slots__ = ("weight", "bias", "scale", "shift", "norm_state")

    def __init__(self):
        self.weight = None
        self.bias = None
        self.scale = None
        self.shift = None
        self.norm_state = None


def _weight_shape(u: ConvDef) -> tuple[int, ...]:
    if u.kind == "dwconv":
        return (u.out_ch, 1, u.kernel, u.kernel)
    if u.kind == "deconv":
        return (u.in_ch, u.out_ch, u.kernel, u.kernel)
    return (u.out_ch, u.in_ch, u.kernel, u.kernel)


def _init_unit(u: ConvDef, rng: np.random.Generator) -> _UnitState:
    st = _UnitState()
    if u.kind == "maxpool":
        return st
    if u.bias and u.kind == "deconv":
        raise ValueError("deconv units do not support bias")
    # zero-mean normal scaled by fan-out; per-channel fan for depthwise
    fan_out = u.kernel * u.kernel * (1 if u.kind == "dwconv" else u.out_ch)
    std = float(np.sqrt(2.0 / fan_out))
    st.weight = Tensor(rng.normal(0.0, std, size=_weight_shape(u)), requires_grad=True)
    if u.bias:
        st.bias = Tensor(np.zeros(u.out_ch), requires_grad=True)
    if u.norm:
        st.scale = Tensor(np.ones(u.out_ch), requires_grad=True)
        st.shift = Tensor(np.zeros(u.out_ch), requires_grad=True)
        st.norm_state = BatchNormState.create(u.out_ch, dtype=default_dtype())
    return st


class Network:
    def __init__(self, spec: NetworkSpec, rng: np.random.Generator | None = None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.spec = spec
        self._states: list[_UnitState] = [_init_unit(u, rng) for u in spec.iter_units()]
        self.params: list[Tensor] = []
        for st in self._states:
            for t in (st.weight, st.bias, st.scale, st.shift):
                if t is not None:
                    self.params.append(t)
        self.buffers: list[BatchNormState] = [
            st.norm_state for st in self._states if st.norm_state is not None]
        n = sum(p.data.size for p in self.params)
        expect = count_params(spec)
        if n != expect:
            raise AssertionError(f"parameter storage holds {n} scalars, spec counts {expect}")

    def _run_unit(self, u: ConvDef, st: _UnitState, x: Tensor, mode: str) -> Tensor:
        if u.kind == "maxpool":
            x = maxpool2d(x, kernel=u.kernel, stride=u.stride, padding=u.padding)
        elif u.kind == "conv":
            x = conv2d(x, st.weight, st.bias, stride=u.stride, padding=u.padding)
        elif u.kind == "dwconv":
            x = depthwise_conv2d(x, st.weight, st.bias, stride=u.stride, padding=u.padding)
        else:
            x = transposed_conv2d(x, st.weight, stride=u.stride, padding=u.padding)
        if u.norm:
            x = batchnorm2d(x, st.scale, st.shift, st.norm_state, mode)
        if u.act is not None:
            x = _ACT_FNS[u.act](x)
        return x

    def forward(self, image: Tensor | np.ndarray, mode: str = "train") -> ForwardResult:
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        if not isinstance(image, Tensor):
            image = Tensor(np.asarray(image), requires_grad=False)
        d = image.data
        if d.ndim != 3 or d.shape[0] != self.spec.input_channels:
            raise ValueError(
                f"expected image of shape ({self.spec.input_channels}, side, side), got {d.shape}")
        if d.shape[1] != d.shape[2] or d.shape[1] % 32 != 0:
            raise ValueError(f"input side must be square and divisible by 32, got {d.shape[1:]}")

        states = iter(self._states)
        x = image
        for item in self.spec.encoder:
            if isinstance(item, BlockDef):
                inp = x
                for u in item.layers:
                    x = self._run_unit(u, next(states), x, mode)
                if item.residual:
                    shortcut = inp
                    if item.downsample is not None:
                        shortcut = self._run_unit(item.downsample, next(states), inp, mode)
                    x = add(x, shortcut)
                if item.post_act is not None:
                    x = _ACT_FNS[item.post_act](x)
            else:
                x = self._run_unit(item, next(states), x, mode)
        taps: dict[int, Tensor] = {}
        for i, u in enumerate(self.spec.decoder, start=1):
            x = self._run_unit(u, next(states), x, mode)
            taps[i] = x
        heatmaps = self._run_unit(self.spec.head, next(states), x, mode)
        return ForwardResult(heatmaps=heatmaps, decoder_feats=taps)
