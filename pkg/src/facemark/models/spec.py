"""Declarative network descriptions plus parameter and FLOP accounting.

A NetworkSpec is an ordered encoder (conv units and residual blocks), exactly
three decoder units whose outputs are the distillation taps, and a 1x1 head
that emits one heatmap plane per landmark.  Specs serialize to plain dicts /
JSON and are embedded verbatim in checkpoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

_KINDS = ("conv", "dwconv", "deconv", "maxpool")
_ACTS = (None, "relu", "relu6")


@dataclass(frozen=True)
class ConvDef:
    """One unit: a (de)convolution or pool, optionally followed by norm + activation."""
    kind: str
    in_ch: int
    out_ch: int
    kernel: int
    stride: int = 1
    padding: int = 0
    bias: bool = False
    norm: bool = False
    act: str | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown unit kind {self.kind!r}")
        if self.act not in _ACTS:
            raise ValueError(f"unknown activation {self.act!r}")
        if self.kind == "dwconv" and self.in_ch != self.out_ch:
            raise ValueError(f"depthwise unit must keep channels, got {self.in_ch}->{self.out_ch}")
        if self.kind == "maxpool" and (self.bias or self.norm or self.act):
            raise ValueError("maxpool carries no parameters or activation")

    def out_side(self, side: int) -> int:
        if self.kind == "deconv":
            out = (side - 1) * self.stride - 2 * self.padding + self.kernel
        else:
            out = (side + 2 * self.padding - self.kernel) // self.stride + 1
        if out <= 0:
            raise ValueError(f"unit {self} collapses side {side} to {out}")
        return out

    def param_count(self) -> int:
        if self.kind == "maxpool":
            return 0
        if self.kind == "dwconv":
            n = self.out_ch * self.kernel * self.kernel
        else:
            n = self.in_ch * self.out_ch * self.kernel * self.kernel
        if self.bias:
            n += self.out_ch
        if self.norm:
            n += 2 * self.out_ch
        return n

    def flop_count(self, side: int) -> int:
        # multiply-accumulates of the linear map only; norm/activation excluded.
        # deconv counted per output element, mirroring conv (tool convention).
        out = self.out_side(side)
        if self.kind == "maxpool":
            return 0
        if self.kind == "dwconv":
            per = self.out_ch * self.kernel * self.kernel
        else:
            per = self.in_ch * self.out_ch * self.kernel * self.kernel
        return out * out * per


@dataclass(frozen=True)
class BlockDef:
    """A residual group: a unit chain, optional projection shortcut, optional post-activation."""
    layers: tuple[ConvDef, ...]
    residual: bool = False
    downsample: ConvDef | None = None
    post_act: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.post_act not in _ACTS:
            raise ValueError(f"unknown post activation {self.post_act!r}")
        if self.downsample is not None and not self.residual:
            raise ValueError("downsample shortcut requires a residual block")


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    num_landmarks: int
    input_channels: int
    encoder: tuple = ()
    decoder: tuple[ConvDef, ...] = ()
    head: ConvDef | None = None

    def __post_init__(self):
        object.__setattr__(self, "encoder", tuple(self.encoder))
        object.__setattr__(self, "decoder", tuple(self.decoder))
        if self.num_landmarks < 1:
            raise ValueError(f"num_landmarks must be >= 1, got {self.num_landmarks}")
        if len(self.decoder) != 3:
            raise ValueError(f"spec needs exactly 3 decoder taps, got {len(self.decoder)}")
        if self.head is None:
            raise ValueError("spec needs a head unit")
        if self.head.out_ch != self.num_landmarks:
            raise ValueError(
                f"head emits {self.head.out_ch} planes but spec declares {self.num_landmarks} landmarks")
        self.walk_geometry(64)  # any stride-32-compatible side; validates chaining

    # -- traversal ---------------------------------------------------------

    def iter_units(self):
        """All ConvDefs in canonical parameter order."""
        for item in self.encoder:
            if isinstance(item, BlockDef):
                yield from item.layers
                if item.downsample is not None:
                    yield item.downsample
            else:
                yield item
        yield from self.decoder
        yield self.head

    def walk_geometry(self, input_side: int):
        """Simulate (channels, side) through the net; returns decoder tap geometry."""
        ch, side = self.input_channels, input_side

        def chain(units, ch, side):
            for u in units:
                if u.kind != "maxpool" and u.in_ch != ch:
                    raise ValueError(f"unit {u} expects {u.in_ch} channels, gets {ch}")
                side = u.out_side(side)
                ch = ch if u.kind == "maxpool" else u.out_ch
            return ch, side

        for item in self.encoder:
            if isinstance(item, BlockDef):
                ch_in, side_in = ch, side
                ch, side = chain(item.layers, ch, side)
                if item.downsample is not None:
                    ch_d, side_d = chain([item.downsample], ch_in, side_in)
                    if (ch_d, side_d) != (ch, side):
                        raise ValueError(f"shortcut geometry {(ch_d, side_d)} != branch {(ch, side)}")
                elif item.residual and (ch_in, side_in) != (ch, side):
                    raise ValueError(
                        f"identity residual needs matching geometry, got {(ch_in, side_in)} vs {(ch, side)}")
            else:
                ch, side = chain([item], ch, side)
        taps = []
        for u in self.decoder:
            ch, side = chain([u], ch, side)
            taps.append((ch, side))
        ch, side = chain([self.head], ch, side)
        return taps, (ch, side)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        def unit(u: ConvDef | None):
            return None if u is None else {
                "kind": u.kind, "in_ch": u.in_ch, "out_ch": u.out_ch, "kernel": u.kernel,
                "stride": u.stride, "padding": u.padding, "bias": u.bias,
                "norm": u.norm, "act": u.act,
            }

        def enc(item):
            if isinstance(item, BlockDef):
                return {"block": [unit(u) for u in item.layers], "residual": item.residual,
                        "downsample": unit(item.downsample), "post_act": item.post_act}
            return unit(item)

        return {
            "name": self.name,
            "num_landmarks": self.num_landmarks,
            "input_channels": self.input_channels,
            "encoder": [enc(i) for i in self.encoder],
            "decoder": [unit(u) for u in self.decoder],
            "head": unit(self.head),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        def unit(v):
            return None if v is None else ConvDef(**v)

        def enc(v):
            if "block" in v:
                return BlockDef(layers=tuple(unit(u) for u in v["block"]), residual=v["residual"],
                                downsample=unit(v["downsample"]), post_act=v["post_act"])
            return unit(v)

        return cls(
            name=d["name"], num_landmarks=d["num_landmarks"], input_channels=d["input_channels"],
            encoder=tuple(enc(v) for v in d["encoder"]),
            decoder=tuple(unit(v) for v in d["decoder"]),
            head=unit(d["head"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "NetworkSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ModelStats:
    param_count: int
    flop_count: int


def count_params(spec: NetworkSpec) -> int:
    """Learnable scalars: conv/deconv weights, biases, and norm scale+shift."""
    return sum(u.param_count() for u in spec.iter_units())


def count_flops(spec: NetworkSpec, input_side: int) -> int:
    """Multiply-accumulate count of the linear layers at a given input side."""
    if input_side % 32 != 0:
        raise ValueError(f"input side must be divisible by 32, got {input_side}")
    total = 0
    ch, side = spec.input_channels, input_side

    def chain(units, ch, side, total):
        for u in units:
            total += u.flop_count(side)
            side = u.out_side(side)
            ch = ch if u.kind == "maxpool" else u.out_ch
        return ch, side, total

    for item in spec.encoder:
        if isinstance(item, BlockDef):
            ch_in, side_in = ch, side
            ch, side, total = chain(item.layers, ch, side, total)
            if item.downsample is not None:
                _, _, total = chain([item.downsample], ch_in, side_in, total)
        else:
            ch, side, total = chain([item], ch, side, total)
    for u in spec.decoder:
        ch, side, total = chain([u], ch, side, total)
    _, _, total = chain([spec.head], ch, side, total)
    return total


def model_stats(spec: NetworkSpec, input_side: int) -> ModelStats:
    return ModelStats(param_count=count_params(spec), flop_count=count_flops(spec, input_side))
