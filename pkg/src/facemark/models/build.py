"""Concrete network constructors.

Three families:
  * build_student  -- lightweight inverted-residual encoder, small decoder.
  * build_teacher  -- deep bottleneck-residual encoder, wide decoder.
  * build_toy      -- miniature stand-ins with the same stride-32 layout,
                      sized so desk-scale training finishes in seconds.

All specs share the contract: total encoder stride 32, three stride-2
transposed-conv decoder stages (the distillation taps), and a 1x1 head with
bias producing one heatmap plane per landmark.
"""

from __future__ import annotations

from .spec import BlockDef, ConvDef, NetworkSpec

STUDENT_WIDTHS = (1.0, 0.5)

# inverted residual schedule: (expansion, out_channels, repeats, first_stride)
_INVERTED_RESIDUAL_TABLE = (
    (1, 16, 1, 1),
    (6, 24, 2, 2),
    (6, 32, 3, 2),
    (6, 64, 4, 2),
    (6, 96, 3, 1),
    (6, 160, 3, 2),
    (6, 320, 1, 1),
)


def _bn_relu6_conv(in_ch, out_ch, kernel, stride=1, padding=0, kind="conv"):
    return ConvDef(kind=kind, in_ch=in_ch, out_ch=out_ch, kernel=kernel,
                   stride=stride, padding=padding, bias=False, norm=True, act="relu6")


def _inverted_residual(in_ch: int, out_ch: int, stride: int, expansion: int) -> BlockDef:
    hidden = in_ch * expansion
    layers = []
    if expansion != 1:
        layers.append(_bn_relu6_conv(in_ch, hidden, kernel=1))
    layers.append(_bn_relu6_conv(hidden, hidden, kernel=3, stride=stride, padding=1, kind="dwconv"))
    # linear projection: norm but no activation
    layers.append(ConvDef(kind="conv", in_ch=hidden, out_ch=out_ch, kernel=1,
                          bias=False, norm=True, act=None))
    residual = stride == 1 and in_ch == out_ch
    return BlockDef(layers=tuple(layers), residual=residual)


def _decoder(in_ch: int, ch: int, kernel: int, padding: int, act: str) -> tuple[ConvDef, ...]:
    stages = []
    for i in range(3):
        stages.append(ConvDef(kind="deconv", in_ch=in_ch if i == 0 else ch, out_ch=ch,
                              kernel=kernel, stride=2, padding=padding,
                              bias=False, norm=True, act=act))
    return tuple(stages)


def _head(in_ch: int, num_landmarks: int) -> ConvDef:
    return ConvDef(kind="conv", in_ch=in_ch, out_ch=num_landmarks, kernel=1, bias=True)


def build_student(num_landmarks: int, width: float = 1.0) -> NetworkSpec:
    """Compact detector: inverted-residual encoder truncated at its 320-channel
    bottleneck, then three deconv stages whose width scales with `width`."""
    if width not in STUDENT_WIDTHS:
        raise ValueError(f"width must be one of {STUDENT_WIDTHS}, got {width}")
    encoder = [_bn_relu6_conv(3, 32, kernel=3, stride=2, padding=1)]
    ch = 32
    for expansion, out_ch, repeats, first_stride in _INVERTED_RESIDUAL_TABLE:
        for i in range(repeats):
            stride = first_stride if i == 0 else 1
            encoder.append(_inverted_residual(ch, out_ch, stride, expansion))
            ch = out_ch
    dec_ch = int(128 * width)
    return NetworkSpec(
        name=f"student-w{width:g}",
        num_landmarks=num_landmarks,
        input_channels=3,
        encoder=tuple(encoder),
        decoder=_decoder(ch, dec_ch, kernel=2, padding=0, act="relu"),
        head=_head(dec_ch, num_landmarks),
    )


def _bottleneck(in_ch: int, mid: int, stride: int) -> BlockDef:
    out_ch = mid * 4
    layers = (
        ConvDef(kind="conv", in_ch=in_ch, out_ch=mid, kernel=1, norm=True, act="relu"),
        ConvDef(kind="conv", in_ch=mid, out_ch=mid, kernel=3, stride=stride, padding=1,
                norm=True, act="relu"),
        ConvDef(kind="conv", in_ch=mid, out_ch=out_ch, kernel=1, norm=True, act=None),
    )
    needs_projection = stride != 1 or in_ch != out_ch
    downsample = None
    if needs_projection:
        downsample = ConvDef(kind="conv", in_ch=in_ch, out_ch=out_ch, kernel=1, stride=stride,
                             norm=True, act=None)
    return BlockDef(layers=layers, residual=True, downsample=downsample, post_act="relu")


def build_teacher(num_landmarks: int) -> NetworkSpec:
    """Heavy detector: 50-layer bottleneck-residual encoder, 256-channel decoder."""
    encoder = [
        ConvDef(kind="conv", in_ch=3, out_ch=64, kernel=7, stride=2, padding=3,
                norm=True, act="relu"),
        ConvDef(kind="maxpool", in_ch=64, out_ch=64, kernel=3, stride=2, padding=1),
    ]
    ch = 64
    for mid, repeats, first_stride in ((64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)):
        for i in range(repeats):
            stride = first_stride if i == 0 else 1
            encoder.append(_bottleneck(ch, mid, stride))
            ch = mid * 4
    return NetworkSpec(
        name="teacher",
        num_landmarks=num_landmarks,
        input_channels=3,
        encoder=tuple(encoder),
        decoder=_decoder(ch, 256, kernel=4, padding=1, act="relu"),
        head=_head(256, num_landmarks),
    )


def _separable_down(in_ch: int, out_ch: int) -> BlockDef:
    layers = (
        _bn_relu6_conv(in_ch, in_ch, kernel=3, stride=2, padding=1, kind="dwconv"),
        _bn_relu6_conv(in_ch, out_ch, kernel=1),
    )
    return BlockDef(layers=layers, residual=False)


def build_toy(num_landmarks: int, role: str) -> NetworkSpec:
    """Miniature pair for fast end-to-end runs.  Same stride-32 contract as the
    full models, so a 64x64 input yields 4/8/16 taps and 16x16 heatmaps."""
    if role == "student":
        encoder = [_bn_relu6_conv(3, 8, kernel=3, stride=2, padding=1)]
        ch = 8
        for out_ch in (16, 24, 32, 48):
            encoder.append(_separable_down(ch, out_ch))
            ch = out_ch
        decoder = _decoder(ch, 32, kernel=2, padding=0, act="relu")
        head_ch = 32
    elif role == "teacher":
        encoder = [ConvDef(kind="conv", in_ch=3, out_ch=16, kernel=3, stride=2, padding=1,
                           norm=True, act="relu")]
        ch = 16
        for out_ch in (32, 48, 64, 96):
            encoder.append(ConvDef(kind="conv", in_ch=ch, out_ch=out_ch, kernel=3, stride=2,
                                   padding=1, norm=True, act="relu"))
            ch = out_ch
        decoder = _decoder(ch, 32, kernel=4, padding=1, act="relu")
        head_ch = 32
    else:
        raise ValueError(f"role must be 'student' or 'teacher', got {role!r}")
    return NetworkSpec(
        name=f"toy-{role}",
        num_landmarks=num_landmarks,
        input_channels=3,
        encoder=tuple(encoder),
        decoder=decoder,
        head=_head(head_ch, num_landmarks),
    )
