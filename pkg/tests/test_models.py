"""Architecture tests: unit accounting against hand arithmetic, the frozen
whole-network budgets, geometry walking, serialization, and the runtime's
forward pass against its declarative description."""

import numpy as np
import pytest

from facemark.models import (
    BlockDef,
    ConvDef,
    Network,
    NetworkSpec,
    STUDENT_WIDTHS,
    build_student,
    build_teacher,
    build_toy,
    count_flops,
    count_params,
    model_stats,
)

# ------------------------------------------------------------ unit accounting


def test_conv_unit_hand_arithmetic():
    stem = ConvDef(kind="conv", in_ch=3, out_ch=32, kernel=3, stride=2, padding=1, norm=True)
    assert stem.param_count() == 3 * 32 * 9 + 2 * 32
    assert stem.out_side(256) == 128
    assert stem.flop_count(256) == 128 * 128 * 3 * 32 * 9

    head = ConvDef(kind="conv", in_ch=128, out_ch=98, kernel=1, bias=True)
    assert head.param_count() == 128 * 98 + 98  # 12642
    assert head.flop_count(64) == 64 * 64 * 128 * 98

    dw = ConvDef(kind="dwconv", in_ch=32, out_ch=32, kernel=3, stride=1, padding=1, norm=True)
    assert dw.param_count() == 32 * 9 + 64
    assert dw.flop_count(64) == 64 * 64 * 32 * 9

    pool = ConvDef(kind="maxpool", in_ch=64, out_ch=64, kernel=3, stride=2, padding=1)
    assert pool.param_count() == 0
    assert pool.flop_count(64) == 0
    assert pool.out_side(64) == 32


def test_deconv_unit_hand_arithmetic():
    up = ConvDef(kind="deconv", in_ch=320, out_ch=128, kernel=2, stride=2, norm=True)
    assert up.out_side(8) == 16
    assert up.param_count() == 320 * 128 * 4 + 2 * 128
    assert up.flop_count(8) == 16 * 16 * 320 * 128 * 4

    pad = ConvDef(kind="deconv", in_ch=256, out_ch=256, kernel=4, stride=2, padding=1)
    assert pad.out_side(8) == 16  # (8-1)*2 - 2 + 4


def test_block_requires_residual_for_downsample():
    unit = ConvDef(kind="conv", in_ch=8, out_ch=8, kernel=3, padding=1)
    proj = ConvDef(kind="conv", in_ch=8, out_ch=8, kernel=1)
    BlockDef(layers=(unit,), residual=True, downsample=proj)
    with pytest.raises(ValueError):
        BlockDef(layers=(unit,), residual=False, downsample=proj)


# ------------------------------------------------------------ frozen budgets


def test_student_parameter_budget_is_frozen():
    assert count_params(build_student(98, width=1.0)) == 2_120_034
    assert count_params(build_student(98, width=0.5)) == 1_933_154


def test_teacher_parameter_budget_is_frozen():
    assert count_params(build_teacher(98)) == 34_020_514


def test_flop_budgets_are_frozen():
    assert count_flops(build_student(98, width=1.0), 256) == 793_829_376
    assert count_flops(build_student(98, width=0.5), 256) == 495_509_504
    assert count_flops(build_teacher(98), 256) == 12_957_253_632


def test_model_stats_bundle():
    st = model_stats(build_student(98), 256)
    assert (st.param_count, st.flop_count) == (2_120_034, 793_829_376)


def test_width_half_narrows_encoder_and_decoder():
    full = build_student(98, width=1.0)
    half = build_student(98, width=0.5)
    assert [u.out_ch for u in full.decoder] == [128, 128, 128]
    assert [u.out_ch for u in half.decoder] == [64, 64, 64]
    assert count_params(half) < count_params(full)
    with pytest.raises(ValueError):
        build_student(98, width=0.7)
    assert STUDENT_WIDTHS == (1.0, 0.5)


def test_landmark_count_scales_only_the_head():
    a, b = build_student(98), build_student(68)
    assert count_params(a) - count_params(b) == (98 - 68) * (128 + 1)


# ------------------------------------------------------------ geometry


def test_geometry_walk_student_taps():
    spec = build_student(98)
    taps, final = spec.walk_geometry(256)
    assert [side for _, side in taps] == [16, 32, 64]
    assert all(ch == 128 for ch, _ in taps)
    assert final == (98, 64)


def test_geometry_walk_teacher_taps():
    spec = build_teacher(98)
    taps, final = spec.walk_geometry(256)
    assert [side for _, side in taps] == [16, 32, 64]
    assert all(ch == 256 for ch, _ in taps)
    assert final == (98, 64)


def test_geometry_walk_toy_specs():
    for role in ("student", "teacher"):
        spec = build_toy(16, role)
        taps, final = spec.walk_geometry(64)
        assert [side for _, side in taps] == [4, 8, 16]
        assert final == (16, 16)


def test_flops_require_stride_compatible_side():
    with pytest.raises(ValueError):
        count_flops(build_student(98), 250)


# ------------------------------------------------------------ serialization


def test_spec_json_round_trip():
    spec = build_student(98, width=0.5)
    again = NetworkSpec.from_json(spec.to_json())
    assert again == spec
    assert count_params(again) == count_params(spec)


def test_spec_rejects_head_landmark_mismatch():
    spec = build_toy(16, "student")
    bad_head = ConvDef(kind="conv", in_ch=spec.head.in_ch, out_ch=12, kernel=1, bias=True)
    with pytest.raises(ValueError):
        NetworkSpec(name=spec.name, num_landmarks=16, input_channels=3,
                    encoder=spec.encoder, decoder=spec.decoder, head=bad_head)


def test_spec_requires_three_decoder_stages():
    spec = build_toy(16, "student")
    with pytest.raises(ValueError):
        NetworkSpec(name=spec.name, num_landmarks=16, input_channels=3,
                    encoder=spec.encoder, decoder=spec.decoder[:2], head=spec.head)


# ------------------------------------------------------------ runtime


def test_runtime_parameter_count_matches_declaration():
    for builder in (lambda: build_toy(16, "student"), lambda: build_toy(16, "teacher")):
        spec = builder()
        net = Network(spec, rng=np.random.default_rng(0))
        scalars = sum(p.data.size for p in net.params)
        assert scalars == count_params(spec)


def test_runtime_forward_shapes_and_taps():
    spec = build_toy(16, "student")
    net = Network(spec, rng=np.random.default_rng(0))
    x = np.random.default_rng(1).random((3, 64, 64))
    res = net.forward(x, mode="eval")
    assert res.heatmaps.data.shape == (16, 16, 16)
    assert sorted(res.decoder_feats) == [1, 2, 3]
    taps, _ = spec.walk_geometry(64)
    for layer, (ch, side) in zip((1, 2, 3), taps):
        assert res.decoder_feats[layer].data.shape == (ch, side, side)


def test_runtime_eval_mode_is_deterministic_and_train_mode_updates_stats():
    spec = build_toy(16, "student")
    net = Network(spec, rng=np.random.default_rng(0))
    x = np.random.default_rng(2).random((3, 64, 64))
    a = net.forward(x, mode="eval").heatmaps.data
    b = net.forward(x, mode="eval").heatmaps.data
    np.testing.assert_array_equal(a, b)
    before = [(s.mean.copy(), s.var.copy()) for s in net.buffers]
    net.forward(x, mode="train")
    assert any(not np.array_equal(m, s.mean) or not np.array_equal(v, s.var)
               for (m, v), s in zip(before, net.buffers))


def test_runtime_rejects_bad_inputs():
    net = Network(build_toy(16, "student"), rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        net.forward(np.zeros((1, 64, 64)), mode="eval")  # channel count
    with pytest.raises(ValueError):
        net.forward(np.zeros((3, 60, 64)), mode="eval")  # non-square
    with pytest.raises(ValueError):
        net.forward(np.zeros((3, 48, 48)), mode="eval")  # stride mismatch
    with pytest.raises(ValueError):
        net.forward(np.zeros((3, 64, 64)), mode="test")  # unknown mode


def test_runtime_init_is_seed_deterministic():
    spec = build_toy(16, "teacher")
    n1 = Network(spec, rng=np.random.default_rng(42))
    n2 = Network(spec, rng=np.random.default_rng(42))
    for p, q in zip(n1.params, n2.params):
        np.testing.assert_array_equal(p.data, q.data)
