"""Trainer tests: config schedules, checkpoint byte format, run artifacts,
the no-distillation equivalence, and teacher freezing."""

import hashlib
import json

import numpy as np
import pytest

from facemark.data import SynthParams, load_manifest, write_synthetic_dataset
from facemark.models import ConvDef, Network, NetworkSpec, build_toy
from facemark.training import (
    TrainConfig,
    checkpoint_from_network,
    distill,
    evaluate_checkpoint,
    evaluate_network,
    load_checkpoint,
    network_from_checkpoint,
    save_checkpoint,
    train_student,
    train_teacher,
)

# ---------------------------------------------------------------- config


def test_config_defaults_and_derived_sides():
    cfg = TrainConfig()
    assert (cfg.epochs, cfg.batch_size, cfg.base_lr) == (80, 8, 1e-3)
    assert cfg.lr_drops == ((30, 1e-4), (50, 1e-5))
    assert cfg.distill_weight == 1e-2
    assert cfg.sigma == 2.0
    assert (cfg.input_side, cfg.heatmap_side) == (256, 64)
    toy = TrainConfig(toy=True)
    assert (toy.input_side, toy.heatmap_side) == (64, 16)


def test_lr_schedule_steps_at_drop_epochs():
    cfg = TrainConfig(epochs=10, base_lr=1.0, lr_drops=((4, 0.1), (8, 0.01)))
    lrs = [cfg.lr_at(e) for e in range(10)]
    assert lrs == [1.0] * 4 + [0.1] * 4 + [0.01] * 2


def test_config_filters_drops_beyond_the_run():
    cfg = TrainConfig(epochs=5, lr_drops=((3, 1e-4), (50, 1e-5)))
    assert cfg.lr_drops == ((3, 1e-4),)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(lr_drops=((5, 1e-4), (3, 1e-5)))  # not increasing
    with pytest.raises(ValueError):
        TrainConfig(precision="float16")
    with pytest.raises(ValueError):
        TrainConfig(width=0.75)
    with pytest.raises(ValueError):
        TrainConfig(fa_layers=(0,))
    cfg = TrainConfig(fa_layers=(3, 1, 1), fs_layers=(2,))
    assert cfg.fa_layers == (1, 3)


def test_config_dict_round_trip():
    cfg = TrainConfig(epochs=7, fa_layers=(2, 3), fs_layers=(3,), toy=True,
                      precision="float64", lr_drops=((4, 1e-4),))
    again = TrainConfig.from_dict(cfg.to_dict())
    assert again == cfg


# ---------------------------------------------------------------- checkpoints


def _toy_net(seed=0, role="student"):
    return Network(build_toy(8, role), rng=np.random.default_rng(seed))


def test_checkpoint_round_trip_is_byte_identical(tmp_path):
    net = _toy_net()
    meta = {"role": "student", "note": "round-trip"}
    p1 = save_checkpoint(checkpoint_from_network(net, meta), tmp_path / "a.ckpt")
    ckpt = load_checkpoint(p1)
    assert ckpt.meta == meta
    p2 = save_checkpoint(ckpt, tmp_path / "b.ckpt")
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_restores_forward_behavior_exactly(tmp_path):
    net = _toy_net(seed=3)
    x = np.random.default_rng(0).random((3, 64, 64))
    want = net.forward(x, mode="eval").heatmaps.data
    path = save_checkpoint(checkpoint_from_network(net, {"role": "student"}), tmp_path / "n.ckpt")
    again = network_from_checkpoint(load_checkpoint(path))
    got = again.forward(x, mode="eval").heatmaps.data
    np.testing.assert_array_equal(got, want)


def test_checkpoint_rejects_corruption(tmp_path):
    net = _toy_net()
    path = save_checkpoint(checkpoint_from_network(net, {"role": "student"}), tmp_path / "c.ckpt")
    blob = path.read_bytes()

    bad_magic = tmp_path / "bad_magic.ckpt"
    bad_magic.write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ValueError):
        load_checkpoint(bad_magic)

    truncated = tmp_path / "short.ckpt"
    truncated.write_bytes(blob[:-16])
    with pytest.raises(ValueError):
        load_checkpoint(truncated)

    padded = tmp_path / "padded.ckpt"
    padded.write_bytes(blob + b"\x00\x00")
    with pytest.raises(ValueError):
        load_checkpoint(padded)


def test_checkpoint_param_count_guard():
    net = _toy_net()
    ckpt = checkpoint_from_network(net, {"role": "student"})
    from facemark.training import Checkpoint

    with pytest.raises(ValueError):
        Checkpoint(spec=ckpt.spec, params=ckpt.params[:-1], buffers=ckpt.buffers,
                   meta=ckpt.meta)


# ---------------------------------------------------------------- runs


@pytest.fixture(scope="module")
def tiny_ds(tmp_path_factory):
    root = tmp_path_factory.mktemp("tinyds")
    manifest = write_synthetic_dataset(SynthParams(seed=21, num_landmarks=8), 8, root)
    return load_manifest(manifest)


def _fast_cfg(**kw):
    base = dict(epochs=2, batch_size=4, base_lr=1e-3, lr_drops=(),
                distill_weight=0.0, seed=0, toy=True, augment=False)
    base.update(kw)
    return TrainConfig(**base)


def test_train_student_artifacts(tiny_ds, tmp_path):
    res = train_student(tiny_ds, _fast_cfg(), tmp_path / "run", val_dataset=tiny_ds)
    assert res.checkpoint_path.exists()
    assert res.runlog_path.exists()
    lines = res.runlog_path.read_text().splitlines()
    assert len(lines) == 2
    for epoch, line in enumerate(lines):
        rec = json.loads(line)
        assert rec["epoch"] == epoch
        assert set(rec) == {"epoch", "lr", "train_loss", "components", "val_nme"}
        assert rec["lr"] == 1e-3
        assert rec["val_nme"] is not None
        assert set(rec["components"]) == {"mse"}
    assert [json.loads(l)["epoch"] for l in lines] == [0, 1]
    ckpt = load_checkpoint(res.checkpoint_path)
    assert ckpt.meta["role"] == "student"
    assert ckpt.meta["epochs_completed"] == 2
    assert ckpt.meta["num_landmarks"] == 8
    assert TrainConfig.from_dict(ckpt.meta["config"]) == _fast_cfg()


def test_best_validation_checkpoint_saved_alongside_final(tiny_ds, tmp_path):
    res = train_student(tiny_ds, _fast_cfg(epochs=4, base_lr=1e-2), tmp_path / "run",
                        val_dataset=tiny_ds)
    assert res.best_checkpoint_path is not None
    assert res.best_checkpoint_path.name == "student.best.ckpt"
    best = load_checkpoint(res.best_checkpoint_path)
    val_curve = [json.loads(l)["val_nme"] for l in res.runlog_path.read_text().splitlines()]
    assert best.meta["best_val_nme"] == min(val_curve)
    assert best.meta["epochs_completed"] == val_curve.index(min(val_curve)) + 1


def test_no_best_checkpoint_without_validation(tiny_ds, tmp_path):
    res = train_student(tiny_ds, _fast_cfg(), tmp_path / "run")
    assert res.best_checkpoint_path is None
    assert not (tmp_path / "run" / "student.best.ckpt").exists()


def test_training_reduces_loss_on_small_set(tiny_ds, tmp_path):
    cfg = _fast_cfg(epochs=8, batch_size=8, base_lr=1e-2)
    res = train_student(tiny_ds, cfg, tmp_path / "fit")
    first = res.history[0]["train_loss"]
    last = res.history[-1]["train_loss"]
    assert last < 0.5 * first


def test_same_seed_reproduces_checkpoint_bytes(tiny_ds, tmp_path):
    r1 = train_student(tiny_ds, _fast_cfg(), tmp_path / "a")
    r2 = train_student(tiny_ds, _fast_cfg(), tmp_path / "b")
    assert r1.checkpoint_path.read_bytes() == r2.checkpoint_path.read_bytes()
    r3 = train_student(tiny_ds, _fast_cfg(seed=1), tmp_path / "c")
    assert r3.checkpoint_path.read_bytes() != r1.checkpoint_path.read_bytes()


def test_distill_lambda_zero_matches_plain_training_bitwise(tiny_ds, tmp_path):
    teacher_res = train_teacher(tiny_ds, _fast_cfg(epochs=1), tmp_path / "teacher")
    plain = train_student(tiny_ds, _fast_cfg(), tmp_path / "plain")
    via_distill = distill(tiny_ds, teacher_res.checkpoint_path,
                          _fast_cfg(distill_weight=0.0, fa_layers=(3,), fs_layers=(3,)),
                          tmp_path / "lam0")
    a = load_checkpoint(plain.checkpoint_path)
    b = load_checkpoint(via_distill.checkpoint_path)
    for pa, pb in zip(a.params, b.params):
        np.testing.assert_array_equal(pa, pb)
    for ba, bb in zip(a.buffers, b.buffers):
        np.testing.assert_array_equal(ba, bb)


def test_distill_active_logs_all_enabled_components(tiny_ds, tmp_path):
    # float64 so the logged identity train_loss == mse + w*sum(terms) is sharp
    teacher_res = train_teacher(tiny_ds, _fast_cfg(epochs=1, precision="float64"),
                                tmp_path / "teacher")
    res = distill(tiny_ds, teacher_res.checkpoint_path,
                  _fast_cfg(distill_weight=1e-3, fa_layers=(2, 3), fs_layers=(3,),
                            precision="float64"),
                  tmp_path / "kd")
    rec = json.loads(res.runlog_path.read_text().splitlines()[0])
    assert set(rec["components"]) == {"mse", "fa_2", "fa_3", "fs_3"}
    total = rec["components"]["mse"] + 1e-3 * (
        rec["components"]["fa_2"] + rec["components"]["fa_3"] + rec["components"]["fs_3"])
    assert rec["train_loss"] == pytest.approx(total, rel=1e-12)


def test_teacher_checkpoint_bytes_survive_distillation(tiny_ds, tmp_path):
    teacher_res = train_teacher(tiny_ds, _fast_cfg(epochs=1), tmp_path / "teacher")
    before = hashlib.sha256(teacher_res.checkpoint_path.read_bytes()).hexdigest()
    distill(tiny_ds, teacher_res.checkpoint_path,
            _fast_cfg(distill_weight=1e-3, fa_layers=(3,), fs_layers=(3,)),
            tmp_path / "kd")
    after = hashlib.sha256(teacher_res.checkpoint_path.read_bytes()).hexdigest()
    assert before == after


def test_distill_rejects_landmark_count_mismatch(tiny_ds, tmp_path):
    other = Network(build_toy(12, "teacher"), rng=np.random.default_rng(0))
    path = save_checkpoint(
        checkpoint_from_network(other, {"role": "teacher", "config": _fast_cfg().to_dict()}),
        tmp_path / "t12.ckpt")
    with pytest.raises(ValueError):
        distill(tiny_ds, path, _fast_cfg(distill_weight=1e-3, fa_layers=(3,)),
                tmp_path / "out")


def _shallow_teacher_spec(num_landmarks=8):
    # stride-16 encoder: decoder taps land on the wrong grid sizes
    enc = (
        ConvDef(kind="conv", in_ch=3, out_ch=8, kernel=3, stride=2, padding=1, norm=True, act="relu"),
        ConvDef(kind="conv", in_ch=8, out_ch=16, kernel=3, stride=2, padding=1, norm=True, act="relu"),
        ConvDef(kind="conv", in_ch=16, out_ch=24, kernel=3, stride=2, padding=1, norm=True, act="relu"),
        ConvDef(kind="conv", in_ch=24, out_ch=32, kernel=3, stride=2, padding=1, norm=True, act="relu"),
    )
    dec = tuple(
        ConvDef(kind="deconv", in_ch=c_in, out_ch=16, kernel=2, stride=2, norm=True, act="relu")
        for c_in in (32, 16, 16))
    head = ConvDef(kind="conv", in_ch=16, out_ch=num_landmarks, kernel=1, bias=True)
    return NetworkSpec(name="shallow-teacher", num_landmarks=num_landmarks,
                       input_channels=3, encoder=enc, decoder=dec, head=head)


def test_distill_rejects_tap_geometry_mismatch(tiny_ds, tmp_path):
    other = Network(_shallow_teacher_spec(), rng=np.random.default_rng(0))
    path = save_checkpoint(
        checkpoint_from_network(other, {"role": "teacher", "config": _fast_cfg().to_dict()}),
        tmp_path / "shallow.ckpt")
    with pytest.raises(ValueError):
        distill(tiny_ds, path, _fast_cfg(distill_weight=1e-3, fa_layers=(3,)),
                tmp_path / "out")


# ---------------------------------------------------------------- evaluation


def test_evaluate_checkpoint_matches_evaluate_network(tiny_ds, tmp_path):
    res = train_student(tiny_ds, _fast_cfg(), tmp_path / "run")
    rep1 = evaluate_checkpoint(res.checkpoint_path, tiny_ds)
    net = network_from_checkpoint(load_checkpoint(res.checkpoint_path))
    rep2 = evaluate_network(net, tiny_ds, 64)
    assert rep1.mean_nme == rep2.mean_nme
    assert rep1.num_images == len(tiny_ds)
    assert 0.0 <= rep1.auc <= 1.0
    assert 0.0 <= rep1.failure_rate <= 1.0
