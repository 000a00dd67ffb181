"""Training and evaluation drivers.

One optimization step processes a mini-batch sample by sample: each sample
gets its own tape whose scalar loss is scaled by 1/batch, so gradients
accumulating in the shared parameters reproduce the batch-mean loss exactly.
Teachers run in eval mode with gradients disabled; their parameters are
never touched by the optimizer.

Random streams are carved out of the run seed by purpose (student init,
teacher init, adapter init, epoch shuffling, per-sample augmentation), so
enabling distillation does not perturb the student's initialization or the
data order.  With distillation off, `distill` and `train_student` therefore
produce bit-identical students.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..autodiff import (
    OptimizerState,
    Tape,
    Tensor,
    adam_step,
    backward,
    mse,
    mul_scalar,
    using_dtype,
    zero_grads,
)
from ..data import AugmentConfig, Dataset, Sample, augment, crop_and_scale
from ..distill import (
    AdapterSpec,
    DistillConfig,
    align_features,
    fa_loss,
    fs_loss_features,
    kd_loss,
)
from ..heatmaps import GaussianSpec, LandmarkSet, decode, encode
from ..metrics import EvalReport, dataset_report, image_nme
from ..models import Network, build_student, build_teacher, build_toy
from .checkpoint import (
    Checkpoint,
    checkpoint_from_network,
    load_checkpoint,
    network_from_checkpoint,
    save_checkpoint,
)
from .config import TrainConfig

_STREAM_STUDENT_INIT = 0
_STREAM_TEACHER_INIT = 1
_STREAM_ADAPTER_INIT = 2
_STREAM_SHUFFLE = 3
_STREAM_AUGMENT = 4


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass
class TrainResult:
    checkpoint_path: Path
    runlog_path: Path
    history: list[dict]
    best_checkpoint_path: Path | None = None  # written only when validating

    @property
    def final_loss(self) -> float:
        return self.history[-1]["train_loss"]


def _build(role: str, cfg: TrainConfig, num_landmarks: int) -> Network:
    if role == "student":
        spec = build_toy(num_landmarks, "student") if cfg.toy else build_student(num_landmarks, cfg.width)
        rng = _stream(cfg.seed, _STREAM_STUDENT_INIT)
    elif role == "teacher":
        spec = build_toy(num_landmarks, "teacher") if cfg.toy else build_teacher(num_landmarks)
        rng = _stream(cfg.seed, _STREAM_TEACHER_INIT)
    else:
        raise ValueError(f"unknown role {role!r}")
    return Network(spec, rng)


def _cache_crops(dataset: Dataset, side: int) -> list[Sample]:
    return [crop_and_scale(dataset.load_sample(i), side) for i in range(len(dataset))]


def _augment_config(dataset: Dataset) -> AugmentConfig:
    fm = dataset.meta.flip_map
    return AugmentConfig(hflip_prob=0.5 if fm is not None else 0.0, flip_map=fm)


def _check_tap_geometry(student: Network, teacher: Network, side: int) -> dict[int, tuple[int, int]]:
    """Reject mismatched decoder tap sizes; returns {layer: (student_ch, teacher_ch)}."""
    s_taps, _ = student.spec.walk_geometry(side)
    t_taps, _ = teacher.spec.walk_geometry(side)
    channels = {}
    for layer, ((sc, ss), (tc, ts)) in enumerate(zip(s_taps, t_taps), start=1):
        if ss != ts:
            raise ValueError(
                f"decoder tap {layer} is {ss}x{ss} for the student but {ts}x{ts} for the teacher")
        channels[layer] = (sc, tc)
    return channels


def _epoch_sample(crops: list[Sample], idx: int, epoch: int, cfg: TrainConfig,
                  aug_cfg: AugmentConfig | None) -> Sample:
    sample = crops[idx]
    if cfg.augment and aug_cfg is not None:
        rng = _stream(cfg.seed, _STREAM_AUGMENT, epoch, idx)
        sample = augment(sample, aug_cfg, rng)
    return sample


def _target_maps(points: np.ndarray, cfg: TrainConfig, dtype) -> np.ndarray:
    stack = encode(LandmarkSet(points), GaussianSpec(cfg.sigma),
                   side=cfg.heatmap_side, downscale=4, dtype=dtype)
    return stack.maps


def _run(dataset: Dataset, cfg: TrainConfig, out_dir, role: str,
         teacher: Network | None = None, val_dataset: Dataset | None = None,
         name: str | None = None) -> TrainResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = name or role
    L = dataset.meta.num_landmarks
    dtype = np.float32 if cfg.precision == "float32" else np.float64

    net = _build(role, cfg, L)
    if teacher is not None and teacher.spec.num_landmarks != L:
        raise ValueError(
            f"teacher predicts {teacher.spec.num_landmarks} landmarks "
            f"but the dataset has {L}")
    dcfg = DistillConfig(weight=cfg.distill_weight, fa_layers=cfg.fa_layers, fs_layers=cfg.fs_layers)
    distilling = teacher is not None and dcfg.active
    adapters: dict[int, AdapterSpec] = {}
    if distilling:
        channels = _check_tap_geometry(net, teacher, cfg.input_side)
        adapter_rng = _stream(cfg.seed, _STREAM_ADAPTER_INIT)
        for layer in dcfg.fa_layers:
            sc, tc = channels[layer]
            adapters[layer] = AdapterSpec.create(sc, tc, layer, adapter_rng)
    elif teacher is not None:
        _check_tap_geometry(net, teacher, cfg.input_side)

    opt_params = list(net.params)
    for layer in sorted(adapters):
        opt_params.extend(adapters[layer].params)
    opt = OptimizerState(lr=cfg.base_lr)

    crops = _cache_crops(dataset, cfg.input_side)
    val_crops = _cache_crops(val_dataset, cfg.input_side) if val_dataset is not None else None
    aug_cfg = _augment_config(dataset) if cfg.augment else None
    shuffle_rng = _stream(cfg.seed, _STREAM_SHUFFLE)

    runlog_path = out / f"{name}.runlog.jsonl"
    history: list[dict] = []
    best_val: float | None = None
    best_path: Path | None = None
    with open(runlog_path, "w") as log:
        for epoch in range(cfg.epochs):
            opt.lr = cfg.lr_at(epoch)
            order = shuffle_rng.permutation(len(crops))
            sums: dict[str, float] = {}
            batches = 0
            for start in range(0, len(order), cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                scale = 1.0 / len(batch)
                for idx in batch:
                    sample = _epoch_sample(crops, int(idx), epoch, cfg, aug_cfg)
                    image = Tensor(sample.image)
                    target = Tensor(_target_maps(sample.landmarks.points, cfg, dtype))
                    if distilling:
                        t_out = teacher.forward(image, mode="eval")
                    with Tape() as tape:
                        s_out = net.forward(image, mode="train")
                        mse_term = mse(s_out.heatmaps, target)
                        fa_terms = {}
                        fs_terms = {}
                        if distilling:
                            for r in dcfg.fa_layers:
                                aligned = align_features(s_out.decoder_feats[r], adapters[r])
                                fa_terms[r] = fa_loss(aligned, t_out.decoder_feats[r])
                            for r in dcfg.fs_layers:
                                fs_terms[r] = fs_loss_features(
                                    s_out.decoder_feats[r], t_out.decoder_feats[r])
                        # kd_loss insists the term dicts cover every enabled layer;
                        # a zero-weight run computes no terms, so skip straight to mse.
                        loss = kd_loss(mse_term, fa_terms, fs_terms, dcfg) if distilling else mse_term
                        scaled = mul_scalar(loss, scale)
                    backward(scaled, tape)
                    sums["train_loss"] = sums.get("train_loss", 0.0) + float(loss.data) * scale
                    sums["mse"] = sums.get("mse", 0.0) + float(mse_term.data) * scale
                    for r, t in fa_terms.items():
                        sums[f"fa_{r}"] = sums.get(f"fa_{r}", 0.0) + float(t.data) * scale
                    for r, t in fs_terms.items():
                        sums[f"fs_{r}"] = sums.get(f"fs_{r}", 0.0) + float(t.data) * scale
                adam_step(opt_params, opt)
                zero_grads(opt_params)
                batches += 1
            record = {
                "epoch": epoch,
                "lr": opt.lr,
                "train_loss": sums["train_loss"] / batches,
                "components": {k: v / batches for k, v in sums.items() if k != "train_loss"},
                "val_nme": None,
            }
            if val_crops is not None:
                record["val_nme"] = _nme_over_crops(net, val_crops, val_dataset.meta.norm_pair)
                # keep the best-validation weights too; evaluation reports the
                # final model, this file just preserves the alternative
                if best_val is None or record["val_nme"] < best_val:
                    best_val = record["val_nme"]
                    best_meta = {
                        "role": role,
                        "config": cfg.to_dict(),
                        "num_landmarks": L,
                        "epochs_completed": epoch + 1,
                        "final_train_loss": record["train_loss"],
                        "best_val_nme": best_val,
                    }
                    best_path = save_checkpoint(
                        checkpoint_from_network(net, best_meta), out / f"{name}.best.ckpt")
            history.append(record)
            log.write(json.dumps(record) + "\n")
            log.flush()

    meta = {
        "role": role,
        "config": cfg.to_dict(),
        "num_landmarks": L,
        "epochs_completed": cfg.epochs,
        "final_train_loss": history[-1]["train_loss"],
    }
    ckpt_path = save_checkpoint(checkpoint_from_network(net, meta), out / f"{name}.ckpt")
    return TrainResult(checkpoint_path=ckpt_path, runlog_path=runlog_path, history=history,
                       best_checkpoint_path=best_path)


def train_teacher(dataset: Dataset, cfg: TrainConfig, out_dir,
                  val_dataset: Dataset | None = None, name: str = "teacher") -> TrainResult:
    """Phase one: fit the heavy network with the plain heatmap loss."""
    with using_dtype(cfg.precision):
        return _run(dataset, cfg, out_dir, role="teacher", val_dataset=val_dataset, name=name)


def train_student(dataset: Dataset, cfg: TrainConfig, out_dir,
                  val_dataset: Dataset | None = None, name: str = "student") -> TrainResult:
    """Baseline: fit the compact network with the plain heatmap loss only."""
    with using_dtype(cfg.precision):
        return _run(dataset, cfg, out_dir, role="student", val_dataset=val_dataset, name=name)


def distill(dataset: Dataset, teacher_ckpt, cfg: TrainConfig, out_dir,
            val_dataset: Dataset | None = None, name: str = "distilled") -> TrainResult:
    """Phase two: fit the compact network under the combined loss while the
    loaded teacher stays frozen.  With distillation disabled (weight 0 or no
    layers enabled) the teacher contributes nothing and the run is
    bit-identical to `train_student` at the same seed and precision."""
    with using_dtype(cfg.precision):
        ckpt = teacher_ckpt if isinstance(teacher_ckpt, Checkpoint) else load_checkpoint(teacher_ckpt)
        teacher = network_from_checkpoint(ckpt)
        for p in teacher.params:
            p.requires_grad = False
        return _run(dataset, cfg, out_dir, role="student", teacher=teacher,
                    val_dataset=val_dataset, name=name)


def _nme_over_crops(net: Network, crops: list[Sample], norm_pair: tuple[int, int]) -> float:
    errors = [
        image_nme(_predict_points(net, s), s.landmarks.points, norm_pair) for s in crops]
    return float(np.mean(errors))


def _predict_points(net: Network, sample: Sample) -> np.ndarray:
    out = net.forward(Tensor(sample.image), mode="eval")
    side = sample.image.shape[1]
    return decode(out.heatmaps.data, downscale=side // out.heatmaps.data.shape[1]).points


def evaluate_network(net: Network, dataset: Dataset, side: int) -> EvalReport:
    """Crop every record, run an eval-mode forward, decode, and aggregate."""
    crops = _cache_crops(dataset, side)
    errors = [
        image_nme(_predict_points(net, s), s.landmarks.points, dataset.meta.norm_pair)
        for s in crops]
    return dataset_report(np.asarray(errors))


def evaluate_checkpoint(ckpt_path, dataset: Dataset) -> EvalReport:
    ckpt = load_checkpoint(ckpt_path)
    cfg = TrainConfig.from_dict(ckpt.meta["config"])
    with using_dtype(cfg.precision):
        net = network_from_checkpoint(ckpt)
    return evaluate_network(net, dataset, cfg.input_side)
