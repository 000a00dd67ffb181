"""Self-contained desk-scale experiments.

Two canned studies back the package's end-to-end claims:

  * overfit_toy: a capacity check: the toy student driven to memorize a
    handful of synthetic faces with the plain heatmap loss.
  * distillation_benefit: the A/B study: baseline students versus students
    distilled from one shared toy teacher on held-out synthetic data,
    repeated over seeds and over the three decoder-scale subsets, comparing
    median validation error.

Both write their datasets and checkpoints under a caller-supplied directory
and return plain dicts ready for JSON serialization.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..data import SynthParams, load_manifest, write_synthetic_dataset
from .config import TrainConfig
from .loop import distill, evaluate_checkpoint, train_student, train_teacher

TRAIN_SEED = 90001
VAL_SEED = 90002


def _synth_dataset(out_dir: Path, name: str, seed: int, count: int, num_landmarks: int):
    manifest = write_synthetic_dataset(
        SynthParams(seed=seed, num_landmarks=num_landmarks), count, out_dir / name)
    return load_manifest(manifest)


def overfit_toy(out_dir, num_samples: int = 10, steps: int = 500,
                num_landmarks: int = 16, seed: int = 0) -> dict:
    """Drive the toy student to memorize `num_samples` faces in `steps`
    full-batch updates; reports the achieved loss reduction."""
    out = Path(out_dir)
    dataset = _synth_dataset(out, "overfit-data", TRAIN_SEED, num_samples, num_landmarks)
    # full batch: one optimizer step per epoch, so epochs == steps
    cfg = TrainConfig(
        epochs=steps,
        batch_size=num_samples,
        base_lr=1e-2,
        lr_drops=((int(steps * 0.6), 2e-3), (int(steps * 0.88), 5e-4)),
        distill_weight=0.0,
        seed=seed,
        toy=True,
        augment=False,
    )
    result = train_student(dataset, cfg, out / "overfit-run", name="overfit")
    initial = result.history[0]["train_loss"]
    final = min(rec["train_loss"] for rec in result.history)
    summary = {
        "num_samples": num_samples,
        "steps": steps,
        "initial_loss": initial,
        "final_loss": result.history[-1]["train_loss"],
        "best_loss": final,
        "reduction": final / initial,
        "passed": final < 0.01 * initial,
    }
    with open(out / "overfit-summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    return summary


LAYER_SETS = ((3,), (2, 3), (1, 2, 3))


def distillation_benefit(out_dir, train_count: int = 500, val_count: int = 100,
                         seeds: tuple[int, ...] = (0, 1, 2),
                         teacher_epochs: int = 40, student_epochs: int = 20,
                         distill_weight: float = 2e-3,
                         num_landmarks: int = 16) -> dict:
    """Baseline versus distilled students on held-out synthetic data.

    One teacher is trained once and shared.  For every seed, a baseline
    student trains with the plain loss; for every decoder-scale subset, a
    distilled student trains from the same initialization and data order
    (the loss term is the only difference).  Reports median validation NME
    per arm."""
    out = Path(out_dir)
    train_ds = _synth_dataset(out, "train-data", TRAIN_SEED, train_count, num_landmarks)
    val_ds = _synth_dataset(out, "val-data", VAL_SEED, val_count, num_landmarks)

    def cfg_for(seed: int, layers: tuple[int, ...], epochs: int) -> TrainConfig:
        return TrainConfig(
            epochs=epochs,
            batch_size=8,
            base_lr=3e-3,
            lr_drops=((int(epochs * 0.66), 1e-3), (int(epochs * 0.88), 3e-4)),
            distill_weight=distill_weight if layers else 0.0,
            fa_layers=layers,
            fs_layers=layers,
            seed=seed,
            toy=True,
        )

    def val_nme(res) -> float:
        return evaluate_checkpoint(res.checkpoint_path, val_ds).mean_nme

    teacher_res = train_teacher(train_ds, cfg_for(7, (), teacher_epochs), out / "teacher-run")
    teacher_nme = val_nme(teacher_res)

    baselines = {}
    for seed in seeds:
        res = train_student(train_ds, cfg_for(seed, (), student_epochs), out / f"baseline-s{seed}")
        baselines[seed] = val_nme(res)

    distilled: dict[tuple[int, ...], dict[int, float]] = {}
    for layers in LAYER_SETS:
        distilled[layers] = {}
        for seed in seeds:
            res = distill(train_ds, teacher_res.checkpoint_path,
                          cfg_for(seed, layers, student_epochs),
                          out / f"distill-{''.join(map(str, layers))}-s{seed}")
            distilled[layers][seed] = val_nme(res)

    baseline_median = float(np.median(list(baselines.values())))
    set_medians = {layers: float(np.median(list(v.values()))) for layers, v in distilled.items()}
    # regression along the chain {3} -> {2,3} -> {1,2,3}: each step may not
    # worsen the median by more than a sliver
    chain = [set_medians[layers] for layers in LAYER_SETS]
    step_regressions = [(b - a) / a for a, b in zip(chain, chain[1:])]
    summary = {
        "teacher_val_nme": teacher_nme,
        "baseline_runs": {str(k): v for k, v in baselines.items()},
        "baseline_median": baseline_median,
        "distilled_runs": {
            "+".join(map(str, layers)): {str(s): v for s, v in runs.items()}
            for layers, runs in distilled.items()},
        "distilled_medians": {"+".join(map(str, layers)): m for layers, m in set_medians.items()},
        "full_set_median": set_medians[LAYER_SETS[-1]],
        "best_distilled_median": min(set_medians.values()),
        "improves_over_baseline": set_medians[LAYER_SETS[-1]] <= baseline_median,
        "max_step_regression": max(step_regressions),
    }
    with open(out / "benefit-summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    return summary
