"""Command-line interface.

Subcommands:

  train-teacher   fit the heavy network on a manifest
  train-student   fit the compact network with the plain loss (no teacher)
  distill         fit the compact network against a frozen teacher checkpoint
  evaluate        score a checkpoint on a manifest
  synth-gen       render a synthetic dataset (PNG files + manifest)
  stats           print parameter and multiply-accumulate counts
  emit-ced        write the cumulative error curve of an evaluation as CSV

Run ``facemark <subcommand> --help`` for flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import SynthParams, load_manifest, write_synthetic_dataset
from .models import build_student, build_teacher, build_toy, model_stats
from .training import TrainConfig, distill, evaluate_checkpoint, train_student, train_teacher
from .metrics import emit_ced


def _int_tuple(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(v) for v in text.split(","))


def _add_train_flags(p: argparse.ArgumentParser, distilling: bool) -> None:
    p.add_argument("--manifest", required=True, help="training manifest path")
    p.add_argument("--out", required=True, help="output directory for checkpoint and run log")
    p.add_argument("--val-manifest", default=None, help="optional validation manifest")
    p.add_argument("--epochs", type=int, default=80)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=2.0, help="target heatmap width in heatmap pixels")
    p.add_argument("--width", type=float, choices=(1.0, 0.5), default=1.0,
                   help="compact-network decoder width multiplier")
    p.add_argument("--toy", action="store_true", help="use tiny 64x64 networks for desk-scale runs")
    p.add_argument("--no-augment", action="store_true", help="disable rotation/scale/flip augmentation")
    p.add_argument("--precision", choices=("float32", "float64"), default="float32")
    if distilling:
        p.add_argument("--teacher", required=True, help="frozen teacher checkpoint")
        p.add_argument("--lambda", dest="distill_weight", type=float, default=1e-2,
                       help="weight on the distillation terms")
        p.add_argument("--fa-layers", type=_int_tuple, default=(),
                       help="decoder taps for feature alignment, e.g. 1,2,3")
        p.add_argument("--fs-layers", type=_int_tuple, default=(),
                       help="decoder taps for feature similarity, e.g. 1,2,3")


def _config_from(args, distilling: bool) -> TrainConfig:
    kw = dict(
        epochs=args.epochs,
        batch_size=args.batch,
        seed=args.seed,
        sigma=args.sigma,
        width=args.width,
        toy=args.toy,
        augment=not args.no_augment,
        precision=args.precision,
    )
    if distilling:
        kw.update(distill_weight=args.distill_weight,
                  fa_layers=args.fa_layers, fs_layers=args.fs_layers)
    else:
        kw.update(distill_weight=0.0)
    return TrainConfig(**kw)


def _run_training(args, role: str) -> int:
    cfg = _config_from(args, distilling=role == "distill")
    dataset = load_manifest(args.manifest)
    val = load_manifest(args.val_manifest) if args.val_manifest else None
    if role == "teacher":
        res = train_teacher(dataset, cfg, args.out, val_dataset=val)
    elif role == "student":
        res = train_student(dataset, cfg, args.out, val_dataset=val)
    else:
        res = distill(dataset, args.teacher, cfg, args.out, val_dataset=val)
    print(f"checkpoint={res.checkpoint_path}")
    print(f"runlog={res.runlog_path}")
    print(f"final_train_loss={res.final_loss:.6g}")
    if res.history[-1]["val_nme"] is not None:
        print(f"final_val_nme={res.history[-1]['val_nme']:.6g}")
    return 0


def _cmd_evaluate(args) -> int:
    dataset = load_manifest(args.manifest)
    report = evaluate_checkpoint(args.ckpt, dataset)
    print(f"images={report.num_images}")
    print(f"mean_nme={report.mean_nme:.6f}")
    print(f"failure_rate={report.failure_rate:.6f}")
    print(f"auc={report.auc:.6f}")
    if args.ced_out:
        emit_ced(report.ced, args.ced_out)
        print(f"ced={args.ced_out}")
    if args.report_out:
        payload = {
            "num_images": report.num_images,
            "mean_nme": report.mean_nme,
            "failure_rate": report.failure_rate,
            "auc": report.auc,
        }
        with open(args.report_out, "w") as fh:
            json.dump(payload, fh, indent=1)
        print(f"report={args.report_out}")
    return 0


def _cmd_synth_gen(args) -> int:
    params = SynthParams(seed=args.seed, num_landmarks=args.landmarks, side=args.side)
    manifest = write_synthetic_dataset(params, args.count, args.out)
    print(f"manifest={manifest}")
    print(f"count={args.count}")
    print(f"landmarks={args.landmarks}")
    return 0


def _cmd_stats(args) -> int:
    if args.arch == "student":
        spec = build_toy(args.landmarks, "student") if args.toy else build_student(args.landmarks, args.width)
    else:
        spec = build_toy(args.landmarks, "teacher") if args.toy else build_teacher(args.landmarks)
    side = args.side if args.side is not None else (64 if args.toy else 256)
    stats = model_stats(spec, side)
    print(f"name={spec.name}")
    print(f"landmarks={args.landmarks}")
    print(f"input_side={side}")
    print(f"params={stats.param_count}")
    print(f"flops={stats.flop_count}")
    return 0


def _cmd_emit_ced(args) -> int:
    dataset = load_manifest(args.manifest)
    report = evaluate_checkpoint(args.ckpt, dataset)
    emit_ced(report.ced, args.out)
    print(f"ced={args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="facemark",
                                     description="Heatmap landmark detection with distillation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-teacher", help="train the heavy network")
    _add_train_flags(p, distilling=False)
    p.set_defaults(func=lambda a: _run_training(a, "teacher"))

    p = sub.add_parser("train-student", help="train the compact network, plain loss")
    _add_train_flags(p, distilling=False)
    p.set_defaults(func=lambda a: _run_training(a, "student"))

    p = sub.add_parser("distill", help="train the compact network against a frozen teacher")
    _add_train_flags(p, distilling=True)
    p.set_defaults(func=lambda a: _run_training(a, "distill"))

    p = sub.add_parser("evaluate", help="score a checkpoint on a manifest")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--ced-out", default=None, help="also write the CED curve CSV here")
    p.add_argument("--report-out", default=None, help="also write a JSON report here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("synth-gen", help="render a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--landmarks", type=int, default=16)
    p.add_argument("--side", type=int, default=128, help="rendered image side in pixels")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth_gen)

    p = sub.add_parser("stats", help="print parameter and multiply-accumulate counts")
    p.add_argument("--arch", choices=("student", "teacher"), default="student")
    p.add_argument("--width", type=float, choices=(1.0, 0.5), default=1.0)
    p.add_argument("--landmarks", type=int, default=98)
    p.add_argument("--side", type=int, default=None, help="input side (default 256, toy 64)")
    p.add_argument("--toy", action="store_true")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("emit-ced", help="write the CED curve of an evaluation as CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_emit_ced)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
