#!/usr/bin/env python3
"""Run the baseline-versus-distilled study on synthetic data and print the verdict.

Trains one shared teacher, then for each seed a plain-loss baseline student and
one distilled student per decoder-scale subset ({3}, {2,3}, {1,2,3}), comparing
median validation NME.  Expect roughly 15-20 minutes on one core at the default
sizes.  All checkpoints, run logs, and a benefit-summary.json land in --out.
"""

import argparse
import json

from facemark.training.experiments import distillation_benefit


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, help="output directory for runs and summary")
    ap.add_argument("--train-count", type=int, default=500)
    ap.add_argument("--val-count", type=int, default=100)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--teacher-epochs", type=int, default=40)
    ap.add_argument("--student-epochs", type=int, default=20)
    ap.add_argument("--lambda", dest="distill_weight", type=float, default=None,
                    help="weight on the distillation terms (default: harness default)")
    args = ap.parse_args()

    kwargs = dict(
        train_count=args.train_count,
        val_count=args.val_count,
        seeds=tuple(args.seeds),
        teacher_epochs=args.teacher_epochs,
        student_epochs=args.student_epochs,
    )
    if args.distill_weight is not None:
        kwargs["distill_weight"] = args.distill_weight

    summary = distillation_benefit(args.out, **kwargs)
    print(json.dumps(summary, indent=1))
    ok = summary["improves_over_baseline"] and summary["max_step_regression"] <= 0.05
    print(f"verdict={'pass' if ok else 'fail'}")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
