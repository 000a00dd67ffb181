#!/usr/bin/env python3
"""Sanity-check trainability: memorize a few synthetic faces with the toy net.

The run passes when the training loss falls below 1% of its initial value
within the step budget.  Takes a couple of minutes on one core.
"""

import argparse
import json

from facemark.training.experiments import overfit_toy


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, help="output directory for the run and summary")
    ap.add_argument("--samples", type=int, default=10)
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--landmarks", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    summary = overfit_toy(args.out, num_samples=args.samples, steps=args.steps,
                          num_landmarks=args.landmarks, seed=args.seed)
    print(json.dumps(summary, indent=1))
    print(f"verdict={'pass' if summary['passed'] else 'fail'}")
    return 0 if summary["passed"] else 1


if __name__ == "__main__":
    raise SystemExit(main())
