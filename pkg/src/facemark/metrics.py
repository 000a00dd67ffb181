"""Evaluation metrics for landmark predictions.

Per-image error is the mean Euclidean point distance normalized by a
reference distance taken between two ground-truth landmarks (for faces,
typically the outer eye corners).  Dataset-level numbers derive from the
collection of per-image errors:

  * mean error,
  * failure rate: fraction of images with error strictly above a threshold,
  * cumulative error distribution (CED): fraction of images at or below each
    threshold on an evenly spaced grid starting at zero,
  * area under the CED curve up to the grid end, normalized by the grid end
    so a perfect detector scores 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def image_nme(pred_points: np.ndarray, gt_points: np.ndarray,
              norm_pair: tuple[int, int]) -> float:
    """Mean per-landmark Euclidean distance over the inter-landmark reference
    distance ``|gt[norm_pair[0]] - gt[norm_pair[1]]|``."""
    pred = np.asarray(pred_points, dtype=np.float64)
    gt = np.asarray(gt_points, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 2:
        raise ValueError(f"point arrays must both be (L, 2), got {pred.shape} and {gt.shape}")
    i, j = norm_pair
    n = pred.shape[0]
    if not (0 <= i < n and 0 <= j < n) or i == j:
        raise ValueError(f"norm_pair {norm_pair} invalid for {n} landmarks")
    ref = float(np.linalg.norm(gt[i] - gt[j]))
    if ref < 1e-9:
        raise ValueError(f"reference landmarks {norm_pair} coincide (distance {ref})")
    return float(np.mean(np.linalg.norm(pred - gt, axis=1)) / ref)


@dataclass(frozen=True)
class CEDCurve:
    thresholds: np.ndarray
    fractions: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=np.float64)
        f = np.asarray(self.fractions, dtype=np.float64)
        if t.shape != f.shape or t.ndim != 1 or t.size < 2:
            raise ValueError(f"curve arrays must be equal 1-D with >= 2 points, got {t.shape}, {f.shape}")
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "fractions", f)


@dataclass(frozen=True)
class EvalReport:
    mean_nme: float
    failure_rate: float
    auc: float
    ced: CEDCurve
    num_images: int


def ced_curve(errors: np.ndarray, max_threshold: float = 0.1, steps: int = 1000) -> CEDCurve:
    errs = np.asarray(errors, dtype=np.float64)
    thresholds = np.linspace(0.0, max_threshold, steps)
    fractions = (errs[None, :] <= thresholds[:, None]).mean(axis=1)
    return CEDCurve(thresholds=thresholds, fractions=fractions)


def auc_from_curve(curve: CEDCurve) -> float:
    span = curve.thresholds[-1] - curve.thresholds[0]
    return float(np.trapezoid(curve.fractions, curve.thresholds) / span)


def dataset_report(errors, failure_threshold: float = 0.1,
                   auc_threshold: float = 0.1, steps: int = 1000) -> EvalReport:
    errs = np.asarray(errors, dtype=np.float64)
    if errs.ndim != 1 or errs.size == 0:
        raise ValueError(f"errors must be a non-empty 1-D array, got shape {errs.shape}")
    if not np.all(np.isfinite(errs)):
        raise ValueError("errors contain non-finite values")
    curve = ced_curve(errs, max_threshold=auc_threshold, steps=steps)
    return EvalReport(
        mean_nme=float(errs.mean()),
        failure_rate=float((errs > failure_threshold).mean()),  # strictly above
        auc=auc_from_curve(curve),
        ced=curve,
        num_images=int(errs.size),
    )


def emit_ced(curve: CEDCurve, path) -> None:
    """Write the curve as ``threshold,fraction`` lines, six decimals, no header."""
    lines = [f"{t:.6f},{f:.6f}" for t, f in zip(curve.thresholds, curve.fractions)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
