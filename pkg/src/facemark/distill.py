"""Feature-distillation losses between teacher and student decoder features.

Two signals per decoder scale r in {1, 2, 3}:

* feature alignment: a trainable 1x1 conv lifts the student feature map to
  the teacher's channel width and the two maps are compared with a mean
  squared error (``align_features`` + ``fa_loss``);
* feature similarity: each map is flattened to (H*W, C) rows, rows are
  L2-normalized, and the pairwise cosine matrix A = U U^T of the student is
  matched to the teacher's with a squared error summed over all (H*W)^2
  entries and divided by (H*W)^2 (``similarity_matrix`` + ``fs_loss``).

The teacher side enters as constants, so gradients flow only through the
student (and the adapters, which are training-time-only attachments).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff.ops import add, conv2d, matmul, mse, mul_scalar, normalize_rows, reshape, transpose2d
from .autodiff.tensor import Tensor, active_tape

_LAYERS = (1, 2, 3)


@dataclass
class AdapterSpec:
    """Trainable 1x1 projection from student channels to teacher channels."""
    weight: Tensor  # (C_teacher, C_student, 1, 1)
    bias: Tensor    # (C_teacher,)
    layer: int

    @classmethod
    def create(cls, student_channels: int, teacher_channels: int, layer: int,
               rng: np.random.Generator) -> "AdapterSpec":
        if layer not in _LAYERS:
            raise ValueError(f"adapter layer must be one of {_LAYERS}, got {layer}")
        std = np.sqrt(2.0 / teacher_channels)
        w = rng.normal(0.0, std, size=(teacher_channels, student_channels, 1, 1))
        return cls(weight=Tensor(w, requires_grad=True),
                   bias=Tensor(np.zeros(teacher_channels), requires_grad=True),
                   layer=layer)

    @property
    def params(self) -> list[Tensor]:
        return [self.weight, self.bias]


def align_features(student_feat: Tensor, adapter: AdapterSpec) -> Tensor:
    """Project a (C, H, W) student feature map to teacher channel width."""
    c_in = adapter.weight.data.shape[1]
    if student_feat.data.ndim != 3 or student_feat.data.shape[0] != c_in:
        raise ValueError(
            f"align_features: adapter expects {c_in} channels, feature has shape {student_feat.data.shape}")
    return conv2d(student_feat, adapter.weight, adapter.bias, stride=1, padding=0)


def fa_loss(aligned: Tensor, teacher_feat: Tensor) -> Tensor:
    """Mean squared difference between aligned student and teacher features."""
    if aligned.data.shape != teacher_feat.data.shape:
        raise ValueError(
            f"fa_loss shape mismatch: aligned {aligned.data.shape} vs teacher {teacher_feat.data.shape}")
    return mse(aligned, teacher_feat)


def similarity_matrix(feat: Tensor) -> Tensor:
    """Pairwise cosine similarity of spatial positions: (C, H, W) -> (H*W, H*W).

    Entry (i, j) is the cosine of the C-dim feature vectors at positions i
    and j; any position whose vector norm falls below 1e-12 contributes 0
    rows/columns (and passes no gradient).
    """
    if feat.data.ndim != 3:
        raise ValueError(f"similarity_matrix needs a (C, H, W) feature map, got {feat.data.shape}")
    c, h, w = feat.data.shape
    rows = transpose2d(reshape(feat, (c, h * w)))
    u = normalize_rows(rows)
    return matmul(u, transpose2d(u))


def fs_loss(student_sim: Tensor, teacher_sim: Tensor) -> Tensor:
    """Squared similarity-matrix mismatch, summed and divided by (H*W)^2."""
    s, t = student_sim.data.shape, teacher_sim.data.shape
    if len(s) != 2 or s[0] != s[1]:
        raise ValueError(f"fs_loss: student similarity must be square, got {s}")
    if s != t:
        raise ValueError(f"fs_loss size mismatch: student {s} vs teacher {t}")
    # sum / (H*W)^2 over a (H*W, H*W) matrix is exactly the elementwise mean
    return mse(student_sim, teacher_sim)


def _rows_and_normals(feat_data: np.ndarray, eps: float):
    m = feat_data.shape[1] * feat_data.shape[2]
    rows = feat_data.reshape(feat_data.shape[0], m).T
    norms = np.sqrt((rows * rows).sum(axis=1))
    safe = norms >= eps
    inv = np.where(safe, 1.0 / np.where(safe, norms, 1.0), 0.0)
    return rows * inv[:, None], inv


def fs_loss_features(student_feat: Tensor, teacher_feat: Tensor,
                     block_rows: int | None = None, eps: float = 1e-12) -> Tensor:
    """Similarity loss computed directly from feature maps, in row blocks.

    Never materializes a full similarity matrix when ``block_rows`` is
    smaller than H*W.  The reduction is structured per row, so every block
    size produces the bit-identical loss value; gradients agree with the
    dense composite route to float tolerance.
    """
    if student_feat.data.ndim != 3 or teacher_feat.data.ndim != 3:
        raise ValueError(
            f"fs_loss_features needs (C, H, W) maps, got {student_feat.data.shape} and {teacher_feat.data.shape}")
    if student_feat.data.shape[1:] != teacher_feat.data.shape[1:]:
        raise ValueError(
            f"fs_loss_features spatial mismatch: {student_feat.data.shape[1:]} vs {teacher_feat.data.shape[1:]}")
    m = student_feat.data.shape[1] * student_feat.data.shape[2]
    block = m if block_rows is None else max(1, int(block_rows))

    u, inv_s = _rows_and_normals(student_feat.data, eps)
    t, _ = _rows_and_normals(teacher_feat.data, eps)

    row_sums = np.empty(m, dtype=u.dtype)
    grad_u = np.empty_like(u) if student_feat.requires_grad else None
    for start in range(0, m, block):
        stop = min(start + block, m)
        d = u[start:stop] @ u.T - t[start:stop] @ t.T
        row_sums[start:stop] = (d * d).sum(axis=1)
        if grad_u is not None:
            grad_u[start:stop] = d @ u
    loss_val = np.asarray(row_sums.sum() / (m * m))

    out = Tensor._wrap(loss_val, student_feat.requires_grad)
    tape = active_tape()
    if tape is not None and student_feat.requires_grad:
        shape = student_feat.data.shape

        def _bw():
            g = float(out.grad)
            gu = (4.0 / (m * m)) * g * grad_u
            # back through row normalization (guarded rows pass nothing)
            dot = (gu * u).sum(axis=1)
            grows = (gu - u * dot[:, None]) * inv_s[:, None]
            student_feat._acc(grows.T.reshape(shape))
        tape.record(out, _bw)
    return out


@dataclass(frozen=True)
class DistillConfig:
    """Distillation knobs: loss weight and per-scale toggles."""
    weight: float = 1e-2
    fa_layers: tuple[int, ...] = ()
    fs_layers: tuple[int, ...] = ()

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError(f"distillation weight must be >= 0, got {self.weight}")
        for name, layers in (("fa_layers", self.fa_layers), ("fs_layers", self.fs_layers)):
            tup = tuple(sorted(set(int(v) for v in layers)))
            if any(v not in _LAYERS for v in tup):
                raise ValueError(f"{name} must be a subset of {_LAYERS}, got {layers}")
            object.__setattr__(self, name, tup)

    @property
    def active(self) -> bool:
        return self.weight > 0 and (bool(self.fa_layers) or bool(self.fs_layers))


def kd_loss(mse_term: Tensor, fa_terms: dict[int, Tensor], fs_terms: dict[int, Tensor],
            cfg: DistillConfig) -> Tensor:
    """Total training loss: mse + weight * sum over scales of (FA_r + FS_r).

    A term must be supplied exactly for the layers toggled on in ``cfg``.
    With weight 0 (or nothing toggled) the returned tensor IS ``mse_term``,
    so the no-distillation path is bit-identical to plain training.
    """
    if set(fa_terms) != set(cfg.fa_layers):
        raise ValueError(f"fa terms {sorted(fa_terms)} do not match enabled layers {cfg.fa_layers}")
    if set(fs_terms) != set(cfg.fs_layers):
        raise ValueError(f"fs terms {sorted(fs_terms)} do not match enabled layers {cfg.fs_layers}")
    if not cfg.active:
        return mse_term
    total = None
    for r in _LAYERS:
        for terms in (fa_terms, fs_terms):
            if r in terms:
                total = terms[r] if total is None else add(total, terms[r])
    return add(mse_term, mul_scalar(total, cfg.weight))
