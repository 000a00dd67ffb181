"""Training configuration.

Learning-rate schedule: `base_lr` until an epoch listed in `lr_drops` is
reached, then that drop's rate (epochs are 0-indexed, so a drop at 30 takes
effect on the 31st epoch).  Drops at or beyond `epochs` are inert and are
filtered out, which lets short desk-scale runs reuse the default schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..models import STUDENT_WIDTHS

_PRECISIONS = ("float32", "float64")
_DECODER_LAYERS = (1, 2, 3)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 80
    batch_size: int = 8
    base_lr: float = 1e-3
    lr_drops: tuple[tuple[int, float], ...] = ((30, 1e-4), (50, 1e-5))
    distill_weight: float = 1e-2
    fa_layers: tuple[int, ...] = ()
    fs_layers: tuple[int, ...] = ()
    sigma: float = 2.0
    width: float = 1.0
    seed: int = 0
    precision: str = "float32"
    toy: bool = False
    augment: bool = True

    def __post_init__(self):
        if self.epochs <= 0:
            raise ValueError(f"epochs must be > 0, got {self.epochs}")
        if self.batch_size <= 0:
            raise ValueError(f"batch_size must be > 0, got {self.batch_size}")
        if self.base_lr <= 0:
            raise ValueError(f"base_lr must be > 0, got {self.base_lr}")
        if self.precision not in _PRECISIONS:
            raise ValueError(f"precision must be one of {_PRECISIONS}, got {self.precision!r}")
        if self.distill_weight < 0:
            raise ValueError(f"distill_weight must be >= 0, got {self.distill_weight}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.width not in STUDENT_WIDTHS:
            raise ValueError(f"width must be one of {STUDENT_WIDTHS}, got {self.width}")
        for name, layers in (("fa_layers", self.fa_layers), ("fs_layers", self.fs_layers)):
            if any(int(v) not in _DECODER_LAYERS for v in layers):
                raise ValueError(f"{name} must be a subset of {_DECODER_LAYERS}, got {layers}")
        drops = tuple((int(e), float(lr)) for e, lr in self.lr_drops if int(e) < self.epochs)
        for (e0, _), (e1, _) in zip(drops, drops[1:]):
            if e1 <= e0:
                raise ValueError(f"lr_drops epochs must be strictly increasing, got {self.lr_drops}")
        if any(e <= 0 or lr <= 0 for e, lr in drops):
            raise ValueError(f"lr_drops entries must have epoch > 0 and lr > 0, got {self.lr_drops}")
        object.__setattr__(self, "lr_drops", drops)
        object.__setattr__(self, "fa_layers", tuple(sorted(set(int(v) for v in self.fa_layers))))
        object.__setattr__(self, "fs_layers", tuple(sorted(set(int(v) for v in self.fs_layers))))

    @property
    def input_side(self) -> int:
        return 64 if self.toy else 256

    @property
    def heatmap_side(self) -> int:
        return self.input_side // 4

    def lr_at(self, epoch: int) -> float:
        lr = self.base_lr
        for drop_epoch, drop_lr in self.lr_drops:
            if epoch >= drop_epoch:
                lr = drop_lr
        return lr

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "base_lr": self.base_lr,
            "lr_drops": [[e, lr] for e, lr in self.lr_drops],
            "distill_weight": self.distill_weight,
            "fa_layers": list(self.fa_layers),
            "fs_layers": list(self.fs_layers),
            "sigma": self.sigma,
            "width": self.width,
            "seed": self.seed,
            "precision": self.precision,
            "toy": self.toy,
            "augment": self.augment,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["lr_drops"] = tuple((int(e), float(lr)) for e, lr in d.get("lr_drops", ()))
        d["fa_layers"] = tuple(d.get("fa_layers", ()))
        d["fs_layers"] = tuple(d.get("fs_layers", ()))
        return cls(**d)
