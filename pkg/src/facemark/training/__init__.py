"""Training configuration, checkpoints, loops, and canned experiments."""

from .checkpoint import (
    Checkpoint,
    checkpoint_from_network,
    load_checkpoint,
    network_from_checkpoint,
    save_checkpoint,
)
from .config import TrainConfig
from .experiments import distillation_benefit, overfit_toy
from .loop import (
    TrainResult,
    distill,
    evaluate_checkpoint,
    evaluate_network,
    train_student,
    train_teacher,
)

__all__ = [
    "Checkpoint",
    "TrainConfig",
    "TrainResult",
    "checkpoint_from_network",
    "distill",
    "distillation_benefit",
    "evaluate_checkpoint",
    "evaluate_network",
    "load_checkpoint",
    "network_from_checkpoint",
    "overfit_toy",
    "save_checkpoint",
    "train_student",
    "train_teacher",
]
