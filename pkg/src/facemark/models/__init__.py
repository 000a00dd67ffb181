"""Network descriptions, constructors, accounting, and the runtime forward pass."""

from .build import STUDENT_WIDTHS, build_student, build_teacher, build_toy
from .runtime import ForwardResult, Network
from .spec import (
    BlockDef,
    ConvDef,
    ModelStats,
    NetworkSpec,
    count_flops,
    count_params,
    model_stats,
)

__all__ = [
    "BlockDef",
    "ConvDef",
    "ForwardResult",
    "ModelStats",
    "Network",
    "NetworkSpec",
    "STUDENT_WIDTHS",
    "build_student",
    "build_teacher",
    "build_toy",
    "count_flops",
    "count_params",
    "model_stats",
]
