"""Dataset ingestion, geometric preparation, and synthetic data generation."""

from .converters import (
    FLIP_MAP_29,
    FLIP_MAP_68,
    FLIP_MAP_98,
    NORM_PAIR_29,
    NORM_PAIR_68,
    NORM_PAIR_98,
    convert_annotations,
)
from .manifest import Dataset, DatasetMeta, ManifestRecord, load_manifest, save_manifest
from .synthetic import (
    SYNTH_NORM_PAIR,
    SynthParams,
    generate_synthetic,
    synth_flip_map,
    write_synthetic_dataset,
)
from .transforms import (
    AugmentConfig,
    Sample,
    augment,
    augment_affine,
    check_flip_map,
    crop_affine,
    crop_and_scale,
    warp_image,
)

__all__ = [
    "AugmentConfig",
    "Dataset",
    "DatasetMeta",
    "FLIP_MAP_29",
    "FLIP_MAP_68",
    "FLIP_MAP_98",
    "ManifestRecord",
    "NORM_PAIR_29",
    "NORM_PAIR_68",
    "NORM_PAIR_98",
    "SYNTH_NORM_PAIR",
    "Sample",
    "SynthParams",
    "augment",
    "augment_affine",
    "check_flip_map",
    "convert_annotations",
    "crop_affine",
    "crop_and_scale",
    "generate_synthetic",
    "load_manifest",
    "save_manifest",
    "synth_flip_map",
    "write_synthetic_dataset",
]
