"""Dataset manifests: a JSON document listing annotated images.

Schema::

    {
      "meta": {"num_landmarks": L, "norm_pair": [i, j], "flip_map": [...] | null},
      "records": [
        {"image_path": "relative/or/absolute.png",
         "points": [x0, y0, x1, y1, ...],          # exactly 2L floats
         "bbox": [x, y, w, h]},
        ...
      ]
    }

Relative image paths resolve against the manifest's directory.  Loading a
sample clamps its bbox to the image extent (the crop affine never reads
outside the image anyway; clamping keeps the stored geometry honest) and
rejects empty boxes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..heatmaps import LandmarkSet
from .transforms import Sample, check_flip_map


@dataclass(frozen=True)
class DatasetMeta:
    num_landmarks: int
    norm_pair: tuple[int, int]
    flip_map: tuple[int, ...] | None

    def __post_init__(self):
        L = self.num_landmarks
        i, j = self.norm_pair
        if not (0 <= i < L and 0 <= j < L) or i == j:
            raise ValueError(f"norm_pair {self.norm_pair} invalid for {L} landmarks")
        if self.flip_map is not None:
            fm = check_flip_map(self.flip_map)
            if len(fm) != L:
                raise ValueError(f"flip_map has {len(fm)} entries for {L} landmarks")
            object.__setattr__(self, "flip_map", fm)


@dataclass(frozen=True)
class ManifestRecord:
    image_path: str
    points: np.ndarray  # (L, 2)
    bbox: tuple[float, float, float, float]


class Dataset:
    """Loaded manifest: metadata plus lazily-read image records."""

    def __init__(self, meta: DatasetMeta, records: list[ManifestRecord], root: Path):
        self.meta = meta
        self.records = records
        self.root = Path(root)

    def __len__(self) -> int:
        return len(self.records)

    def load_sample(self, index: int) -> Sample:
        rec = self.records[index]
        path = Path(rec.image_path)
        if not path.is_absolute():
            path = self.root / path
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
        image = arr.transpose(2, 0, 1)
        h, w = image.shape[1], image.shape[2]
        x, y, bw, bh = rec.bbox
        x0, y0 = max(0.0, x), max(0.0, y)
        x1, y1 = min(float(w), x + bw), min(float(h), y + bh)
        if x1 <= x0 or y1 <= y0:
            raise ValueError(f"record {rec.image_path!r}: bbox {rec.bbox} lies outside the {w}x{h} image")
        return Sample(image=image, landmarks=LandmarkSet(rec.points.copy()),
                      bbox=(x0, y0, x1 - x0, y1 - y0))


def load_manifest(path) -> Dataset:
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    try:
        m = doc["meta"]
        meta = DatasetMeta(
            num_landmarks=int(m["num_landmarks"]),
            norm_pair=tuple(int(v) for v in m["norm_pair"]),
            flip_map=None if m.get("flip_map") is None else tuple(int(v) for v in m["flip_map"]),
        )
        raw_records = doc["records"]
    except KeyError as e:
        raise ValueError(f"manifest {path} is missing key {e}") from None
    records = []
    for i, r in enumerate(raw_records):
        pts = np.asarray(r["points"], dtype=np.float64)
        label = r.get("image_path", f"#{i}")
        if pts.ndim != 1 or pts.size != 2 * meta.num_landmarks:
            raise ValueError(
                f"record {label!r} (index {i}) has {pts.size} point values, "
                f"expected {2 * meta.num_landmarks}")
        bbox = tuple(float(v) for v in r["bbox"])
        if len(bbox) != 4:
            raise ValueError(f"record {label!r} (index {i}) has bbox {r['bbox']}, expected 4 values")
        records.append(ManifestRecord(image_path=str(r["image_path"]),
                                      points=pts.reshape(-1, 2), bbox=bbox))
    return Dataset(meta=meta, records=records, root=path.parent)


def save_manifest(meta: DatasetMeta, records: list[ManifestRecord], path) -> None:
    doc = {
        "meta": {
            "num_landmarks": meta.num_landmarks,
            "norm_pair": list(meta.norm_pair),
            "flip_map": None if meta.flip_map is None else list(meta.flip_map),
        },
        "records": [
            {"image_path": r.image_path,
             "points": [float(v) for v in np.asarray(r.points).reshape(-1)],
             "bbox": [float(v) for v in r.bbox]}
            for r in records
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
