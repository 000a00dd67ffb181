"""Convert common landmark annotation layouts to the manifest schema.

Supported source formats:

  * ``300w``: a directory of ``.pts`` files next to same-stem images
    (version/n_points header, one "x y" pair per line between braces).
    No boxes are provided; the bbox is the landmark extent plus a margin.
  * ``wflw``: a single annotation text file; each line holds 2L coords,
    then x_min y_min x_max y_max, then six attribute flags, then the image
    path relative to the image root.
  * ``cofw``: a MATLAB container holding landmark matrix (x columns, then
    y columns, then occlusion flags), a bbox matrix, and the grayscale
    images themselves; images are extracted to PNG files.

The mirror permutations and normalization pairs below are conventional
tables for these annotation schemes, carried as editable data.  They are
validated as involutions at import; verify the semantics against your own
data before relying on them.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .manifest import DatasetMeta, ManifestRecord, save_manifest
from .transforms import check_flip_map


def _pairs_to_map(count: int, pairs) -> tuple[int, ...]:
    fm = list(range(count))
    for i, j in pairs:
        fm[i], fm[j] = j, i
    return check_flip_map(fm)


# 68-point scheme: jaw 0-16, brows 17-26, nose 27-35, eyes 36-47, mouth 48-67
FLIP_MAP_68 = _pairs_to_map(68, [
    (0, 16), (1, 15), (2, 14), (3, 13), (4, 12), (5, 11), (6, 10), (7, 9),
    (17, 26), (18, 25), (19, 24), (20, 23), (21, 22),
    (31, 35), (32, 34),
    (36, 45), (37, 44), (38, 43), (39, 42), (40, 47), (41, 46),
    (48, 54), (49, 53), (50, 52), (55, 59), (56, 58),
    (60, 64), (61, 63), (65, 67),
])
NORM_PAIR_68 = (36, 45)  # outer eye corners

# 98-point scheme: contour 0-32 (reversed), brows 33-50 (9-point loops,
# top outer->inner then bottom inner->outer), nose 51-59, eyes 60-75
# (8-point loops from the outer/inner corner), mouth 76-95, pupils 96-97
FLIP_MAP_98 = _pairs_to_map(98, [
    *[(i, 32 - i) for i in range(16)],
    (33, 46), (34, 45), (35, 44), (36, 43), (37, 42),
    (38, 50), (39, 49), (40, 48), (41, 47),
    (55, 59), (56, 58),
    (60, 72), (61, 71), (62, 70), (63, 69), (64, 68),
    (65, 75), (66, 74), (67, 73),
    (76, 82), (77, 81), (78, 80), (83, 87), (84, 86),
    (88, 92), (89, 91), (93, 95),
    (96, 97),
])
NORM_PAIR_98 = (60, 72)  # outer eye corners

# 29-point scheme: brows 0-3 outer/inner, eyes 8-9 outer corners,
# 10-11 inner corners, nose 20/24 area, mouth 22-23 corners
FLIP_MAP_29 = check_flip_map([
    1, 0, 3, 2, 6, 7, 4, 5, 9, 8, 11, 10, 14, 15, 12, 13, 17, 16,
    19, 18, 20, 21, 23, 22, 24, 26, 25, 27, 28,
])
NORM_PAIR_29 = (8, 9)  # outer eye corners (conventional reading of the scheme)

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def _parse_pts(path: Path) -> np.ndarray:
    lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    n = None
    body = []
    in_body = False
    for ln in lines:
        low = ln.lower()
        if low.startswith("n_points:"):
            n = int(low.split(":")[1])
        elif ln == "{":
            in_body = True
        elif ln == "}":
            in_body = False
        elif in_body:
            parts = ln.split()
            if len(parts) != 2:
                raise ValueError(f"{path}: malformed point line {ln!r}")
            body.append((float(parts[0]), float(parts[1])))
    if n is None or len(body) != n:
        raise ValueError(f"{path}: header declares {n} points, file has {len(body)}")
    return np.array(body, dtype=np.float64)


def _extent_bbox(pts: np.ndarray, margin_frac: float = 0.05):
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    m = margin_frac * max(x1 - x0, y1 - y0)
    return (float(x0 - m), float(y0 - m), float(x1 - x0 + 2 * m), float(y1 - y0 + 2 * m))


def _convert_300w(src: Path) -> tuple[DatasetMeta, list[ManifestRecord]]:
    records = []
    for pts_file in sorted(src.rglob("*.pts")):
        pts = _parse_pts(pts_file)
        if pts.shape[0] != 68:
            raise ValueError(f"{pts_file}: expected 68 points, found {pts.shape[0]}")
        image = None
        for suffix in _IMAGE_SUFFIXES:
            cand = pts_file.with_suffix(suffix)
            if cand.exists():
                image = cand
                break
        if image is None:
            raise FileNotFoundError(f"no image found next to {pts_file}")
        records.append(ManifestRecord(
            image_path=str(image.resolve()), points=pts, bbox=_extent_bbox(pts)))
    meta = DatasetMeta(num_landmarks=68, norm_pair=NORM_PAIR_68, flip_map=FLIP_MAP_68)
    return meta, records


def _convert_wflw(src: Path, image_root: Path | None) -> tuple[DatasetMeta, list[ManifestRecord]]:
    root = image_root if image_root is not None else src.parent
    records = []
    for lineno, ln in enumerate(src.read_text().splitlines(), start=1):
        ln = ln.strip()
        if not ln:
            continue
        parts = ln.split()
        # 196 coords + 4 box values + 6 flags + 1 name
        if len(parts) != 196 + 4 + 6 + 1:
            raise ValueError(f"{src}:{lineno}: expected 207 fields, found {len(parts)}")
        coords = np.array([float(v) for v in parts[:196]], dtype=np.float64).reshape(98, 2)
        x_min, y_min, x_max, y_max = (float(v) for v in parts[196:200])
        name = parts[-1]
        records.append(ManifestRecord(
            image_path=str((root / name).resolve()), points=coords,
            bbox=(x_min, y_min, x_max - x_min, y_max - y_min)))
    meta = DatasetMeta(num_landmarks=98, norm_pair=NORM_PAIR_98, flip_map=FLIP_MAP_98)
    return meta, records


def _find_key(container: dict, stems: tuple[str, ...]) -> str:
    for stem in stems:
        for key in container:
            if key.lower().startswith(stem):
                return key
    raise ValueError(f"no key matching {stems} among {sorted(k for k in container if not k.startswith('__'))}")


def _convert_cofw(src: Path, out_dir: Path) -> tuple[DatasetMeta, list[ManifestRecord]]:
    from scipy.io import loadmat

    mat = loadmat(src)
    phis = mat[_find_key(mat, ("phis",))]
    boxes = mat[_find_key(mat, ("bboxes",))]
    images = mat[_find_key(mat, ("is",))]
    n = phis.shape[0]
    if phis.shape[1] < 58:
        raise ValueError(f"{src}: landmark matrix has {phis.shape[1]} columns, expected >= 58")
    img_dir = out_dir / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(n):
        # columns: 29 x, 29 y, (29 occlusion flags, unused here)
        pts = np.stack([phis[i, :29], phis[i, 29:58]], axis=1).astype(np.float64)
        cell = images[i, 0] if images.ndim == 2 else images[i]
        arr = np.asarray(cell)
        if arr.ndim == 2:
            pil = Image.fromarray(arr.astype(np.uint8), mode="L").convert("RGB")
        else:
            pil = Image.fromarray(arr.astype(np.uint8))
        rel = f"images/{i:06d}.png"
        pil.save(out_dir / rel)
        x, y, w, h = (float(v) for v in boxes[i, :4])
        records.append(ManifestRecord(image_path=rel, points=pts, bbox=(x, y, w, h)))
    meta = DatasetMeta(num_landmarks=29, norm_pair=NORM_PAIR_29, flip_map=FLIP_MAP_29)
    return meta, records


def convert_annotations(fmt: str, src, out_dir, image_root=None) -> Path:
    """Convert `src` annotations in the named format; write `out_dir`/manifest.json
    (plus extracted images where the source embeds them).  Returns the manifest path."""
    src = Path(src)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "300w":
        meta, records = _convert_300w(src)
    elif fmt == "wflw":
        meta, records = _convert_wflw(src, None if image_root is None else Path(image_root))
    elif fmt == "cofw":
        meta, records = _convert_cofw(src, out)
    else:
        raise ValueError(f"unknown annotation format {fmt!r}; expected cofw, 300w, or wflw")
    path = out / "manifest.json"
    save_manifest(meta, records, path)
    return path
