"""Geometric sample preparation: bbox crops and train-time augmentation.

Both operations build a single 3x3 affine, apply it exactly to landmarks,
and resample the image once with bilinear interpolation (zero fill outside
the source).  Conventions:

  * cropping maps the bbox center to the crop center ``side / 2`` with scale
    ``side / max(w, h)`` (box convention),
  * rotation and scaling pivot on the pixel-center crop midpoint
    ``(side - 1) / 2``,
  * horizontal flip sends column x to ``(side - 1) - x`` and permutes
    landmark indices so each index keeps its semantic meaning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..heatmaps import LandmarkSet


@dataclass
class Sample:
    """One annotated face: image array (3, H, W) in [0, 1], landmarks in image
    coordinates, bbox as (x, y, width, height)."""
    image: np.ndarray
    landmarks: LandmarkSet
    bbox: tuple[float, float, float, float]

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.float64)
        if img.ndim != 3 or img.shape[0] != 3:
            raise ValueError(f"image must be (3, H, W), got {img.shape}")
        self.image = img
        if not isinstance(self.landmarks, LandmarkSet):
            self.landmarks = LandmarkSet(points=np.asarray(self.landmarks, dtype=np.float64))
        self.bbox = tuple(float(v) for v in self.bbox)
        if len(self.bbox) != 4:
            raise ValueError(f"bbox must be (x, y, w, h), got {self.bbox}")


@dataclass(frozen=True)
class AugmentConfig:
    rotation_degrees: float = 30.0
    scale_range: tuple[float, float] = (0.75, 1.25)
    hflip_prob: float = 0.5
    flip_map: tuple[int, ...] | None = None

    def __post_init__(self):
        lo, hi = self.scale_range
        if not (0 < lo <= hi):
            raise ValueError(f"scale_range must be positive and ordered, got {self.scale_range}")
        if self.rotation_degrees < 0:
            raise ValueError(f"rotation_degrees must be >= 0, got {self.rotation_degrees}")
        if not 0 <= self.hflip_prob <= 1:
            raise ValueError(f"hflip_prob must be in [0, 1], got {self.hflip_prob}")
        if self.flip_map is not None:
            fm = tuple(int(i) for i in self.flip_map)
            object.__setattr__(self, "flip_map", fm)
            check_flip_map(fm)
        elif self.hflip_prob > 0:
            raise ValueError("hflip_prob > 0 requires a flip_map")


def check_flip_map(flip_map) -> tuple[int, ...]:
    fm = tuple(int(i) for i in flip_map)
    n = len(fm)
    if sorted(fm) != list(range(n)):
        raise ValueError(f"flip_map is not a permutation of 0..{n - 1}")
    for i, j in enumerate(fm):
        if fm[j] != i:
            raise ValueError(f"flip_map is not an involution: {i} -> {j} -> {fm[j]}")
    return fm


def _apply_to_points(affine: np.ndarray, pts: np.ndarray) -> np.ndarray:
    homo = np.concatenate([pts, np.ones((pts.shape[0], 1))], axis=1)
    return (homo @ affine.T)[:, :2]


def warp_image(image: np.ndarray, affine: np.ndarray, out_side: int) -> np.ndarray:
    """Resample `image` (C, H, W) under the source->dest `affine` onto an
    out_side x out_side grid.  Bilinear; zero outside the source extent."""
    inv = np.linalg.inv(affine)
    ys, xs = np.meshgrid(np.arange(out_side, dtype=np.float64),
                         np.arange(out_side, dtype=np.float64), indexing="ij")
    src_x = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    src_y = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    h, w = image.shape[1], image.shape[2]
    x0 = np.floor(src_x)
    y0 = np.floor(src_y)
    fx = src_x - x0
    fy = src_y - y0
    out = np.zeros((image.shape[0], out_side, out_side), dtype=np.float64)
    for dy in (0, 1):
        for dx in (0, 1):
            xi = x0 + dx
            yi = y0 + dy
            valid = (xi >= 0) & (xi <= w - 1) & (yi >= 0) & (yi <= h - 1)
            xc = np.clip(xi, 0, w - 1).astype(np.intp)
            yc = np.clip(yi, 0, h - 1).astype(np.intp)
            weight = (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy) * valid
            out += image[:, yc, xc] * weight
    return out


def crop_affine(bbox: tuple[float, float, float, float], side: int) -> np.ndarray:
    x, y, w, h = bbox
    m = max(w, h)
    if m <= 0:
        raise ValueError(f"bbox {bbox} has no area")
    f = side / m
    cx, cy = x + w / 2.0, y + h / 2.0
    return np.array([
        [f, 0.0, side / 2.0 - f * cx],
        [0.0, f, side / 2.0 - f * cy],
        [0.0, 0.0, 1.0],
    ])


def crop_and_scale(sample: Sample, side: int = 256) -> Sample:
    """Map the square region spanned by the bbox (expanded about its center to
    max(w, h)) onto a side x side crop; landmarks follow the same affine."""
    affine = crop_affine(sample.bbox, side)
    image = warp_image(sample.image, affine, side)
    pts = _apply_to_points(affine, sample.landmarks.points)
    return Sample(image=image, landmarks=LandmarkSet(pts), bbox=(0.0, 0.0, float(side), float(side)))


def augment_affine(side: int, theta_deg: float, scale: float, flip: bool) -> np.ndarray:
    c = (side - 1) / 2.0
    t = np.deg2rad(theta_deg)
    cos, sin = np.cos(t) * scale, np.sin(t) * scale
    affine = np.array([
        [cos, -sin, c - cos * c + sin * c],
        [sin, cos, c - sin * c - cos * c],
        [0.0, 0.0, 1.0],
    ])
    if flip:
        mirror = np.array([
            [-1.0, 0.0, side - 1.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ])
        affine = mirror @ affine
    return affine


def augment(sample: Sample, cfg: AugmentConfig, rng: np.random.Generator) -> Sample:
    """Random rotation, scale, and horizontal flip as one composed affine about
    the crop center.  Draw order is fixed (rotation, scale, flip) so a seeded
    run is reproducible.  Landmarks may leave the crop; that is allowed."""
    side = sample.image.shape[1]
    if sample.image.shape[2] != side:
        raise ValueError(f"augment expects a square crop, got {sample.image.shape}")
    theta = rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees)
    scale = rng.uniform(cfg.scale_range[0], cfg.scale_range[1])
    # the flip draw is always consumed so the stream layout is config-independent
    flip = rng.random() < cfg.hflip_prob
    affine = augment_affine(side, theta, scale, flip)
    image = warp_image(sample.image, affine, side)
    pts = _apply_to_points(affine, sample.landmarks.points)
    if flip:
        pts = pts[list(cfg.flip_map)]
    return Sample(image=image, landmarks=LandmarkSet(pts), bbox=sample.bbox)
