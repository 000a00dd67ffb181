"""Gaussian heatmap encoding of landmarks and arg-max decoding back to points.

Coordinates are (x, y) with x = column, y = row, pixel centers at integer
positions.  A heatmap plane of side S covers an image of side S * downscale;
image point p maps to the continuous heatmap position p / downscale (no
snapping, no truncation: the Gaussian is evaluated over the full plane).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GaussianSpec:
    """Isotropic Gaussian kernel spread, in heatmap pixels."""
    sigma: float = 2.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass
class LandmarkSet:
    """(L, 2) float landmark coordinates in image space."""
    points: np.ndarray
    visibility: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"landmark points must be (L, 2), got {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("landmark points must be finite")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class HeatmapStack:
    """(L, S, S) planes plus the image-to-heatmap downscale factor."""
    maps: np.ndarray
    downscale: int = 4

    def __post_init__(self):
        m = np.asarray(self.maps)
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise ValueError(f"heatmap stack must be (L, S, S), got {m.shape}")
        if self.downscale < 1:
            raise ValueError(f"downscale must be >= 1, got {self.downscale}")
        self.maps = m

    @property
    def side(self) -> int:
        return self.maps.shape[1]


def encode(landmarks: LandmarkSet | np.ndarray, spec: GaussianSpec = GaussianSpec(),
           side: int = 64, downscale: int = 4, dtype=np.float64) -> HeatmapStack:
    """Render one Gaussian plane per landmark.

    Plane value at integer cell (row, col) is
    exp(-((col - cx)^2 + (row - cy)^2) / (2 * sigma^2)) with (cx, cy) the
    landmark divided by ``downscale`` (kept continuous).  Values lie in
    [0, 1], reaching exactly 1 when the center sits on a grid cell.
    """
    pts = landmarks.points if isinstance(landmarks, LandmarkSet) else np.asarray(landmarks, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"landmarks must be (L, 2), got {pts.shape}")
    if side < 1:
        raise ValueError(f"heatmap side must be >= 1, got {side}")
    centers = pts / float(downscale)
    cols = np.arange(side, dtype=np.float64)
    rows = np.arange(side, dtype=np.float64)
    dx2 = (cols[None, None, :] - centers[:, 0][:, None, None]) ** 2
    dy2 = (rows[None, :, None] - centers[:, 1][:, None, None]) ** 2
    maps = np.exp(-(dx2 + dy2) / (2.0 * spec.sigma ** 2)).astype(dtype, copy=False)
    return HeatmapStack(maps=maps, downscale=downscale)


def decode(stack: HeatmapStack | np.ndarray, downscale: int | None = None,
           refine: bool = False) -> LandmarkSet:
    """Arg-max decode each plane back to an image-space point.

    Ties resolve to the smallest row-major index.  The decoded point is
    (col * downscale, row * downscale).  With ``refine`` the point is first
    nudged a quarter heatmap pixel toward the larger in-plane neighbor on
    each axis (off by default).
    """
    if isinstance(stack, HeatmapStack):
        maps = stack.maps
        ds = stack.downscale if downscale is None else downscale
    else:
        maps = np.asarray(stack)
        if maps.ndim != 3:
            raise ValueError(f"heatmap stack must be (L, S, S), got {maps.shape}")
        ds = 4 if downscale is None else downscale
    n, h, w = maps.shape
    flat_idx = maps.reshape(n, -1).argmax(axis=1)
    rows = (flat_idx // w).astype(np.float64)
    cols = (flat_idx % w).astype(np.float64)
    if refine:
        for i in range(n):
            r, c = int(rows[i]), int(cols[i])
            plane = maps[i]
            if 0 < c < w - 1:
                cols[i] += 0.25 * np.sign(plane[r, c + 1] - plane[r, c - 1])
            if 0 < r < h - 1:
                rows[i] += 0.25 * np.sign(plane[r + 1, c] - plane[r - 1, c])
    pts = np.stack([cols * ds, rows * ds], axis=1)
    return LandmarkSet(points=pts)
