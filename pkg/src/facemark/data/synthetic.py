"""Procedural line-drawing faces with exactly known landmarks.

Each sample is a stroked cartoon face: an elliptical contour, two almond
eyes, a nose line, and a mouth arc, rendered onto a dark canvas and
replicated to three channels.  Landmarks are the control points used to
place the strokes, so every landmark lies on drawn ink and the mapping from
image to landmarks is learnable by construction.

The default template has 16 points; larger counts append mirrored contour
pairs (plus the nose midpoint when the remainder is odd).  Indices 0 and 1
are the outer eye corners and serve as the normalization pair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from ..heatmaps import LandmarkSet
from .transforms import Sample, check_flip_map

_BACKGROUND = 0.06
_INK = 0.80

# template indices: 0/1 outer eye corners, 2/3 inner eye corners, 4 nose
# bridge, 5 nose tip, 6/7 mouth corners, 8 mouth bottom, 9 chin, 10/11
# cheeks, 12/13 temples, 14 forehead, 15 mouth top
_BASE_FLIP = (1, 0, 3, 2, 4, 5, 7, 6, 8, 9, 11, 10, 13, 12, 14, 15)
_BASE_COUNT = 16


@dataclass(frozen=True)
class SynthParams:
    seed: int = 0
    num_landmarks: int = 16
    side: int = 128
    variation: float = 1.0
    stroke_width: int = 2
    noise_level: float = 0.02

    def __post_init__(self):
        if self.num_landmarks < 6:
            raise ValueError(f"synthetic template needs >= 6 landmarks, got {self.num_landmarks}")
        if self.side < 48:
            raise ValueError(f"render side must be >= 48, got {self.side}")
        if self.stroke_width < 1:
            raise ValueError(f"stroke_width must be >= 1, got {self.stroke_width}")
        if not 0 <= self.noise_level < 0.2:
            raise ValueError(f"noise_level must be in [0, 0.2), got {self.noise_level}")
        if self.variation < 0:
            raise ValueError(f"variation must be >= 0, got {self.variation}")


def synth_flip_map(num_landmarks: int) -> tuple[int, ...]:
    """Mirror permutation for the generated template: template pairs, then the
    appended contour pairs; any truncated or center point maps to itself."""
    fm = []
    for i in range(num_landmarks):
        if i < _BASE_COUNT:
            j = _BASE_FLIP[i]
            fm.append(j if j < num_landmarks else i)
        else:
            k = i - _BASE_COUNT
            j = _BASE_COUNT + (k + 1 if k % 2 == 0 else k - 1)
            fm.append(j if j < num_landmarks else i)
    return check_flip_map(fm)


SYNTH_NORM_PAIR = (0, 1)


def _ellipse_point(cx, cy, a, b, t):
    return (cx + a * np.cos(t), cy + b * np.sin(t))


def _face_geometry(params: SynthParams, rng: np.random.Generator):
    """Draw the face's control points.  Returns (landmarks (L,2), stroke list)."""
    side = params.side
    v = params.variation

    def jit(amount):
        return rng.uniform(-amount, amount) * v

    cx = side * (0.5 + jit(0.04))
    cy = side * (0.5 + jit(0.04))
    a = side * (0.32 + jit(0.04))   # face half-width
    b = side * (0.40 + jit(0.04))   # face half-height

    eye_dx = a * (0.45 + jit(0.06))
    eye_y = cy - b * (0.18 + jit(0.05))
    eye_w = a * (0.22 + jit(0.04))
    eye_h = eye_w * (0.45 + jit(0.08))

    nose_top = (cx + a * jit(0.03), cy - b * (0.10 + jit(0.03)))
    nose_tip = (cx + a * jit(0.05), cy + b * (0.12 + jit(0.04)))

    mouth_w = a * (0.50 + jit(0.08))
    mouth_y = cy + b * (0.48 + jit(0.05))
    mouth_h = b * (0.14 + jit(0.04))

    # angles measured on the contour ellipse; y grows downward so pi/2 = chin
    cheek_t = 0.9
    temple_t = 0.7

    pts = [
        (cx - eye_dx - eye_w, eye_y),            # 0 outer corner, left eye
        (cx + eye_dx + eye_w, eye_y),            # 1 outer corner, right eye
        (cx - eye_dx + eye_w, eye_y),            # 2 inner corner, left eye
        (cx + eye_dx - eye_w, eye_y),            # 3 inner corner, right eye
        nose_top,                                 # 4
        nose_tip,                                 # 5
        (cx - mouth_w, mouth_y),                  # 6 mouth corner, left
        (cx + mouth_w, mouth_y),                  # 7 mouth corner, right
        (cx, mouth_y + mouth_h),                  # 8 mouth bottom
        _ellipse_point(cx, cy, a, b, np.pi / 2),  # 9 chin
        _ellipse_point(cx, cy, a, b, np.pi / 2 + cheek_t),   # 10 left cheek
        _ellipse_point(cx, cy, a, b, np.pi / 2 - cheek_t),   # 11 right cheek
        _ellipse_point(cx, cy, a, b, -np.pi / 2 - temple_t),  # 12 left temple
        _ellipse_point(cx, cy, a, b, -np.pi / 2 + temple_t),  # 13 right temple
        _ellipse_point(cx, cy, a, b, -np.pi / 2),  # 14 forehead
        (cx, mouth_y),                            # 15 mouth top (on corner line)
    ]

    extra = params.num_landmarks - _BASE_COUNT
    if extra > 0:
        n_pairs = extra // 2
        # contour pairs between cheek and chin angles, kept clear of both
        deltas = np.linspace(0.18, cheek_t - 0.18, max(n_pairs, 1))
        for k in range(n_pairs):
            d = deltas[k]
            pts.append(_ellipse_point(cx, cy, a, b, np.pi / 2 + d))  # left of chin
            pts.append(_ellipse_point(cx, cy, a, b, np.pi / 2 - d))  # right of chin
        if extra % 2 == 1:
            mid = ((nose_top[0] + nose_tip[0]) / 2, (nose_top[1] + nose_tip[1]) / 2)
            pts.append(mid)  # on the nose stroke, flip-symmetric

    strokes = {
        "face": (cx, cy, a, b),
        "eye_left": (cx - eye_dx, eye_y, eye_w, eye_h),
        "eye_right": (cx + eye_dx, eye_y, eye_w, eye_h),
        "nose": (nose_top, nose_tip),
        "mouth": (cx, mouth_y, mouth_w, mouth_h),
    }
    return np.array(pts[: params.num_landmarks], dtype=np.float64), strokes


def _render(strokes: dict, params: SynthParams) -> np.ndarray:
    side, w = params.side, params.stroke_width
    img = Image.new("L", (side, side), int(round(_BACKGROUND * 255)))
    draw = ImageDraw.Draw(img)
    ink = int(round(_INK * 255))

    def box(cx, cy, a, b):
        return [cx - a, cy - b, cx + a, cy + b]

    cx, cy, a, b = strokes["face"]
    draw.ellipse(box(cx, cy, a, b), outline=ink, width=w)
    for key in ("eye_left", "eye_right"):
        ex, ey, ew, eh = strokes[key]
        draw.ellipse(box(ex, ey, ew, eh), outline=ink, width=w)
    (x0, y0), (x1, y1) = strokes["nose"]
    draw.line([x0, y0, x1, y1], fill=ink, width=w)
    mx, my, mw, mh = strokes["mouth"]
    draw.line([mx - mw, my, mx + mw, my], fill=ink, width=w)
    # lower lip: bottom half of an ellipse through both corners
    draw.arc(box(mx, my, mw, mh), start=0, end=180, fill=ink, width=w)
    return np.asarray(img, dtype=np.float64) / 255.0


def _face_bbox(pts: np.ndarray, strokes: dict, side: int):
    cx, cy, a, b = strokes["face"]
    margin = 0.06 * max(a, b)
    x0 = max(0.0, cx - a - margin)
    y0 = max(0.0, cy - b - margin)
    x1 = min(float(side), cx + a + margin)
    y1 = min(float(side), cy + b + margin)
    return (x0, y0, x1 - x0, y1 - y0)


def _generate_one(params: SynthParams, index: int) -> Sample:
    rng = np.random.default_rng(np.random.SeedSequence([params.seed, index]))
    pts, strokes = _face_geometry(params, rng)
    gray = _render(strokes, params)
    if params.noise_level > 0:
        gray = gray + rng.normal(0.0, params.noise_level, size=gray.shape)
        gray = np.clip(gray, 0.0, 1.0)
    image = np.repeat(gray[None, :, :], 3, axis=0)
    return Sample(image=image, landmarks=LandmarkSet(pts),
                  bbox=_face_bbox(pts, strokes, params.side))


def generate_synthetic(params: SynthParams, count: int) -> list[Sample]:
    """Deterministic for a fixed seed: sample i depends only on (seed, i)."""
    if count <= 0:
        raise ValueError(f"count must be positive, got {count}")
    return [_generate_one(params, i) for i in range(count)]


def write_synthetic_dataset(params: SynthParams, count: int, out_dir) -> Path:
    """Render `count` faces to PNG files plus a manifest; returns the manifest path."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    records = []
    for i, sample in enumerate(generate_synthetic(params, count)):
        rel = f"images/{i:06d}.png"
        arr = np.clip(sample.image * 255.0, 0, 255).astype(np.uint8)
        Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(out / rel)
        records.append({
            "image_path": rel,
            "points": [float(v) for v in sample.landmarks.points.reshape(-1)],
            "bbox": [float(v) for v in sample.bbox],
        })
    manifest = {
        "meta": {
            "num_landmarks": params.num_landmarks,
            "norm_pair": list(SYNTH_NORM_PAIR),
            "flip_map": list(synth_flip_map(params.num_landmarks)),
        },
        "records": records,
    }
    path = out / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1)
    return path
