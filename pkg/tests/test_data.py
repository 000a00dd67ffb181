"""Data pipeline tests: geometric transforms, mirror permutations, the
synthetic face generator, manifest I/O, and annotation converters."""

import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from PIL import Image

from facemark.data import (
    AugmentConfig,
    FLIP_MAP_29,
    FLIP_MAP_68,
    FLIP_MAP_98,
    DatasetMeta,
    ManifestRecord,
    Sample,
    SynthParams,
    SYNTH_NORM_PAIR,
    augment,
    augment_affine,
    check_flip_map,
    convert_annotations,
    crop_affine,
    crop_and_scale,
    generate_synthetic,
    load_manifest,
    save_manifest,
    synth_flip_map,
    warp_image,
    write_synthetic_dataset,
)
from facemark.data.transforms import _apply_to_points

# ---------------------------------------------------------------- flip maps


def test_standard_flip_maps_are_involutions_with_fixed_points():
    for fm, fixed_example in ((FLIP_MAP_68, 8), (FLIP_MAP_98, 16), (FLIP_MAP_29, 20)):
        check_flip_map(fm)
        assert fm[fixed_example] == fixed_example  # midline point maps to itself
    assert FLIP_MAP_68[36] == 45  # outer eye corners swap
    assert FLIP_MAP_98[60] == 72
    assert FLIP_MAP_29[8] == 9


def test_check_flip_map_rejects_non_involutions():
    with pytest.raises(ValueError):
        check_flip_map([1, 2, 0])  # 3-cycle
    with pytest.raises(ValueError):
        check_flip_map([0, 0, 2])  # not a permutation
    with pytest.raises(ValueError):
        check_flip_map([0, 5, 2])  # out of range


@given(st.integers(6, 40))
def test_synth_flip_map_is_involution(num_landmarks):
    fm = synth_flip_map(num_landmarks)
    assert len(fm) == num_landmarks
    check_flip_map(fm)
    assert fm[SYNTH_NORM_PAIR[0]] == SYNTH_NORM_PAIR[1]


# ---------------------------------------------------------------- affines


def test_crop_affine_centers_the_box():
    bbox = (10.0, 20.0, 40.0, 20.0)  # center (30, 30), long side 40
    A = crop_affine(bbox, side=64)
    center = _apply_to_points(A, np.array([[30.0, 30.0]]))[0]
    np.testing.assert_allclose(center, [32.0, 32.0], atol=1e-12)
    # long side maps to the full crop side: scale = 64/40
    p = _apply_to_points(A, np.array([[50.0, 30.0]]))[0]
    np.testing.assert_allclose(p, [32.0 + 20.0 * 64 / 40, 32.0], atol=1e-12)


def test_augment_affine_identity_is_identity():
    A = augment_affine(side=64, theta_deg=0.0, scale=1.0, flip=False)
    np.testing.assert_allclose(A, np.eye(3), atol=1e-12)


def test_augment_affine_rotates_about_crop_center():
    side = 65  # odd side: center at exactly (32, 32)
    A = augment_affine(side=side, theta_deg=90.0, scale=1.0, flip=False)
    c = (side - 1) / 2.0
    np.testing.assert_allclose(_apply_to_points(A, np.array([[c, c]]))[0], [c, c], atol=1e-9)
    got = _apply_to_points(A, np.array([[c + 10.0, c]]))[0]
    # 90 degrees: the x-offset becomes a y-offset
    np.testing.assert_allclose(got, [c, c + 10.0], atol=1e-9)


def test_augment_affine_flip_mirrors_x():
    side = 64
    A = augment_affine(side=side, theta_deg=0.0, scale=1.0, flip=True)
    got = _apply_to_points(A, np.array([[10.0, 5.0]]))[0]
    np.testing.assert_allclose(got, [side - 1 - 10.0, 5.0], atol=1e-12)


@given(st.floats(-30, 30), st.floats(0.8, 1.25), st.booleans())
def test_augment_affine_is_invertible(theta, scale, flip):
    A = augment_affine(64, theta, scale, flip)
    pts = np.array([[3.0, 7.0], [60.0, 20.0], [31.5, 31.5]])
    back = _apply_to_points(np.linalg.inv(A), _apply_to_points(A, pts))
    np.testing.assert_allclose(back, pts, atol=1e-9)


# ---------------------------------------------------------------- warping


def test_warp_identity_preserves_image():
    rng = np.random.default_rng(0)
    img = rng.random((3, 16, 16))
    out = warp_image(img, np.eye(3), out_side=16)
    np.testing.assert_allclose(out, img, atol=1e-12)


def test_warp_out_of_frame_is_zero_filled():
    img = np.ones((3, 8, 8))
    shift = np.eye(3)
    shift[0, 2] = 100.0  # push content far right
    out = warp_image(img, shift, out_side=8)
    assert out.min() == 0.0 and out.max() == 0.0


def test_warp_translation_moves_content():
    img = np.zeros((1, 8, 8))
    img[0, 2, 3] = 1.0
    shift = np.eye(3)
    shift[0, 2] = 2.0  # x' = x + 2
    shift[1, 2] = 1.0  # y' = y + 1
    out = warp_image(img, shift, out_side=8)
    assert out[0, 3, 5] == pytest.approx(1.0)
    assert out.sum() == pytest.approx(1.0)


# ---------------------------------------------------------------- crop + augment


def _toy_sample(side=32, n=6):
    rng = np.random.default_rng(1)
    img = rng.random((3, side, side))
    pts = rng.uniform(4, side - 4, (n, 2))
    return Sample(image=img, landmarks=pts, bbox=(4.0, 4.0, side - 8.0, side - 8.0))


def test_crop_and_scale_maps_landmarks_consistently():
    s = _toy_sample()
    out = crop_and_scale(s, side=64)
    assert out.image.shape == (3, 64, 64)
    A = crop_affine(s.bbox, 64)
    np.testing.assert_allclose(out.landmarks.points,
                               _apply_to_points(A, s.landmarks.points), atol=1e-12)


def test_augment_without_flip_or_rotation_is_identity():
    s = _toy_sample(side=64)
    cfg = AugmentConfig(rotation_degrees=0.0, scale_range=(1.0, 1.0), hflip_prob=0.0)
    out = augment(s, cfg, np.random.default_rng(0))
    np.testing.assert_allclose(out.image, s.image, atol=1e-12)
    np.testing.assert_allclose(out.landmarks.points, s.landmarks.points, atol=1e-9)


def test_augment_flip_permutes_landmarks_with_the_map():
    s = _toy_sample(side=64)
    fm = tuple((i + 1 if i % 2 == 0 else i - 1) for i in range(6))
    cfg = AugmentConfig(rotation_degrees=0.0, scale_range=(1.0, 1.0),
                        hflip_prob=1.0, flip_map=fm)
    out = augment(s, cfg, np.random.default_rng(0))
    mirrored = s.landmarks.points.copy()
    mirrored[:, 0] = 63.0 - mirrored[:, 0]
    np.testing.assert_allclose(out.landmarks.points, mirrored[list(fm)], atol=1e-9)


def test_augment_is_deterministic_given_rng_state():
    s = _toy_sample(side=64)
    cfg = AugmentConfig(flip_map=tuple((i + 1 if i % 2 == 0 else i - 1) for i in range(6)))
    a = augment(s, cfg, np.random.default_rng(77))
    b = augment(s, cfg, np.random.default_rng(77))
    np.testing.assert_array_equal(a.image, b.image)
    np.testing.assert_array_equal(a.landmarks.points, b.landmarks.points)


def test_augment_config_requires_flip_map_for_flips():
    with pytest.raises(ValueError):
        AugmentConfig(hflip_prob=0.5, flip_map=None)
    with pytest.raises(ValueError):
        AugmentConfig(scale_range=(1.2, 0.8), flip_map=None, hflip_prob=0.0)


# ---------------------------------------------------------------- synthetic faces


def test_synthetic_generation_is_deterministic_and_well_formed():
    params = SynthParams(seed=5, num_landmarks=16)
    a = generate_synthetic(params, 3)
    b = generate_synthetic(params, 3)
    for s, t in zip(a, b):
        np.testing.assert_array_equal(s.image, t.image)
        np.testing.assert_array_equal(s.landmarks.points, t.landmarks.points)
    for s in a:
        assert s.image.shape == (3, 128, 128)
        assert s.image.min() >= 0.0 and s.image.max() <= 1.0
        assert s.landmarks.points.shape == (16, 2)
        x, y, w, h = s.bbox
        assert w > 0 and h > 0


def test_synthetic_faces_vary_across_indices_and_seeds():
    p = SynthParams(seed=5, num_landmarks=16)
    a, b = generate_synthetic(p, 2)
    assert not np.array_equal(a.landmarks.points, b.landmarks.points)
    c = generate_synthetic(SynthParams(seed=6, num_landmarks=16), 1)[0]
    assert not np.array_equal(a.image, c.image)


def test_synthetic_landmarks_sit_on_bright_strokes():
    # rendered curves are bright ink on a dark background; every landmark
    # should have stroke pixels in its immediate neighborhood
    params = SynthParams(seed=2, num_landmarks=16, noise_level=0.0)
    for s in generate_synthetic(params, 4):
        gray = s.image.mean(axis=0)
        background = np.median(gray)
        on_stroke = 0
        for x, y in s.landmarks.points:
            patch = gray[max(0, int(y) - 1):int(y) + 2, max(0, int(x) - 1):int(x) + 2]
            if patch.max() > background + 0.3:
                on_stroke += 1
        assert on_stroke >= 15  # allow antialiasing slack at arc joins


def test_synthetic_landmark_count_is_configurable():
    for n in (6, 9, 16, 23):
        s = generate_synthetic(SynthParams(seed=1, num_landmarks=n), 1)[0]
        assert s.landmarks.points.shape == (n, 2)


def test_synth_params_validation():
    with pytest.raises(ValueError):
        SynthParams(num_landmarks=5)
    with pytest.raises(ValueError):
        SynthParams(side=16)
    with pytest.raises(ValueError):
        SynthParams(noise_level=0.5)


# ---------------------------------------------------------------- manifests


def test_write_and_load_synthetic_dataset(tmp_path):
    params = SynthParams(seed=3, num_landmarks=8)
    manifest = write_synthetic_dataset(params, 4, tmp_path / "ds")
    ds = load_manifest(manifest)
    assert len(ds) == 4
    assert ds.meta.num_landmarks == 8
    assert ds.meta.norm_pair == SYNTH_NORM_PAIR
    check_flip_map(ds.meta.flip_map)
    direct = generate_synthetic(params, 4)
    for i in range(4):
        loaded = ds.load_sample(i)
        np.testing.assert_allclose(loaded.landmarks.points, direct[i].landmarks.points, atol=1e-12)
        # PNG quantization: 8-bit tolerance
        np.testing.assert_allclose(loaded.image, direct[i].image, atol=1.0 / 255.0)


def test_manifest_round_trip_preserves_meta_and_records(tmp_path):
    meta = DatasetMeta(num_landmarks=3, norm_pair=(0, 2), flip_map=(1, 0, 2))
    rec = ManifestRecord(image_path="img/000.png", points=np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.5]]),
                         bbox=(0.5, 1.5, 10.0, 12.0))
    path = tmp_path / "manifest.json"
    save_manifest(meta, [rec], path)
    ds = load_manifest(path)
    assert ds.meta == meta
    np.testing.assert_array_equal(ds.records[0].points, rec.points)
    assert ds.records[0].bbox == rec.bbox
    assert ds.records[0].image_path == "img/000.png"


def test_manifest_rejects_wrong_point_count(tmp_path):
    path = tmp_path / "manifest.json"
    blob = {
        "meta": {"num_landmarks": 3, "norm_pair": [0, 1], "flip_map": None},
        "records": [{"image_path": "a.png", "points": [1, 2, 3, 4], "bbox": [0, 0, 5, 5]}],
    }
    path.write_text(json.dumps(blob))
    with pytest.raises(ValueError) as err:
        load_manifest(path)
    assert "a.png" in str(err.value) or "record 0" in str(err.value)


def test_load_sample_clamps_bbox_and_normalizes_image(tmp_path):
    img_path = tmp_path / "pic.png"
    Image.fromarray((np.arange(64, dtype=np.uint8).reshape(8, 8) * 3)).save(img_path)
    meta = DatasetMeta(num_landmarks=2, norm_pair=(0, 1), flip_map=None)
    rec = ManifestRecord(image_path="pic.png", points=np.array([[1.0, 1.0], [6.0, 6.0]]),
                         bbox=(-5.0, -5.0, 100.0, 100.0))
    save_manifest(meta, [rec], tmp_path / "manifest.json")
    ds = load_manifest(tmp_path / "manifest.json")
    s = ds.load_sample(0)
    assert s.image.shape == (3, 8, 8)
    assert 0.0 <= s.image.min() and s.image.max() <= 1.0
    x, y, w, h = s.bbox
    assert x >= 0 and y >= 0 and x + w <= 8 and y + h <= 8


# ---------------------------------------------------------------- converters


def _write_pts(path: Path, pts: np.ndarray):
    lines = ["version: 1", f"n_points: {len(pts)}", "{"]
    lines += [f"{x:.3f} {y:.3f}" for x, y in pts]
    lines.append("}")
    path.write_text("\n".join(lines) + "\n")


def test_convert_300w_layout(tmp_path):
    rng = np.random.default_rng(0)
    src = tmp_path / "src"
    src.mkdir()
    pts = rng.uniform(20, 80, (68, 2)).round(3)
    _write_pts(src / "face1.pts", pts)
    Image.new("RGB", (100, 100), (90, 80, 70)).save(src / "face1.png")
    manifest = convert_annotations("300w", src, tmp_path / "out")
    ds = load_manifest(manifest)
    assert ds.meta.num_landmarks == 68
    assert ds.meta.norm_pair == (36, 45)
    np.testing.assert_allclose(ds.records[0].points, pts, atol=1e-9)
    x, y, w, h = ds.records[0].bbox
    assert x < pts[:, 0].min() and x + w > pts[:, 0].max()
    loaded = ds.load_sample(0)
    assert loaded.image.shape == (3, 100, 100)


def test_convert_300w_requires_sibling_image(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    _write_pts(src / "lonely.pts", np.zeros((68, 2)) + 10.0)
    with pytest.raises(FileNotFoundError):
        convert_annotations("300w", src, tmp_path / "out")


def test_convert_wflw_line_format(tmp_path):
    rng = np.random.default_rng(1)
    coords = rng.uniform(10, 90, 196).round(3)
    box = [5.0, 6.0, 95.0, 96.0]
    flags = [0, 1, 0, 0, 1, 0]
    name = "sub/face.jpg"
    line = " ".join(str(v) for v in [*coords, *box, *flags, name])
    src = tmp_path / "anno.txt"
    src.write_text(line + "\n\n")
    img_root = tmp_path / "imgs"
    (img_root / "sub").mkdir(parents=True)
    Image.new("RGB", (100, 100)).save(img_root / "sub" / "face.jpg")
    manifest = convert_annotations("wflw", src, tmp_path / "out", image_root=img_root)
    ds = load_manifest(manifest)
    assert ds.meta.num_landmarks == 98
    np.testing.assert_allclose(ds.records[0].points, coords.reshape(98, 2), atol=1e-9)
    assert ds.records[0].bbox == (5.0, 6.0, 90.0, 90.0)  # x, y, width, height
    assert ds.records[0].image_path.endswith("face.jpg")


def test_convert_wflw_rejects_malformed_lines(tmp_path):
    src = tmp_path / "anno.txt"
    src.write_text("1.0 2.0 3.0\n")
    with pytest.raises(ValueError):
        convert_annotations("wflw", src, tmp_path / "out")


def test_convert_cofw_mat_container(tmp_path):
    from scipy.io import savemat

    rng = np.random.default_rng(2)
    n = 3
    xs = rng.uniform(10, 50, (n, 29))
    ys = rng.uniform(10, 50, (n, 29))
    occl = np.zeros((n, 29))
    phis = np.concatenate([xs, ys, occl], axis=1)
    boxes = np.tile([5.0, 5.0, 50.0, 50.0], (n, 1))
    cells = np.empty((n, 1), dtype=object)
    for i in range(n):
        cells[i, 0] = (rng.random((60, 70)) * 255).astype(np.uint8)
    src = tmp_path / "train.mat"
    savemat(src, {"phisTr": phis, "bboxesTr": boxes, "IsTr": cells})
    manifest = convert_annotations("cofw", src, tmp_path / "out")
    ds = load_manifest(manifest)
    assert ds.meta.num_landmarks == 29
    assert len(ds) == n
    np.testing.assert_allclose(ds.records[1].points[:, 0], xs[1], atol=1e-9)
    np.testing.assert_allclose(ds.records[1].points[:, 1], ys[1], atol=1e-9)
    s = ds.load_sample(0)
    assert s.image.shape == (3, 60, 70)


def test_convert_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        convert_annotations("aflw", tmp_path, tmp_path / "out")
