import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from uavtrack.geometry import (
    CameraModel,
    Pose6D,
    RelativePose,
    preprocess_batch,
    preprocess_frame,
    project_point,
    relative_pose,
    rotation_from_euler,
    world_to_ego,
    wrap_angle,
)
from uavtrack.sim.render import RasterFrame

angles = st.floats(-10.0, 10.0, allow_nan=False)
coords = st.floats(-100.0, 100.0, allow_nan=False)


def test_wrap_angle_half_open_interval():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    a = wrap_angle(np.linspace(-20, 20, 1001))
    assert np.all(a > -math.pi) and np.all(a <= math.pi)


def test_rotation_identity():
    assert np.array_equal(rotation_from_euler(0.0, 0.0, 0.0), np.eye(3))


def test_rotation_quarter_yaw_axis_permutation():
    R = rotation_from_euler(0.0, 0.0, math.pi / 2)
    # world +x seen from a body facing world +y lies on the body's right (-y)
    assert np.allclose(R @ [1, 0, 0], [0, -1, 0], atol=1e-15)
    # body +x points along world +y
    assert np.allclose(R.T @ [1, 0, 0], [0, 1, 0], atol=1e-15)
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-15)


def test_rotation_matches_scipy_intrinsic_zyx():
    # independent route: scipy intrinsic Z-Y-X with pitch negated (nose-up positive)
    rng = np.random.default_rng(0)
    for roll, pitch, yaw in rng.uniform(-math.pi, math.pi, (200, 3)):
        body_to_world = Rotation.from_euler("ZYX", [yaw, -pitch, roll]).as_matrix()
        assert np.allclose(rotation_from_euler(roll, pitch, yaw), body_to_world.T, atol=1e-12)


def test_positive_pitch_raises_nose():
    R = rotation_from_euler(0.0, math.radians(30), 0.0)
    forward_world = R.T @ [1, 0, 0]
    assert forward_world[2] > 0


def test_rotation_orthonormal_over_random_draws():
    rng = np.random.default_rng(1)
    for roll, pitch, yaw in rng.uniform(-4, 4, (1000, 3)):
        R = rotation_from_euler(roll, pitch, yaw)
        assert np.max(np.abs(R.T @ R - np.eye(3))) < 1e-12
        assert abs(np.linalg.det(R) - 1.0) < 1e-12


@given(angles, angles, angles)
def test_rotation_orthonormal_property(roll, pitch, yaw):
    R = rotation_from_euler(roll, pitch, yaw)
    assert np.max(np.abs(R.T @ R - np.eye(3))) < 1e-12
    assert abs(np.linalg.det(R) - 1.0) < 1e-12


def test_world_to_ego_identity_and_translation():
    assert np.allclose(world_to_ego(Pose6D(), [1, 2, 3]), [1, 2, 3])
    assert np.allclose(world_to_ego(Pose6D(x=5.0), [6, 0, 0]), [1, 0, 0])


def test_world_to_ego_round_trip_1000_points():
    rng = np.random.default_rng(2)
    pose = Pose6D(*rng.uniform(-50, 50, 3), *rng.uniform(-3, 3, 3))
    pts = rng.uniform(-100, 100, (1000, 3))
    back = world_to_ego(pose, world_to_ego(pose, pts), "inverse")
    assert np.max(np.abs(back - pts)) < 1e-9


@given(coords, coords, coords, angles, angles, angles, coords, coords, coords)
def test_world_to_ego_round_trip_property(x, y, z, r, p, yw, px, py, pz):
    pose = Pose6D(x, y, z, r, p, yw)
    pt = np.array([px, py, pz])
    assert np.max(np.abs(world_to_ego(pose, world_to_ego(pose, pt), "inverse") - pt)) < 1e-9


def test_world_to_ego_rejects_unknown_direction():
    with pytest.raises(ValueError):
        world_to_ego(Pose6D(), [0, 0, 0], "sideways")


def test_relative_pose_examples():
    assert relative_pose(Pose6D(), Pose6D()).as_array().tolist() == [0.0, 0.0, 0.0, 0.0]
    assert np.allclose(relative_pose(Pose6D(), Pose6D(5, 0, -1)).as_array(), [5, 0, -1, 0])
    rel = relative_pose(Pose6D(yaw=0.3), Pose6D(yaw=0.3 + 3 * math.pi / 2))
    assert rel.dpsi == pytest.approx(-math.pi / 2)


@given(coords, coords, coords, angles, angles, angles)
def test_relative_pose_of_self_is_exactly_zero(x, y, z, r, p, yw):
    pose = Pose6D(x, y, z, r, p, yw)
    assert relative_pose(pose, pose).as_array().tolist() == [0.0, 0.0, 0.0, 0.0]


def test_relative_pose_dpsi_wrapped():
    assert RelativePose(0, 0, 0, 2 * math.pi).dpsi == pytest.approx(0.0)


def test_camera_model_validation():
    with pytest.raises(ValueError):
        CameraModel(hfov=math.pi)
    with pytest.raises(ValueError):
        CameraModel(width=0)
    cam = CameraModel()
    assert cam.mount_offset == (0.0, 0.0, -0.5)
    assert cam.mount_pitch == pytest.approx(math.radians(-15))
    assert cam.hfov == pytest.approx(math.radians(135))


def test_project_principal_point():
    cam = CameraModel()
    u, v, depth, ok = project_point(Pose6D(), cam, [10, 0, 0])
    assert (u, v, depth, ok) == (cam.width / 2, cam.height / 2, 10.0, True)


def test_project_behind_camera():
    u, v, depth, ok = project_point(Pose6D(), CameraModel(), [-3, 0.1, 0.2])
    assert not ok and depth < 0 and math.isfinite(u) and math.isfinite(v)


def test_project_half_fov_lands_on_border():
    cam = CameraModel()
    half = cam.hfov / 2
    for sign, edge in ((1, 0.0), (-1, cam.width - 1)):
        p = [math.cos(half), sign * math.sin(half), 0.0]
        u, _, _, _ = project_point(Pose6D(), cam, p)
        assert abs(u - edge) <= 1.0


@settings(max_examples=200)
@given(st.floats(0.1, 50), st.floats(-50, 50), st.floats(-50, 50), st.floats(0.2, 2.5), st.floats(0.0, 0.5))
def test_in_frame_monotone_in_hfov(x, y, z, hfov, extra):
    narrow = CameraModel(hfov=hfov)
    wide = CameraModel(hfov=min(hfov + extra, math.pi - 1e-3))
    if project_point(Pose6D(), narrow, [x, y, z])[3]:
        assert project_point(Pose6D(), wide, [x, y, z])[3]


@pytest.mark.parametrize(
    "w,h,target,content,top,bottom",
    [(800, 600, 224, 168, 28, 28), (80, 60, 32, 24, 4, 4), (80, 57, 32, 23, 4, 5)],
)
def test_preprocess_layout_examples(w, h, target, content, top, bottom):
    frame = np.full((h, w), 200, dtype=np.uint8)
    out = preprocess_frame(frame, target)
    assert out.shape == (target, target)
    nonzero_rows = np.flatnonzero(out.sum(axis=1))
    assert len(nonzero_rows) == content
    assert nonzero_rows[0] == top and target - 1 - nonzero_rows[-1] == bottom


def test_preprocess_square_is_noop():
    rng = np.random.default_rng(3)
    frame = rng.integers(0, 256, (32, 32), dtype=np.uint8)
    assert np.array_equal(preprocess_frame(frame, 32), frame)


def test_preprocess_rejects_portrait():
    with pytest.raises(ValueError, match="unsupported aspect"):
        preprocess_frame(np.zeros((60, 40), dtype=np.uint8), 32)


def test_preprocess_raster_frame_round_trip_type():
    rf = RasterFrame(80, 60, np.full((60, 80), 7, dtype=np.uint8))
    out = preprocess_frame(rf, 32)
    assert isinstance(out, RasterFrame) and (out.width, out.height) == (32, 32)


def test_preprocess_area_average_matches_block_mean():
    # independent oracle: an integer downscale factor is a plain block mean
    rng = np.random.default_rng(4)
    frame = rng.integers(0, 256, (60, 80)).astype(np.uint8)
    out = preprocess_frame(frame, 40)  # factor 2, content 30 rows
    block = frame.reshape(30, 2, 40, 2).astype(float).mean(axis=(1, 3))
    assert np.array_equal(out[5:35], np.clip(np.rint(block), 0, 255).astype(np.uint8))


@settings(max_examples=50)
@given(st.integers(8, 120), st.integers(1, 120), st.integers(4, 64))
def test_preprocess_shape_and_black_padding(w, h, target):
    if h > w:
        return
    frame = np.full((h, w), 255, dtype=np.uint8)
    out = preprocess_batch(frame[None], target)[0]
    assert out.shape == (target, target)
    content = int(round(h * target / w))
    top = (target - content) // 2
    assert out[:top].sum() == 0 and out[top + content:].sum() == 0
