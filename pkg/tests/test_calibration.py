import math

import numpy as np
import pytest

from pantilt.calibration import (
    CornerTrack,
    RigCalibration,
    calibrate_axis,
    calibrate_rig,
    fit_circle_in_plane,
    fit_plane,
)
from pantilt.errors import DegenerateGeometryError
from pantilt.geometry import PanTiltPose, RotationAxis, apply, axis_rotation_matrix, invert_rigid, pan_tilt_transform
from pantilt.synthetic import generate_corner_tracks, random_rig_spec

from conftest import random_axis


def angle_between(a, b):
    return math.acos(min(1.0, abs(float(np.dot(a, b)))))


def test_plane_xy():
    normal, d = fit_plane([(0, 0, 0), (1, 0, 0), (0, 1, 0)])
    np.testing.assert_allclose(np.abs(normal), (0, 0, 1), atol=1e-15)
    assert d == pytest.approx(0, abs=1e-15)


def test_plane_z_equals_two(rng):
    pts = np.column_stack([rng.uniform(-3, 3, (50, 2)), np.full(50, 2.0)])
    normal, d = fit_plane(pts)
    np.testing.assert_allclose(normal, (0, 0, 1), atol=1e-9)
    assert d == pytest.approx(-2, abs=1e-9)


def test_plane_noise_monte_carlo():
    errors = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        u = np.cross(n, rng.normal(size=3))
        u /= np.linalg.norm(u)
        v = np.cross(n, u)
        coeffs = rng.uniform(-1, 1, (50, 2))
        pts = coeffs[:, :1] * u + coeffs[:, 1:] * v + 0.3 * n + rng.normal(0, 0.001, (50, 3))
        normal, _ = fit_plane(pts)
        errors.append(math.degrees(angle_between(normal, n)))
    assert max(errors) < 0.5


@pytest.mark.parametrize(
    "pts", [[(0, 0, 0), (1, 1, 1)], [(0, 0, 0), (1, 1, 1), (2, 2, 2), (3, 3, 3)], [(1, 2, 3)] * 4]
)
def test_plane_degenerate(pts):
    with pytest.raises(DegenerateGeometryError):
        fit_plane(pts)


def test_circle_three_points():
    pts = [(1, 0, 0), (0, 1, 0), (-1, 0, 0)]
    center, r = fit_circle_in_plane(pts, fit_plane(pts))
    np.testing.assert_allclose(center, 0, atol=1e-12)
    assert r == pytest.approx(1, abs=1e-12)


def circle_points(center, radius, normal, angles):
    normal = np.asarray(normal) / np.linalg.norm(normal)
    u = np.cross(normal, (1.0, 0.3, -0.2))
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    return np.array([center + radius * (math.cos(a) * u + math.sin(a) * v) for a in angles])


def test_circle_exact_recovery(rng):
    normal = rng.normal(size=3)
    pts = circle_points(np.array([1.0, 2.0, 3.0]), 0.5, normal, rng.uniform(0, 2 * math.pi, 20))
    center, r = fit_circle_in_plane(pts, fit_plane(pts))
    np.testing.assert_allclose(center, (1, 2, 3), atol=1e-9)
    assert r == pytest.approx(0.5, abs=1e-9)


def test_circle_noise_monte_carlo():
    worst_c, worst_r = 0.0, 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        pts = circle_points(np.array([1.0, 2.0, 3.0]), 0.5, rng.normal(size=3), np.linspace(0, 2 * math.pi, 20, endpoint=False))
        pts = pts + rng.normal(0, 0.0005, pts.shape)
        center, r = fit_circle_in_plane(pts, fit_plane(pts))
        worst_c = max(worst_c, np.linalg.norm(center - (1, 2, 3)))
        worst_r = max(worst_r, abs(r - 0.5))
    assert worst_c < 0.002 and worst_r < 0.002


def test_circle_center_on_plane(rng):
    for _ in range(50):
        pts = rng.normal(size=(10, 3))
        plane = fit_plane(pts)
        center, _ = fit_circle_in_plane(pts, plane)
        assert abs(plane[0] @ center + plane[1]) < 1e-9


def test_circle_degenerate():
    pts = [(0, 0, 0), (1, 0, 0), (2, 0, 0)]
    with pytest.raises(DegenerateGeometryError):
        fit_circle_in_plane(pts, ((0, 0, 1), 0.0))


def camera_sweep(axis, corners, angles):
    """Corner positions seen by a camera rotating by ``angles`` about ``axis``."""
    return [
        CornerTrack(i, [apply(invert_rigid(axis_rotation_matrix(axis, a)), c) for a in angles])
        for i, c in enumerate(corners)
    ]


def test_single_track_about_z():
    axis = RotationAxis((0, 0, 1), (0.2, -0.1, 0.0))
    tracks = camera_sweep(axis, [(1.2, 0.4, 0.3)], np.radians([-20, -10, 0, 10, 20]))
    got = calibrate_axis(tracks)
    np.testing.assert_allclose(got.direction, (0, 0, 1), atol=1e-12)
    np.testing.assert_allclose(got.center, (0.2, -0.1, 0.3), atol=1e-12)


def test_sweep_direction_sets_sign():
    axis = RotationAxis((0, 0, 1))
    reversed_tracks = camera_sweep(axis, [(1, 0, 0), (1, 1, 0)], np.radians([20, 0, -20]))
    np.testing.assert_allclose(calibrate_axis(reversed_tracks).direction, (0, 0, -1), atol=1e-12)


@pytest.mark.parametrize("axis_name", ["pan", "tilt"])
def test_board_tracks_noiseless(axis_name):
    spec = random_rig_spec(5, sigma_deg=0.0)
    tracks, _ = generate_corner_tracks(spec, axis_name)
    assert len(tracks) == 54
    truth = spec.pan_axis if axis_name == "pan" else spec.tilt_axis
    got = calibrate_axis(tracks)
    assert angle_between(got.direction, truth.direction) < 1e-7
    assert got.direction @ truth.direction > 0
    assert truth.distance_to(got.center) < 1e-7


def test_reference_track_sets_center_level():
    spec = random_rig_spec(5, sigma_deg=0.0)
    tracks, _ = generate_corner_tracks(spec, "pan")
    ref = tracks[0].positions
    got = calibrate_axis(tracks)
    # the stored pivot is level with the reference corner's circle
    assert got.direction @ got.center == pytest.approx(got.direction @ ref.mean(axis=0), abs=1e-9)
    other = calibrate_axis(tracks, reference_id=53)
    assert got.distance_to(other.center) < 1e-9
    with pytest.raises(ValueError):
        calibrate_axis(tracks, reference_id=999)


def test_rigid_invariance(rng):
    spec = random_rig_spec(8, sigma_deg=0.0)
    tracks, _ = generate_corner_tracks(spec, "pan")
    m = axis_rotation_matrix(random_axis(rng), 0.7)
    m[:3, 3] += (0.3, -1.0, 2.0)
    moved = [CornerTrack(t.corner_id, apply(m, t.positions)) for t in tracks]
    base, after = calibrate_axis(tracks), calibrate_axis(moved)
    np.testing.assert_allclose(after.direction, m[:3, :3] @ base.direction, atol=1e-7)
    np.testing.assert_allclose(after.center, apply(m, base.center), atol=1e-7)


def test_per_track_normals_agree():
    spec = random_rig_spec(9, sigma_deg=0.0)
    tracks, _ = generate_corner_tracks(spec, "tilt", corner_noise=0.0005, seed=2)
    normals = [fit_plane(t.positions)[0] for t in tracks]
    # single tracks are short arcs, so the bound is looser than the pooled estimate
    assert max(math.degrees(angle_between(n, spec.tilt_axis.direction)) for n in normals) < 1.0


def test_calibrate_rig_round_trip():
    spec = random_rig_spec(11, sigma_deg=0.0)
    pan_tracks, pan_samples = generate_corner_tracks(spec, "pan")
    tilt_tracks, tilt_samples = generate_corner_tracks(spec, "tilt")
    rig = calibrate_rig(pan_tracks, tilt_tracks, pan_samples, tilt_samples)
    for got, truth in ((rig.pan_axis, spec.pan_axis), (rig.tilt_axis, spec.tilt_axis)):
        assert angle_between(got.direction, truth.direction) < 1e-7
        assert truth.distance_to(got.center) < 1e-7
    assert rig.pan_map.scale == pytest.approx(spec.pan_map.scale, rel=1e-9)
    assert rig.tilt_map.offset == pytest.approx(spec.tilt_map.offset, rel=1e-9)
    # with the recovered rig, a pose reproduces the ground-truth transform
    pose = PanTiltPose(0.2, -0.1)
    np.testing.assert_allclose(
        pan_tilt_transform(rig, pose), pan_tilt_transform(spec.calibration(), pose), atol=1e-7
    )


def test_identity_rig_recovered():
    identity = RigCalibration.identity()
    corners = [(x, y, 1.5) for x in (-0.1, 0.0, 0.1) for y in (-0.05, 0.05)]
    angles = np.radians(np.linspace(-20, 20, 9))
    pan = calibrate_axis(camera_sweep(identity.pan_axis, corners, angles))
    tilt = calibrate_axis(camera_sweep(identity.tilt_axis, corners, angles))
    np.testing.assert_allclose(pan.direction, (0, 1, 0), atol=1e-12)
    np.testing.assert_allclose(tilt.direction, (1, 0, 0), atol=1e-12)
    assert identity.pan_axis.distance_to(pan.center) < 1e-12
    assert identity.tilt_axis.distance_to(tilt.center) < 1e-12


def test_noisy_calibration_bounds():
    dir_err, center_err = [], []
    for seed in range(20):
        spec = random_rig_spec(seed, sigma_deg=0.0)
        tracks, _ = generate_corner_tracks(spec, "pan", seed=seed, corner_noise=0.0005)
        got = calibrate_axis(tracks)
        dir_err.append(math.degrees(angle_between(got.direction, spec.pan_axis.direction)))
        center_err.append(spec.pan_axis.distance_to(got.center))
    assert np.median(dir_err) < 0.1
    assert np.median(center_err) < 0.003


def test_single_position_track_is_degenerate():
    with pytest.raises(DegenerateGeometryError):
        calibrate_axis([CornerTrack(0, [(1, 0, 0)])])
    with pytest.raises(DegenerateGeometryError):
        calibrate_axis([])
