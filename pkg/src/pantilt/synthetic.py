"""Synthetic pan-tilt rig with known ground truth.

All randomness flows through :func:`make_rng`, a Philox4x64 counter-based
generator, so a seed fixes every output regardless of platform.

Camera coordinates follow the usual depth-camera layout: x right, y down,
z forward. Pan turns about a roughly vertical axis, tilt about a roughly
horizontal one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .calibration import CornerTrack, RigCalibration
from .geometry import (
    PanTiltPose,
    RotationAxis,
    apply,
    axis_rotation_matrix,
    invert_rigid,
    pan_tilt_transform,
)
from .registration import DEFAULT_SIGMA_DEG, CorrespondenceSet, Frame, preorient
from .servo_model import PulseAngleMap, PulseAngleSample, sigma_to_tolerance

RNG_NAME = "numpy.random.Philox(4x64)"

# x, y, z bounds in meters of a room-sized scene in front of the camera
DEFAULT_EXTENT = ((-2.0, 2.0), (-1.5, 1.5), (1.0, 5.0))

PAN_STEP_DEG = 1.5
PRESET_FRAME_COUNTS = {
    "paper-protocol": 30,
    "partition-5": 5,
    "partition-10": 10,
    "partition-15": 15,
    "partition-30": 30,
}


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class SyntheticRigSpec:
    """Ground-truth rig; each map's ``sigma`` is the injected servo noise (degrees)."""

    pan_axis: RotationAxis
    tilt_axis: RotationAxis
    pan_map: PulseAngleMap
    tilt_map: PulseAngleMap

    def calibration(self) -> RigCalibration:
        return RigCalibration(self.pan_axis, self.tilt_axis, self.pan_map, self.tilt_map)

    def with_sigma(self, sigma_deg: float) -> SyntheticRigSpec:
        return replace(
            self,
            pan_map=replace(self.pan_map, sigma=sigma_deg),
            tilt_map=replace(self.tilt_map, sigma=sigma_deg),
        )


def _random_unit_near(rng: np.random.Generator, nominal, max_tilt_deg: float) -> np.ndarray:
    nominal = np.asarray(nominal, dtype=float)
    perturb = rng.normal(size=3)
    perturb -= nominal * (perturb @ nominal)
    perturb /= np.linalg.norm(perturb)
    tilt = math.radians(rng.uniform(0.0, max_tilt_deg))
    return math.cos(tilt) * nominal + math.sin(tilt) * perturb


def random_rig_spec(seed: int, sigma_deg: float = 0.2) -> SyntheticRigSpec:
    """A plausible rig: axes within 3 degrees of y / x, centers within a few cm."""
    rng = make_rng(seed)
    pan_dir = _random_unit_near(rng, (0.0, 1.0, 0.0), 3.0)
    tilt_dir = _random_unit_near(rng, (1.0, 0.0, 0.0), 3.0)
    pan_center = rng.uniform(-0.05, 0.05, size=3)
    tilt_center = rng.uniform(-0.05, 0.05, size=3)

    def servo() -> PulseAngleMap:
        scale = rng.uniform(0.09, 0.11)
        zero_pulse = rng.uniform(1450.0, 1550.0)
        return PulseAngleMap(scale=scale, offset=-scale * zero_pulse, sigma=sigma_deg)

    return SyntheticRigSpec(
        pan_axis=RotationAxis(pan_dir, pan_center),
        tilt_axis=RotationAxis(tilt_dir, tilt_center),
        pan_map=servo(),
        tilt_map=servo(),
    )


def generate_scene(n_points: int, extent=DEFAULT_EXTENT, seed: int = 0) -> np.ndarray:
    """Uniform random points inside the axis-aligned box ``extent``."""
    if n_points < 1:
        raise ValueError(f"n_points must be >= 1, got {n_points}")
    lo = np.array([e[0] for e in extent], dtype=float)
    hi = np.array([e[1] for e in extent], dtype=float)
    return make_rng(seed).uniform(lo, hi, size=(n_points, 3))


def protocol_schedules(
    n_frames: int = 30,
    pan_step_deg: float = PAN_STEP_DEG,
    tilt_range_deg: float = 10.0,
    seed: int = 0,
) -> tuple[list[float], list[float]]:
    """Pan sweep in fixed steps centered on zero, with random tilt per frame."""
    rng = make_rng(seed)
    start = -pan_step_deg * (n_frames - 1) / 2.0
    pan = [start + i * pan_step_deg for i in range(n_frames)]
    tilt = rng.uniform(-tilt_range_deg, tilt_range_deg, size=n_frames).tolist()
    return pan, tilt


@dataclass(frozen=True, eq=False)
class SyntheticScanSet:
    frames: list
    true_poses: list
    correspondences: list
    inlier_labels: list  # one bool array per correspondence set, True = genuine pair
    seed: int
    scene: np.ndarray | None = None


def _tangent_direction(rng: np.random.Generator, radial: np.ndarray) -> np.ndarray:
    r = radial / np.linalg.norm(radial)
    while True:
        v = rng.normal(size=3)
        v -= r * (v @ r)
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            return v / norm


def generate_scan_set(
    spec: SyntheticRigSpec,
    scene: np.ndarray,
    pan_schedule,
    tilt_schedule,
    outlier_fraction: float = 0.0,
    seed: int = 0,
    n_correspondences: int = 100,
    tolerance_sigma_deg: float | None = None,
    outlier_margin: tuple[float, float] = (4.0, 8.0),
) -> SyntheticScanSet:
    """Render frames along the schedules (degrees) and match consecutive frames.

    Each frame holds the whole scene in its local coordinates at the true
    pose. Servo noise with the maps' ``sigma`` perturbs only the recorded
    pulses. Outlier pairs have their right keypoint moved tangentially so
    that, pre-oriented at the seed poses, it lies between ``outlier_margin``
    times the rejection bound away from its partner.
    """
    pan_schedule = list(pan_schedule)
    tilt_schedule = list(tilt_schedule)
    if len(pan_schedule) != len(tilt_schedule):
        raise ValueError(
            f"pan and tilt schedules differ in length: {len(pan_schedule)} vs {len(tilt_schedule)}"
        )
    if not 0.0 <= outlier_fraction < 1.0:
        raise ValueError(f"outlier_fraction must be in [0, 1), got {outlier_fraction}")
    if min(outlier_margin) < 3.0:
        raise ValueError("outliers must be displaced by at least 3 rejection bounds")

    rng = make_rng(seed)
    rig = spec.calibration()
    scene = np.asarray(scene, dtype=float)

    frames, true_poses, seeds = [], [], []
    for i, (pan_deg, tilt_deg) in enumerate(zip(pan_schedule, tilt_schedule)):
        true_pose = PanTiltPose.from_degrees(pan_deg, tilt_deg)
        pan_seen = pan_deg + rng.normal(0.0, spec.pan_map.sigma) if spec.pan_map.sigma else pan_deg
        tilt_seen = (
            tilt_deg + rng.normal(0.0, spec.tilt_map.sigma) if spec.tilt_map.sigma else tilt_deg
        )
        local = apply(invert_rigid(pan_tilt_transform(rig, true_pose)), scene)
        frames.append(
            Frame(
                frame_id=i,
                points=local,
                pan_pulse=spec.pan_map.angle_to_pulse(pan_seen),
                tilt_pulse=spec.tilt_map.angle_to_pulse(tilt_seen),
            )
        )
        true_poses.append(true_pose)
        seeds.append(PanTiltPose.from_degrees(pan_seen, tilt_seen))

    sigma_tol = tolerance_sigma_deg
    if sigma_tol is None:
        sigma_tol = rig.max_sigma if rig.max_sigma > 0 else DEFAULT_SIGMA_DEG
    theta = sigma_to_tolerance(sigma_tol)

    correspondences, labels = [], []
    m = min(n_correspondences, len(scene))
    n_out = int(round(outlier_fraction * m))
    for i in range(1, len(frames)):
        left_frame, right_frame = frames[i - 1], frames[i]
        idx = rng.choice(len(scene), size=m, replace=False)
        left = left_frame.points[idx].copy()
        right = right_frame.points[idx].copy()
        genuine = np.ones(m, dtype=bool)
        if n_out:
            bad = np.sort(rng.choice(m, size=n_out, replace=False))
            genuine[bad] = False
            to_right_local = invert_rigid(pan_tilt_transform(rig, seeds[i]))
            for j in bad:
                hat_l = preorient(rig, seeds[i - 1], left[j])
                eps = np.linalg.norm(hat_l) * theta
                shift = rng.uniform(*outlier_margin) * eps
                moved = hat_l + shift * _tangent_direction(rng, hat_l)
                right[j] = apply(to_right_local, moved)
        correspondences.append(
            CorrespondenceSet(left, right, frame_l=left_frame.frame_id, frame_r=right_frame.frame_id)
        )
        labels.append(genuine)

    return SyntheticScanSet(
        frames=frames,
        true_poses=true_poses,
        correspondences=correspondences,
        inlier_labels=labels,
        seed=seed,
        scene=scene,
    )


def board_corners(board=(9, 6), square_size: float = 0.025, distance: float = 1.2) -> np.ndarray:
    """Inner corners of a wall-mounted board facing the camera, row-major from top-left."""
    cols, rows = board
    xs = (np.arange(cols) - (cols - 1) / 2.0) * square_size
    ys = (np.arange(rows) - (rows - 1) / 2.0) * square_size
    grid = np.array([(x, y, distance) for y in ys for x in xs])
    return grid


def default_sweep(spec_map: PulseAngleMap, n_steps: int = 28, half_range_deg: float = 30.0) -> list[float]:
    angles = np.linspace(-half_range_deg, half_range_deg, n_steps)
    return [spec_map.angle_to_pulse(a) for a in angles]


def generate_corner_tracks(
    spec: SyntheticRigSpec,
    axis: str = "pan",
    board=(9, 6),
    square_size: float = 0.025,
    pulse_schedule=None,
    seed: int = 0,
    corner_noise: float = 0.0,
    board_distance: float = 1.2,
) -> tuple[list[CornerTrack], list[PulseAngleSample]]:
    """Corner trajectories seen by the camera while one servo sweeps.

    The other servo rests at zero. At each commanded pulse the actual angle
    is the map's angle plus servo noise; the matching sample records that
    actual angle. ``corner_noise`` (meters) is added independently to every
    observed corner position.
    """
    if axis not in ("pan", "tilt"):
        raise ValueError(f"axis must be 'pan' or 'tilt', got {axis!r}")
    rot_axis = spec.pan_axis if axis == "pan" else spec.tilt_axis
    servo = spec.pan_map if axis == "pan" else spec.tilt_map
    if pulse_schedule is None:
        pulse_schedule = default_sweep(servo)

    rng = make_rng(seed)
    corners = board_corners(board, square_size, board_distance)
    positions = np.empty((len(corners), len(pulse_schedule), 3))
    samples = []
    for step, pulse in enumerate(pulse_schedule):
        angle = servo.scale * pulse + servo.offset
        if servo.sigma:
            angle += rng.normal(0.0, servo.sigma)
        samples.append(PulseAngleSample(float(pulse), float(angle)))
        to_local = invert_rigid(axis_rotation_matrix(rot_axis, math.radians(angle)))
        positions[:, step] = apply(to_local, corners)
    if corner_noise:
        positions = positions + rng.normal(0.0, corner_noise, size=positions.shape)
    tracks = [CornerTrack(corner_id=i, positions=positions[i]) for i in range(len(corners))]
    return tracks, samples


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    spec: SyntheticRigSpec
    scans: SyntheticScanSet
    seeds: dict


def generate_dataset(
    seed: int,
    n_frames: int = 30,
    sigma_deg: float = 0.2,
    outlier_fraction: float = 0.0,
    n_points: int = 2000,
    n_correspondences: int = 100,
    pan_step_deg: float = PAN_STEP_DEG,
    tilt_range_deg: float = 10.0,
    tolerance_sigma_deg: float | None = None,
) -> SyntheticDataset:
    """Rig, scene, schedules and scans from one master seed.

    Sub-seeds for each stage come from ``numpy.random.SeedSequence(seed)``.
    """
    names = ("rig", "scene", "schedule", "scan", "tracks")
    state = np.random.SeedSequence(seed).generate_state(len(names)).tolist()
    seeds = dict(zip(names, state))
    spec = random_rig_spec(seeds["rig"], sigma_deg=sigma_deg)
    scene = generate_scene(n_points, seed=seeds["scene"])
    pan, tilt = protocol_schedules(n_frames, pan_step_deg, tilt_range_deg, seeds["schedule"])
    scans = generate_scan_set(
        spec,
        scene,
        pan,
        tilt,
        outlier_fraction=outlier_fraction,
        seed=seeds["scan"],
        n_correspondences=n_correspondences,
        tolerance_sigma_deg=tolerance_sigma_deg,
    )
    return SyntheticDataset(spec, scans, {"seed": seed, **seeds})
