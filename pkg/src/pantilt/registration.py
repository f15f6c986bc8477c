"""Pan-tilt frame registration.

Poses are seeded from servo pulses, correspondences are screened by how far
apart their pre-oriented endpoints lie relative to the servo's angular
uncertainty, and the surviving pairs refine the pose of the newer frame by
alternating closed-form solves for the pan and tilt angles.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .calibration import RigCalibration
from .errors import DegenerateSystemError
from .geometry import (
    PanTiltPose,
    RotationAxis,
    apply,
    as_points,
    axis_rotation_matrix,
    invert_rigid,
    pan_tilt_transform,
    rodrigues_decomposition,
)
from .servo_model import pulse_to_angle, sigma_to_tolerance

log = logging.getLogger(__name__)

MIN_INLIERS = 3
# placeholder servo std (degrees) used when neither config nor calibration provides one
DEFAULT_SIGMA_DEG = 0.2


@dataclass(frozen=True, eq=False)
class Frame:
    frame_id: int
    points: np.ndarray  # (N, 3) local camera coordinates, meters
    pan_pulse: float
    tilt_pulse: float

    def __post_init__(self):
        pts = as_points(self.points)
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"frame {self.frame_id} has non-finite points")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Keypoint pairs between frames ``frame_l`` and ``frame_r``.

    ``left`` and ``right`` are (N, 3) arrays in each frame's local
    coordinates; ``accepted`` flags the pairs that passed screening.
    """

    left: np.ndarray
    right: np.ndarray
    accepted: np.ndarray | None = None
    frame_l: int = 0
    frame_r: int = 1

    def __post_init__(self):
        left = as_points(self.left)
        right = as_points(self.right)
        if left.shape != right.shape:
            raise ValueError(f"left/right shapes differ: {left.shape} vs {right.shape}")
        if self.accepted is None:
            mask = np.ones(len(left), dtype=bool)
        else:
            mask = np.asarray(self.accepted, dtype=bool).reshape(-1)
        if mask.shape != (len(left),):
            raise ValueError(f"mask has {mask.size} entries for {len(left)} pairs")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        object.__setattr__(self, "accepted", mask)

    def __len__(self) -> int:
        return len(self.left)

    @property
    def n_accepted(self) -> int:
        return int(self.accepted.sum())

    def inliers(self) -> tuple[np.ndarray, np.ndarray]:
        return self.left[self.accepted], self.right[self.accepted]


@dataclass(frozen=True)
class RegistrationResult:
    frame_id: int
    pose: PanTiltPose
    seed_pose: PanTiltPose
    inlier_count: int
    residual_rms: float  # meters
    fallback: bool = False


@dataclass(frozen=True)
class RegistrationConfig:
    tolerance_sigma_deg: float | None = None  # None: take it from the calibration
    alternations: int = 1
    seed_only: bool = False

    def __post_init__(self):
        if self.alternations < 1:
            raise ValueError(f"alternations must be >= 1, got {self.alternations}")
        if self.tolerance_sigma_deg is not None and not self.tolerance_sigma_deg >= 0:
            raise ValueError(f"tolerance_sigma_deg must be >= 0, got {self.tolerance_sigma_deg}")

    def tolerance(self, rig: RigCalibration) -> float:
        """Angular tolerance (radians) used for outlier rejection."""
        sigma = self.tolerance_sigma_deg
        if sigma is None:
            sigma = rig.max_sigma if rig.max_sigma > 0 else DEFAULT_SIGMA_DEG
        return sigma_to_tolerance(sigma)


def seed_pose(rig: RigCalibration, frame: Frame) -> PanTiltPose:
    """Coarse pose from the commanded servo pulses alone."""
    alpha = pulse_to_angle(rig.pan_map, frame.pan_pulse)
    beta = pulse_to_angle(rig.tilt_map, frame.tilt_pulse)
    return PanTiltPose(math.radians(alpha), math.radians(beta))


def preorient(rig: RigCalibration, pose: PanTiltPose, point) -> np.ndarray:
    """Local point(s) expressed in the reference frame under ``pose``."""
    return apply(pan_tilt_transform(rig, pose), point)


def reject_outliers(
    rig: RigCalibration,
    pose_l: PanTiltPose,
    pose_r: PanTiltPose,
    corr: CorrespondenceSet,
    tolerance_theta: float,
) -> CorrespondenceSet:
    """Flag pairs whose pre-oriented endpoints are farther apart than ``d * theta``.

    ``d`` is the range of the left keypoint from the reference origin, so the
    bound is the arc length a point at that range sweeps when the estimated
    angle is off by ``tolerance_theta``. A pair is kept only when its
    distance is strictly below the bound.
    """
    if tolerance_theta < 0:
        raise ValueError(f"tolerance_theta must be >= 0, got {tolerance_theta}")
    if len(corr) == 0:
        return corr
    hat_l = preorient(rig, pose_l, corr.left)
    hat_r = preorient(rig, pose_r, corr.right)
    dist = np.linalg.norm(hat_l - hat_r, axis=1)
    eps = np.linalg.norm(hat_l, axis=1) * tolerance_theta
    return replace(corr, accepted=dist < eps)


def build_axis_system(axis: RotationAxis, sources, targets) -> tuple[np.ndarray, np.ndarray]:
    """Stack ``A x = b`` with ``x = [cos t, sin t, 1]`` for rotating sources onto targets.

    Row block ``i`` of ``A`` holds the cosine, sine and constant terms of
    source ``i`` rotated about ``axis``; block ``i`` of ``b`` is target ``i``.
    """
    sources = as_points(sources)
    targets = as_points(targets)
    if sources.shape != targets.shape or len(sources) == 0:
        raise ValueError(f"need matching non-empty point sets, got {sources.shape} and {targets.shape}")
    c_vec, s_vec, k_vec = rodrigues_decomposition(axis, sources)
    a = np.stack([c_vec, s_vec, k_vec], axis=2).reshape(-1, 3)
    return a, targets.reshape(-1)


def solve_angle(a: np.ndarray, b: np.ndarray, rank_tol: float = 1e-9) -> float:
    """Least-squares angle of ``A [cos t, sin t, 1]^T = b``.

    The constant column is moved to the right-hand side, the remaining two
    columns are solved by SVD least squares without the unit-circle
    constraint, and the angle is recovered with ``arctan2``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    reduced = b - a[:, 2]
    trig = a[:, :2]
    (cos_t, sin_t), _, rank, sv = np.linalg.lstsq(trig, reduced, rcond=None)
    scale = max(1.0, float(np.max(np.abs(a[:, 2]), initial=0.0)))
    if rank < 2 or sv[-1] <= rank_tol * scale:
        raise DegenerateSystemError(
            f"angle columns are rank deficient (singular values {sv.tolist()})"
        )
    return math.atan2(sin_t, cos_t)


def _rms(diff: np.ndarray) -> float:
    if len(diff) == 0:
        return 0.0
    return float(np.sqrt(np.mean(np.einsum("ij,ij->i", diff, diff))))


def pose_residual(rig: RigCalibration, targets, sources, pose: PanTiltPose) -> float:
    """RMS distance between ``targets`` and ``sources`` mapped through ``pose``."""
    return _rms(as_points(targets) - preorient(rig, pose, sources))


def axis_bound_solve(
    rig: RigCalibration,
    corr: CorrespondenceSet,
    pose_l: PanTiltPose,
    seed_r: PanTiltPose,
    alternations: int = 1,
    frame_id: int | None = None,
) -> RegistrationResult:
    """Refine the pose of the right frame against the fixed left frame.

    Only accepted pairs are used. Each alternation solves the pan angle with
    tilt held at its current value, then the tilt angle with the fresh pan
    angle. Both half-steps are exact minimizations of the summed squared
    pair distance over their angle. Falls back to ``seed_r`` when fewer than
    three pairs remain or the system is degenerate.
    """
    if alternations < 1:
        raise ValueError(f"alternations must be >= 1, got {alternations}")
    if frame_id is None:
        frame_id = corr.frame_r
    left, right = corr.inliers()
    targets = preorient(rig, pose_l, left)
    n = len(left)

    def fallback(reason: str) -> RegistrationResult:
        log.warning("frame %s: keeping seed pose (%s)", frame_id, reason)
        return RegistrationResult(
            frame_id=frame_id,
            pose=seed_r,
            seed_pose=seed_r,
            inlier_count=n,
            residual_rms=pose_residual(rig, targets, right, seed_r),
            fallback=True,
        )

    if n < MIN_INLIERS:
        return fallback(f"{n} accepted pairs, need {MIN_INLIERS}")

    beta = seed_r.beta
    try:
        for _ in range(alternations):
            tilted = apply(axis_rotation_matrix(rig.tilt_axis, beta), right)
            alpha = solve_angle(*build_axis_system(rig.pan_axis, tilted, targets))
            unpanned = apply(invert_rigid(axis_rotation_matrix(rig.pan_axis, alpha)), targets)
            beta = solve_angle(*build_axis_system(rig.tilt_axis, right, unpanned))
    except DegenerateSystemError as exc:
        return fallback(str(exc))

    pose = PanTiltPose(alpha, beta)
    return RegistrationResult(
        frame_id=frame_id,
        pose=pose,
        seed_pose=seed_r,
        inlier_count=n,
        residual_rms=pose_residual(rig, targets, right, pose),
    )


def register_sequence(
    rig: RigCalibration,
    frames,
    correspondences,
    config: RegistrationConfig | None = None,
) -> list[RegistrationResult]:
    """Chain pairwise registrations along a frame sequence.

    Frame 0 is the reference and keeps its seed pose. Frame ``i`` is refined
    against frame ``i - 1`` at that frame's already refined pose, using
    ``correspondences[i - 1]``.
    """
    config = config or RegistrationConfig()
    frames = list(frames)
    correspondences = list(correspondences)
    if not frames:
        return []
    if len(correspondences) != len(frames) - 1:
        raise ValueError(
            f"need {len(frames) - 1} correspondence sets for {len(frames)} frames, "
            f"got {len(correspondences)}"
        )
    tolerance = config.tolerance(rig)

    first = frames[0]
    pose0 = seed_pose(rig, first)
    results = [
        RegistrationResult(
            frame_id=first.frame_id, pose=pose0, seed_pose=pose0, inlier_count=0, residual_rms=0.0
        )
    ]
    for frame, corr in zip(frames[1:], correspondences):
        pose_l = results[-1].pose
        seed_r = seed_pose(rig, frame)
        screened = reject_outliers(rig, pose_l, seed_r, corr, tolerance)
        if config.seed_only:
            left, right = screened.inliers()
            result = RegistrationResult(
                frame_id=frame.frame_id,
                pose=seed_r,
                seed_pose=seed_r,
                inlier_count=screened.n_accepted,
                residual_rms=pose_residual(rig, preorient(rig, pose_l, left), right, seed_r),
            )
        else:
            result = axis_bound_solve(
                rig, screened, pose_l, seed_r, config.alternations, frame_id=frame.frame_id
            )
        log.debug(
            "frame %d: %d/%d pairs accepted, rms %.3g m",
            frame.frame_id,
            screened.n_accepted,
            len(corr),
            result.residual_rms,
        )
        results.append(result)
    return results
