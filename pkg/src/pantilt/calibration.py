"""Rotation-axis calibration from tracked checkerboard corners.

While the camera sweeps about one servo axis, every board corner observed in
camera coordinates traces an arc of a circle whose plane is perpendicular to
the axis and whose center lies on it. Planes and circles are fitted per
track and then pooled across tracks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError
from .geometry import RotationAxis, as_points
from .servo_model import PulseAngleMap, fit_pulse_angle

_RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CornerTrack:
    corner_id: int
    positions: np.ndarray  # (M, 3), one row per rotation step, capture order

    def __post_init__(self):
        pts = as_points(self.positions).copy()
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"track {self.corner_id} has non-finite positions")
        pts.setflags(write=False)
        object.__setattr__(self, "positions", pts)
        object.__setattr__(self, "corner_id", int(self.corner_id))


@dataclass(frozen=True)
class RigCalibration:
    pan_axis: RotationAxis
    tilt_axis: RotationAxis
    pan_map: PulseAngleMap
    tilt_map: PulseAngleMap

    @classmethod
    def identity(cls) -> RigCalibration:
        """Pan about +y and tilt about +x through the camera origin; 1500 us is 0 deg."""
        servo = PulseAngleMap(scale=0.1, offset=-150.0, sigma=0.0)
        return cls(
            pan_axis=RotationAxis((0.0, 1.0, 0.0)),
            tilt_axis=RotationAxis((1.0, 0.0, 0.0)),
            pan_map=servo,
            tilt_map=servo,
        )

    @property
    def max_sigma(self) -> float:
        return max(self.pan_map.sigma, self.tilt_map.sigma)


def _orient(normal: np.ndarray) -> np.ndarray:
    # deterministic sign: the largest-magnitude component is positive
    return normal if normal[np.argmax(np.abs(normal))] > 0 else -normal


def fit_plane(points) -> tuple[np.ndarray, float]:
    """Orthogonal least-squares plane ``normal . x + d = 0``.

    The normal is the smallest right singular vector of the centered points.
    Its sign is fixed so that the largest-magnitude component is positive.
    """
    pts = as_points(points)
    if len(pts) < 3:
        raise DegenerateGeometryError(f"plane fit needs >= 3 points, got {len(pts)}")
    centroid = pts.mean(axis=0)
    _, sv, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    if sv[0] == 0.0 or sv[1] <= _RANK_TOL * sv[0]:
        raise DegenerateGeometryError("points are coincident or collinear")
    normal = _orient(vt[2])
    return normal, float(-normal @ centroid)


def _plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.zeros(3)
    helper[np.argmin(np.abs(normal))] = 1.0
    u = np.cross(normal, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(normal, u)


def _fit_circle_2d(xy: np.ndarray) -> tuple[np.ndarray, float]:
    # algebraic (Kasa) fit: 2 cx x + 2 cy y + c = x^2 + y^2, r^2 = c + |center|^2
    design = np.column_stack([2.0 * xy, np.ones(len(xy))])
    rhs = np.einsum("ij,ij->i", xy, xy)
    (cx, cy, c), *_ = np.linalg.lstsq(design, rhs, rcond=None)
    center = np.array([cx, cy])
    radius = float(np.sqrt(max(c + center @ center, 0.0)))

    # one Gauss-Newton pass on the geometric residual |q - center| - r
    offsets = xy - center
    dist = np.linalg.norm(offsets, axis=1)
    if np.all(dist > 0):
        jac = np.column_stack([-offsets / dist[:, None], -np.ones(len(xy))])
        step, *_ = np.linalg.lstsq(jac, -(dist - radius), rcond=None)
        if np.all(np.isfinite(step)):
            center = center + step[:2]
            radius = float(radius + step[2])
    return center, radius


def fit_circle_in_plane(points, plane) -> tuple[np.ndarray, float]:
    """Least-squares circle of ``points`` projected onto ``plane = (normal, d)``.

    Returns the 3D center, which lies on the plane, and the radius in meters.
    """
    normal, d = plane
    normal = np.asarray(normal, dtype=float)
    normal = normal / np.linalg.norm(normal)
    pts = as_points(points)
    if len(pts) < 3:
        raise DegenerateGeometryError(f"circle fit needs >= 3 points, got {len(pts)}")

    centroid = pts.mean(axis=0)
    origin = centroid - normal * (normal @ centroid + d)
    u, v = _plane_basis(normal)
    rel = pts - origin
    xy = np.column_stack([rel @ u, rel @ v])

    sv = np.linalg.svd(xy - xy.mean(axis=0), compute_uv=False)
    if sv[0] == 0.0 or sv[1] <= _RANK_TOL * sv[0]:
        raise DegenerateGeometryError("projected points are coincident or collinear")

    center_2d, radius = _fit_circle_2d(xy)
    center = origin + center_2d[0] * u + center_2d[1] * v
    # snap back onto the plane to remove rounding drift
    center = center - normal * (normal @ center + d)
    return center, radius


def _observed_sense(positions: np.ndarray, normal: np.ndarray) -> float:
    """Positive when the positions move counter-clockwise about ``normal``."""
    rel = positions - positions.mean(axis=0)
    return float(np.cross(rel[:-1], rel[1:]).sum(axis=0) @ normal)


def calibrate_axis(tracks, reference_id: int | None = None) -> RotationAxis:
    """Estimate one servo axis from corner tracks captured during its sweep.

    Track positions must be listed in capture order. The direction sign is
    chosen so the camera's rotation from the first to the last capture is
    positive about it; the observed corners therefore move clockwise.

    The direction is the principal direction of the sign-aligned per-track
    plane normals. The axis line passes through the mean of the circle
    centers (taken perpendicular to the direction), and the stored center is
    the point of that line level with the reference track's circle, the
    track with the smallest ``corner_id`` unless ``reference_id`` is given.
    """
    tracks = list(tracks)
    if not tracks:
        raise DegenerateGeometryError("no corner tracks given")

    planes = []
    for track in tracks:
        normal, d = fit_plane(track.positions)
        if _observed_sense(track.positions, normal) > 0:
            normal, d = -normal, -d
        planes.append((normal, d))
    normals = np.array([normal for normal, _ in planes])

    _, _, vt = np.linalg.svd(normals, full_matrices=False)
    direction = vt[0]
    if direction @ normals.sum(axis=0) < 0:
        direction = -direction

    centers = np.array(
        [fit_circle_in_plane(track.positions, plane)[0] for track, plane in zip(tracks, planes)]
    )

    if reference_id is None:
        ref_index = int(np.argmin([t.corner_id for t in tracks]))
    else:
        ids = [t.corner_id for t in tracks]
        if reference_id not in ids:
            raise ValueError(f"reference corner {reference_id} not among tracks")
        ref_index = ids.index(reference_id)

    perpendicular = centers - np.outer(centers @ direction, direction)
    line_point = perpendicular.mean(axis=0)
    center = line_point + direction * (centers[ref_index] @ direction)
    return RotationAxis.normalized(direction, center)


def calibrate_rig(pan_tracks, tilt_tracks, pan_samples, tilt_samples) -> RigCalibration:
    return RigCalibration(
        pan_axis=calibrate_axis(pan_tracks),
        tilt_axis=calibrate_axis(tilt_tracks),
        pan_map=fit_pulse_angle(pan_samples),
        tilt_map=fit_pulse_angle(tilt_samples),
    )
