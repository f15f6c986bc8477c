"""Rotations about arbitrary axes and the composite pan-tilt transform.

Conventions: radians, right-handed rotations (counter-clockwise looking down
the direction vector), 4x4 homogeneous matrices acting on column vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import InvalidAxisError

if TYPE_CHECKING:
    from .calibration import RigCalibration

UNIT_TOL = 1e-9


def wrap_angle(theta: float) -> float:
    """Map an angle to the half-open interval (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped == -math.pi:
        wrapped = math.pi
    return wrapped


def as_vec3(v, name: str = "vector") -> np.ndarray:
    arr = np.array(v, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have 3 components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite components: {arr}")
    return arr


def as_points(points) -> np.ndarray:
    """Coerce to a float (N, 3) array; an empty input yields shape (0, 3)."""
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return np.zeros((0, 3))
    arr = arr.reshape(-1, 3)
    return arr


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True, eq=False)
class RotationAxis:
    """A rotation axis line: unit ``direction`` through ``center`` (meters).

    Any point of the line is a valid center; two axes describing the same
    line with different centers produce identical rotations.
    """

    direction: np.ndarray
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        d = as_vec3(self.direction, "axis direction")
        c = as_vec3(self.center, "axis center")
        norm = float(np.linalg.norm(d))
        if abs(norm - 1.0) > UNIT_TOL:
            raise InvalidAxisError(f"axis direction must be unit length, |n| = {norm!r}")
        d.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "center", c)

    @classmethod
    def normalized(cls, direction, center=(0.0, 0.0, 0.0)) -> RotationAxis:
        d = as_vec3(direction, "axis direction")
        norm = float(np.linalg.norm(d))
        if norm == 0.0:
            raise InvalidAxisError("axis direction is the zero vector")
        return cls(d / norm, center)

    def transformed(self, transform: np.ndarray) -> RotationAxis:
        """The same physical axis expressed after a rigid ``transform``."""
        rot = transform[:3, :3]
        return RotationAxis.normalized(rot @ self.direction, apply(transform, self.center))

    def distance_to(self, point) -> float:
        v = as_vec3(point) - self.center
        return float(np.linalg.norm(v - self.direction * (self.direction @ v)))

    def __repr__(self) -> str:
        return f"RotationAxis(direction={self.direction.tolist()}, center={self.center.tolist()})"


@dataclass(frozen=True)
class PanTiltPose:
    """Pan (``alpha``) and tilt (``beta``) angles in radians, wrapped to (-pi, pi]."""

    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError(f"pose angles must be finite, got ({self.alpha}, {self.beta})")
        object.__setattr__(self, "alpha", wrap_angle(float(self.alpha)))
        object.__setattr__(self, "beta", wrap_angle(float(self.beta)))

    @classmethod
    def from_degrees(cls, alpha_deg: float, beta_deg: float) -> PanTiltPose:
        return cls(math.radians(alpha_deg), math.radians(beta_deg))

    def degrees(self) -> tuple[float, float]:
        return math.degrees(self.alpha), math.degrees(self.beta)


def _check_axis(axis: RotationAxis) -> None:
    norm = float(np.linalg.norm(axis.direction))
    if abs(norm - 1.0) > UNIT_TOL:
        raise InvalidAxisError(f"axis direction must be unit length, |n| = {norm!r}")


def rotation_part(axis: RotationAxis, theta: float) -> np.ndarray:
    """3x3 rotation ``cos(t)(I - nn^T) + sin(t)[n]x + nn^T``."""
    n = axis.direction
    nnt = np.outer(n, n)
    return math.cos(theta) * (np.eye(3) - nnt) + math.sin(theta) * skew(n) + nnt


def axis_rotation_matrix(axis: RotationAxis, theta: float) -> np.ndarray:
    """Homogeneous rotation by ``theta`` about the line through ``axis.center``.

    Equivalent to ``T @ R(theta) @ inv(T)`` with ``T`` the translation to the
    axis center.
    """
    _check_axis(axis)
    rot = rotation_part(axis, theta)
    out = np.eye(4)
    out[:3, :3] = rot
    out[:3, 3] = axis.center - rot @ axis.center
    return out


def pan_tilt_transform(rig: RigCalibration, pose: PanTiltPose) -> np.ndarray:
    """Local camera frame to reference frame: tilt rotation first, then pan."""
    return axis_rotation_matrix(rig.pan_axis, pose.alpha) @ axis_rotation_matrix(
        rig.tilt_axis, pose.beta
    )


def apply(transform: np.ndarray, point) -> np.ndarray:
    """Apply a homogeneous transform to one point (3,) or a stack (N, 3)."""
    transform = np.asarray(transform, dtype=float)
    pts = np.asarray(point, dtype=float)
    if pts.ndim == 1:
        h = transform @ np.append(pts, 1.0)
        return h[:3] / h[3]
    pts = as_points(pts)
    h = pts @ transform[:3, :3].T + transform[:3, 3]
    w = pts @ transform[3, :3] + transform[3, 3]
    return h / w[:, None]


def invert_rigid(transform: np.ndarray) -> np.ndarray:
    rot = transform[:3, :3]
    out = np.eye(4)
    out[:3, :3] = rot.T
    out[:3, 3] = -rot.T @ transform[:3, 3]
    return out


def rodrigues_decomposition(axis: RotationAxis, point) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split the rotated position of ``point`` into (cos, sin, constant) terms.

    For every angle ``t``::

        apply(axis_rotation_matrix(axis, t), point) == cos(t)*c + sin(t)*s + k

    ``point`` may also be an (N, 3) stack, giving (N, 3) arrays.
    """
    _check_axis(axis)
    n = axis.direction
    v = np.asarray(point, dtype=float) - axis.center
    along = v @ n
    parallel = np.multiply.outer(along, n)
    c_vec = v - parallel
    s_vec = np.cross(n, v)
    k_vec = parallel + axis.center
    return c_vec, s_vec, k_vec
