"""Linear pulse-width to angle mapping for hobby servos.

Angles are in degrees and pulses in microseconds at this level; the residual
of the linear fit is treated as zero-mean Gaussian noise with std ``sigma``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFitError, ExtrapolationWarning

# Admissible command range of the servos used on the rig.
SERVO_PULSE_MIN_US = 600.0
SERVO_PULSE_MAX_US = 2400.0


@dataclass(frozen=True)
class PulseAngleSample:
    pulse: float  # microseconds
    angle: float  # degrees


@dataclass(frozen=True)
class PulseAngleMap:
    """``angle = scale * pulse + offset`` with residual std ``sigma`` (degrees)."""

    scale: float
    offset: float
    sigma: float = 0.0
    pulse_range: tuple[float, float] = (SERVO_PULSE_MIN_US, SERVO_PULSE_MAX_US)

    def __post_init__(self):
        lo, hi = (float(v) for v in self.pulse_range)
        object.__setattr__(self, "pulse_range", (lo, hi))
        if self.scale == 0 or not math.isfinite(self.scale):
            raise ValueError(f"scale must be finite and non-zero, got {self.scale}")
        if not math.isfinite(self.offset):
            raise ValueError(f"offset must be finite, got {self.offset}")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        if not lo < hi:
            raise ValueError(f"pulse_range must satisfy min < max, got {self.pulse_range}")

    def in_range(self, pulse: float) -> bool:
        lo, hi = self.pulse_range
        return lo <= pulse <= hi

    def angle_to_pulse(self, angle: float) -> float:
        """Inverse mapping; used to command a servo to a target angle."""
        return (angle - self.offset) / self.scale


def fit_pulse_angle(samples) -> PulseAngleMap:
    """Least-squares line through (pulse, angle) samples.

    The line is solved with an SVD-based least-squares routine. ``sigma`` is
    the residual standard deviation with ``n - 2`` degrees of freedom (zero
    when only two samples are given, since the line is then exact).
    """
    samples = list(samples)
    pulses = np.array([s.pulse for s in samples], dtype=float)
    angles = np.array([s.angle for s in samples], dtype=float)
    if len(samples) < 2 or np.unique(pulses).size < 2:
        raise DegenerateFitError(
            f"need at least two distinct pulse values, got {np.unique(pulses).size}"
        )

    # center the pulses so the design matrix is well conditioned
    mean_pulse = pulses.mean()
    design = np.column_stack([pulses - mean_pulse, np.ones_like(pulses)])
    (scale, centered_offset), *_ = np.linalg.lstsq(design, angles, rcond=None)
    offset = centered_offset - scale * mean_pulse

    residuals = angles - (scale * pulses + offset)
    dof = len(samples) - 2
    sigma = float(np.sqrt(residuals @ residuals / dof)) if dof > 0 else 0.0
    return PulseAngleMap(
        scale=float(scale),
        offset=float(offset),
        sigma=sigma,
        pulse_range=(float(pulses.min()), float(pulses.max())),
    )


def pulse_to_angle(pulse_map: PulseAngleMap, pulse: float) -> float:
    """Angle in degrees for a pulse width in microseconds.

    Pulses outside the calibrated range are still mapped (the model is
    linear) but raise an :class:`ExtrapolationWarning`.
    """
    if not pulse_map.in_range(pulse):
        warnings.warn(
            f"pulse {pulse} us outside calibrated range {pulse_map.pulse_range}",
            ExtrapolationWarning,
            stacklevel=2,
        )
    return pulse_map.scale * pulse + pulse_map.offset


def angular_tolerance(pulse_map: PulseAngleMap) -> float:
    """Allowed angular deviation of +/- 3 sigma, in radians."""
    return sigma_to_tolerance(pulse_map.sigma)


def sigma_to_tolerance(sigma_deg: float) -> float:
    return 3.0 * sigma_deg * math.pi / 180.0
