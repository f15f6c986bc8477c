"""Registration of RGB-D frames captured by a camera on a pan-tilt servo rig."""

__version__ = "0.1.0"

from .calibration import CornerTrack, RigCalibration, calibrate_axis, calibrate_rig
from .errors import (
    ConfigError,
    DegenerateFitError,
    DegenerateGeometryError,
    DegenerateSystemError,
    ExtrapolationWarning,
    InvalidAxisError,
    NumericalError,
    ParseError,
)
from .evaluation import RmseReport, SpatialIndex, nearest_neighbor, rmse_n_closest
from .geometry import (
    PanTiltPose,
    RotationAxis,
    apply,
    axis_rotation_matrix,
    pan_tilt_transform,
    rodrigues_decomposition,
)
from .registration import (
    CorrespondenceSet,
    Frame,
    RegistrationConfig,
    RegistrationResult,
    axis_bound_solve,
    register_sequence,
    reject_outliers,
    seed_pose,
)
from .servo_model import PulseAngleMap, PulseAngleSample, fit_pulse_angle, pulse_to_angle
