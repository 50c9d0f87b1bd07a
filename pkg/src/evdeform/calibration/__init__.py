"""Self-calibration of the camera array from corresponding points."""

from .bundle import BundleOptions, BundleResult, bundle_adjust
from .cleanup import DistortionFit, RejectionReport, estimate_distortion, reject_outliers
from .factorization import (
    MeasurementMatrix,
    ProjectiveReconstruction,
    build_measurement_matrix,
    projective_factorize,
)
from .kruppa import solve_kruppa_focal
from .pipeline import (
    CalibrationConfig,
    CalibrationResult,
    IterationRecord,
    calibrate,
    write_iteration_log,
)
from .upgrade import EuclideanUpgrade, UpgradeResult, euclidean_upgrade

__all__ = [
    "BundleOptions",
    "BundleResult",
    "CalibrationConfig",
    "CalibrationResult",
    "DistortionFit",
    "EuclideanUpgrade",
    "IterationRecord",
    "MeasurementMatrix",
    "ProjectiveReconstruction",
    "RejectionReport",
    "UpgradeResult",
    "build_measurement_matrix",
    "bundle_adjust",
    "calibrate",
    "estimate_distortion",
    "euclidean_upgrade",
    "projective_factorize",
    "reject_outliers",
    "solve_kruppa_focal",
    "write_iteration_log",
]
