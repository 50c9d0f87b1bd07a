"""Exception and warning types shared across the toolkit."""


class EvdeformError(Exception):
    """Base class for all toolkit errors."""


# geometry

class PointBehindCamera(EvdeformError):
    """Projection requested for a point with non-positive depth."""


class NoConvergence(EvdeformError):
    """Iterative undistortion failed to reach its residual target."""


class DegenerateBaseline(EvdeformError):
    """Fundamental matrix requested for a (near) zero baseline."""


class InsufficientPoints(EvdeformError):
    """Too few correspondences for the requested estimator."""


class NoModel(EvdeformError):
    """Every minimal sample was degenerate; no model found."""


# event streams

class ParseError(EvdeformError):
    """Malformed event file."""


class BoundsError(EvdeformError):
    """Event pixel outside the declared sensor size."""


# marker extraction

class EmptyCluster(EvdeformError):
    """Cluster statistics requested for an empty event set."""


class StreamTooShort(EvdeformError):
    """Fewer accepted events than one accumulation window."""


# self-calibration

class InsufficientCorrespondences(EvdeformError):
    """Not enough corresponding points to calibrate."""


class SingularConfiguration(EvdeformError):
    """Factorization failed (SVD breakdown or undefined epipole)."""


class DegenerateMotion(EvdeformError):
    """Focal-length system is rank deficient for this camera pair."""


class NegativeFocalSquared(EvdeformError):
    """Focal-length solve produced a non-positive or non-finite f²."""


class IndefiniteG(EvdeformError):
    """Upgrade quadric lost too much energy to PSD clamping."""


class CheiralityFailure(EvdeformError):
    """No global sign choice puts the majority of points in front."""


class DivergedBA(EvdeformError):
    """Bundle adjustment damping exceeded its ceiling with no accepted step."""


class AllRejected(EvdeformError):
    """Outlier rejection removed every correspondence."""


class CalibrationFailed(EvdeformError):
    """Calibration loop hit its iteration cap above the target error.

    Carries the best result seen so far in ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


# deformation

class UnknownCamera(EvdeformError):
    """Referenced camera id is not part of the rig."""


class RankDeficient(EvdeformError):
    """Triangulation rays are (near) parallel or too few."""


class EmptySeries(EvdeformError):
    """No triangulated sample survived the residual filter."""


class ZeroObservedDistance(EvdeformError):
    """Scale anchor pair has (near) zero separation."""


# simulator / config

class ConfigError(EvdeformError):
    """Scenario or pipeline configuration violates an invariant."""


class DegenerateTrajectoryWarning(UserWarning):
    """Marker trajectory is near-planar; self-calibration is ill-conditioned."""


class FieldOfViewWarning(UserWarning):
    """Marker leaves a camera's field of view for over 10% of the run."""
