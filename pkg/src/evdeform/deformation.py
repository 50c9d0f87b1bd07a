"""Reference-frame rebasing, marker triangulation and deformation series.

Triangulation is a linear intersection over the undistorted rays of every
contributing camera followed by one Gauss-Newton step on reprojection error.
Positions come out in the reference camera's frame, multiplied by the rig's
metric scale when one has been anchored.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptySeries, RankDeficient, UnknownCamera, ZeroObservedDistance
from .extraction import CorrespondingPoint
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    load_calibration_document,
    relative_pose,
    save_calibration_document,
    triangulate_linear,
    undistort_pixels,
)

Array = np.ndarray

_CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class RigCalibration:
    """Calibrated multi-camera rig expressed relative to a reference camera."""

    reference_camera: int
    camera_ids: tuple[int, ...]
    intrinsics: tuple[CameraIntrinsics, ...]
    poses: tuple[CameraPose, ...]
    metric_scale: float | None = None

    def __post_init__(self):
        if self.reference_camera not in self.camera_ids:
            raise UnknownCamera(f"reference camera {self.reference_camera} not in rig")
        ref = self.poses[self.camera_ids.index(self.reference_camera)]
        if (
            np.abs(ref.rotation - np.eye(3)).max() > 1e-12
            or np.abs(ref.translation).max() > 1e-12
        ):
            raise ValueError("reference camera pose must be identity/zero")

    def index(self, camera_id: int) -> int:
        try:
            return self.camera_ids.index(camera_id)
        except ValueError:
            raise UnknownCamera(f"camera {camera_id} not in rig") from None

    @property
    def scale(self) -> float:
        return 1.0 if self.metric_scale is None else self.metric_scale


def rebase_extrinsics(
    world_poses: Sequence[CameraPose],
    reference: int,
    intrinsics: Sequence[CameraIntrinsics],
    camera_ids: Sequence[int] | None = None,
    metric_scale: float | None = None,
) -> RigCalibration:
    """Re-express all camera poses relative to the chosen reference camera."""
    ids = tuple(camera_ids) if camera_ids is not None else tuple(range(len(world_poses)))
    if reference not in ids:
        raise UnknownCamera(f"reference camera {reference} not among {ids}")
    ref_pose = world_poses[ids.index(reference)]
    poses = tuple(
        CameraPose.identity() if cid == reference else relative_pose(ref_pose, pose)
        for cid, pose in zip(ids, world_poses)
    )
    return RigCalibration(reference, ids, tuple(intrinsics), poses, metric_scale)


def rig_from_calibration(result, metric_scale: float | None = None) -> RigCalibration:
    """Wrap a CalibrationResult (already reference-relative) as a rig."""
    return RigCalibration(
        result.reference_camera,
        tuple(result.camera_ids),
        tuple(result.intrinsics),
        tuple(result.poses),
        metric_scale,
    )


def save_rig(path, rig: RigCalibration) -> None:
    save_calibration_document(
        path,
        rig.reference_camera,
        [(cid, intr, pose) for cid, intr, pose in zip(rig.camera_ids, rig.intrinsics, rig.poses)],
    )


def load_rig(path, metric_scale: float | None = None) -> RigCalibration:
    reference, cameras = load_calibration_document(path)
    ids = tuple(c[0] for c in cameras)
    return RigCalibration(
        reference,
        ids,
        tuple(c[1] for c in cameras),
        tuple(c[2] for c in cameras),
        metric_scale,
    )


@dataclass(frozen=True)
class TriangulatedPoint:
    position: Array  # reference frame, scaled by metric_scale when present
    residual_px: float
    camera_count: int


def triangulate(rig: RigCalibration, observation: CorrespondingPoint) -> TriangulatedPoint:
    """Intersect the undistorted rays of one corresponding point.

    Raises RankDeficient for fewer than two cameras or near-parallel rays
    (condition number of the normal system above 1e12).
    """
    rows = [rig.index(o.camera_id) for o in observation.observations]
    if len(rows) < 2:
        raise RankDeficient(f"{len(rows)} camera(s) cannot intersect a point")
    ideal = []
    mats = []
    for o, i in zip(observation.observations, rows):
        intr = rig.intrinsics[i]
        px = undistort_pixels(intr, o.pixel.reshape(1, 2))[0]
        ideal.append(intr.normalized_from_pixel(px))
        mats.append(rig.poses[i].matrix)
    ideal = np.array(ideal)
    mats = np.stack(mats)
    X, s = triangulate_linear(mats, ideal)
    if s[2] < 1e-15 or (s[0] / s[2]) ** 2 > _CONDITION_LIMIT:
        raise RankDeficient(
            f"normal system condition {(s[0] / max(s[2], 1e-300)) ** 2:.3g} exceeds 1e12"
        )
    if abs(X[3]) < 1e-15:
        raise RankDeficient("intersection at infinity")
    p = X[:3] / X[3]

    # one Gauss-Newton step on the pixel reprojection error
    p = _refine_point(rig, rows, observation, p)
    residual = _rms_residual(rig, rows, observation, p)
    return TriangulatedPoint(p * rig.scale, residual, len(rows))


def _refine_point(rig, rows, observation, p: Array) -> Array:
    J = np.zeros((2 * len(rows), 3))
    r = np.zeros(2 * len(rows))
    for k, (o, i) in enumerate(zip(observation.observations, rows)):
        intr, pose = rig.intrinsics[i], rig.poses[i]
        cam = pose.transform(p)
        x, y, z = cam
        if z <= 1e-12:
            return p
        u = x / z * intr.fx + intr.cx
        v = y / z * intr.fy + intr.cy
        obs = undistort_pixels(intr, o.pixel.reshape(1, 2))[0]
        r[2 * k] = u - obs[0]
        r[2 * k + 1] = v - obs[1]
        duv = np.array(
            [[intr.fx / z, 0.0, -intr.fx * x / z**2], [0.0, intr.fy / z, -intr.fy * y / z**2]]
        )
        J[2 * k : 2 * k + 2] = duv @ pose.rotation
    JtJ = J.T @ J
    try:
        step = np.linalg.solve(JtJ, -J.T @ r)
    except np.linalg.LinAlgError:
        return p
    return p + step


def _rms_residual(rig, rows, observation, p: Array) -> float:
    errs = []
    for o, i in zip(observation.observations, rows):
        intr, pose = rig.intrinsics[i], rig.poses[i]
        cam = pose.transform(p)
        if cam[2] <= 1e-12:
            return float("inf")
        u = cam[0] / cam[2] * intr.fx + intr.cx
        v = cam[1] / cam[2] * intr.fy + intr.cy
        obs = undistort_pixels(intr, o.pixel.reshape(1, 2))[0]
        errs.append((u - obs[0]) ** 2 + (v - obs[1]) ** 2)
    return float(np.sqrt(np.mean(errs)))


@dataclass(frozen=True)
class MeasureConfig:
    residual_threshold_px: float = 1.0
    baseline_window: int = 50


@dataclass
class DeformationSeries:
    """Timestamped 3D marker positions in the reference camera frame."""

    reference_camera: int
    t_us: Array
    positions: Array  # (k, 3)
    residuals_px: Array
    camera_counts: Array
    dropped: int
    baseline_window: int
    metric: bool

    def __post_init__(self):
        if len(self.t_us) and np.any(np.diff(self.t_us) <= 0):
            raise ValueError("sample timestamps must be strictly increasing")

    def __len__(self):
        return len(self.t_us)

    @property
    def baseline(self) -> Array:
        k = min(self.baseline_window, len(self))
        return self.positions[:k].mean(axis=0)

    @property
    def displacements(self) -> Array:
        return self.positions - self.baseline

    @property
    def max_amplitude(self) -> float:
        return float(np.linalg.norm(self.displacements, axis=1).max())

    def summary(self) -> dict:
        d = self.displacements
        axes = {}
        for k, name in enumerate("XYZ"):
            axes[name] = {
                "min": float(d[:, k].min()),
                "max": float(d[:, k].max()),
                "rms": float(np.sqrt(np.mean(d[:, k] ** 2))),
            }
        return {
            "samples": int(len(self)),
            "dropped": int(self.dropped),
            "metric_units": bool(self.metric),
            "reference_camera": int(self.reference_camera),
            "max_amplitude": self.max_amplitude,
            "axes": axes,
        }


def measure_deformation(
    rig: RigCalibration,
    matched: Sequence[CorrespondingPoint],
    config: MeasureConfig = MeasureConfig(),
) -> DeformationSeries:
    """Triangulate a matched sequence into a deformation time series.

    Samples whose RMS reprojection residual exceeds the threshold are
    dropped (counted); raises EmptySeries when nothing survives.
    """
    ts, pos, res, cams = [], [], [], []
    dropped = 0
    last_t = -np.inf
    for cp in matched:
        try:
            tri = triangulate(rig, cp)
        except RankDeficient:
            dropped += 1
            continue
        if tri.residual_px > config.residual_threshold_px:
            dropped += 1
            continue
        t = cp.mean_t
        if t <= last_t:
            dropped += 1
            continue
        last_t = t
        ts.append(t)
        pos.append(tri.position)
        res.append(tri.residual_px)
        cams.append(tri.camera_count)
    if not ts:
        raise EmptySeries(f"no sample passed the {config.residual_threshold_px} px filter")
    return DeformationSeries(
        reference_camera=rig.reference_camera,
        t_us=np.array(ts),
        positions=np.array(pos),
        residuals_px=np.array(res),
        camera_counts=np.array(cams, dtype=np.int64),
        dropped=dropped,
        baseline_window=config.baseline_window,
        metric=rig.metric_scale is not None,
    )


def anchor_scale(
    rig: RigCalibration, known_distance: float, observed_pair: tuple[Array, Array]
) -> RigCalibration:
    """Fix the metric scale so the observed pair's separation becomes
    known_distance. Positions must come from this rig's triangulation."""
    if known_distance <= 0:
        raise ValueError("known_distance must be positive")
    a, b = (np.asarray(p, dtype=float) for p in observed_pair)
    dist = float(np.linalg.norm(a - b))
    if dist < 1e-12:
        raise ZeroObservedDistance("anchor pair separation is zero")
    return replace(rig, metric_scale=rig.scale * known_distance / dist)


def camera_centers(rig: RigCalibration) -> dict[int, Array]:
    """Camera centers in the reference frame at the rig's current scale."""
    return {cid: pose.center * rig.scale for cid, pose in zip(rig.camera_ids, rig.poses)}


# ---------------------------------------------------------------------------
# series CSV + summary
# ---------------------------------------------------------------------------

SERIES_HEADER = "t_us,X,Y,Z,residual_px,cameras"


def write_series(path, series: DeformationSeries) -> None:
    lines = [SERIES_HEADER]
    for i in range(len(series)):
        p = series.positions[i]
        lines.append(
            f"{int(round(series.t_us[i]))},{float(p[0])!r},{float(p[1])!r},{float(p[2])!r},"
            f"{float(series.residuals_px[i])!r},{int(series.camera_counts[i])}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_summary(path, series: DeformationSeries) -> None:
    Path(path).write_text(json.dumps(series.summary(), indent=2) + "\n")
