"""Outlier rejection against the current calibration, and distortion fitting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import AllRejected
from ..geometry import (
    CameraIntrinsics,
    CameraPose,
    fundamental_from_calibrated,
    relative_pose,
    symmetric_epipolar_distance,
)

Array = np.ndarray


@dataclass(frozen=True)
class Removal:
    point_index: int
    reason: str  # "epipolar" or "reprojection"
    cameras: tuple[int, ...]
    value: float


@dataclass
class RejectionReport:
    kept: Array  # indices into the input columns
    removed: list[Removal]

    def __len__(self):
        return len(self.removed)


def reject_outliers(
    pixels: Array,
    visibility: Array,
    intrinsics: list[CameraIntrinsics],
    poses: list[CameraPose],
    points3d: Array,
    d_h: float = 2.0,
    xi_th: float = 1.0,
) -> RejectionReport:
    """Drop correspondences violating epipolar or reprojection thresholds.

    A point is removed when any visible camera pair's symmetric point-to-
    epipolar-line distance exceeds d_h or any per-camera reprojection error
    exceeds xi_th. Pixels are expected in the undistorted frame. Raises
    AllRejected when nothing survives.
    """
    m, n, _ = pixels.shape
    removed: dict[int, Removal] = {}

    for a in range(m):
        for b in range(a + 1, m):
            shared = np.flatnonzero(visibility[a] & visibility[b])
            if not len(shared):
                continue
            pair = fundamental_from_calibrated(
                intrinsics[a], intrinsics[b], relative_pose(poses[a], poses[b])
            )
            d = symmetric_epipolar_distance(
                pair.fundamental, pixels[a, shared], pixels[b, shared]
            )
            for col, dist in zip(shared[d > d_h], d[d > d_h]):
                col = int(col)
                if col not in removed or removed[col].value < dist:
                    removed[col] = Removal(col, "epipolar", (a, b), float(dist))

    for j in range(m):
        cols = np.flatnonzero(visibility[j])
        if not len(cols):
            continue
        cam = poses[j].transform(points3d[:, cols].T)
        z = cam[:, 2]
        safe_z = np.where(np.abs(z) < 1e-12, 1e-12, z)
        proj = intrinsics[j].pixel_from_normalized(cam[:, :2] / safe_z[:, None])
        err = np.linalg.norm(proj - pixels[j, cols], axis=1)
        err = np.where(z <= 0, np.inf, err)  # behind the camera is never an inlier
        for col, e in zip(cols[err > xi_th], err[err > xi_th]):
            col = int(col)
            if col not in removed or removed[col].value < e:
                removed[col] = Removal(col, "reprojection", (j,), float(e))

    visible = np.flatnonzero(visibility.any(axis=0))
    kept = np.array([i for i in visible if i not in removed], dtype=np.int64)
    if len(kept) == 0:
        raise AllRejected(
            f"all {len(visible)} correspondences exceeded the thresholds"
        )
    return RejectionReport(kept, [removed[i] for i in sorted(removed)])


@dataclass(frozen=True)
class DistortionFit:
    k1: float
    k2: float
    p1: float
    p2: float
    skipped: bool = False
    reason: str | None = None

    @property
    def coefficients(self) -> Array:
        return np.array([self.k1, self.k2, self.p1, self.p2])


_SKIPPED = DistortionFit(0.0, 0.0, 0.0, 0.0, skipped=True)


def estimate_distortion(
    points3d: Array,
    observed: Array,
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    min_points: int = 20,
    min_area_fraction: float = 0.3,
) -> DistortionFit:
    """Linear fit of the radial-tangential coefficients, intrinsics frozen.

    Skips (all-zero output, skipped flag) when coverage is too uneven:
    fewer than min_points observations, a bounding box under 30% of the
    sensor area, or all points on one side of the principal point.
    """
    points3d = np.asarray(points3d, dtype=float).reshape(-1, 3)
    observed = np.asarray(observed, dtype=float).reshape(-1, 2)
    n = len(points3d)
    if n < min_points:
        return DistortionFit(0, 0, 0, 0, skipped=True, reason=f"only {n} correspondences")
    span = observed.max(axis=0) - observed.min(axis=0)
    area = span[0] * span[1] / (intrinsics.width * intrinsics.height)
    if area < min_area_fraction:
        return DistortionFit(
            0, 0, 0, 0, skipped=True, reason=f"coverage {area:.0%} of sensor area"
        )
    u, v = observed[:, 0], observed[:, 1]
    if (
        np.all(u < intrinsics.cx)
        or np.all(u > intrinsics.cx)
        or np.all(v < intrinsics.cy)
        or np.all(v > intrinsics.cy)
    ):
        return DistortionFit(0, 0, 0, 0, skipped=True, reason="all points in one half")

    cam = pose.transform(points3d)
    z = cam[:, 2]
    good = z > 0
    x = cam[good, 0] / z[good]
    y = cam[good, 1] / z[good]
    xd = (observed[good, 0] - intrinsics.cx) / intrinsics.fx
    yd = (observed[good, 1] - intrinsics.cy) / intrinsics.fy
    r2 = x * x + y * y
    A = np.zeros((2 * len(x), 4))
    A[0::2, 0] = x * r2
    A[0::2, 1] = x * r2 * r2
    A[0::2, 2] = 2 * x * y
    A[0::2, 3] = r2 + 2 * x * x
    A[1::2, 0] = y * r2
    A[1::2, 1] = y * r2 * r2
    A[1::2, 2] = r2 + 2 * y * y
    A[1::2, 3] = 2 * x * y
    b = np.empty(2 * len(x))
    b[0::2] = xd - x
    b[1::2] = yd - y
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    return DistortionFit(float(coef[0]), float(coef[1]), float(coef[2]), float(coef[3]))
