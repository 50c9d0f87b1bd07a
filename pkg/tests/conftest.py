"""Shared fixtures: a compact synthetic rig and correspondence builders."""
from __future__ import annotations

import numpy as np
import pytest

from evdeform.extraction import CenterObservation, CorrespondingPoint, EventCluster
from evdeform.geometry import CameraIntrinsics, project_pinhole
from evdeform.simulator import look_at_pose, paper_rig_cameras


@pytest.fixture
def intrinsics_1800() -> CameraIntrinsics:
    return CameraIntrinsics(1800.0, 1800.0, 639.5, 359.5)


@pytest.fixture
def rig_cameras():
    """The canonical three-camera rig (intrinsics, pose) tuples."""
    return paper_rig_cameras()


@pytest.fixture
def small_rig(intrinsics_1800):
    """Two convergent cameras a metre apart looking at a 5 m target."""
    target = np.array([0.0, 0.0, 5000.0])
    p1 = look_at_pose(np.array([0.0, 0.0, 0.0]), target)
    p2 = look_at_pose(np.array([-1000.0, 120.0, 80.0]), target + np.array([50.0, -40.0, 0.0]))
    return intrinsics_1800, [p1, p2]


def synthetic_observation(camera_id: int, pixel, t_c: float) -> CenterObservation:
    pixel = np.asarray(pixel, dtype=float)
    cluster = EventCluster(pixel, np.zeros((2, 2)), 1, t_c)
    return CenterObservation(camera_id, pixel, t_c, cluster)


def correspondences_from_points(cameras, points, noise_px=0.0, rng=None):
    """Project world points through (intrinsics, pose) pairs into matched
    groups, one per point, with optional Gaussian pixel noise."""
    groups = []
    for j, p in enumerate(np.asarray(points, dtype=float)):
        obs = []
        for ci, (intr, pose) in enumerate(cameras):
            px = project_pinhole(intr, pose, p.reshape(1, 3))[0]
            if noise_px > 0:
                px = px + rng.normal(0.0, noise_px, 2)
            obs.append(synthetic_observation(ci, px, 1000.0 * j))
        groups.append(CorrespondingPoint(tuple(obs), 0.0))
    return groups
