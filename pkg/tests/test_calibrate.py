"""The outer self-calibration loop on synthetic correspondences."""
import json

import numpy as np
import pytest

from evdeform.calibration.pipeline import (
    CalibrationConfig,
    calibrate,
    write_iteration_log,
)
from evdeform.errors import InsufficientCorrespondences
from evdeform.geometry import (
    distort_normalized,
    fundamental_from_calibrated,
    project_pinhole,
    relative_pose,
)
from conftest import correspondences_from_points

TABLE_CAM1 = (-0.05359, 0.33899, -0.00157, -0.00479)


def sample_points(n, seed=0):
    rng = np.random.default_rng(seed)
    return np.array([0, 0, 5200.0]) + rng.uniform(-1, 1, (n, 3)) * np.array(
        [500.0, 700.0, 300.0]
    )


class TestCalibrate:
    def test_too_few_correspondences(self, rig_cameras):
        groups = correspondences_from_points(rig_cameras, sample_points(10))
        with pytest.raises(InsufficientCorrespondences):
            calibrate(groups, CalibrationConfig())

    def test_noiseless_recovery(self, rig_cameras):
        groups = correspondences_from_points(rig_cameras, sample_points(60))
        result = calibrate(groups, CalibrationConfig(seed=2))
        assert result.converged
        assert max(result.mean_reprojection.values()) < 1e-4
        for intr in result.intrinsics:
            assert abs(intr.fx - 1800.0) / 1800.0 < 0.005
            assert abs(intr.fy - 1800.0) / 1800.0 < 0.005

    def test_noisy_run_converges_under_target(self, rig_cameras):
        rng = np.random.default_rng(1)
        groups = correspondences_from_points(
            rig_cameras, sample_points(250), noise_px=0.2, rng=rng
        )
        result = calibrate(groups, CalibrationConfig(seed=2))
        assert result.converged
        assert all(v < 0.3 for v in result.mean_reprojection.values())
        assert all(v < 0.25 for v in result.std_reprojection.values())

    def test_focal_lands_in_reported_band(self, rig_cameras):
        rng = np.random.default_rng(4)
        groups = correspondences_from_points(
            rig_cameras, sample_points(300), noise_px=0.2, rng=rng
        )
        result = calibrate(groups, CalibrationConfig(seed=2))
        for intr in result.intrinsics:
            assert 1750.0 <= intr.fx <= 1850.0
            assert 1750.0 <= intr.fy <= 1850.0

    def test_reference_camera_is_identity(self, rig_cameras):
        groups = correspondences_from_points(rig_cameras, sample_points(40))
        result = calibrate(groups, CalibrationConfig(seed=2, reference_camera=1))
        idx = result.camera_ids.index(1)
        np.testing.assert_array_equal(result.poses[idx].rotation, np.eye(3))
        np.testing.assert_array_equal(result.poses[idx].translation, np.zeros(3))

    def test_deterministic_reruns(self, rig_cameras):
        rng = np.random.default_rng(6)
        pts = sample_points(80)
        groups = correspondences_from_points(rig_cameras, pts, noise_px=0.2, rng=rng)
        r1 = calibrate(groups, CalibrationConfig(seed=9))
        r2 = calibrate(groups, CalibrationConfig(seed=9))
        for a, b in zip(r1.intrinsics, r2.intrinsics):
            assert a.fx == b.fx and a.fy == b.fy
        for a, b in zip(r1.poses, r2.poses):
            np.testing.assert_array_equal(a.rotation, b.rotation)
            np.testing.assert_array_equal(a.translation, b.translation)

    def test_distorted_observations_recovered(self, rig_cameras):
        """The loop undistorts working coordinates once coefficients emerge."""
        intr_true = [i.with_distortion(*TABLE_CAM1) for i, _ in rig_cameras]
        poses = [p for _, p in rig_cameras]
        rng = np.random.default_rng(8)
        # full-sensor coverage so the distortion fit engages
        pts = []
        ideal = rig_cameras[0][0]
        while len(pts) < 300:
            u, v = rng.uniform(40, 1240), rng.uniform(40, 680)
            depth = rng.uniform(4800, 5600)
            xn = ideal.normalized_from_pixel(np.array([u, v]))
            p = poses[1].inverse_transform(np.array([xn[0], xn[1], 1.0]) * depth)
            cams_see = []
            try:
                for intr, pose in rig_cameras:
                    px = project_pinhole(intr, pose, p.reshape(1, 3))[0]
                    cams_see.append(
                        0 <= px[0] < intr.width and 0 <= px[1] < intr.height
                    )
            except Exception:
                continue
            if all(cams_see):
                pts.append(p)
        pts = np.array(pts)
        groups = []
        from conftest import synthetic_observation
        from evdeform.extraction import CorrespondingPoint

        for j, p in enumerate(pts):
            obs = []
            for ci, (intr_t, pose) in enumerate(zip(intr_true, poses)):
                cam = pose.transform(p.reshape(1, 3))[0]
                xy = cam[:2] / cam[2]
                px = intr_t.pixel_from_normalized(
                    distort_normalized(intr_t, xy)
                )
                obs.append(synthetic_observation(ci, px, 1000.0 * j))
            groups.append(CorrespondingPoint(tuple(obs), 0.0))
        result = calibrate(groups, CalibrationConfig(seed=3))
        assert result.converged
        assert max(result.mean_reprojection.values()) < 0.3
        # distortion this mild is largely absorbed by focal and structure;
        # the loop must still settle on a self-consistent model
        for intr in result.intrinsics:
            assert abs(intr.fx - 1800.0) / 1800.0 < 0.05
            assert abs(intr.fy - 1800.0) / 1800.0 < 0.05

    def test_epipolar_consistency_of_result(self, rig_cameras):
        """F built from the solved calibration fits the inlier correspondences."""
        rng = np.random.default_rng(11)
        groups = correspondences_from_points(
            rig_cameras, sample_points(150), noise_px=0.1, rng=rng
        )
        result = calibrate(groups, CalibrationConfig(seed=1))
        i, j = 0, 1
        pair = fundamental_from_calibrated(
            result.intrinsics[i],
            result.intrinsics[j],
            relative_pose(result.poses[i], result.poses[j]),
        )
        x1 = np.array([g.pixel(0) for g in result.inliers])
        x2 = np.array([g.pixel(1) for g in result.inliers])
        h1 = np.hstack([x1, np.ones((len(x1), 1))])
        h2 = np.hstack([x2, np.ones((len(x2), 1))])
        lines = h1 @ pair.fundamental.T
        d = np.abs(np.sum(lines * h2, axis=1)) / np.hypot(lines[:, 0], lines[:, 1])
        assert np.percentile(d, 95) < 1.0

    def test_iteration_log_round_trip(self, tmp_path, rig_cameras):
        groups = correspondences_from_points(rig_cameras, sample_points(40))
        result = calibrate(groups, CalibrationConfig(seed=2))
        path = tmp_path / "iterations.log"
        write_iteration_log(path, result.iterations)
        lines = path.read_text().splitlines()
        assert len(lines) == len(result.iterations)
        first = json.loads(lines[0])
        assert first["iteration"] == 1
        assert set(first["mean_reprojection_px"]) == {"0", "1", "2"}
        assert first["inlier_count"] > 0


class TestDegenerateTrajectory:
    def test_planar_sweep_warns(self, rig_cameras):
        import warnings as warnmod

        from evdeform.errors import DegenerateTrajectoryWarning, EvdeformError

        rng = np.random.default_rng(3)
        pts = np.array([0, 0, 5200.0]) + rng.uniform(-1, 1, (60, 3)) * np.array(
            [500.0, 700.0, 0.0]
        )
        groups = correspondences_from_points(rig_cameras, pts)
        with warnmod.catch_warnings(record=True) as caught:
            warnmod.simplefilter("always")
            try:
                calibrate(groups, CalibrationConfig(seed=1))
            except EvdeformError:
                pass  # a planar scene may legitimately fail downstream
        assert any(issubclass(w.category, DegenerateTrajectoryWarning) for w in caught)


class TestPartialVisibility:
    def test_two_camera_points_survive_and_refine(self, rig_cameras):
        """Points seen by two of three cameras still enter the refinement."""
        rng = np.random.default_rng(15)
        pts = sample_points(90, seed=15)
        groups = correspondences_from_points(rig_cameras, pts, noise_px=0.1, rng=rng)
        from evdeform.extraction import CorrespondingPoint

        # strip one camera from every third correspondence
        mixed = []
        for j, g in enumerate(groups):
            if j % 3 == 0:
                mixed.append(CorrespondingPoint(g.observations[:2], g.match_time_spread))
            else:
                mixed.append(g)
        result = calibrate(mixed, CalibrationConfig(seed=4))
        assert result.converged
        assert len(result.inliers) > 80  # partial-visibility points retained
        assert any(len(g.observations) == 2 for g in result.inliers)
        assert max(result.mean_reprojection.values()) < 0.3

    def test_unknown_reference_camera(self, rig_cameras):
        groups = correspondences_from_points(rig_cameras, sample_points(40))
        with pytest.raises(InsufficientCorrespondences):
            calibrate(groups, CalibrationConfig(reference_camera=9))
