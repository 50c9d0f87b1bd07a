"""Focal-length recovery from epipolar geometry with a known principal point."""
import numpy as np
import pytest

from evdeform.calibration.kruppa import solve_kruppa_focal
from evdeform.errors import DegenerateMotion
from evdeform.geometry import (
    CameraIntrinsics,
    CameraPose,
    estimate_fundamental_weighted,
    fundamental_from_calibrated,
    project_pinhole,
    relative_pose,
)
from evdeform.simulator import look_at_pose

PRINCIPAL = (639.5, 359.5)


def convergent_pair(f=1800.0):
    intr = CameraIntrinsics(f, f, *PRINCIPAL)
    target = np.array([0.0, 0.0, 5200.0])
    p1 = look_at_pose(np.array([0.0, 0.0, 0.0]), target + np.array([-60.0, 140.0, 0.0]))
    p2 = look_at_pose(
        np.array([-4378.0, 722.0, 826.0]), target + np.array([180.0, -90.0, 0.0])
    )
    return intr, p1, p2


class TestExactRecovery:
    def test_exact_fundamental_recovers_focal(self):
        intr, p1, p2 = convergent_pair()
        pair = fundamental_from_calibrated(intr, intr, relative_pose(p1, p2))
        f = solve_kruppa_focal(pair, PRINCIPAL)
        assert abs(f - 1800.0) / 1800.0 < 1e-6

    @pytest.mark.parametrize("true_f", [900.0, 1800.0, 3600.0])
    def test_various_focal_lengths(self, true_f):
        intr, p1, p2 = convergent_pair(true_f)
        pair = fundamental_from_calibrated(intr, intr, relative_pose(p1, p2))
        f = solve_kruppa_focal(pair, PRINCIPAL)
        assert abs(f - true_f) / true_f < 1e-6


class TestNoisyRecovery:
    def test_monte_carlo_within_two_percent(self):
        intr, p1, p2 = convergent_pair()
        rng = np.random.default_rng(17)
        estimates = []
        for _ in range(11):
            pts = np.array([0, 0, 5200.0]) + rng.uniform(-1, 1, (100, 3)) * np.array(
                [500.0, 700.0, 300.0]
            )
            x1 = project_pinhole(intr, p1, pts) + rng.normal(0, 0.2, (100, 2))
            x2 = project_pinhole(intr, p2, pts) + rng.normal(0, 0.2, (100, 2))
            pair = estimate_fundamental_weighted(x1, x2)
            estimates.append(solve_kruppa_focal(pair, PRINCIPAL))
        median = float(np.median(estimates))
        assert abs(median - 1800.0) / 1800.0 < 0.02


class TestDegenerateMotion:
    def test_translation_along_optical_axis(self):
        intr = CameraIntrinsics(1800.0, 1800.0, *PRINCIPAL)
        rel = CameraPose(np.eye(3), np.array([0.0, 0.0, 1.0]))
        pair = fundamental_from_calibrated(intr, intr, rel)
        with pytest.raises(DegenerateMotion):
            solve_kruppa_focal(pair, PRINCIPAL)


class TestKruppaConsistency:
    def test_both_sides_proportional_at_solution(self):
        """The epipolar constraint on the conic holds at the recovered focal."""
        intr, p1, p2 = convergent_pair()
        pair = fundamental_from_calibrated(intr, intr, relative_pose(p1, p2))
        f = solve_kruppa_focal(pair, PRINCIPAL)
        cx, cy = PRINCIPAL
        C = np.array(
            [
                [f * f + cx * cx, cx * cy, cx],
                [cx * cy, f * f + cy * cy, cy],
                [cx, cy, 1.0],
            ]
        )
        F = pair.fundamental
        e = pair.epipole_right
        E = np.array(
            [[0, -e[2], e[1]], [e[2], 0, -e[0]], [-e[1], e[0], 0]]
        )
        lhs = F @ C @ F.T
        rhs = E @ C @ E.T
        lhs = lhs / np.linalg.norm(lhs)
        rhs = rhs / np.linalg.norm(rhs)
        assert min(np.abs(lhs - rhs).max(), np.abs(lhs + rhs).max()) < 1e-6
