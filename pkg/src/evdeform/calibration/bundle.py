"""Damped least-squares refinement of cameras and points on reprojection error.

Parameters per camera: rotation update (left-multiplied exponential), camera
translation, fx, fy, cx, cy. Point blocks are eliminated with a Schur
complement. The gauge is fixed by freezing the reference camera's pose and
pinning one translation component of another camera.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DivergedBA
from ..geometry import CameraIntrinsics, CameraPose, orthonormalize, rotation_from_axis_angle

Array = np.ndarray

CAM_PARAMS = 10  # [w0 w1 w2 | t0 t1 t2 | fx fy | cx cy]


@dataclass(frozen=True)
class BundleOptions:
    refine_points: bool = True
    refine_focal: bool = True
    refine_principal: bool = False
    frozen_cameras: tuple[int, ...] = (0,)
    # (camera, axis) translation component pinned for the scale gauge;
    # "auto" picks the largest component of the first free camera
    scale_pin: tuple[int, int] | str | None = "auto"
    max_iters: int = 50
    cost_tol: float = 1e-14
    gradient_tol: float = 1e-12
    lambda_init: float = 1e-4
    lambda_max: float = 1e12
    lambda_up: float = 10.0
    lambda_down: float = 1.0 / 3.0


@dataclass
class BundleResult:
    intrinsics: list[CameraIntrinsics]
    poses: list[CameraPose]
    points: Array
    cost_trace: list[float]
    accepted_steps: int
    converged: bool

    @property
    def final_cost(self) -> float:
        return self.cost_trace[-1]


def _camera_free_mask(m: int, options: BundleOptions) -> Array:
    mask = np.ones((m, CAM_PARAMS), dtype=bool)
    mask[:, 6:8] = options.refine_focal
    mask[:, 8:10] = options.refine_principal
    for c in options.frozen_cameras:
        mask[c, :6] = False
    pin = options.scale_pin
    if pin == "auto":
        pin = None
        for c in range(m):
            if c not in options.frozen_cameras:
                pin = (c, 0)
                break
    if pin is not None:
        cam, axis = pin
        mask[cam, 3 + axis] = False
    return mask


def _pin_auto_axis(poses: list[CameraPose], mask: Array, options: BundleOptions) -> Array:
    """Resolve the "auto" pin to the largest translation component."""
    if options.scale_pin != "auto":
        return mask
    for c in range(len(poses)):
        if c not in options.frozen_cameras:
            mask[c, 3:6] = True
            axis = int(np.argmax(np.abs(poses[c].translation)))
            mask[c, 3 + axis] = False
            break
    return mask


def residuals_and_blocks(
    intrinsics: list[CameraIntrinsics],
    poses: list[CameraPose],
    points: Array,
    cam_idx: Array,
    pt_idx: Array,
    pixels: Array,
) -> tuple[Array, Array, Array]:
    """Per-observation residual (k, 2) and Jacobian blocks (k, 2, 10) and
    (k, 2, 3) of the pinhole projection wrt camera and point parameters.

    Residual convention: projected - observed.
    """
    k = len(cam_idx)
    R = np.stack([p.rotation for p in poses])[cam_idx]  # (k,3,3)
    t = np.stack([p.translation for p in poses])[cam_idx]
    fx = np.array([i.fx for i in intrinsics])[cam_idx]
    fy = np.array([i.fy for i in intrinsics])[cam_idx]
    cx = np.array([i.cx for i in intrinsics])[cam_idx]
    cy = np.array([i.cy for i in intrinsics])[cam_idx]

    P = points[pt_idx]  # (k,3)
    # transform camera by camera through CameraPose so projections are
    # bit-identical with project_pinhole (exact fixed point at the optimum)
    Xc = np.empty((k, 3))
    for j, pose in enumerate(poses):
        sel = cam_idx == j
        if np.any(sel):
            Xc[sel] = pose.transform(P[sel])
    RX = Xc - t
    x, y, z = Xc[:, 0], Xc[:, 1], Xc[:, 2]
    u = x / z * fx + cx
    v = y / z * fy + cy
    r = np.stack([u, v], axis=1) - pixels

    # d(u,v)/dXc
    duv_dXc = np.zeros((k, 2, 3))
    duv_dXc[:, 0, 0] = fx / z
    duv_dXc[:, 0, 2] = -fx * x / (z * z)
    duv_dXc[:, 1, 1] = fy / z
    duv_dXc[:, 1, 2] = -fy * y / (z * z)

    # dXc/dw = -[RX]x for a left-multiplied rotation update
    sk = np.zeros((k, 3, 3))
    sk[:, 0, 1] = -RX[:, 2]
    sk[:, 0, 2] = RX[:, 1]
    sk[:, 1, 0] = RX[:, 2]
    sk[:, 1, 2] = -RX[:, 0]
    sk[:, 2, 0] = -RX[:, 1]
    sk[:, 2, 1] = RX[:, 0]

    Jc = np.zeros((k, 2, CAM_PARAMS))
    Jc[:, :, 0:3] = np.einsum("kab,kbc->kac", duv_dXc, -sk)
    Jc[:, :, 3:6] = duv_dXc
    Jc[:, 0, 6] = x / z
    Jc[:, 1, 7] = y / z
    Jc[:, 0, 8] = 1.0
    Jc[:, 1, 9] = 1.0

    Jp = np.einsum("kab,kbc->kac", duv_dXc, R)
    return r, Jc, Jp


def dense_jacobian(
    intrinsics, poses, points, cam_idx, pt_idx, pixels
) -> tuple[Array, Array]:
    """Full residual vector and dense Jacobian (for verification)."""
    m = len(poses)
    n = len(points)
    r, Jc, Jp = residuals_and_blocks(intrinsics, poses, points, cam_idx, pt_idx, pixels)
    k = len(cam_idx)
    J = np.zeros((2 * k, CAM_PARAMS * m + 3 * n))
    for o in range(k):
        c, p = cam_idx[o], pt_idx[o]
        J[2 * o : 2 * o + 2, CAM_PARAMS * c : CAM_PARAMS * (c + 1)] = Jc[o]
        J[2 * o : 2 * o + 2, CAM_PARAMS * m + 3 * p : CAM_PARAMS * m + 3 * p + 3] = Jp[o]
    return r.ravel(), J


def apply_perturbation(
    intrinsics: list[CameraIntrinsics],
    poses: list[CameraPose],
    points: Array,
    delta: Array,
    refine_points: bool,
) -> tuple[list[CameraIntrinsics], list[CameraPose], Array]:
    """Apply a packed parameter update (used by both LM and the FD oracle)."""
    m = len(poses)
    new_intr = []
    new_poses = []
    for j in range(m):
        d = delta[CAM_PARAMS * j : CAM_PARAMS * (j + 1)]
        if d[0:6].any():
            R = orthonormalize(rotation_from_axis_angle(d[0:3]) @ poses[j].rotation)
            new_poses.append(CameraPose(R, poses[j].translation + d[3:6]))
        else:  # frozen poses stay bit-identical
            new_poses.append(poses[j])
        intr = intrinsics[j]
        if d[6:10].any():
            new_intr.append(
                CameraIntrinsics(
                    fx=intr.fx + d[6],
                    fy=intr.fy + d[7],
                    cx=intr.cx + d[8],
                    cy=intr.cy + d[9],
                    k1=intr.k1, k2=intr.k2, p1=intr.p1, p2=intr.p2,
                    width=intr.width, height=intr.height,
                )
            )
        else:
            new_intr.append(intr)
    new_points = points
    if refine_points:
        new_points = points + delta[CAM_PARAMS * m :].reshape(-1, 3)
    return new_intr, new_poses, new_points


def _cost(intrinsics, poses, points, cam_idx, pt_idx, pixels) -> float:
    r, _, _ = residuals_and_blocks(intrinsics, poses, points, cam_idx, pt_idx, pixels)
    return 0.5 * float(np.sum(r * r))


def bundle_adjust(
    intrinsics: list[CameraIntrinsics],
    poses: list[CameraPose],
    points: Array,
    cam_idx: Array,
    pt_idx: Array,
    pixels: Array,
    options: BundleOptions = BundleOptions(),
) -> BundleResult:
    """Levenberg-Marquardt on the reprojection cost with Schur elimination.

    The accepted-cost sequence is non-increasing; raises DivergedBA when the
    damping parameter exceeds its ceiling without an acceptable step.
    """
    cam_idx = np.asarray(cam_idx, dtype=np.int64)
    pt_idx = np.asarray(pt_idx, dtype=np.int64)
    pixels = np.asarray(pixels, dtype=float).reshape(-1, 2)
    points = np.asarray(points, dtype=float).reshape(-1, 3).copy()
    intrinsics = list(intrinsics)
    poses = list(poses)
    m = len(poses)
    n = len(points)

    free_cam = _pin_auto_axis(poses, _camera_free_mask(m, options), options)
    refine_points = options.refine_points

    cost = _cost(intrinsics, poses, points, cam_idx, pt_idx, pixels)
    trace = [cost]
    lam = options.lambda_init
    accepted = 0
    converged = False

    for _ in range(options.max_iters):
        r, Jc, Jp = residuals_and_blocks(intrinsics, poses, points, cam_idx, pt_idx, pixels)
        Jc = Jc * free_cam[cam_idx][:, None, :]
        if not refine_points:
            Jp = np.zeros_like(Jp)

        U = np.zeros((m, CAM_PARAMS, CAM_PARAMS))
        np.add.at(U, cam_idx, np.einsum("koa,kob->kab", Jc, Jc))
        V = np.zeros((n, 3, 3))
        np.add.at(V, pt_idx, np.einsum("koa,kob->kab", Jp, Jp))
        Wf = np.zeros((n, m, CAM_PARAMS, 3))
        np.add.at(Wf, (pt_idx, cam_idx), np.einsum("koa,kob->kab", Jc, Jp))
        g_c = np.zeros((m, CAM_PARAMS))
        np.add.at(g_c, cam_idx, np.einsum("koa,ko->ka", Jc, r))
        g_p = np.zeros((n, 3))
        np.add.at(g_p, pt_idx, np.einsum("koa,ko->ka", Jp, r))

        grad_inf = max(
            np.abs(g_c).max(initial=0.0), np.abs(g_p).max(initial=0.0) if refine_points else 0.0
        )
        if grad_inf < options.gradient_tol:
            converged = True
            break

        P = CAM_PARAMS * m
        Wflat = Wf.transpose(0, 1, 2, 3).reshape(n, P, 3)
        Hcc = np.zeros((P, P))
        for j in range(m):
            Hcc[CAM_PARAMS * j : CAM_PARAMS * (j + 1), CAM_PARAMS * j : CAM_PARAMS * (j + 1)] = U[j]

        stepped = False
        best_rejected = np.inf
        while lam <= options.lambda_max:
            Hcc_aug = Hcc.copy()
            diag = np.diag(Hcc)
            np.fill_diagonal(Hcc_aug, diag + lam * np.maximum(diag, 1e-12))
            frozen = ~free_cam.ravel()
            Hcc_aug[frozen, :] = 0.0
            Hcc_aug[:, frozen] = 0.0
            Hcc_aug[frozen, frozen] = 1.0

            if refine_points:
                Vd = V.copy()
                dV = np.einsum("nii->ni", V).copy()
                idx = np.arange(3)
                Vaug = V.copy()
                Vaug[:, idx, idx] = dV + lam * np.maximum(dV, 1e-12)
                try:
                    Vinv = np.linalg.inv(Vaug)
                except np.linalg.LinAlgError:
                    lam *= options.lambda_up
                    continue
                S = Hcc_aug - np.einsum("nic,ncd,njd->ij", Wflat, Vinv, Wflat)
                rhs = -(g_c.ravel() - np.einsum("nic,ncd,nd->i", Wflat, Vinv, g_p))
            else:
                S = Hcc_aug
                rhs = -g_c.ravel()
            rhs = np.where(frozen, 0.0, rhs)
            try:
                dc = np.linalg.solve(S, rhs)
            except np.linalg.LinAlgError:
                lam *= options.lambda_up
                continue
            dc = np.where(frozen, 0.0, dc)
            if refine_points:
                dp = np.einsum(
                    "ncd,nd->nc", Vinv, -(g_p + np.einsum("nic,i->nc", Wflat, dc))
                )
                delta = np.concatenate([dc, dp.ravel()])
            else:
                delta = np.concatenate([dc, np.zeros(3 * n)])

            try:
                cand = apply_perturbation(intrinsics, poses, points, delta, refine_points)
                new_cost = _cost(*cand, cam_idx, pt_idx, pixels)
            except ValueError:  # step left the valid parameter domain
                lam *= options.lambda_up
                continue
            if np.isfinite(new_cost) and new_cost < cost:
                intrinsics, poses, points = cand
                decrease = cost - new_cost
                cost = new_cost
                trace.append(cost)
                accepted += 1
                lam = max(lam * options.lambda_down, 1e-12)
                stepped = True
                if decrease < options.cost_tol * max(cost, 1.0):
                    converged = True
                break
            if np.isfinite(new_cost):
                best_rejected = min(best_rejected, new_cost)
            lam *= options.lambda_up
        if not stepped:
            # a rejected step matching the current cost to float resolution is
            # a plateau (converged), not divergence
            if best_rejected <= cost * (1.0 + 1e-9):
                converged = True
                break
            if lam > options.lambda_max:
                raise DivergedBA(
                    f"damping exceeded {options.lambda_max:g} without an accepted step"
                )
            break
        if converged:
            break

    return BundleResult(intrinsics, poses, points, trace, accepted, converged)
