"""Focal length from a single fundamental matrix and a known principal point.

With the principal point moved to the origin and square pixels assumed, the
epipolar constraint on the image of the absolute conic reduces to
F C F' = s [e]x C [e]x' with C = diag(f^2, f^2, 1). Eliminating the scale s
leaves ratio constraints between the two sides; both sides are linear in
y = f^2, so the solve is a one-dimensional least-squares problem in y,
minimized here through the scale-free misalignment of the two sides (the
entry-wise ratio system in raw form is hopelessly noise-sensitive).
"""
from __future__ import annotations

import numpy as np

from ..errors import DegenerateMotion, NegativeFocalSquared
from ..geometry import FundamentalPair, skew

Array = np.ndarray

_DIAG110 = np.diag([1.0, 1.0, 0.0])

_GRID_POINTS = 600
_GRID_SPAN = (0.02, 50.0)  # multiples of the coordinate scale


def _sides(pair: FundamentalPair, principal: tuple[float, float]):
    """Linear-in-y parts of both sides, in centered and rescaled coordinates."""
    cx, cy = principal
    sigma = max(1.0, cx + cy)
    S = np.array([[1.0, 0.0, -cx], [0.0, 1.0, -cy], [0.0, 0.0, 1.0]])
    D = np.diag([1.0 / sigma, 1.0 / sigma, 1.0])
    T = D @ S
    Tinv = np.linalg.inv(T)
    F = Tinv.T @ pair.fundamental @ Tinv
    F = F / np.linalg.norm(F)
    e = T @ pair.epipole_right
    e = e / np.linalg.norm(e)
    L1 = F @ _DIAG110 @ F.T
    f3 = F[:, 2]
    L0 = np.outer(f3, f3)
    E = skew(e)
    R1 = E @ _DIAG110 @ E.T
    q = np.cross(e, np.array([0.0, 0.0, 1.0]))
    R0 = np.outer(q, q)
    return sigma, L1, L0, R1, R0


def _ratio_rows(L1: Array, L0: Array, R1: Array, R0: Array) -> Array:
    """Coefficients (c2, c1, c0) of the cross-multiplied column ratios."""
    rows = []
    for a in range(3):
        for b in range(2):
            c2 = L1[a, b] * R1[a, 2] - L1[a, 2] * R1[a, b]
            c1 = (
                L1[a, b] * R0[a, 2]
                + L0[a, b] * R1[a, 2]
                - L1[a, 2] * R0[a, b]
                - L0[a, 2] * R1[a, b]
            )
            c0 = L0[a, b] * R0[a, 2] - L0[a, 2] * R0[a, b]
            rows.append((c2, c1, c0))
    return np.array(rows)


def _misalignment(L1, L0, R1, R0, y: Array) -> Array:
    """1 - cos^2 of the angle between the stacked sides, per y value."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    L = y[:, None] * L1.ravel()[None, :] + L0.ravel()[None, :]
    R = y[:, None] * R1.ravel()[None, :] + R0.ravel()[None, :]
    lr = np.einsum("ij,ij->i", L, R)
    ll = np.einsum("ij,ij->i", L, L)
    rr = np.einsum("ij,ij->i", R, R)
    return 1.0 - lr * lr / np.maximum(ll * rr, 1e-300)


def solve_kruppa_focal(pair: FundamentalPair, principal: tuple[float, float]) -> float:
    """Shared focal length in pixels implied by one camera pair.

    Raises DegenerateMotion when the ratio system is rank deficient or the
    misalignment cost is flat (for example pure translation along the
    optical axis), and NegativeFocalSquared when no interior minimum exists.
    """
    sigma, L1, L0, R1, R0 = _sides(pair, principal)

    rows = _ratio_rows(L1, L0, R1, R0)
    norms = np.linalg.norm(rows, axis=1)
    keep = norms > 1e-14 * max(float(norms.max()), 1e-300)
    if keep.sum() == 0:
        raise DegenerateMotion("all ratio constraints vanish for this pair")
    s = np.linalg.svd(rows[keep] / norms[keep, None], compute_uv=False)
    if len(s) < 2 or s[1] < 1e-10 * s[0]:
        raise DegenerateMotion(
            f"focal-length system is rank deficient (singular values {s})"
        )

    ys = np.geomspace(_GRID_SPAN[0] ** 2, _GRID_SPAN[1] ** 2, _GRID_POINTS)
    cost = _misalignment(L1, L0, R1, R0, ys)
    if float(cost.max() - cost.min()) < 1e-12:
        raise DegenerateMotion("misalignment cost is flat in f^2")
    k = int(np.argmin(cost))
    if k == 0 or k == len(ys) - 1:
        raise NegativeFocalSquared("no interior optimum for f^2 in the search range")

    # golden-section refinement on log(y)
    lo, hi = np.log(ys[k - 1]), np.log(ys[k + 1])
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc = float(_misalignment(L1, L0, R1, R0, np.exp(c))[0])
    fd = float(_misalignment(L1, L0, R1, R0, np.exp(d))[0])
    for _ in range(80):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = float(_misalignment(L1, L0, R1, R0, np.exp(c))[0])
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = float(_misalignment(L1, L0, R1, R0, np.exp(d))[0])
    y = float(np.exp((a + b) / 2.0))
    if not np.isfinite(y) or y <= 0:
        raise NegativeFocalSquared(f"f^2 = {y} is not usable")
    return sigma * float(np.sqrt(y))
