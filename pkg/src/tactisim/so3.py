"""Small SO(3) toolbox: skew maps, exp/log, orthonormalization, quaternions."""

from __future__ import annotations

import numpy as np

_EPS = 1e-12


def hat(w: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that hat(w) @ v == w x v."""
    wx, wy, wz = w
    return np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])


def vee(W: np.ndarray) -> np.ndarray:
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product of two 3-vectors (faster than np.cross for scalars)."""
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def cross_rows(w: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Cross product of one 3-vector with each row of an (n, 3) array."""
    out = np.empty_like(rows)
    out[:, 0] = w[1] * rows[:, 2] - w[2] * rows[:, 1]
    out[:, 1] = w[2] * rows[:, 0] - w[0] * rows[:, 2]
    out[:, 2] = w[0] * rows[:, 1] - w[1] * rows[:, 0]
    return out


def cross_rowwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-by-row cross product of two (n, 3) arrays."""
    out = np.empty_like(a)
    out[:, 0] = a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1]
    out[:, 1] = a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2]
    out[:, 2] = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    return out


def exp_so3(w: np.ndarray) -> np.ndarray:
    """Rodrigues formula in closed form; series expansion below 1e-8 rad."""
    wx, wy, wz = w
    theta_sq = wx * wx + wy * wy + wz * wz
    theta = np.sqrt(theta_sq)
    if theta < 1e-8:
        W = hat(w)
        return np.eye(3) + W + 0.5 * (W @ W)
    a = np.sin(theta) / theta
    c = np.cos(theta)
    b = (1.0 - c) / theta_sq
    return np.array([
        [c + b * wx * wx, b * wx * wy - a * wz, b * wx * wz + a * wy],
        [b * wx * wy + a * wz, c + b * wy * wy, b * wy * wz - a * wx],
        [b * wx * wz - a * wy, b * wy * wz + a * wx, c + b * wz * wz],
    ])


def log_so3(R: np.ndarray) -> np.ndarray:
    """Rotation vector of R; angle in [0, pi]."""
    trace = np.clip((R[0, 0] + R[1, 1] + R[2, 2] - 1.0) * 0.5, -1.0, 1.0)
    theta = np.arccos(trace)
    if theta < 1e-8:
        return vee(R - R.T) * 0.5
    if theta > np.pi - 1e-6:
        # near pi the antisymmetric part degenerates; use the symmetric part
        A = (R + np.eye(3)) * 0.5
        axis_sq = np.clip(np.diag(A), 0.0, None)
        k = int(np.argmax(axis_sq))
        axis = A[:, k] / max(np.sqrt(axis_sq[k]), _EPS)
        axis = axis / max(np.linalg.norm(axis), _EPS)
        # fix sign from the off-diagonal antisymmetric residue
        w = vee(R - R.T)
        if np.dot(w, axis) < 0.0:
            axis = -axis
        return theta * axis
    return theta / (2.0 * np.sin(theta)) * vee(R - R.T)


_EYE3 = np.eye(3)


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Project a near-rotation back onto SO(3).

    One Newton step of the polar projection for small drift; SVD fallback
    for badly conditioned input.
    """
    E = R.T @ R
    if abs(E[0, 0] - 1.0) < 0.05 and abs(E[1, 1] - 1.0) < 0.05 \
            and abs(E[2, 2] - 1.0) < 0.05 and abs(E[0, 1]) < 0.05 \
            and abs(E[0, 2]) < 0.05 and abs(E[1, 2]) < 0.05:
        # R (3I - R^T R) / 2
        return 1.5 * R - 0.5 * (R @ E)
    U, _, Vt = np.linalg.svd(R)
    D = np.eye(3)
    D[2, 2] = np.linalg.det(U @ Vt)
    return U @ D @ Vt


def quat_from_rot(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0, Shepperd's method."""
    t = R[0, 0] + R[1, 1] + R[2, 2]
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s,
                      (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] >= R[2, 2]:
        s = np.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2]) * 2.0
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s,
                      0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = np.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2]) * 2.0
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    q = q / np.linalg.norm(q)
    return q if q[0] >= 0.0 else -q


def rot_from_quat(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation from a normalized Gaussian quaternion."""
    q = rng.standard_normal(4)
    return rot_from_quat(q)


def yaw_rotation(psi: float) -> np.ndarray:
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
