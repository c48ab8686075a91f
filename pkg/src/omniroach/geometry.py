"""Small 3-D math helpers: vectors, unit quaternions, rotation matrices.

Quaternions are stored as numpy arrays ``[w, x, y, z]``.  All functions are
pure and allocate small arrays; hot paths in the solver unpack to floats
instead of calling these.
"""
from __future__ import annotations

import math

import numpy as np

X_AXIS = np.array([1.0, 0.0, 0.0])
Y_AXIS = np.array([0.0, 1.0, 0.0])
Z_AXIS = np.array([0.0, 0.0, 1.0])
QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def vec(x: float, y: float, z: float) -> np.ndarray:
    return np.array([float(x), float(y), float(z)])


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product of two 3-vectors; much faster than np.cross here."""
    a0, a1, a2 = a
    b0, b1, b2 = b
    return np.array([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])


def normalize(v: np.ndarray) -> np.ndarray:
    n = math.sqrt(float(v @ v))
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return v / n


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = math.sqrt(float(q @ q))
    if n == 0.0:
        return QUAT_IDENTITY.copy()
    return q / n


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = normalize(np.asarray(axis, dtype=float))
    h = 0.5 * angle
    s = math.sin(h)
    return np.array([math.cos(h), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return np.array([
        [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
        [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
        [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
    ])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    return quat_to_matrix(q) @ v


def quat_integrate(q: np.ndarray, omega: np.ndarray, dt: float) -> np.ndarray:
    """First-order quaternion update from a world-frame angular velocity."""
    dq = quat_mul(np.array([0.0, omega[0], omega[1], omega[2]]), q)
    return quat_normalize(q + 0.5 * dt * dq)


def quat_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Z-Y-X (yaw, pitch, roll) intrinsic Euler angles in radians."""
    qz = quat_from_axis_angle(Z_AXIS, yaw)
    qy = quat_from_axis_angle(Y_AXIS, pitch)
    qx = quat_from_axis_angle(X_AXIS, roll)
    return quat_mul(qz, quat_mul(qy, qx))


def quat_to_euler(q: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`quat_from_euler`; returns (roll, pitch, yaw)."""
    w, x, y, z = q
    roll = math.atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    s = 2.0 * (w * y - z * x)
    s = max(-1.0, min(1.0, s))
    pitch = math.asin(s)
    yaw = math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    return roll, pitch, yaw


def tangent_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors spanning the plane orthogonal to unit normal ``n``."""
    if abs(n[0]) < 0.57:
        t1 = np.array([0.0, -n[2], n[1]])
    else:
        t1 = np.array([-n[2], 0.0, n[0]])
    t1 = normalize(t1)
    t2 = cross3(n, t1)
    return t1, t2


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
