"""Quaternion helpers (scalar-first w, x, y, z), vectorized over leading axes."""

from __future__ import annotations

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q: np.ndarray) -> np.ndarray:
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a * b."""
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def conjugate(q: np.ndarray) -> np.ndarray:
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors by unit quaternions (broadcasting on leading axes)."""
    w = q[..., :1]
    xyz = q[..., 1:]
    t = 2.0 * np.cross(xyz, v)
    return v + w * t + np.cross(xyz, t)


def from_axis_angle(axis: np.ndarray, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = np.asarray(angle, dtype=np.float64)
    half = 0.5 * angle
    return np.concatenate(
        [np.cos(half)[..., None], np.sin(half)[..., None] * axis], axis=-1
    )


def shortest_arc(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal rotation taking unit vector ``a`` onto unit vector ``b``.

    Antipodal pairs get a 180-degree turn about an arbitrary perpendicular.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    dot = np.sum(a * b, axis=-1)
    cross = np.cross(a, b)
    q = np.concatenate([(1.0 + dot)[..., None], cross], axis=-1)
    norms = np.linalg.norm(q, axis=-1)
    degenerate = norms < 1e-9
    if np.any(degenerate):
        q = np.array(q, copy=True)
        flat = q.reshape(-1, 4)
        a_flat = np.broadcast_to(a, flat[:, 1:].shape).reshape(-1, 3)
        for i in np.flatnonzero(degenerate.reshape(-1)):
            flat[i] = np.concatenate([[0.0], _perpendicular(a_flat[i])])
        q = flat.reshape(q.shape)
    return normalize(q)


def _perpendicular(v: np.ndarray) -> np.ndarray:
    pick = np.zeros(3)
    pick[np.argmin(np.abs(v))] = 1.0
    perp = np.cross(v, pick)
    return perp / np.linalg.norm(perp)


def to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = np.moveaxis(q, -1, 0)
    row0 = np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1)
    row1 = np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1)
    row2 = np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def to_euler_zyx(q: np.ndarray) -> np.ndarray:
    """Angles (z, y, x) in radians with R = Rz(z) @ Ry(y) @ Rx(x)."""
    m = to_matrix(q)
    sy = np.clip(-m[..., 2, 0], -1.0, 1.0)
    y = np.arcsin(sy)
    cos_y = np.cos(y)
    safe = np.abs(cos_y) > 1e-9
    x = np.where(safe, np.arctan2(m[..., 2, 1], m[..., 2, 2]), 0.0)
    z = np.where(
        safe,
        np.arctan2(m[..., 1, 0], m[..., 0, 0]),
        np.arctan2(-m[..., 0, 1], m[..., 1, 1]),
    )
    return np.stack([z, y, x], axis=-1)


def from_euler_zyx(angles: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_euler_zyx`; angles are (z, y, x) in radians."""
    angles = np.asarray(angles, dtype=np.float64)
    z, y, x = np.moveaxis(angles, -1, 0)
    qz = from_axis_angle(np.array([0.0, 0.0, 1.0]), z)
    qy = from_axis_angle(np.array([0.0, 1.0, 0.0]), y)
    qx = from_axis_angle(np.array([1.0, 0.0, 0.0]), x)
    return multiply(multiply(qz, qy), qx)


def hemisphere_align(q: np.ndarray) -> np.ndarray:
    """Flip signs along the time axis (axis 0) so consecutive dots are >= 0."""
    q = np.array(q, copy=True)
    for t in range(1, q.shape[0]):
        flip = np.sum(q[t] * q[t - 1], axis=-1) < 0
        q[t][flip] *= -1.0
    return q
