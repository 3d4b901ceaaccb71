"""Small dense 3D linear algebra and generators of the gravity-fixing group.

Vectors are numpy arrays of shape ``(3,)``, matrices ``(3, 3)``; a stack of m
steerable vectors (a "geometric matrix") is a ``(3, m)`` array whose columns
are the channels. Functions accept extra leading batch dimensions where noted.
"""

from __future__ import annotations

import math

import numpy as np

GRAVITY = np.array([0.0, 0.0, -1.0])
E_Z = np.array([0.0, 0.0, 1.0])

TRANSFORM_MODES = ("rotation_z", "reflection_z", "translation_xy", "composed")


def rotation_about_z(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def reflection_fixing_z(azimuth: float) -> np.ndarray:
    """Reflection across the vertical plane containing the horizontal direction
    at ``azimuth``. Fixes the z-axis, det = -1."""
    r = rotation_about_z(azimuth)
    return r @ np.diag([1.0, -1.0, 1.0]) @ r.T


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Right-handed cross product over the last axis (batched)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.stack(
        [
            a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
            a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
            a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        ],
        axis=-1,
    )


def det3(m: np.ndarray) -> float:
    return float(np.dot(m[:, 0], cross(m[:, 1], m[:, 2])))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform (Haar) random element of SO(3)."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_transform(rng: np.random.Generator, mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``(O, t)`` from the group of isometries fixing the gravity axis.

    ``composed`` is a rotation about z followed by a horizontal translation.
    """
    if mode not in TRANSFORM_MODES:
        raise ValueError(f"unknown transform mode {mode!r}")
    o = np.eye(3)
    t = np.zeros(3)
    if mode in ("rotation_z", "composed"):
        o = rotation_about_z(rng.uniform(0.0, 2.0 * math.pi))
    elif mode == "reflection_z":
        o = reflection_fixing_z(rng.uniform(0.0, 2.0 * math.pi))
    if mode in ("translation_xy", "composed"):
        t = np.array([rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0), 0.0])
    return o, t


def quat_from_yaw(yaw) -> np.ndarray:
    """Unit quaternion ``(w, x, y, z)`` for a rotation by ``yaw`` about z (batched)."""
    yaw = np.asarray(yaw, dtype=float)
    q = np.zeros(yaw.shape + (4,))
    q[..., 0] = np.cos(yaw / 2.0)
    q[..., 3] = np.sin(yaw / 2.0)
    return q


def quat_multiply(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Hamilton product ``p * q`` over the last axis."""
    pw, px, py, pz = np.moveaxis(np.asarray(p, dtype=float), -1, 0)
    qw, qx, qy, qz = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    return np.stack(
        [
            pw * qw - px * qx - py * qy - pz * qz,
            pw * qx + px * qw + py * qz - pz * qy,
            pw * qy - px * qz + py * qw + pz * qx,
            pw * qz + px * qy - py * qx + pz * qw,
        ],
        axis=-1,
    )


def quat_yaw(q: np.ndarray) -> np.ndarray:
    """Heading angle of a unit quaternion ``(w, x, y, z)`` (batched)."""
    w, x, y, z = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    return np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))


def rotation_z_batch(theta) -> np.ndarray:
    """``rotation_about_z`` over an array of angles; result shape ``theta.shape + (3, 3)``."""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    out = np.zeros(theta.shape + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    out[..., 2, 2] = 1.0
    return out
