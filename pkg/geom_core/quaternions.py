"""
Quaternion helpers for rigid transforms and coordinate frames.

Quaternions are stored (w, x, y, z). Every function accepts a single
quaternion of shape (4,) or a batch of shape (..., 4).
"""
import numpy as np

from .exceptions import NonUnitQuaternion, ZeroQuaternion

_MIN_NORM = 1e-12
UNIT_TOLERANCE = 1e-3


def normalize_quaternion(q):
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm < _MIN_NORM):
        raise ZeroQuaternion('quaternion norm is zero', norm=float(norm.min()))
    return q / norm


def quaternion_to_rotation(q):
    """Rotation matrix of a near-unit quaternion.

    |q| must lie within UNIT_TOLERANCE of 1; the small drift left by an
    optimizer step is normalized away. For a batch the result has shape
    (..., 3, 3).
    """
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1)
    if np.any(norm < _MIN_NORM):
        raise ZeroQuaternion('quaternion norm is zero', norm=float(np.min(norm)))
    drift = np.abs(norm - 1.0)
    if np.any(drift > UNIT_TOLERANCE):
        worst = float(np.asarray(norm).reshape(-1)[np.argmax(drift)])
        raise NonUnitQuaternion(f"quaternion norm {worst:.6g} is not within {UNIT_TOLERANCE:g} of 1", norm=worst)
    w, x, y, z = np.moveaxis(q / norm[..., None], -1, 0)
    rotation = np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
    ], axis=-2)
    return rotation


def rotation_jacobian(q):
    """Derivative of quaternion_to_rotation with respect to the raw quaternion.

    Returns dR/dq with shape (..., 4, 3, 3); the chain through the
    normalization q / |q| is included.
    """
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1)
    if np.any(norm < _MIN_NORM):
        raise ZeroQuaternion('quaternion norm is zero', norm=float(np.min(norm)))
    unit = q / norm[..., None]
    w, x, y, z = np.moveaxis(unit, -1, 0)
    zero = np.zeros_like(w)

    # dR / d(unit quaternion), one 3x3 block per component
    d_w = np.stack([
        np.stack([zero, -2 * z, 2 * y], axis=-1),
        np.stack([2 * z, zero, -2 * x], axis=-1),
        np.stack([-2 * y, 2 * x, zero], axis=-1),
    ], axis=-2)
    d_x = np.stack([
        np.stack([zero, 2 * y, 2 * z], axis=-1),
        np.stack([2 * y, -4 * x, -2 * w], axis=-1),
        np.stack([2 * z, 2 * w, -4 * x], axis=-1),
    ], axis=-2)
    d_y = np.stack([
        np.stack([-4 * y, 2 * x, 2 * w], axis=-1),
        np.stack([2 * x, zero, 2 * z], axis=-1),
        np.stack([-2 * w, 2 * z, -4 * y], axis=-1),
    ], axis=-2)
    d_z = np.stack([
        np.stack([-4 * z, -2 * w, 2 * x], axis=-1),
        np.stack([2 * w, -4 * z, 2 * y], axis=-1),
        np.stack([2 * x, 2 * y, zero], axis=-1),
    ], axis=-2)
    d_unit = np.stack([d_w, d_x, d_y, d_z], axis=-3)

    # d(unit)/dq = (I - u u^T) / |q|, symmetric
    projector = np.eye(4) - unit[..., :, None] * unit[..., None, :]
    projector = projector / norm[..., None, None]
    return np.einsum('...dc,...dij->...cij', projector, d_unit)


def rotation_to_quaternion(rotation):
    """Quaternion (w >= 0) of a proper rotation matrix, Shepperd's method."""
    m = np.asarray(rotation, dtype=np.float64)
    trace = m[0, 0] + m[1, 1] + m[2, 2]
    diagonal = (m[0, 0], m[1, 1], m[2, 2])
    # Pick the largest of (trace, diagonal) for a well-conditioned square root
    choice = int(np.argmax((trace,) + diagonal))
    if choice == 0:
        s = 2.0 * np.sqrt(1.0 + trace)
        q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
    elif choice == 1:
        s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = np.array([(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s])
    elif choice == 2:
        s = 2.0 * np.sqrt(1.0 - m[0, 0] + m[1, 1] - m[2, 2])
        q = np.array([(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 - m[0, 0] - m[1, 1] + m[2, 2])
        q = np.array([(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s])
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def quaternion_multiply(p, q):
    """Hamilton product p * q (rotation q applied first)."""
    pw, px, py, pz = np.moveaxis(np.asarray(p, dtype=np.float64), -1, 0)
    qw, qx, qy, qz = np.moveaxis(np.asarray(q, dtype=np.float64), -1, 0)
    return np.stack([
        pw * qw - px * qx - py * qy - pz * qz,
        pw * qx + px * qw + py * qz - pz * qy,
        pw * qy - px * qz + py * qw + pz * qx,
        pw * qz + px * qy - py * qx + pz * qw,
    ], axis=-1)


def quaternion_conjugate(q):
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def axis_angle_to_quaternion(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def random_quaternion(rng, size=None):
    """Uniformly distributed unit quaternions (Gaussian normalization)."""
    shape = (4,) if size is None else (size, 4)
    q = rng.standard_normal(shape)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)
