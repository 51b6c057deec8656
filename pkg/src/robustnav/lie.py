"""SO(3) exponential/logarithm maps and their Jacobians."""

import math

import numpy as np

_SMALL_ANGLE = 1e-8
_NEAR_PI = 1e-3


def so3_hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that ``hat(v) @ w == cross(v, w)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_vee(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`so3_hat` applied to the skew part of ``m``."""
    return 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


def so3_exp(v: np.ndarray) -> np.ndarray:
    """Rodrigues exponential map so(3) -> SO(3)."""
    v = np.asarray(v, dtype=float)
    theta = math.sqrt(float(v @ v))
    k = so3_hat(v)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + k + 0.5 * (k @ k)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * (k @ k)


def so3_log(rotation: np.ndarray) -> np.ndarray:
    """Logarithm map SO(3) -> so(3), stable near the angle-pi singularity."""
    r = np.asarray(rotation, dtype=float)
    axis_part = so3_vee(r)
    sin_theta = math.sqrt(float(axis_part @ axis_part))
    cos_theta = 0.5 * (np.trace(r) - 1.0)
    theta = math.atan2(sin_theta, cos_theta)

    if theta < _SMALL_ANGLE:
        return axis_part * (1.0 + theta * theta / 6.0)
    if math.pi - theta > _NEAR_PI:
        return axis_part * (theta / sin_theta)

    # axis from the symmetric part: (R + R^T)/2 - cos(theta) I = (1 - cos(theta)) a a^T
    outer = 0.5 * (r + r.T) - cos_theta * np.eye(3)
    column = int(np.argmax(np.diag(outer)))
    axis = outer[:, column] / math.sqrt(max(outer[column, column], 1e-300))
    axis /= np.linalg.norm(axis)
    if axis @ axis_part < 0.0:
        axis = -axis
    return theta * axis


def right_jacobian(v: np.ndarray) -> np.ndarray:
    """Right Jacobian of SO(3): ``Exp(v + d) ~ Exp(v) Exp(Jr(v) d)``."""
    v = np.asarray(v, dtype=float)
    theta = math.sqrt(float(v @ v))
    k = so3_hat(v)
    if theta < _SMALL_ANGLE:
        return np.eye(3) - 0.5 * k + (k @ k) / 6.0
    theta2 = theta * theta
    return (
        np.eye(3)
        - (1.0 - math.cos(theta)) / theta2 * k
        + (theta - math.sin(theta)) / (theta2 * theta) * (k @ k)
    )


def right_jacobian_inverse(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`right_jacobian`."""
    v = np.asarray(v, dtype=float)
    theta = math.sqrt(float(v @ v))
    k = so3_hat(v)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + 0.5 * k + (k @ k) / 12.0
    coeff = 1.0 / (theta * theta) - (1.0 + math.cos(theta)) / (2.0 * theta * math.sin(theta))
    return np.eye(3) + 0.5 * k + coeff * (k @ k)


def orthonormalize(rotation: np.ndarray) -> np.ndarray:
    """One Newton step towards the nearest rotation (polar projection)."""
    return 0.5 * rotation @ (3.0 * np.eye(3) - rotation.T @ rotation)


def is_rotation(rotation: np.ndarray, tolerance: float = 1e-9) -> bool:
    """Check orthonormality and a positive determinant."""
    r = np.asarray(rotation, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    orthogonal = np.max(np.abs(r.T @ r - np.eye(3))) <= tolerance
    return bool(orthogonal and abs(np.linalg.det(r) - 1.0) <= tolerance)
