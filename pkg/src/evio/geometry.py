"""Quaternion / SO(3) utilities and rigid-body poses.

Conventions used throughout the package:

* quaternions are Hamilton, stored as ``[w, x, y, z]``, unit norm;
* ``Pose(q, t)`` maps points from its "source" frame into its "target"
  frame: ``x_target = R(q) @ x_source + t``.  Variables are named
  ``target_from_source`` (e.g. ``world_from_body``) so compositions read
  left to right: ``world_from_cam = world_from_body * body_from_cam``;
* rotation-vector perturbations are applied on the right,
  ``qable <- q * quat_exp(delta)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_SMALL_ANGLE = 1e-8


def skew(v: np.ndarray) -> np.ndarray:
    """3x3 cross-product matrix: skew(a) @ b == cross(a, b)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(q)
    if n < 1e-15:
        raise ValueError("cannot normalize zero quaternion")
    q = q / n
    # fix the sign so w >= 0; keeps serialized output deterministic
    return q if q[0] >= 0.0 else -q


def quat_to_rotation(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotation_to_quat(R: np.ndarray) -> np.ndarray:
    t = np.trace(R)
    if t > 0:
        s = 0.5 / np.sqrt(t + 1.0)
        w = 0.25 / s
        x = (R[2, 1] - R[1, 2]) * s
        y = (R[0, 2] - R[2, 0]) * s
        z = (R[1, 0] - R[0, 1]) * s
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(R[i, i] - R[j, j] - R[k, k] + 1.0, 0.0)) * 2.0
        v = np.empty(3)
        v[i] = 0.25 * s
        v[j] = (R[j, i] + R[i, j]) / s
        v[k] = (R[k, i] + R[i, k]) / s
        w = (R[k, j] - R[j, k]) / s
        x, y, z = v
    return quat_normalize(np.array([w, x, y, z]))


def quat_exp(theta: np.ndarray) -> np.ndarray:
    """Unit quaternion for a rotation vector (axis * angle)."""
    angle = np.linalg.norm(theta)
    if angle < _SMALL_ANGLE:
        # second-order series keeps this smooth through zero
        half = 0.5 * theta
        return quat_normalize(np.array([1.0 - np.dot(half, half) / 2.0, *half]))
    axis = theta / angle
    return np.array([np.cos(angle / 2.0), *(np.sin(angle / 2.0) * axis)])


def quat_log(q: np.ndarray) -> np.ndarray:
    """Rotation vector of a unit quaternion (inverse of quat_exp)."""
    q = q if q[0] >= 0.0 else -q
    v = q[1:]
    sin_half = np.linalg.norm(v)
    if sin_half < _SMALL_ANGLE:
        return 2.0 * v / q[0]
    angle = 2.0 * np.arctan2(sin_half, q[0])
    return angle * v / sin_half


def so3_exp(theta: np.ndarray) -> np.ndarray:
    """Rotation matrix of a rotation vector (Rodrigues)."""
    angle = np.linalg.norm(theta)
    K = skew(theta)
    if angle < _SMALL_ANGLE:
        return np.eye(3) + K + 0.5 * (K @ K)
    return (
        np.eye(3)
        + (np.sin(angle) / angle) * K
        + ((1.0 - np.cos(angle)) / angle**2) * (K @ K)
    )


def so3_log(R: np.ndarray) -> np.ndarray:
    return quat_log(rotation_to_quat(R))


def so3_left_jacobian(theta: np.ndarray) -> np.ndarray:
    """J_l(theta) = integral of exp(skew(theta) * s) over s in [0, 1]."""
    angle = np.linalg.norm(theta)
    K = skew(theta)
    if angle < 1e-5:
        return np.eye(3) + 0.5 * K + (K @ K) / 6.0
    a2 = angle * angle
    return (
        np.eye(3)
        + ((1.0 - np.cos(angle)) / a2) * K
        + ((angle - np.sin(angle)) / (a2 * angle)) * (K @ K)
    )


def so3_double_integral(theta: np.ndarray) -> np.ndarray:
    """Double integral of exp(skew(theta) * s): sum_n skew(theta)^n / (n+2)!.

    Used for the exact position increment under a constant body rate.
    """
    angle = np.linalg.norm(theta)
    K = skew(theta)
    if angle < 1e-4:
        return 0.5 * np.eye(3) + K / 6.0 + (K @ K) / 24.0
    a2 = angle * angle
    # closed form of (exp(K) - I - K) / K^2 restricted to the K, K^2 basis
    c1 = (1.0 - np.cos(angle)) / a2
    c2 = (angle - np.sin(angle)) / (a2 * angle)
    return 0.5 * np.eye(3) + c2 * K + ((0.5 - c1) / a2) * (K @ K)


@dataclass
class Pose:
    """Rigid transform: x_target = R(q) @ x_source + t."""

    q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.q = quat_normalize(np.asarray(self.q, dtype=float))
        self.t = np.asarray(self.t, dtype=float).reshape(3).copy()

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_rotation(R: np.ndarray, t: np.ndarray) -> "Pose":
        return Pose(rotation_to_quat(R), t)

    @property
    def R(self) -> np.ndarray:
        return quat_to_rotation(self.q)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def inverse(self) -> "Pose":
        q_inv = quat_conjugate(self.q)
        return Pose(q_inv, -(quat_to_rotation(q_inv) @ self.t))

    def compose(self, other: "Pose") -> "Pose":
        """self * other: apply ``other`` first, then ``self``."""
        return Pose(quat_multiply(self.q, other.q), self.R @ other.t + self.t)

    def __mul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Apply to one point (3,) or a stack of points (N, 3)."""
        p = np.asarray(points, dtype=float)
        if p.ndim == 1:
            return self.R @ p + self.t
        return p @ self.R.T + self.t

    def retract(self, delta: np.ndarray) -> "Pose":
        """Right-perturb: (q * exp(dtheta), t + dt) with delta = [dt, dtheta]."""
        return Pose(quat_multiply(self.q, quat_exp(delta[3:6])), self.t + delta[:3])
