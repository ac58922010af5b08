"""Pose and quaternion math shared by every other module.

Quaternions are stored (w, x, y, z), Hamilton convention, and are kept
unit-norm: every constructor normalizes, so downstream code can assume
|q| = 1 within 1e-9.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

QUAT_NORM_TOL = 1e-9


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("quaternion is not normalizable: %r" % (q,))
    return q / n


def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([w, -x, -y, -z])


def quat_rotate(q, v) -> np.ndarray:
    """Rotate vector v by unit quaternion q."""
    w, x, y, z = q
    u = np.array([x, y, z])
    v = np.asarray(v, dtype=float)
    return v + 2.0 * np.cross(u, np.cross(u, v) + w * v)


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def quat_from_yaw(yaw: float) -> np.ndarray:
    return np.array([np.cos(yaw / 2), 0.0, 0.0, np.sin(yaw / 2)])


def quat_yaw(q) -> float:
    """Z-axis (heading) rotation of q, radians in (-pi, pi]."""
    w, x, y, z = q
    return float(np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z)))


def rotation_vector(q) -> np.ndarray:
    """Axis-angle vector of q (angle in [0, pi] times unit axis)."""
    q = np.asarray(q, dtype=float)
    if q[0] < 0:
        q = -q
    w = min(1.0, max(-1.0, q[0]))
    angle = 2.0 * np.arccos(w)
    s = np.sqrt(max(0.0, 1.0 - w * w))
    if s < 1e-12:
        return np.zeros(3)
    return angle * q[1:] / s


def matrix_to_quat(R) -> np.ndarray:
    """Inverse of quat_to_matrix, numerically robust branch selection."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s,
                      (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s,
                      0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    return quat_normalize(q)


@dataclass
class Pose:
    """Position (m) + unit-quaternion orientation (w, x, y, z)."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        if not np.all(np.isfinite(self.position)):
            raise ValueError("pose position must be finite: %r" % (self.position,))
        self.orientation = quat_normalize(self.orientation)

    def copy(self) -> "Pose":
        return Pose(self.position.copy(), self.orientation.copy())

    def transform_point(self, p) -> np.ndarray:
        return self.position + quat_rotate(self.orientation, p)

    def compose(self, other: "Pose") -> "Pose":
        """This pose applied to `other` (frame chaining)."""
        return Pose(self.transform_point(other.position),
                    quat_multiply(self.orientation, other.orientation))

    def inverse(self) -> "Pose":
        qinv = quat_conjugate(self.orientation)
        return Pose(-quat_rotate(qinv, self.position), qinv)

    def approx_equal(self, other: "Pose", pos_tol=1e-9, quat_tol=1e-9) -> bool:
        dq = min(np.max(np.abs(self.orientation - other.orientation)),
                 np.max(np.abs(self.orientation + other.orientation)))
        return bool(np.max(np.abs(self.position - other.position)) <= pos_tol
                    and dq <= quat_tol)

    def to_list(self) -> list:
        return [*map(float, self.position), *map(float, self.orientation)]

    @classmethod
    def from_list(cls, vals) -> "Pose":
        vals = list(map(float, vals))
        if len(vals) != 7:
            raise ValueError("pose needs 7 numbers (px py pz qw qx qy qz), got %d" % len(vals))
        return cls(np.array(vals[:3]), np.array(vals[3:]))


def orientation_error(q_current, q_target) -> np.ndarray:
    """Rotation vector taking q_current onto q_target (world frame)."""
    dq = quat_multiply(q_target, quat_conjugate(q_current))
    return rotation_vector(dq)
