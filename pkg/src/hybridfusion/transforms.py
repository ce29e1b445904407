"""Rigid transforms in 2D and 3D.

Quaternions are stored as ``(w, x, y, z)`` and canonicalised to ``w >= 0`` so
that two transforms describing the same rotation compare equal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_UNIT_TOL = 1e-9


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(4)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n == 0.0:
        raise ValueError("quaternion must be finite and non-zero")
    q = q / n
    if q[0] < 0:
        q = -q
    return q


def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=float)


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R) -> np.ndarray:
    """Shepperd's method; picks the largest diagonal term for stability."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return quat_normalize(q)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    h = 0.5 * angle
    return quat_normalize(np.concatenate([[math.cos(h)], math.sin(h) * axis]))


def quat_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Rotation ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    qx = quat_from_axis_angle([1, 0, 0], roll)
    qy = quat_from_axis_angle([0, 1, 0], pitch)
    qz = quat_from_axis_angle([0, 0, 1], yaw)
    return quat_normalize(quat_multiply(qz, quat_multiply(qy, qx)))


def matrix_to_euler(R) -> tuple[float, float, float]:
    """Inverse of :func:`quat_from_euler` on matrices; returns (roll, pitch, yaw)."""
    R = np.asarray(R, dtype=float)
    pitch = math.asin(max(-1.0, min(1.0, -R[2, 0])))
    roll = math.atan2(R[2, 1], R[2, 2])
    yaw = math.atan2(R[1, 0], R[0, 0])
    return roll, pitch, yaw


def quaternion_angle(qa, qb) -> float:
    """Rotation angle between two unit quaternions, in ``[0, pi]``; sign-blind."""
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    d = abs(float(np.dot(qa, qb))) / (np.linalg.norm(qa) * np.linalg.norm(qb))
    return 2.0 * math.acos(min(1.0, d))


def slerp(qa, qb, t: float) -> np.ndarray:
    """Spherical linear interpolation along the short arc."""
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    d = float(np.dot(qa, qb))
    if d < 0.0:
        qb = -qb
        d = -d
    if d > 1.0 - 1e-12:
        q = qa + t * (qb - qa)
        return q / np.linalg.norm(q)
    theta = math.acos(d)
    s = math.sin(theta)
    q = (math.sin((1.0 - t) * theta) * qa + math.sin(t * theta) * qb) / s
    return q / np.linalg.norm(q)


def normalize_angle(a: float) -> float:
    """Wrap to ``(-pi, pi]``."""
    a = math.remainder(float(a), 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


@dataclass(frozen=True, eq=False)
class RigidTransform3:
    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or abs(n - 1.0) > 1e-6:
            raise ValueError(f"rotation quaternion must be unit norm, got |q|={n}")
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        q = quat_normalize(q)
        q.setflags(write=False)
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidTransform3:
        return cls()

    @classmethod
    def from_matrix(cls, M) -> RigidTransform3:
        M = np.asarray(M, dtype=float)
        return cls(matrix_to_quat(M[:3, :3]), M[:3, 3])

    @classmethod
    def from_rt(cls, R, t) -> RigidTransform3:
        return cls(matrix_to_quat(R), t)

    @classmethod
    def from_euler(cls, x=0.0, y=0.0, z=0.0, roll=0.0, pitch=0.0, yaw=0.0) -> RigidTransform3:
        return cls(quat_from_euler(roll, pitch, yaw), [x, y, z])

    @classmethod
    def from_translation(cls, t) -> RigidTransform3:
        return cls(translation=t)

    @property
    def R(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    @property
    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.R
        M[:3, 3] = self.translation
        return M

    @property
    def yaw(self) -> float:
        return matrix_to_euler(self.R)[2]

    def euler(self) -> tuple[float, float, float]:
        return matrix_to_euler(self.R)

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.R.T + self.translation

    def inverse(self) -> RigidTransform3:
        q_inv = quat_conjugate(self.rotation)
        return RigidTransform3(q_inv, -(quat_to_matrix(q_inv) @ self.translation))

    def __matmul__(self, inner: RigidTransform3) -> RigidTransform3:
        return compose(self, inner)

    def angle_to(self, other: RigidTransform3) -> float:
        return quaternion_angle(self.rotation, other.rotation)

    def distance_to(self, other: RigidTransform3) -> float:
        return float(np.linalg.norm(self.translation - other.translation))

    def allclose(self, other: RigidTransform3, atol: float = 1e-9) -> bool:
        return self.distance_to(other) <= atol and self.angle_to(other) <= atol

    def __repr__(self):
        q = np.array2string(self.rotation, precision=6)
        t = np.array2string(self.translation, precision=4)
        return f"RigidTransform3(q={q}, t={t})"


def compose(outer: RigidTransform3, inner: RigidTransform3) -> RigidTransform3:
    """Transform equivalent to applying ``inner`` first, then ``outer``."""
    q = quat_multiply(outer.rotation, inner.rotation)
    t = outer.R @ inner.translation + outer.translation
    return RigidTransform3(q / np.linalg.norm(q), t)


@dataclass(frozen=True, eq=False)
class RigidTransform2:
    angle: float = 0.0
    translation: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(2).copy()
        if not (np.all(np.isfinite(t)) and math.isfinite(self.angle)):
            raise ValueError("RigidTransform2 must be finite")
        t.setflags(write=False)
        object.__setattr__(self, "angle", normalize_angle(self.angle))
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidTransform2:
        return cls()

    @property
    def R(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([[c, -s], [s, c]])

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.R.T + self.translation

    def inverse(self) -> RigidTransform2:
        return RigidTransform2(-self.angle, -(self.R.T @ self.translation))

    def __matmul__(self, inner: RigidTransform2) -> RigidTransform2:
        return RigidTransform2(self.angle + inner.angle, self.R @ inner.translation + self.translation)

    def lift(self) -> RigidTransform3:
        """Yaw-only 3D transform with zero z translation."""
        return RigidTransform3(
            quat_from_axis_angle([0, 0, 1], self.angle),
            [self.translation[0], self.translation[1], 0.0],
        )

    def __repr__(self):
        return f"RigidTransform2(angle={self.angle:.6f}, t={np.array2string(self.translation, precision=4)})"
