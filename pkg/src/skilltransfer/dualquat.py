"""Quaternion and unit dual-quaternion algebra for rigid poses.

Quaternions are length-4 arrays ``[w, x, y, z]``. A pose with rotation
``q`` and translation ``t`` is the dual quaternion ``q + eps * (t q) / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonUnitRotation

UNIT_TOL = 1e-9
DRIFT_TOL = 1e-12
SMALL_ANGLE = 1e-8


def qmul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def qconj(a):
    return np.array([a[0], -a[1], -a[2], -a[3]])


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, float)
    axis = axis / np.linalg.norm(axis)
    return np.r_[np.cos(angle / 2), np.sin(angle / 2) * axis]


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_matrix(R):
    """Rotation matrix to unit quaternion (Shepperd's method), ``w >= 0``."""
    R = np.asarray(R, float)
    tr = np.trace(R)
    if tr > 0:
        s = 2 * np.sqrt(tr + 1)
        q = [s / 4, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2 * np.sqrt(1 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, s / 4, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2 * np.sqrt(1 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, s / 4, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2 * np.sqrt(1 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, s / 4]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def _normalize(real, dual):
    n = np.linalg.norm(real)
    real = real / n
    dual = dual / n
    return real, dual - np.dot(real, dual) * real


@dataclass(frozen=True, eq=False)
class UnitDualQuaternion:
    """Rigid transform as a unit dual quaternion ``real + eps * dual``."""

    real: np.ndarray
    dual: np.ndarray
    # (t, q) this element was built from, kept so poses serialize bit-exactly
    _pose: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        r = np.array(self.real, dtype=float).reshape(4)
        d = np.array(self.dual, dtype=float).reshape(4)
        if abs(np.linalg.norm(r) - 1) > UNIT_TOL or abs(np.dot(r, d)) > UNIT_TOL:
            raise NonUnitRotation(f"not a unit dual quaternion: |real|={np.linalg.norm(r):.12g}, <real,dual>={np.dot(r, d):.3g}")
        r.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "real", r)
        object.__setattr__(self, "dual", d)

    # construction
    @classmethod
    def identity(cls):
        return cls([1.0, 0, 0, 0], [0.0, 0, 0, 0])

    @classmethod
    def from_translation(cls, t):
        return cls([1.0, 0, 0, 0], np.r_[0.0, 0.5 * np.asarray(t, float)])

    @classmethod
    def from_rotation(cls, q):
        return cls.from_pose(np.zeros(3), q)

    @classmethod
    def from_pose(cls, t, q):
        """Rotation ``q`` then translation ``t`` (dual part ``t q / 2``)."""
        q = np.asarray(q, float)
        if abs(np.linalg.norm(q) - 1) > UNIT_TOL:
            raise NonUnitRotation(f"rotation quaternion has norm {np.linalg.norm(q):.12g}")
        t = np.array(t, dtype=float).reshape(3)
        q = q.copy()
        t.setflags(write=False)
        q.setflags(write=False)
        return cls(q, 0.5 * qmul(np.r_[0.0, t], q), (t, q))

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, float)
        return cls.from_pose(T[:3, 3], quat_from_matrix(T[:3, :3]))

    @classmethod
    def from_screw(cls, axis, moment, angle, pitch):
        """Screw motion: rotate ``angle`` about the line (``axis``, ``moment``), slide ``pitch``."""
        c, s = np.cos(angle / 2), np.sin(angle / 2)
        axis = np.asarray(axis, float)
        moment = np.asarray(moment, float)
        real = np.r_[c, s * axis]
        dual = np.r_[-0.5 * pitch * s, s * moment + 0.5 * pitch * c * axis]
        return cls(*_normalize(real, dual))

    # accessors
    @property
    def rotation(self):
        return self.real.copy()

    @property
    def translation(self):
        if self._pose is not None:
            return self._pose[0].copy()
        return 2.0 * qmul(self.dual, qconj(self.real))[1:]

    def as_pose(self):
        return self.translation, self.rotation

    def as_matrix(self):
        T = np.eye(4)
        T[:3, :3] = quat_to_matrix(self.real)
        T[:3, 3] = self.translation
        return T

    def transform_point(self, p):
        p = np.asarray(p, float)
        return p @ quat_to_matrix(self.real).T + self.translation

    # algebra
    def __mul__(self, other):
        r = qmul(self.real, other.real)
        d = qmul(self.real, other.dual) + qmul(self.dual, other.real)
        if abs(np.dot(r, r) - 1) > DRIFT_TOL or abs(np.dot(r, d)) > DRIFT_TOL:
            r, d = _normalize(r, d)
        return UnitDualQuaternion(r, d)

    def __neg__(self):
        return UnitDualQuaternion(-self.real, -self.dual)

    def conj(self):
        """Quaternion conjugate of both parts; the inverse for unit elements."""
        return UnitDualQuaternion(qconj(self.real), qconj(self.dual))

    inverse = conj

    def screw(self):
        """Screw parameters ``(axis, moment, angle, pitch)``.

        Near-zero rotations return ``angle == 0`` with the translation
        direction as axis, zero moment and the translation length as pitch.
        """
        w, v = self.real[0], self.real[1:]
        s = np.linalg.norm(v)
        angle = 2.0 * np.arctan2(s, w)
        if s < np.sin(SMALL_ANGLE / 2):
            t = self.translation
            if w < 0:  # rotation by 2*pi, same transform as the negated element
                t = (-self).translation
            n = np.linalg.norm(t)
            axis = t / n if n > 0 else np.array([0.0, 0.0, 1.0])
            return axis, np.zeros(3), 0.0, float(n)
        axis = v / s
        pitch = -2.0 * self.dual[0] / s
        moment = (self.dual[1:] - 0.5 * pitch * w * axis) / s
        return axis, moment, float(angle), float(pitch)

    def pow(self, tau):
        """Screw-linear power: angle and pitch scaled by ``tau``."""
        if tau == 0:
            return UnitDualQuaternion.identity()
        if tau == 1:
            return self
        axis, moment, angle, pitch = self.screw()
        if angle == 0.0:
            return UnitDualQuaternion.from_translation(tau * pitch * axis)
        return UnitDualQuaternion.from_screw(axis, moment, tau * angle, tau * pitch)

    def __pow__(self, tau):
        return self.pow(tau)

    def to_dict(self):
        t, q = self.as_pose()
        return {"t": [float(x) for x in t], "q": [float(x) for x in q]}

    @classmethod
    def from_dict(cls, d):
        q = np.asarray(d["q"], float)
        n = np.linalg.norm(q)
        if abs(n - 1) > 1e-6:
            raise NonUnitRotation(f"waypoint quaternion has norm {n:.9g}")
        if abs(n - 1) > UNIT_TOL:
            q = q / n
        return cls.from_pose(d["t"], q)

    def __repr__(self):
        t, q = self.as_pose()
        return f"UnitDualQuaternion(t={np.round(t, 6).tolist()}, q={np.round(q, 6).tolist()})"


def dq_mul(a, b):
    return a * b


def dq_conj(a):
    return a.conj()


def dq_pow(a, tau):
    return a.pow(tau)


def sclerp(start, end, tau):
    """Screw linear interpolation ``start (start* end)^tau`` along the short way."""
    if tau == 0:
        return start
    if tau == 1:
        return end
    rel = start.conj() * end
    if rel.real[0] < 0:
        rel = -rel
    return start * rel.pow(tau)


def pose_to_dq(t, q):
    return UnitDualQuaternion.from_pose(t, q)


def dq_to_pose(x):
    return x.as_pose()


def dq_distance(a, b):
    """Largest component gap between ``a`` and ``b``, modulo the sign double cover."""
    d1 = max(np.abs(a.real - b.real).max(), np.abs(a.dual - b.dual).max())
    d2 = max(np.abs(a.real + b.real).max(), np.abs(a.dual + b.dual).max())
    return float(min(d1, d2))


def translation_distance(a, b):
    return float(np.linalg.norm(a.translation - b.translation))


def rotation_angle_between(a, b):
    rel = qmul(qconj(a.real), b.real)
    return float(2 * np.arctan2(np.linalg.norm(rel[1:]), abs(rel[0])))
