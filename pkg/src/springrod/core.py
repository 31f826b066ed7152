"""Vector and quaternion math plus the rigid-rod state types.

Quaternions are stored scalar-first as ``(w, x, y, z)`` and represent the
world-from-body rotation.  All functions broadcast over leading axes, and
every 3-term reduction is written out component-wise so that a batched
evaluation is bit-identical to the per-rod one.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BODY_AXIS = np.array([0.0, 0.0, 1.0])


def dot3(a, b):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def cross3(a, b):
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    out = np.empty(a.shape)
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def norm3(a):
    return np.sqrt(dot3(a, a))


def quat_mul(a, b):
    """Hamilton product ``a ⊗ b``."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    out = np.empty(a.shape)
    out[..., 0] = aw * bw - ax * bx - ay * by - az * bz
    out[..., 1] = aw * bx + ax * bw + ay * bz - az * by
    out[..., 2] = aw * by - ax * bz + ay * bw + az * bx
    out[..., 3] = aw * bz + ax * by - ay * bx + az * bw
    return out


def quat_norm(q):
    return np.sqrt(q[..., 0] * q[..., 0] + q[..., 1] * q[..., 1]
                   + q[..., 2] * q[..., 2] + q[..., 3] * q[..., 3])


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    return q / quat_norm(q)[..., None]


def pure_quat(v):
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (4,))
    out[..., 1:] = v
    return out


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / norm3(axis)[..., None]
    half = 0.5 * np.asarray(angle, dtype=float)
    out = np.empty(np.broadcast_shapes(axis.shape[:-1], half.shape) + (4,))
    out[..., 0] = np.cos(half)
    out[..., 1:] = np.sin(half)[..., None] * axis
    return out


def quat_from_rotvec(rv):
    """Quaternion for the rotation vector ``rv`` (axis times angle)."""
    rv = np.asarray(rv, dtype=float)
    angle = norm3(rv)
    half = 0.5 * angle
    # sin(half)/angle -> 1/2 as angle -> 0
    scale = np.where(angle > 1e-12, np.sin(half) / np.where(angle > 1e-12, angle, 1.0), 0.5)
    out = np.empty(rv.shape[:-1] + (4,))
    out[..., 0] = np.cos(half)
    out[..., 1:] = scale[..., None] * rv
    return out


def quat_between(a, b):
    """Shortest-arc unit quaternion rotating unit vector ``a`` onto ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = dot3(a, b)
    if c < -1.0 + 1e-12:
        # antiparallel: rotate pi about any axis perpendicular to a
        perp = cross3(a, [1.0, 0.0, 0.0])
        if norm3(perp) < 1e-6:
            perp = cross3(a, [0.0, 1.0, 0.0])
        return quat_from_axis_angle(perp, np.pi)
    q = np.concatenate([[1.0 + c], cross3(a, b)])
    return quat_normalize(q)


def quat_to_matrix(q):
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def rotate(q, v):
    """Apply the rotation ``q`` to ``v``: ``v + 2w (u×v) + 2 u×(u×v)``."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    u = q[..., 1:]
    t = cross3(u, v)
    t = t + t
    return v + q[..., :1] * t + cross3(u, t)


@dataclass(frozen=True, eq=False)
class RodGeometry:
    length: float
    body_axis: np.ndarray = field(default_factory=lambda: BODY_AXIS.copy())

    def __eq__(self, other):
        if not isinstance(other, RodGeometry):
            return NotImplemented
        return self.length == other.length and np.array_equal(self.body_axis, other.body_axis)

    def __hash__(self):
        return hash((self.length, tuple(self.body_axis)))

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"rod length must be positive, got {self.length}")
        axis = np.asarray(self.body_axis, dtype=float)
        if abs(norm3(axis) - 1.0) > 1e-12:
            raise ValueError("body_axis must be a unit vector")
        axis.flags.writeable = False
        object.__setattr__(self, "body_axis", axis)

    @property
    def half_body(self):
        return 0.5 * self.length * self.body_axis


def _frozen(a, shape):
    a = np.array(a, dtype=float)
    if a.shape != shape:
        raise ValueError(f"expected shape {shape}, got {a.shape}")
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RodState:
    """Kinematic state of one rod; ``w`` is the world-frame angular velocity."""

    p: np.ndarray
    v: np.ndarray
    q: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _frozen(self.p, (3,)))
        object.__setattr__(self, "v", _frozen(self.v, (3,)))
        object.__setattr__(self, "q", _frozen(self.q, (4,)))
        object.__setattr__(self, "w", _frozen(self.w, (3,)))

    @classmethod
    def at_rest(cls, p=(0.0, 0.0, 0.0), q=(1.0, 0.0, 0.0, 0.0)):
        return cls(p=p, v=np.zeros(3), q=q, w=np.zeros(3))

    def as_vector(self):
        return np.concatenate([self.p, self.v, self.q, self.w])


def half_length_vector(state: RodState, geom: RodGeometry):
    return rotate(state.q, geom.half_body)


def endpoint_kinematics(state: RodState, geom: RodGeometry):
    """Return ``(e_plus, e_minus, ve_plus, ve_minus)`` for a rigid rod."""
    r = half_length_vector(state, geom)
    wr = cross3(state.w, r)
    return state.p + r, state.p - r, state.v + wr, state.v - wr


@dataclass(frozen=True)
class SystemState:
    """States of all rods as stacked arrays.

    Shapes are ``(..., R, 3)`` for ``p, v, w`` and ``(..., R, 4)`` for ``q``;
    the leading axes are free batch dimensions.
    """

    p: np.ndarray
    v: np.ndarray
    q: np.ndarray
    w: np.ndarray

    @classmethod
    def from_rods(cls, rods):
        rods = list(rods)
        return cls(
            p=np.array([r.p for r in rods], dtype=float).reshape(-1, 3),
            v=np.array([r.v for r in rods], dtype=float).reshape(-1, 3),
            q=np.array([r.q for r in rods], dtype=float).reshape(-1, 4),
            w=np.array([r.w for r in rods], dtype=float).reshape(-1, 3),
        )

    @property
    def n_rods(self):
        return self.p.shape[-2]

    @property
    def batch_shape(self):
        return self.p.shape[:-2]

    def rods(self):
        if self.batch_shape:
            raise ValueError("rods() needs an unbatched state")
        return [RodState(self.p[i], self.v[i], self.q[i], self.w[i]) for i in range(self.n_rods)]

    def __getitem__(self, idx):
        return SystemState(self.p[idx], self.v[idx], self.q[idx], self.w[idx])

    def flat(self):
        """Per-rod 13-vectors ``[p, v, q, w]`` with shape ``(..., R, 13)``."""
        return np.concatenate([self.p, self.v, self.q, self.w], axis=-1)

    @classmethod
    def from_flat(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x[..., 0:3], x[..., 3:6], x[..., 6:10], x[..., 10:13])

    def is_finite(self):
        return bool(np.isfinite(self.p).all() and np.isfinite(self.v).all()
                    and np.isfinite(self.q).all() and np.isfinite(self.w).all())


def as_system_state(states) -> SystemState:
    if isinstance(states, SystemState):
        return states
    return SystemState.from_rods(states)
