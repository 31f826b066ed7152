"""Rod linear and angular accelerations from end forces and control forces."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import cross3, rotate


@dataclass(frozen=True)
class RodParams:
    M: float
    I: float

    def __post_init__(self):
        if not (self.M > 0 and self.I > 0):
            raise ValueError(f"rod mass and inertia must be positive, got {self}")


@dataclass(frozen=True)
class ControlInput:
    u: np.ndarray
    h: float = 1.0

    @property
    def force(self):
        return self.h * np.asarray(self.u, dtype=float)


@dataclass(frozen=True)
class Accel:
    a: np.ndarray
    alpha: np.ndarray


def thin_rod_inertia(M, L):
    """Inertia of a thin rod about a perpendicular axis through its center."""
    if not (M > 0 and L > 0):
        raise ValueError("mass and length must be positive")
    return M * L * L / 12.0


def _loads_to_accel(force, torque, M, I, gravity):
    return Accel(a=force / M + np.asarray(gravity, dtype=float), alpha=torque / I)


def rod_acceleration(f1, f2, f_u, r_w, r_u_w, params: RodParams, gravity):
    """Accelerations of one rod.

    ``f1`` acts at the Plus end ``+r_w``, ``f2`` at the Minus end ``-r_w`` and
    the control force ``f_u`` at arm ``r_u_w``; all vectors in world frame.
    Uses a single scalar inertia, so no gyroscopic term.
    """
    f1, f2, f_u = (np.asarray(x, dtype=float) for x in (f1, f2, f_u))
    force = f1 + f2 + f_u
    torque = cross3(r_w, f1) + cross3(-np.asarray(r_w), f2) + cross3(r_u_w, f_u)
    return _loads_to_accel(force, torque, params.M, params.I, gravity)


def control_loads(topo, state, commands, h):
    """Total control force and torque per rod, shape ``(..., R, 3)`` each.

    ``commands`` has shape ``(..., C, 3)``; ``h`` holds one scale per control
    group.  Controls are summed in index order.
    """
    batch = state.batch_shape
    force = np.zeros(batch + (topo.n_rods, 3))
    torque = np.zeros(batch + (topo.n_rods, 3))
    if topo.n_controls == 0 or commands is None:
        return force, torque
    commands = np.asarray(commands, dtype=float)
    arms = rotate(state.q[..., topo.control_rod, :], topo.control_arm)
    h = np.asarray(h, dtype=float)[topo.control_group]
    fu = h[:, None] * commands
    tu = cross3(arms, fu)
    for k in range(topo.n_controls):
        r = topo.control_rod[k]
        force[..., r, :] += fu[..., k, :]
        torque[..., r, :] += tu[..., k, :]
    return force, torque


def system_acceleration(f_plus, f_minus, r_w, ctrl_force, ctrl_torque, M, I, gravity):
    """Vectorized :func:`rod_acceleration` over all rods.

    ``M`` and ``I`` broadcast against the rod axis (per-rod arrays or scalars).
    """
    force = f_plus + f_minus + ctrl_force
    torque = cross3(r_w, f_plus) + cross3(-r_w, f_minus) + ctrl_torque
    M = np.asarray(M, dtype=float)[..., None]
    I = np.asarray(I, dtype=float)[..., None]
    return _loads_to_accel(force, torque, M, I, gravity)
