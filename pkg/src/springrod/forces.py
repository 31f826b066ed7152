"""Spring force generation: Hooke's law with damping on the spring axis.

Each spring is reduced to a 1D problem (current length, axial extension rate,
unit axis), its scalar tension is computed, and the result is mapped back
onto the two endpoints as equal and opposite 3D forces.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import dot3, norm3
from .errors import DegenerateSpring
from .topology import Topology, endpoint_table

MIN_LENGTH = 1e-9


@dataclass(frozen=True)
class SpringParams:
    K: float
    c: float
    L0: float

    def __post_init__(self):
        if not (self.K >= 0 and self.c >= 0 and self.L0 > 0):
            raise ValueError(f"invalid spring parameters {self}")


@dataclass(frozen=True)
class SpringMeasurement:
    ell: np.ndarray
    sdot: np.ndarray
    u: np.ndarray


def measure(pa, va, pb, vb):
    """Length, axial extension rate and unit axis from ``a`` to ``b``.

    Broadcasts over leading axes.  Raises :class:`DegenerateSpring` if any
    spring is shorter than ``MIN_LENGTH``.
    """
    d = np.asarray(pb, dtype=float) - np.asarray(pa, dtype=float)
    ell = norm3(d)
    if np.any(ell < MIN_LENGTH):
        bad = np.argwhere(ell < MIN_LENGTH)
        spring = int(bad[0][-1]) if np.ndim(ell) else None
        raise DegenerateSpring(spring=spring)
    u = d / ell[..., None]
    dv = np.asarray(vb, dtype=float) - np.asarray(va, dtype=float)
    return SpringMeasurement(ell=ell, sdot=dot3(dv, u), u=u)


def scalar_force(m: SpringMeasurement, K, c, L0, cable_mode=False):
    """Tension ``K (ell - L0) + c sdot``; clamped at zero for cables."""
    f = K * (m.ell - L0) + c * m.sdot
    if cable_mode:
        f = np.maximum(f, 0.0)
    return f


def endpoint_forces(m: SpringMeasurement, f_s):
    """Forces on endpoints ``a`` and ``b``; positive tension pulls them together."""
    fa = np.asarray(f_s, dtype=float)[..., None] * m.u
    return fa, -fa


def spring_arrays(topo: Topology, params):
    """Per-spring ``K, c, L0`` arrays gathered from the per-group parameters."""
    g = topo.spring_group
    K = np.array([params[k].K for k in range(len(params))], dtype=float)[g]
    c = np.array([params[k].c for k in range(len(params))], dtype=float)[g]
    L0 = np.array([params[k].L0 for k in range(len(params))], dtype=float)[g]
    return K, c, L0


def measure_all(topo: Topology, state):
    """Spring measurements for every spring; returns ``(measurement, r_w)``."""
    pos, vel, r = endpoint_table(topo, state)
    a, b = topo.spring_a, topo.spring_b
    try:
        m = measure(pos[..., a, :], vel[..., a, :], pos[..., b, :], vel[..., b, :])
    except DegenerateSpring as exc:
        raise DegenerateSpring(spring=exc.spring) from None
    return m, r


def accumulate(topo: Topology, fa, fb):
    """Sum per-spring endpoint forces onto rod ends in spring-index order.

    Returns the Plus-end and Minus-end totals, each of shape ``(..., R, 3)``.
    Forces on anchors are dropped.
    """
    R = topo.n_rods
    batch = fa.shape[:-2]
    ends = np.zeros(batch + (2 * R + len(topo.anchors), 3))
    for k in range(topo.n_springs):
        ends[..., topo.spring_a[k], :] += fa[..., k, :]
        ends[..., topo.spring_b[k], :] += fb[..., k, :]
    return ends[..., 0:2 * R:2, :], ends[..., 1:2 * R:2, :]


def all_spring_forces(topo: Topology, params, state):
    """Accumulated spring forces ``(f_plus, f_minus)`` on every rod end.

    ``params`` holds one :class:`SpringParams` per spring group.
    """
    if topo.n_springs == 0:
        z = np.zeros(state.batch_shape + (topo.n_rods, 3))
        return z, z.copy()
    m, _ = measure_all(topo, state)
    K, c, L0 = spring_arrays(topo, params)
    f = scalar_force(m, K, c, L0, topo.cable_mode)
    fa, fb = endpoint_forces(m, f)
    return accumulate(topo, fa, fb)
