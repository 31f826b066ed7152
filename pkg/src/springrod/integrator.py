"""Semi-implicit Euler integration and multi-step rollouts."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .accel import Accel, control_loads, system_acceleration
from .core import RodState, SystemState, as_system_state, pure_quat, quat_mul, quat_normalize
from .errors import DegenerateSpring, NonFiniteState
from .forces import all_spring_forces
from .core import rotate


def step(state, acc: Accel, dt):
    """Advance one step: velocities first, then positions with the new velocities.

    Works for a :class:`RodState` or a (batched) :class:`SystemState`.
    """
    v = state.v + acc.a * dt
    p = state.p + v * dt
    w = state.w + acc.alpha * dt
    q = quat_normalize(state.q + (0.5 * dt) * quat_mul(pure_quat(w), state.q))
    return type(state)(p=p, v=v, q=q, w=w)


def accelerations(topo, params, state: SystemState, commands=None):
    """Force generation followed by acceleration generation for all rods."""
    f_plus, f_minus = all_spring_forces(topo, params.springs, state)
    r_w = rotate(state.q, topo.half_body)
    cf, ct = control_loads(topo, state, commands, params.control_scale)
    M, I = params.mass_arrays(topo.n_rods)
    return system_acceleration(f_plus, f_minus, r_w, cf, ct, M, I, topo.gravity)


def advance(topo, params, state: SystemState, commands=None):
    return step(state, accelerations(topo, params, state, commands), topo.dt)


@dataclass
class Trajectory:
    """States at steps ``0..T`` and the commands applied on each transition.

    ``states`` arrays have shape ``(T + 1, R, ...)``; ``commands`` has shape
    ``(T, C, 3)``.
    """

    states: SystemState
    commands: np.ndarray
    dt: float
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self):
        return self.states.p.shape[0] - 1

    @property
    def n_rods(self):
        return self.states.p.shape[1]

    def state(self, t) -> SystemState:
        return self.states[t]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        a, b = self.states, other.states
        return (self.dt == other.dt and np.array_equal(self.commands, other.commands)
                and all(np.array_equal(getattr(a, k), getattr(b, k)) for k in "pvqw"))


def rollout_batch(topo, params, initial: SystemState, commands=None, n_steps=0, check_every=1):
    """Roll out a batch of initial states; returns stacked states ``(T + 1, ...)``.

    ``commands`` has shape ``(T, ..., C, 3)`` matching the batch, or is None.
    """
    params.check(topo)
    shape = (n_steps + 1,) + initial.p.shape
    P, V, W = np.empty(shape), np.empty(shape), np.empty(shape)
    Q = np.empty(shape[:-1] + (4,))
    s = initial
    P[0], V[0], Q[0], W[0] = s.p, s.v, s.q, s.w
    for t in range(n_steps):
        cmd = None if commands is None else commands[t]
        try:
            s = advance(topo, params, s, cmd)
        except DegenerateSpring as exc:
            raise DegenerateSpring(spring=exc.spring, step=t) from None
        if (t + 1) % check_every == 0 or t + 1 == n_steps:
            if not s.is_finite():
                raise NonFiniteState(t)
        P[t + 1], V[t + 1], Q[t + 1], W[t + 1] = s.p, s.v, s.q, s.w
    return SystemState(P, V, Q, W)


def rollout(topo, params, initial, controls=None, n_steps=0) -> Trajectory:
    """Simulate ``n_steps`` from ``initial`` (list of RodState or SystemState).

    ``controls`` is an array ``(n_steps, C, 3)`` of raw commands, or None for
    zero commands.
    """
    initial = as_system_state(initial)
    if controls is None:
        controls = np.zeros((n_steps, topo.n_controls, 3))
    controls = np.asarray(controls, dtype=float).reshape(n_steps, topo.n_controls, 3)
    states = rollout_batch(topo, params, initial, controls if topo.n_controls else None, n_steps)
    return Trajectory(states=states, commands=controls, dt=topo.dt)
