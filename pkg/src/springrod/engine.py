"""The composed engine: one-step prediction, loss, analytic parameter
gradients, and the oracle simulator that produces ground-truth datasets."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (SystemState, as_system_state, cross3, dot3, pure_quat, quat_from_rotvec, quat_mul,
                   quat_norm, rotate)
from .errors import DegenerateSpring, NonFiniteState, NonSmoothPoint
from .forces import accumulate, measure_all, spring_arrays
from .accel import control_loads
from .integrator import Trajectory, accelerations, advance, rollout_batch
from .params import ParamSet

N_STATE = 13


def predict_step(topo, params: ParamSet, states, commands=None) -> SystemState:
    """One force -> acceleration -> integration pass."""
    state = as_system_state(states)
    if commands is not None and topo.n_controls == 0:
        commands = None
    try:
        out = advance(topo, params, state, commands)
    except DegenerateSpring as exc:
        raise DegenerateSpring(spring=exc.spring, step=0) from None
    if not out.is_finite():
        raise NonFiniteState(0)
    return out


def step_loss(predicted, truth, weights=None):
    """Mean squared difference over all 13 state scalars of every rod.

    ``weights`` optionally scales each of the 13 per-rod components.
    """
    a = as_system_state(predicted).flat()
    b = as_system_state(truth).flat()
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    d = (a - b) ** 2
    if weights is not None:
        d = d * np.asarray(weights, dtype=float)
    return float(np.mean(d))


# ---- analytic derivatives ------------------------------------------------------

def _cable_mask(f_raw, cable_mode):
    if not cable_mode:
        return np.ones_like(f_raw)
    if np.any(f_raw == 0.0):
        raise NonSmoothPoint("a cable is exactly at its slack boundary")
    return (f_raw > 0.0).astype(float)


def param_jacobian(topo, params: ParamSet, states, commands=None):
    """Prediction and its Jacobian with respect to ``params.to_vector()``.

    Returns ``(pred, J)`` with ``pred`` of shape ``(..., R, 13)`` and ``J`` of
    shape ``(..., R, 13, P)``.
    """
    state = as_system_state(states)
    params.check(topo)
    batch = state.batch_shape
    R, G = topo.n_rods, len(params.springs)
    Rg = len(params.rods)
    P = len(params.to_vector())
    dt = topo.dt

    r_w = rotate(state.q, topo.half_body)
    dF_plus = np.zeros((P,) + batch + (R, 3))
    dF_minus = np.zeros_like(dF_plus)
    f_plus = np.zeros(batch + (R, 3))
    f_minus = np.zeros(batch + (R, 3))
    if topo.n_springs:
        m, _ = measure_all(topo, state)
        K, c, L0 = spring_arrays(topo, params.springs)
        f_raw = K * (m.ell - L0) + c * m.sdot
        act = _cable_mask(f_raw, topo.cable_mode)
        f = f_raw * act
        fa = f[..., None] * m.u
        f_plus, f_minus = accumulate(topo, fa, -fa)
        # d f_s / d theta, laid out (P, ..., S)
        df = np.zeros((P,) + f.shape)
        for s, g in enumerate(topo.spring_group):
            df[3 * g, ..., s] = (m.ell[..., s] - L0[s]) * act[..., s]
            df[3 * g + 1, ..., s] = m.sdot[..., s] * act[..., s]
            df[3 * g + 2, ..., s] = -K[s] * act[..., s]
        dfa = df[..., None] * m.u
        dF_plus, dF_minus = accumulate(topo, dfa, -dfa)

    cf, ct = control_loads(topo, state, commands, params.control_scale)
    dCF = np.zeros((P,) + batch + (R, 3))
    dCT = np.zeros_like(dCF)
    if topo.n_controls and commands is not None:
        commands = np.asarray(commands, dtype=float)
        arms = rotate(state.q[..., topo.control_rod, :], topo.control_arm)
        off = 3 * G + 2 * Rg
        for k in range(topo.n_controls):
            j = off + topo.control_group[k]
            r = topo.control_rod[k]
            dCF[j, ..., r, :] += commands[..., k, :]
            dCT[j, ..., r, :] += cross3(arms[..., k, :], commands[..., k, :])

    M, I = params.mass_arrays(R)
    force = f_plus + f_minus + cf
    torque = cross3(r_w, f_plus) + cross3(-r_w, f_minus) + ct
    a = force / M[:, None] + np.asarray(topo.gravity)
    alpha = torque / I[:, None]
    da = (dF_plus + dF_minus + dCF) / M[:, None]
    dalpha = (cross3(r_w, dF_plus) + cross3(-r_w, dF_minus) + dCT) / I[:, None]
    for rod in range(R):
        mg = params.rod_group(rod)
        jM, jI = 3 * G + 2 * mg, 3 * G + 2 * mg + 1
        da[jM, ..., rod, :] -= force[..., rod, :] / M[rod] ** 2
        dalpha[jI, ..., rod, :] -= torque[..., rod, :] / I[rod] ** 2

    v = state.v + a * dt
    p = state.p + v * dt
    w = state.w + alpha * dt
    q_raw = state.q + (0.5 * dt) * quat_mul(pure_quat(w), state.q)
    nrm = quat_norm(q_raw)[..., None]
    q = q_raw / nrm

    dv = da * dt
    dp = dv * dt
    dw = dalpha * dt
    dq_raw = (0.5 * dt) * quat_mul(pure_quat(dw), state.q)
    dq = (dq_raw - q * np.sum(q * dq_raw, axis=-1, keepdims=True)) / nrm

    pred = np.concatenate([p, v, q, w], axis=-1)
    J = np.concatenate([dp, dv, dq, dw], axis=-1)
    return pred, np.moveaxis(J, 0, -1)


def param_gradient(topo, params: ParamSet, states, commands, truth, weights=None):
    """Gradient of :func:`step_loss` with respect to every ParamSet entry.

    ``states``/``truth`` may carry leading batch axes; the loss is then the
    mean over the whole batch.
    """
    pred, J = param_jacobian(topo, params, states, commands)
    resid = pred - as_system_state(truth).flat()
    if weights is not None:
        resid = resid * np.asarray(weights, dtype=float)
    return 2.0 / resid.size * (resid.reshape(-1) @ J.reshape(-1, J.shape[-1]))


# ---- oracle ----------------------------------------------------------------------

@dataclass(frozen=True)
class InitSampler:
    sigma_p: float = 0.05
    sigma_v: float = 0.1
    sigma_q: float = 0.05
    sigma_w: float = 0.1


@dataclass(frozen=True)
class ControlSampler:
    """Piecewise-constant random directed commands.

    Every ``hold`` steps each channel draws a uniform random direction and a
    magnitude uniform in ``[0, magnitude]``.
    """

    enabled: bool = False
    magnitude: float = 10.0
    hold: int = 100


@dataclass(frozen=True)
class OracleSpec:
    topology: object
    true_params: ParamSet
    init: InitSampler = field(default_factory=InitSampler)
    control: ControlSampler = field(default_factory=ControlSampler)
    seed: int = 0

    def meta(self):
        return {
            "seed": self.seed,
            "init_sampler": vars(self.init).copy(),
            "control_sampler": vars(self.control).copy(),
            "rng": "numpy Philox4x64, key=seed, stream i = jumped(i)",
        }


def trajectory_rng(seed, index):
    """Counter-based generator for trajectory ``index``: Philox keyed by the seed,
    advanced by ``index`` jumps of 2**128 draws."""
    return np.random.Generator(np.random.Philox(key=int(seed)).jumped(int(index)))


def sample_initial(spec: OracleSpec, rng) -> SystemState:
    nom = spec.topology.nominal_state()
    R = nom.n_rods
    s = spec.init
    dp = rng.normal(0.0, s.sigma_p, (R, 3))
    v = rng.normal(0.0, s.sigma_v, (R, 3))
    rv = rng.normal(0.0, s.sigma_q, (R, 3))
    w = rng.normal(0.0, s.sigma_w, (R, 3))
    q = quat_mul(quat_from_rotvec(rv), nom.q)
    return SystemState(p=nom.p + dp, v=v, q=q, w=w)


def sample_commands(spec: OracleSpec, rng, n_steps):
    C = spec.topology.n_controls
    out = np.zeros((n_steps, C, 3))
    cs = spec.control
    if not cs.enabled or C == 0:
        return out
    for start in range(0, n_steps, cs.hold):
        d = rng.normal(size=(C, 3))
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        mag = rng.uniform(0.0, cs.magnitude, size=(C, 1))
        out[start:start + cs.hold] = d * mag
    return out


def generate_dataset(spec: OracleSpec, n_traj, steps_per_traj, offset=0, chunk=200):
    """Simulate ``n_traj`` oracle trajectories; trajectory ``i`` uses stream ``offset + i``.

    Trajectories are simulated in vectorized chunks; the result does not
    depend on ``chunk``.
    """
    topo, params = spec.topology, spec.true_params
    out = []
    for lo in range(0, n_traj, chunk):
        idx = list(range(lo, min(n_traj, lo + chunk)))
        inits, cmds = [], []
        for i in idx:
            rng = trajectory_rng(spec.seed, offset + i)
            inits.append(sample_initial(spec, rng))
            cmds.append(sample_commands(spec, rng, steps_per_traj))
        init = SystemState(*(np.stack([getattr(s, k) for s in inits]) for k in "pvqw"))
        commands = np.stack(cmds, axis=1) if topo.n_controls else None
        try:
            states = rollout_batch(topo, params, init, commands, steps_per_traj, check_every=50)
        except NonFiniteState as exc:
            bad = _first_bad(topo, params, init, commands, steps_per_traj)
            raise NonFiniteState(exc.step, trajectory=offset + idx[bad]) from None
        except DegenerateSpring as exc:
            raise DegenerateSpring(spring=exc.spring, step=exc.step, trajectory=offset + idx[0]) from None
        for j, i in enumerate(idx):
            traj_cmds = cmds[j]
            out.append(Trajectory(
                states=SystemState(*(np.ascontiguousarray(getattr(states, k)[:, j]) for k in "pvqw")),
                commands=traj_cmds, dt=topo.dt,
                meta={"index": offset + i, "seed": spec.seed},
            ))
    return out


def _first_bad(topo, params, init, commands, n_steps):
    for j in range(init.p.shape[0]):
        cmd = None if commands is None else commands[:, j]
        try:
            rollout_batch(topo, params, init[j], cmd, n_steps)
        except NonFiniteState:
            return j
    return 0


def kinetic_energy(topo, params, state):
    M, I = params.mass_arrays(topo.n_rods)
    return float(0.5 * np.sum(M * dot3(state.v, state.v)) + 0.5 * np.sum(I * dot3(state.w, state.w)))


def settle(topo, params, state=None, drag=0.02, ke_tol=1e-12, accel_tol=1e-9, max_steps=500_000):
    """Damped oracle rollout until the system is at rest.

    Each step is the ordinary engine step followed by a velocity drag factor
    ``(1 - drag)``; drag changes the path but not the equilibrium.  Stops once
    kinetic energy is below ``ke_tol`` and the largest linear and angular
    acceleration at zero velocity is below ``accel_tol``.  Returns the settled
    state with velocities set to zero.
    """
    s = topo.nominal_state() if state is None else as_system_state(state)
    for k in range(max_steps):
        s = advance(topo, params, s)
        s = SystemState(s.p, s.v * (1.0 - drag), s.q, s.w * (1.0 - drag))
        if k % 100 == 0 and kinetic_energy(topo, params, s) < ke_tol:
            rest = SystemState(s.p, np.zeros_like(s.v), s.q, np.zeros_like(s.w))
            acc = accelerations(topo, params, rest)
            if max(np.abs(acc.a).max(), np.abs(acc.alpha).max()) < accel_tol:
                return rest
    raise RuntimeError(f"did not settle within {max_steps} steps")
