"""Koopman-style baseline: a linear map from lifted observables to rod
accelerations, fitted by least squares and stepped with the same integrator."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .accel import Accel
from .forces import measure_all
from .integrator import step
from .sysid import RegressionProblem, _features, fit_with_retry

MONOMIAL, BLOCKS = "monomial", "blocks"


def _raw_observables(topo, state):
    """Per-rod observables ``(N, R, D)``: incident springs' (ell, sdot) then velocity."""
    m, _ = measure_all(topo, state)
    out = []
    for rod, touches in enumerate(topo.incidence):
        cols = [m.ell[:, s] for s, _, _ in touches] + [m.sdot[:, s] for s, _, _ in touches]
        cols += [state.v[:, rod, 0], state.v[:, rod, 1], state.v[:, rod, 2]]
        out.append(np.stack(cols, axis=-1))
    return out


def monomials(x, degree):
    """All monomials of the columns of ``x (N, D)`` up to ``degree``, constant first."""
    n, D = x.shape
    cols = [np.ones(n)]
    for p in range(1, degree + 1):
        for combo in combinations_with_replacement(range(D), p):
            col = x[:, combo[0]].copy()
            for j in combo[1:]:
                col *= x[:, j]
            cols.append(col)
    return np.stack(cols, axis=-1)


def lift(topo, state, degree=2, basis=MONOMIAL, commands=None):
    """Lifted features per rod, a list of ``(N, d_r)`` arrays."""
    if basis == MONOMIAL:
        return [monomials(x, degree) for x in _raw_observables(topo, state)]
    if basis == BLOCKS:
        lin, ang = _features(topo, state, commands, topo.rest_lengths)
        N = lin.shape[0]
        out = []
        for rod in range(topo.n_rods):
            x = np.concatenate([lin[:, rod].reshape(N, -1), ang[:, rod].reshape(N, -1)], axis=-1)
            out.append(monomials(x, degree))
        return out
    raise ValueError(f"unknown basis {basis!r}")


@dataclass
class KoopmanModel:
    coef: list          # per rod, (d_r, 6) map to (a, alpha)
    degree: int
    basis: str
    condition_number: float
    ridge: float
    n_samples: int

    def to_dict(self):
        return {
            "degree": self.degree, "basis": self.basis,
            "condition_number": self.condition_number, "ridge": self.ridge,
            "n_samples": self.n_samples, "n_features": [int(c.shape[0]) for c in self.coef],
        }


def koopman_fit(topo, dataset, degree=2, basis=MONOMIAL, selection=None):
    """Fit one lifted linear operator per rod on all (or selected) transitions.

    ``selection`` is a list of ``(trajectory_index, step_indices)``.
    """
    if degree < 1:
        raise ValueError("degree must be >= 1")
    if not dataset:
        raise ValueError("empty dataset")
    if selection is None:
        selection = [(i, np.arange(tr.n_steps)) for i, tr in enumerate(dataset)]
    problems = None
    n = 0
    for i, ts in selection:
        tr = dataset[i]
        ts = np.asarray(ts, dtype=int)
        if ts.size == 0:
            continue
        now, nxt = tr.states[ts], tr.states[ts + 1]
        cmds = tr.commands[ts] if topo.n_controls else None
        feats = lift(topo, now, degree, basis, cmds)
        target = np.concatenate([(nxt.v - now.v) / tr.dt, (nxt.w - now.w) / tr.dt], axis=-1)
        if problems is None:
            problems = [RegressionProblem.empty([str(j) for j in range(f.shape[1])], 6) for f in feats]
        for rod, f in enumerate(feats):
            problems[rod].add(f, target[:, rod])
        n += ts.size
    if problems is None:
        raise ValueError("empty dataset")
    coef, conds, ridges = [], [], []
    for prob in problems:
        beta, cond, ridge = fit_with_retry(prob)
        coef.append(beta)
        conds.append(cond)
        ridges.append(ridge)
    return KoopmanModel(coef, degree, basis, float(max(conds)), float(max(ridges)), n)


def koopman_predict(model: KoopmanModel, topo, state, commands=None) -> Accel:
    """Predicted accelerations for a batched state ``(N, R, ...)``."""
    feats = lift(topo, state, model.degree, model.basis, commands)
    out = np.stack([f @ c for f, c in zip(feats, model.coef)], axis=1)
    return Accel(a=out[..., :3], alpha=out[..., 3:])


def koopman_step(model: KoopmanModel, topo, state, commands=None):
    return step(state, koopman_predict(model, topo, state, commands), topo.dt)
