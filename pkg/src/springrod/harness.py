"""Experiment drivers shared by the CLI and the acceptance tests."""
from __future__ import annotations

import numpy as np

from .core import SystemState
from .engine import predict_step
from .integrator import rollout_batch
from .koopman import koopman_fit, koopman_step
from .sysid import _select, composite_error, identify, true_composites


def _blocks(flat):
    return {"p": flat[..., 0:3], "v": flat[..., 3:6], "q": flat[..., 6:10], "w": flat[..., 10:13]}


def one_step_mse(topo, params, dataset, max_traj=None):
    """Mean one-step loss over every transition of ``dataset``."""
    total, count = 0.0, 0
    n = len(dataset) if max_traj is None else min(max_traj, len(dataset))
    for i in range(n):
        tr = dataset[i]
        now, nxt = tr.states[:-1], tr.states[1:]
        cmds = tr.commands if topo.n_controls else None
        pred = predict_step(topo, params, now, cmds)
        d = pred.flat() - nxt.flat()
        total += float(np.sum(d * d))
        count += d.size
    return total / count


def koopman_one_step_mse(topo, model, dataset, max_traj=None):
    total, count = 0.0, 0
    n = len(dataset) if max_traj is None else min(max_traj, len(dataset))
    for i in range(n):
        tr = dataset[i]
        now, nxt = tr.states[:-1], tr.states[1:]
        cmds = tr.commands if topo.n_controls else None
        d = koopman_step(model, topo, now, cmds).flat() - nxt.flat()
        total += float(np.sum(d * d))
        count += d.size
    return total / count


def rollout_mse(topo, params, dataset, horizon):
    """Per-step MSE of open-loop rollouts from each trajectory's first state.

    Returns rows ``{"step", "mse_p", "mse_v", "mse_q", "mse_w"}`` for steps
    ``0..horizon``, averaged over trajectories.
    """
    horizon = min(horizon, min(tr.n_steps for tr in dataset))
    init = SystemState(*(np.stack([getattr(tr.states, k)[0] for tr in dataset]) for k in "pvqw"))
    truth = np.stack([tr.states.flat()[:horizon + 1] for tr in dataset], axis=1)
    cmds = None
    if topo.n_controls:
        cmds = np.stack([tr.commands[:horizon] for tr in dataset], axis=1)
    pred = rollout_batch(topo, params, init, cmds, horizon).flat()
    sq = (pred - truth) ** 2
    rows = []
    for t in range(horizon + 1):
        row = {"step": t}
        for key, block in _blocks(sq[t]).items():
            row[f"mse_{key}"] = float(np.mean(block))
        rows.append(row)
    return rows


def sweep_efficiency(topo, dataset, truth_params, fractions, seeds, mode="shared"):
    """Composite error statistics per training fraction over ``seeds`` seeds."""
    truth = true_composites(topo, truth_params, mode, controls=False)
    rows = []
    for f in fractions:
        errs, n = [], None
        for seed in range(seeds):
            ident = identify(topo, dataset, f, seed, mode=mode)
            errs.append(composite_error(ident.composites, truth))
            n = ident.n_samples
        errs = np.array(errs)
        rows.append({
            "fraction": float(f), "n_samples": n, "mean_error": float(errs.mean()),
            "std_error": float(errs.std()), "median_error": float(np.median(errs)),
            "max_error": float(errs.max()),
        })
    return rows


def koopman_comparison(topo, train, test, fraction, seed, degree=2, max_test=None):
    """One-step test MSE of the modular engine and the Koopman baseline when
    both are fitted on the same subsample of training transitions."""
    from .sysid import to_params

    ident = identify(topo, train, fraction, seed)
    selection, _ = _select(train, fraction, seed)
    model = koopman_fit(topo, train, degree=degree, selection=selection)
    engine_mse = one_step_mse(topo, to_params(topo, ident), test, max_test)
    koop_mse = koopman_one_step_mse(topo, model, test, max_test)
    return {
        "fraction": fraction, "seed": seed, "degree": degree, "n_samples": ident.n_samples,
        "engine_one_step_mse": engine_mse, "koopman_one_step_mse": koop_mse,
        "koopman": model.to_dict(),
    }
