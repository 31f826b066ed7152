"""Parameter identification by linear regression on state trajectories.

Accelerations are linear in a small set of composite coefficients once each
spring is reduced to its axis:

    a - g = sum_g [ K_g/M * X_ext + c_g/M * X_rate + K_g (L0k_g - L0_g)/M * X_axis ]
            + sum_k h_k/M * X_cmd

and the angular equation is the same with ``I`` and lever-arm cross products.
Absolute force scale cancels, so only ratios such as ``K/M`` are observable
without an anchor (a known mass or stiffness).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .accel import RodParams
from .core import cross3, rotate
from .errors import InconsistentTrajectory, NoExcitation, SingularProblem
from .forces import SpringParams, measure_all
from .integrator import accelerations
from .params import ParamSet, _raw

COND_LIMIT = 1e12
SHARED, PER_ROD = "shared", "per_rod"


# ---- feature extraction ------------------------------------------------------------

def feature_labels(topo):
    """Base names of the feature columns, identical for every rod."""
    out = []
    for g in range(topo.n_spring_groups):
        out += [f"K[s{g}]", f"c[s{g}]", f"Kdl[s{g}]"]
    out += [f"h[u{k}]" for k in range(topo.n_control_groups)]
    return out


@dataclass
class Samples:
    """Regression rows for a set of transitions.

    ``lin_X``/``ang_X`` have shape ``(N, R, 3, F)`` and ``lin_y``/``ang_y``
    shape ``(N, R, 3)``; column order follows :func:`feature_labels`.
    """

    lin_X: np.ndarray
    lin_y: np.ndarray
    ang_X: np.ndarray
    ang_y: np.ndarray

    @property
    def n(self):
        return self.lin_y.shape[0]


def _features(topo, state, commands, rest_lengths):
    """Feature blocks for states ``(N, R, ...)`` and commands ``(N, C, 3)``."""
    G, Cg = topo.n_spring_groups, topo.n_control_groups
    F = 3 * G + Cg
    N, R = state.p.shape[0], topo.n_rods
    lin = np.zeros((N, R, 3, F))
    ang = np.zeros((N, R, 3, F))
    r_w = rotate(state.q, topo.half_body)
    if topo.n_springs:
        m, _ = measure_all(topo, state)
        L0k = np.asarray(rest_lengths, dtype=float)[topo.spring_group]
        ext = m.ell - L0k
        active = (ext > 0.0).astype(float) if topo.cable_mode else np.ones_like(ext)
        for rod, touches in enumerate(topo.incidence):
            for s, plus, sign in touches:
                g = topo.spring_group[s]
                su = (sign * active[:, s])[:, None] * m.u[:, s]
                arm = r_w[:, rod] if plus else -r_w[:, rod]
                blocks = (ext[:, s, None] * su, m.sdot[:, s, None] * su, su)
                for j, b in enumerate(blocks):
                    lin[:, rod, :, 3 * g + j] += b
                    ang[:, rod, :, 3 * g + j] += cross3(arm, b)
    if topo.n_controls and commands is not None:
        arms = rotate(state.q[:, topo.control_rod], topo.control_arm)
        for k in range(topo.n_controls):
            rod, col = topo.control_rod[k], 3 * G + topo.control_group[k]
            lin[:, rod, :, col] += commands[:, k]
            ang[:, rod, :, col] += cross3(arms[:, k], commands[:, k])
    return lin, ang


def extract_samples(topo, traj, transitions=None, rest_lengths=None) -> Samples:
    """Features and exact inverse-integrator targets for transitions ``t -> t+1``.

    ``transitions`` selects step indices (default: all).  ``rest_lengths``
    defaults to the topology's known per-group rest lengths.
    """
    if traj.n_rods != topo.n_rods:
        raise InconsistentTrajectory(f"trajectory has {traj.n_rods} rods, topology {topo.n_rods}")
    if traj.dt != topo.dt:
        raise InconsistentTrajectory(f"trajectory dt={traj.dt} but topology dt={topo.dt}")
    if traj.n_steps < 1:
        raise InconsistentTrajectory("need at least two states")
    if rest_lengths is None:
        rest_lengths = topo.rest_lengths
    if topo.n_springs and len(rest_lengths) != topo.n_spring_groups:
        raise ValueError("known rest lengths are required for every spring group")
    t = np.arange(traj.n_steps) if transitions is None else np.asarray(transitions, dtype=int)
    S = traj.states
    now = S[t]
    nxt = S[t + 1]
    commands = traj.commands[t] if topo.n_controls else None
    lin, ang = _features(topo, now, commands, rest_lengths)
    dt = traj.dt
    lin_y = (nxt.v - now.v) / dt - np.asarray(topo.gravity)
    ang_y = (nxt.w - now.w) / dt
    return Samples(lin, lin_y, ang, ang_y)


# ---- regression ------------------------------------------------------------------------

@dataclass
class RegressionProblem:
    """Accumulated normal equations ``X^T X`` and ``X^T y`` of one linear fit."""

    gram: np.ndarray
    moment: np.ndarray
    n: int = 0
    feature_names: list = field(default_factory=list)

    @classmethod
    def empty(cls, names, n_outputs=None):
        d = len(names)
        moment = np.zeros(d) if n_outputs is None else np.zeros((d, n_outputs))
        return cls(np.zeros((d, d)), moment, 0, list(names))

    def add(self, X, y):
        """Accumulate rows ``X (n, d)`` with targets ``y (n,)`` or ``(n, k)``."""
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.gram += X.T @ X
        self.moment += X.T @ y
        self.n += X.shape[0]


def _equilibrated(G):
    d = np.sqrt(np.diag(G))
    return G / np.outer(d, d), d


def fit_ols(problem: RegressionProblem, ridge=0.0):
    """Solve ``(gram + ridge I) beta = moment``; returns ``(beta, condition_number)``.

    The condition number is that of the Jacobi-equilibrated system matrix.
    Raises :class:`SingularProblem` when it exceeds ``1e12`` with no ridge.
    """
    G = problem.gram
    names = problem.feature_names
    d = G.shape[0]
    if d == 0:
        return np.zeros(problem.moment.shape), 1.0
    A = G + ridge * np.eye(d)
    diag = np.diag(A)
    if np.any(diag <= 0.0):
        j = int(np.argmin(diag))
        raise SingularProblem(f"feature block {names[j] if names else j} is never excited",
                              float("inf"), names[j] if names else j)
    As, scale = _equilibrated(A)
    evals, evecs = np.linalg.eigh(As)
    cond = float(evals[-1] / evals[0]) if evals[0] > 0 else float("inf")
    if ridge == 0 and not cond <= COND_LIMIT:
        j = int(np.argmax(np.abs(evecs[:, 0])))
        label = names[j] if names else j
        raise SingularProblem(f"ill-conditioned normal equations (cond={cond:.3g}); "
                              f"weakest direction dominated by {label}", cond, label)
    b = problem.moment / (scale if problem.moment.ndim == 1 else scale[:, None])
    y = scipy.linalg.cho_solve(scipy.linalg.cho_factor(As), b)
    beta = y / (scale if y.ndim == 1 else scale[:, None])
    return beta, cond


def fit_with_retry(problem: RegressionProblem):
    """:func:`fit_ols`, retried once with ridge ``1e-10 trace/d`` if ill-conditioned.

    Returns ``(beta, cond, ridge)``.  Never-excited columns are not rescued.
    """
    try:
        beta, cond = fit_ols(problem)
        return beta, cond, 0.0
    except SingularProblem as exc:
        if exc.condition_number == float("inf") and np.any(np.diag(problem.gram) <= 0):
            raise
        d = problem.gram.shape[0]
        ridge = 1e-10 * np.trace(problem.gram) / d
        beta, cond = fit_ols(problem, ridge)
        return beta, cond, ridge


# ---- composite coefficients ------------------------------------------------------------

def rod_groups(topo, mode):
    """List of rod-index lists sharing one mass/inertia."""
    if mode == SHARED:
        return [list(range(topo.n_rods))]
    if mode == PER_ROD:
        return [[r] for r in range(topo.n_rods)]
    raise ValueError(f"unknown rod grouping {mode!r}")


def _key(kind, scale, block, m):
    return f"{kind}/{scale}[{block},r{m}]"


def true_composites(topo, params: ParamSet, mode=SHARED, controls=True):
    """Composite coefficients implied by a physical parameter set."""
    out = {}
    groups = rod_groups(topo, mode)
    for m, rods in enumerate(groups):
        touched, ctrl = _touched(topo, rods)
        rp = params.rods[params.rod_group(rods[0])]
        for scale, val in (("M", rp.M), ("I", rp.I)):
            for g in sorted(touched):
                s = params.springs[g]
                out[_key("K", scale, f"s{g}", m)] = s.K / val
                out[_key("c", scale, f"s{g}", m)] = s.c / val
                out[_key("KL0", scale, f"s{g}", m)] = s.K * s.L0 / val
            if controls:
                for k in sorted(ctrl):
                    out[_key("h", scale, f"u{k}", m)] = params.control_scale[k] / val
    return out


def _touched(topo, rods):
    springs = {topo.spring_group[s] for r in rods for s, _, _ in topo.incidence[r]}
    ctrl = {c.group for c in topo.controls if c.rod in rods}
    return springs, ctrl


def composite_error(estimate: dict, truth: dict):
    """Largest relative error over the composites present in ``truth``."""
    if not truth:
        return 0.0
    errs = []
    for k, v in truth.items():
        if k not in estimate:
            return float("inf")
        errs.append(abs(estimate[k] - v) / abs(v))
    return float(max(errs))


@dataclass
class IdentifiedParams:
    composites: dict
    decomposed: ParamSet | None = None
    residual_rms: float = 0.0
    condition_number: float = 1.0
    n_samples: int = 0
    seed: int | None = None
    fraction: float | None = None
    rod_grouping: str = SHARED
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "schema_version": 1,
            "composites": dict(self.composites),
            "decomposed": None if self.decomposed is None else self.decomposed.to_dict(),
            "residual_rms": self.residual_rms,
            "condition_number": self.condition_number,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "fraction": self.fraction,
            "rod_grouping": self.rod_grouping,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d):
        dec = d.get("decomposed")
        return cls(
            composites={k: float(v) for k, v in d["composites"].items()},
            decomposed=None if dec is None else ParamSet.from_dict(dec),
            residual_rms=float(d.get("residual_rms", 0.0)),
            condition_number=float(d.get("condition_number", 1.0)),
            n_samples=int(d.get("n_samples", 0)),
            seed=d.get("seed"),
            fraction=d.get("fraction"),
            rod_grouping=d.get("rod_grouping", SHARED),
            diagnostics=d.get("diagnostics", {}),
        )


def parse_anchor(text):
    """``"mass=10"`` or ``"stiffness=1000"`` -> ``("mass", 10.0)``."""
    if text is None:
        return None
    if isinstance(text, tuple):
        return text
    kind, _, val = text.partition("=")
    kind = kind.strip().lower()
    if kind not in ("mass", "stiffness") or not val:
        raise ValueError(f"anchor must be mass=<value> or stiffness=<value>, got {text!r}")
    v = float(val)
    if not v > 0:
        raise ValueError("anchor value must be positive")
    return kind, v


def decompose(topo, composites: dict, anchor, mode=SHARED, control_groups=None):
    """Recover physical parameters from composites given one known quantity.

    ``anchor`` is ``("mass", M)`` for rod group 0 or ``("stiffness", K)`` for
    spring group 0.  Known values propagate through the ``K/M`` ratios.
    """
    kind, value = parse_anchor(anchor)
    groups = rod_groups(topo, mode)
    G = topo.n_spring_groups
    Cg = topo.n_control_groups if control_groups is None else control_groups
    M = {0: value} if kind == "mass" else {}
    K = {0: value} if kind == "stiffness" else {}
    changed = True
    while changed:
        changed = False
        for m in range(len(groups)):
            for g in range(G):
                r = composites.get(_key("K", "M", f"s{g}", m))
                if r is None:
                    continue
                if m in M and g not in K:
                    K[g] = r * M[m]
                    changed = True
                elif g in K and m not in M:
                    M[m] = K[g] / r
                    changed = True
    if len(M) < len(groups) or len(K) < G:
        raise ValueError("anchor does not reach every spring group and rod group")
    springs = []
    for g in range(G):
        m = next(m for m in range(len(groups)) if _key("K", "M", f"s{g}", m) in composites)
        c = composites[_key("c", "M", f"s{g}", m)] * M[m]
        L0 = composites[_key("KL0", "M", f"s{g}", m)] / composites[_key("K", "M", f"s{g}", m)]
        springs.append(_raw(SpringParams, K=K[g], c=c, L0=L0))
    rods = []
    for m in range(len(groups)):
        g = next(g for g in range(G) if _key("K", "I", f"s{g}", m) in composites)
        rods.append(_raw(RodParams, M=M[m], I=K[g] / composites[_key("K", "I", f"s{g}", m)]))
    h = []
    for k in range(Cg):
        val = None
        for m in range(len(groups)):
            r = composites.get(_key("h", "M", f"u{k}", m))
            if r is not None:
                val = r * M[m]
                break
        h.append(float("nan") if val is None else val)
    return ParamSet(springs, rods, h)


def to_params(topo, ident: IdentifiedParams) -> ParamSet:
    """Engine parameters reproducing the identified dynamics.

    Uses the decomposed set when present, otherwise a unit-mass anchor (any
    anchor gives identical accelerations).
    """
    if ident.decomposed is not None:
        return ident.decomposed
    return decompose(topo, ident.composites, ("mass", 1.0), ident.rod_grouping)


# ---- identification ---------------------------------------------------------------------

def _select(dataset, fraction, seed):
    counts = getattr(dataset, "step_counts", None)
    if counts is None:
        counts = [tr.n_steps for tr in dataset]
    counts = np.array(counts, dtype=int)
    total = int(counts.sum())
    if total == 0:
        raise ValueError("dataset has no transitions")
    n = total if fraction >= 1 else max(1, int(np.floor(fraction * total)))
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    flat = np.sort(rng.choice(total, size=n, replace=False)) if n < total else np.arange(total)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    which = np.searchsorted(offsets, flat, side="right") - 1
    return [(i, flat[which == i] - offsets[i]) for i in np.unique(which)], total


def _problem_rows(samples: Samples, rods, cols):
    lx = samples.lin_X[:, rods][..., cols].reshape(-1, len(cols))
    ly = samples.lin_y[:, rods].reshape(-1)
    ax = samples.ang_X[:, rods][..., cols].reshape(-1, len(cols))
    ay = samples.ang_y[:, rods].reshape(-1)
    return lx, ly, ax, ay


def _columns(topo, rods, labels, commands_seen):
    touched, ctrl = _touched(topo, rods)
    cols = []
    for j, lab in enumerate(labels):
        block = int(lab[lab.index("[") + 2:-1])
        if lab.startswith("h"):
            if block in ctrl and commands_seen:
                cols.append(j)
        elif block in touched:
            cols.append(j)
    return cols


def identify(topo, dataset, fraction=1.0, seed=0, anchor=None, mode=SHARED):
    """Identify composite coefficients from a subsample of transitions.

    Transitions (pairs of consecutive states) are drawn uniformly without
    replacement with a Philox generator keyed by ``seed``;
    ``floor(fraction * total)`` are kept (at least one).
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if topo.n_springs and len(topo.rest_lengths) != topo.n_spring_groups:
        raise ValueError("topology must list known rest lengths for every spring group")
    selection, total = _select(dataset, fraction, seed)
    labels = feature_labels(topo)
    commands_seen = topo.n_controls > 0 and any(
        np.any(dataset[i].commands[t] != 0) for i, t in selection)
    groups = rod_groups(topo, mode)
    cols = [_columns(topo, rods, labels, commands_seen) for rods in groups]
    problems = []
    for m, rods in enumerate(groups):
        names = [labels[j] for j in cols[m]]
        problems.append((RegressionProblem.empty([f"{n}/M" for n in names]),
                         RegressionProblem.empty([f"{n}/I" for n in names])))

    n_samples = 0
    for i, ts in selection:
        smp = extract_samples(topo, dataset[i], ts)
        n_samples += smp.n
        for m, rods in enumerate(groups):
            lx, ly, ax, ay = _problem_rows(smp, rods, cols[m])
            problems[m][0].add(lx, ly)
            problems[m][1].add(ax, ay)

    composites, conds, ridges, betas = {}, [], [], []
    for m, (plin, pang) in enumerate(problems):
        fitted = []
        for prob, scale in ((plin, "M"), (pang, "I")):
            beta, cond, ridge = fit_with_retry(prob)
            conds.append(cond)
            ridges.append(ridge)
            fitted.append(beta)
            names = [labels[j] for j in cols[m]]
            for name, b in zip(names, beta):
                kind, block = name[:name.index("[")], name[name.index("[") + 1:-1]
                if kind == "Kdl":
                    continue
                composites[_key(kind, scale, block, m)] = float(b)
            for g in range(topo.n_spring_groups):
                if f"K[s{g}]" in names:
                    bk = beta[names.index(f"K[s{g}]")]
                    bd = beta[names.index(f"Kdl[s{g}]")]
                    composites[_key("KL0", scale, f"s{g}", m)] = float(bk * topo.rest_lengths[g] - bd)
        betas.append(fitted)

    # second pass for residuals
    sq, cnt = 0.0, 0
    for i, ts in selection:
        smp = extract_samples(topo, dataset[i], ts)
        for m, rods in enumerate(groups):
            lx, ly, ax, ay = _problem_rows(smp, rods, cols[m])
            sq += float(np.sum((lx @ betas[m][0] - ly) ** 2) + np.sum((ax @ betas[m][1] - ay) ** 2))
            cnt += ly.size + ay.size

    diagnostics = {
        "total_transitions": total,
        "ridge": max(ridges) if ridges else 0.0,
        "control_blocks_fitted": bool(commands_seen),
        "rest_length_check": _rest_length_check(topo, composites, len(groups)),
    }
    ident = IdentifiedParams(
        composites=composites,
        residual_rms=float(np.sqrt(sq / max(cnt, 1))),
        condition_number=float(max(conds)) if conds else 1.0,
        n_samples=n_samples, seed=seed, fraction=fraction, rod_grouping=mode,
        diagnostics=diagnostics,
    )
    if anchor is not None:
        ident.decomposed = decompose(topo, composites, anchor, mode,
                                     control_groups=topo.n_control_groups if commands_seen else 0)
        diagnostics["inertia_ratio_check"] = _inertia_check(topo, ident.decomposed, groups)
    return ident


def _rest_length_check(topo, composites, n_groups):
    out = {}
    for g in range(topo.n_spring_groups):
        for m in range(n_groups):
            k = composites.get(_key("K", "M", f"s{g}", m))
            kl = composites.get(_key("KL0", "M", f"s{g}", m))
            if k is not None:
                out[f"s{g}"] = {"fitted": kl / k, "known": topo.rest_lengths[g]}
                break
    return out


def _inertia_check(topo, params, groups):
    """Identified ``I/M`` against the thin-rod value ``L^2/12`` per rod group."""
    out = {}
    for m, rods in enumerate(groups):
        L = topo.lengths[rods[0]]
        rp = params.rods[m]
        out[f"r{m}"] = {"I_over_M": rp.I / rp.M, "thin_rod": L * L / 12.0}
    return out


# ---- gradient descent path --------------------------------------------------------------

@dataclass
class GDResult:
    params: ParamSet
    losses: list


def _stack_transitions(dataset, topo):
    from .core import SystemState

    now, nxt, cmds = [], [], []
    for tr in dataset:
        now.append(tr.states.flat()[:-1])
        nxt.append(tr.states.flat()[1:])
        cmds.append(tr.commands)
    now = SystemState.from_flat(np.concatenate(now))
    nxt = SystemState.from_flat(np.concatenate(nxt))
    commands = np.concatenate(cmds) if topo.n_controls else None
    return now, nxt, commands


def default_free(params: ParamSet):
    """Mask of parameters optimized by gradient descent.

    Rod group 0's mass is the anchor and rest lengths are known geometry.
    """
    free = np.ones(len(params.to_vector()), dtype=bool)
    G = len(params.springs)
    free[[3 * g + 2 for g in range(G)]] = False
    free[3 * G] = False
    return free


def fit_gradient_descent(topo, dataset, init: ParamSet, lr=1.0, n_iters=500, free=None, tol=1e-15):
    """Minimize the mean one-step loss over ``dataset`` by gradient descent.

    Steps are ``lr * H^-1 grad`` with ``H`` the Gauss-Newton matrix of the
    free parameters evaluated once at ``init`` (a fixed preconditioner), so
    ``lr = 1`` is a well-scaled step.  Raises :class:`Diverged` if the loss
    becomes non-finite.
    """
    from .engine import param_gradient, param_jacobian, predict_step, step_loss
    from .errors import Diverged

    now, nxt, commands = _stack_transitions(dataset, topo)
    theta = init.to_vector()
    free = default_free(init) if free is None else np.asarray(free, dtype=bool)
    _, J = param_jacobian(topo, init, now, commands)
    Jf = J[..., free].reshape(-1, int(free.sum()))
    H = 2.0 / Jf.shape[0] * (Jf.T @ Jf)
    H += 1e-14 * np.trace(H) / len(H) * np.eye(len(H))
    chol = scipy.linalg.cho_factor(H)

    losses = []
    params = init
    for it in range(n_iters + 1):
        with np.errstate(all="ignore"):
            try:
                loss = step_loss(predict_step(topo, params, now, commands), nxt)
            except Exception:
                loss = float("nan")
        losses.append(loss)
        if not np.isfinite(loss):
            raise Diverged(f"loss became non-finite at iteration {it}")
        if it == n_iters or loss == 0.0:
            break
        with np.errstate(all="ignore"):
            g = param_gradient(topo, params, now, commands, nxt)
        if not np.all(np.isfinite(g)):
            raise Diverged(f"gradient became non-finite at iteration {it}")
        delta = lr * scipy.linalg.cho_solve(chol, g[free])
        new = theta.copy()
        new[free] -= delta
        if not np.all(np.isfinite(new)):
            raise Diverged(f"parameters became non-finite at iteration {it}")
        converged = np.max(np.abs(new - theta) / np.maximum(np.abs(theta), 1e-300)) < tol
        theta = new
        params = init.with_vector(theta)
        if converged:
            losses.append(step_loss(predict_step(topo, params, now, commands), nxt))
            break
    return GDResult(params, losses)


def params_composites(topo, params: ParamSet, mode=SHARED):
    return true_composites(topo, params, mode)


# ---- control-scale fine-tune ----------------------------------------------------------

def finetune_control_scale(topo, frozen, dataset):
    """Fit one command-to-force scale per control group with everything else frozen.

    ``frozen`` is an :class:`IdentifiedParams` with a decomposed parameter set
    (or a :class:`ParamSet`).  The residual accelerations left after the
    frozen spring model are converted to force and torque with the frozen mass
    and inertia, and regressed jointly on the commands and their lever-arm
    moments.  Returns ``(h, residual_rms)``.
    """
    if topo.n_controls == 0:
        raise NoExcitation("topology has no control channels")
    params = frozen if isinstance(frozen, ParamSet) else frozen.decomposed
    if params is None:
        raise ValueError("frozen parameters must be decomposed (identify with an anchor)")
    Cg = topo.n_control_groups
    base = ParamSet(params.springs, params.rods, [0.0] * Cg)
    prob = RegressionProblem.empty([f"h[u{k}]" for k in range(Cg)])
    rows = []
    for tr in dataset:
        if not np.any(tr.commands):
            continue
        now, nxt = tr.states[:-1], tr.states[1:]
        acc = accelerations(topo, base, now, None)
        res_lin = (nxt.v - now.v) / tr.dt - acc.a
        res_ang = (nxt.w - now.w) / tr.dt - acc.alpha
        M, I = base.mass_arrays(topo.n_rods)
        lin_y = res_lin * M[:, None]
        ang_y = res_ang * I[:, None]
        n = tr.n_steps
        X_lin = np.zeros((n, topo.n_rods, 3, Cg))
        X_ang = np.zeros((n, topo.n_rods, 3, Cg))
        arms = rotate(now.q[:, topo.control_rod], topo.control_arm)
        for k in range(topo.n_controls):
            r, j = topo.control_rod[k], topo.control_group[k]
            X_lin[:, r, :, j] += tr.commands[:, k]
            X_ang[:, r, :, j] += cross3(arms[:, k], tr.commands[:, k])
        X = np.concatenate([X_lin.reshape(-1, Cg), X_ang.reshape(-1, Cg)])
        y = np.concatenate([lin_y.reshape(-1), ang_y.reshape(-1)])
        prob.add(X, y)
        rows.append((X, y))
    if prob.n == 0 or np.all(np.diag(prob.gram) == 0):
        raise NoExcitation("dataset carries no nonzero control commands")
    h, _ = fit_ols(prob)
    sq = sum(float(np.sum((X @ h - y) ** 2)) for X, y in rows)
    cnt = sum(y.size for _, y in rows)
    return h, float(np.sqrt(sq / cnt))
