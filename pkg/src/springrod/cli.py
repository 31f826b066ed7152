"""Command-line interface: ``springrod <command> ...``."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import dataio, plotting
from .core import SystemState
from .engine import ControlSampler, InitSampler, OracleSpec, generate_dataset
from .errors import SpringRodError
from .harness import koopman_comparison, rollout_mse, sweep_efficiency
from .integrator import rollout
from .params import ParamSet, load_params
from .sysid import IdentifiedParams, finetune_control_scale, identify, parse_anchor, to_params
from .topology import bundled_path, load_topology


def _resolve(path, suffix=""):
    """A file path, or the name of a bundled configuration."""
    p = Path(path)
    if p.exists():
        return p
    for name in (f"{path}{suffix}.json", f"{path}.json", str(path)):
        candidate = bundled_path(name)
        if candidate.is_file():
            return candidate
    raise FileNotFoundError(f"no such file or bundled config: {path}")


def _out(path):
    p = Path(path)
    return p if p.is_absolute() else dataio.default_out_dir() / p


def _fraction(text):
    f = float(text)
    if not 0 < f <= 1:
        raise argparse.ArgumentTypeError(f"fraction must be in (0, 1], got {text}")
    return f


def _fractions(text):
    return [_fraction(x) for x in text.split(",") if x.strip()]


def _positive_int(text):
    n = int(text)
    if n < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return n


def _load_param_file(topo, path):
    d = dataio.read_json(path)
    if "params" in d and "springs" not in d:
        d = d["params"]  # finetune-control report
    if "composites" in d:
        return to_params(topo, IdentifiedParams.from_dict(d))
    return ParamSet.from_dict(d)


def _emit(obj):
    print(json.dumps(obj, indent=1, default=dataio._json_default))


# ---- commands -------------------------------------------------------------------

def cmd_generate(args):
    topo = load_topology(_resolve(args.config))
    params = load_params(_resolve(args.params, "_params")).check(topo)
    spec = OracleSpec(
        topo, params,
        init=InitSampler(args.sigma_p, args.sigma_v, args.sigma_q, args.sigma_w),
        control=ControlSampler(args.perturb, args.perturb_magnitude, args.perturb_hold),
        seed=args.seed,
    )
    n_val = args.n_traj // 5 if args.n_val is None else args.n_val
    n_test = args.n_traj // 10 if args.n_test is None else args.n_test
    splits, offset = {}, 0
    for name, n in (("train", args.n_traj), ("val", n_val), ("test", n_test)):
        splits[name] = generate_dataset(spec, n, args.steps, offset=offset)
        offset += n
    meta = spec.meta()
    manifest = dataio.write_dataset(_out(args.out), topo, splits, params, meta)
    _emit({"out": str(_out(args.out)), "split": manifest["split"], "steps_per_traj": args.steps,
           "transitions": args.n_traj * args.steps})


def cmd_identify(args):
    ds = dataio.Dataset(args.data)
    topo = ds.topology
    train = ds.split("train")
    t0 = time.perf_counter()
    ident = identify(topo, train, args.fraction, args.seed, parse_anchor(args.anchor),
                     "per_rod" if args.per_rod else "shared")
    report = ident.to_dict()
    report["runtime_s"] = time.perf_counter() - t0
    truth = ds.true_params
    if truth is not None:
        from .sysid import composite_error, true_composites

        report["max_relative_error_vs_truth"] = composite_error(
            ident.composites, true_composites(topo, truth, ident.rod_grouping, controls=False))
    dataio.write_json(report, _out(args.report))
    _emit({k: report[k] for k in ("n_samples", "residual_rms", "condition_number")}
          | {"max_relative_error_vs_truth": report.get("max_relative_error_vs_truth")})


def _initial_state(topo, path):
    if path is None or path == "nominal":
        return topo.nominal_state()
    d = dataio.read_json(path)
    rods = d["rods"] if isinstance(d, dict) else d
    arr = np.array([r["p"] + r.get("v", [0.0] * 3) + r["q"] + r.get("w", [0.0] * 3) for r in rods], dtype=float)
    if arr.shape[0] != topo.n_rods:
        raise ValueError(f"initial state has {arr.shape[0]} rods, config has {topo.n_rods}")
    return SystemState.from_flat(arr)


def cmd_simulate(args):
    topo = load_topology(_resolve(args.config))
    params = _load_param_file(topo, _resolve(args.params, "_params")).check(topo)
    init = _initial_state(topo, args.init)
    controls = None
    if args.commands:
        controls = np.asarray(dataio.read_json(args.commands), dtype=float)
    traj = rollout(topo, params, init, controls, args.steps)
    out = _out(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dataio.write_trajectory(traj, out)
    fig = plotting.plot_heights(traj, out.with_suffix(".png"))
    _emit({"out": str(out), "steps": args.steps, "figure": str(fig)})


def cmd_evaluate(args):
    ds = dataio.Dataset(args.data)
    topo = ds.topology
    if args.config:
        topo = load_topology(_resolve(args.config))
        ds.check_topology(topo)
    params = _load_param_file(topo, _resolve(args.params, "_params")).check(topo)
    data = ds.split(args.split)
    if len(data) == 0:
        raise ValueError(f"split {args.split!r} is empty")
    rows = rollout_mse(topo, params, list(data), args.horizon)
    out = _out(args.out)
    dataio.write_csv(rows, ["step", "mse_p", "mse_v", "mse_q", "mse_w"], out)
    fig = plotting.plot_mse_curves(rows, out.with_suffix(".png"), f"{args.split} rollout error")
    one = rows[1] if len(rows) > 1 else rows[0]
    _emit({"out": str(out), "figure": str(fig), "horizon": rows[-1]["step"],
           "one_step": {k: one[k] for k in one if k != "step"},
           "final": {k: rows[-1][k] for k in rows[-1] if k != "step"}})


def cmd_finetune(args):
    ds = dataio.Dataset(args.data)
    topo = ds.topology
    frozen = IdentifiedParams.from_dict(dataio.read_json(args.frozen))
    if frozen.decomposed is None:
        raise ValueError("frozen report has no decomposed parameters; run identify with --anchor")
    h, rms = finetune_control_scale(topo, frozen, ds.split("train"))
    params = ParamSet(frozen.decomposed.springs, frozen.decomposed.rods, h)
    report = {"schema_version": 1, "control_scale": h.tolist(), "residual_rms": rms,
              "params": params.to_dict()}
    truth = ds.true_params
    if truth is not None and truth.control_scale:
        t = np.array(truth.control_scale)
        report["relative_error_vs_truth"] = float(np.max(np.abs(h - t) / np.abs(t)))
    dataio.write_json(report, _out(args.report))
    _emit(report)


def cmd_koopman(args):
    ds = dataio.Dataset(args.data)
    topo = ds.topology
    test = ds.split("test")
    if len(test) == 0:
        raise ValueError("dataset has no test split")
    res = koopman_comparison(topo, ds.split("train"), test, args.fraction, args.seed, args.degree,
                             args.max_test)
    out = _out(args.report)
    dataio.write_json(res, out)
    plotting.plot_comparison({"engine": res["engine_one_step_mse"], "koopman": res["koopman_one_step_mse"]},
                             out.with_suffix(".png"))
    _emit({k: res[k] for k in ("n_samples", "engine_one_step_mse", "koopman_one_step_mse")})


def cmd_sweep(args):
    ds = dataio.Dataset(args.data)
    truth = ds.true_params
    if truth is None:
        raise ValueError("sweep-efficiency needs a dataset with true_params.json")
    rows = sweep_efficiency(ds.topology, ds.split("train"), truth, args.fractions, args.seeds)
    out = _out(args.out)
    cols = ["fraction", "n_samples", "mean_error", "std_error", "median_error", "max_error"]
    dataio.write_csv(rows, cols, out)
    fig = plotting.plot_efficiency(rows, out.with_suffix(".png"))
    _emit({"out": str(out), "figure": str(fig), "rows": rows})


# ---- parser ---------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="springrod", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate an oracle dataset")
    g.add_argument("--config", required=True, help="topology JSON or bundled name (e.g. icosahedron)")
    g.add_argument("--params", required=True, help="true parameter JSON or bundled name")
    g.add_argument("--n-traj", type=_positive_int, required=True, help="training trajectories")
    g.add_argument("--n-val", type=_positive_int, default=None, help="default n-traj/5")
    g.add_argument("--n-test", type=_positive_int, default=None, help="default n-traj/10")
    g.add_argument("--steps", type=_positive_int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--sigma-p", type=float, default=0.05)
    g.add_argument("--sigma-v", type=float, default=0.1)
    g.add_argument("--sigma-q", type=float, default=0.05)
    g.add_argument("--sigma-w", type=float, default=0.1)
    g.add_argument("--perturb", action="store_true", help="random directed perturbation commands")
    g.add_argument("--perturb-magnitude", type=float, default=10.0)
    g.add_argument("--perturb-hold", type=int, default=100)
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("identify", help="fit composite parameters on a training subsample")
    i.add_argument("--data", required=True)
    i.add_argument("--fraction", type=_fraction, default=1.0)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--anchor", default=None, help="mass=<v> or stiffness=<v>")
    i.add_argument("--per-rod", action="store_true", help="one mass/inertia per rod")
    i.add_argument("--report", required=True)
    i.set_defaults(func=cmd_identify)

    s = sub.add_parser("simulate", help="forward rollout")
    s.add_argument("--config", required=True)
    s.add_argument("--params", required=True)
    s.add_argument("--init", default="nominal", help="state JSON or 'nominal'")
    s.add_argument("--commands", default=None, help="JSON array (steps, controls, 3)")
    s.add_argument("--steps", type=_positive_int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("evaluate", help="one-step and H-step rollout MSE curves")
    e.add_argument("--data", required=True)
    e.add_argument("--params", required=True, help="parameter JSON or identify report")
    e.add_argument("--config", default=None, help="verify against this topology")
    e.add_argument("--horizon", type=_positive_int, default=100)
    e.add_argument("--split", default="test", choices=dataio.SPLITS)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    f = sub.add_parser("finetune-control", help="fit control scale with all else frozen")
    f.add_argument("--data", required=True)
    f.add_argument("--frozen", required=True, help="identify report with decomposed params")
    f.add_argument("--report", required=True)
    f.set_defaults(func=cmd_finetune)

    k = sub.add_parser("koopman", help="Koopman baseline against the modular engine")
    k.add_argument("--data", required=True)
    k.add_argument("--degree", type=int, default=2)
    k.add_argument("--fraction", type=_fraction, default=1e-4)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--max-test", type=int, default=None)
    k.add_argument("--report", required=True)
    k.set_defaults(func=cmd_koopman)

    w = sub.add_parser("sweep-efficiency", help="identification error against data fraction")
    w.add_argument("--data", required=True)
    w.add_argument("--fractions", type=_fractions, default=[0.1, 0.01, 0.001, 0.0001])
    w.add_argument("--seeds", type=int, default=10)
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (SpringRodError, ValueError, OSError, KeyError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(err), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
