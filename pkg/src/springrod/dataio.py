"""Trajectory files, dataset directories and report/CSV output.

Trajectories are line-delimited JSON: a header line followed by one record
per step.  Floats are written with Python's shortest round-trip repr, so a
write/read cycle is bit-exact.
"""
from __future__ import annotations

import csv
import json
import os
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from .core import SystemState, quat_norm
from .errors import ParseError, SchemaError
from .integrator import Trajectory
from .params import ParamSet, load_params, save_params
from .topology import Topology, check, load_topology, save_topology

SCHEMA_VERSION = 1
QUAT_TOL = 1e-9
SPLITS = ("train", "val", "test")
OUT_DIR_ENV = "SPRINGROD_OUT_DIR"


def default_out_dir():
    return Path(os.environ.get(OUT_DIR_ENV, "."))


# ---- trajectories ---------------------------------------------------------------

def write_trajectory(traj: Trajectory, path):
    T, R, C = traj.n_steps, traj.n_rods, traj.commands.shape[1]
    flat = traj.states.flat().tolist()
    cmds = traj.commands.tolist()
    with open(path, "w") as fh:
        header = {"schema_version": SCHEMA_VERSION, "dt": traj.dt, "n_rods": R, "n_controls": C,
                  "n_records": T + 1, "meta": traj.meta}
        fh.write(json.dumps({"header": header}) + "\n")
        for t in range(T + 1):
            rods = [{"p": x[0:3], "v": x[3:6], "q": x[6:10], "w": x[10:13]} for x in flat[t]]
            commands = [{"u": u} for u in cmds[t]] if t < T else []
            fh.write(json.dumps({"t": t, "rods": rods, "commands": commands}, separators=(",", ":")) + "\n")


def read_trajectory(path) -> Trajectory:
    with open(path) as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty file", 1)
    header = _loads(lines[0], 1).get("header")
    if not isinstance(header, dict):
        raise ParseError("missing header record", 1)
    R, C, n = int(header["n_rods"]), int(header["n_controls"]), int(header["n_records"])
    states = np.empty((n, R, 13))
    commands = np.zeros((max(n - 1, 0), C, 3))
    for t in range(n):
        lineno = t + 2
        if lineno > len(lines):
            raise ParseError(f"expected {n} records, file ends after {t}", lineno)
        rec = _loads(lines[lineno - 1], lineno)
        try:
            if rec["t"] != t:
                raise ParseError(f"record index {rec['t']} out of order (expected {t})", lineno)
            rods = rec["rods"]
            if len(rods) != R:
                raise SchemaError(f"line {lineno}: {len(rods)} rods, expected {R}")
            for i, rod in enumerate(rods):
                states[t, i] = rod["p"] + rod["v"] + rod["q"] + rod["w"]
            cm = rec["commands"]
            expected = C if t < n - 1 else 0
            if len(cm) != expected:
                raise SchemaError(f"line {lineno}: {len(cm)} commands, expected {expected}")
            for k, c in enumerate(cm):
                commands[t, k] = c["u"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed record: {exc!r}", lineno) from None
    if len(lines) > n + 1:
        raise ParseError("unexpected trailing records", n + 2)
    s = SystemState.from_flat(states)
    bad = np.abs(quat_norm(s.q) - 1.0) > QUAT_TOL
    if np.any(bad):
        t, i = np.argwhere(bad)[0]
        raise SchemaError(f"line {t + 2}: non-unit quaternion on rod {i} (|q|={quat_norm(s.q)[t, i]:.6g})")
    if not np.all(np.isfinite(states)):
        raise SchemaError("non-finite state value")
    return Trajectory(states=s, commands=commands, dt=float(header["dt"]), meta=header.get("meta", {}))


def _loads(line, lineno):
    try:
        return json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None


# ---- dataset directories ----------------------------------------------------------

def write_dataset(out_dir, topo: Topology, splits: dict, true_params: ParamSet | None = None,
                  meta: dict | None = None):
    """Write ``splits = {"train": [Trajectory, ...], ...}`` plus a manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_topology(topo, out / "topology.json")
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "topology_file": "topology.json",
        "topology_hash": topo.digest(),
        "true_params_file": None,
        "dt": topo.dt,
        "split": {},
        "steps_per_traj": None,
    }
    if true_params is not None:
        save_params(true_params, out / "true_params.json")
        manifest["true_params_file"] = "true_params.json"
    for name, trajs in splits.items():
        d = out / name
        d.mkdir(exist_ok=True)
        for i, tr in enumerate(trajs):
            write_trajectory(tr, d / f"traj_{i:05d}.jsonl")
        manifest["split"][name] = len(trajs)
        if trajs:
            manifest["steps_per_traj"] = trajs[0].n_steps
    manifest.update(meta or {})
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return manifest


class Dataset:
    """Lazy view of a dataset directory."""

    def __init__(self, root):
        self.root = Path(root)
        path = self.root / "manifest.json"
        if not path.exists():
            raise SchemaError(f"{self.root}: no manifest.json")
        with open(path) as fh:
            self.manifest = json.load(fh)
        for key in ("topology_file", "split", "dt"):
            if key not in self.manifest:
                raise SchemaError(f"manifest missing {key!r}")
        self.topology = load_topology(self.root / self.manifest["topology_file"])
        if self.manifest.get("topology_hash") not in (None, self.topology.digest()):
            raise SchemaError("topology file does not match the manifest hash")

    @property
    def true_params(self):
        name = self.manifest.get("true_params_file")
        return None if not name else load_params(self.root / name)

    def count(self, split):
        return int(self.manifest["split"].get(split, 0))

    def split(self, split, limit=None):
        """Trajectories of one split, read lazily on first access."""
        n = self.count(split) if limit is None else min(limit, self.count(split))
        return LazySplit(self, split, n)

    def check_topology(self, topo: Topology):
        """Refuse a config whose hash or dt differs from the one the data came from."""
        if topo.dt != self.manifest["dt"]:
            raise SchemaError(f"config dt={topo.dt} but dataset dt={self.manifest['dt']}")
        h = self.manifest.get("topology_hash")
        if h is not None and h != topo.digest():
            raise SchemaError("config topology hash does not match the dataset manifest")


class LazySplit(Sequence):
    """Read-on-demand list of a split's trajectories.

    ``step_counts`` comes from the manifest, so transition subsampling can
    pick trajectories without opening every file.
    """

    def __init__(self, dataset: Dataset, split, n):
        self.dataset = dataset
        self.name = split
        self._n = n
        self._cache = {}
        steps = dataset.manifest.get("steps_per_traj")
        self.step_counts = None if steps is None else [int(steps)] * n

    def __len__(self):
        return self._n

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(self._n))]
        if not -self._n <= i < self._n:
            raise IndexError(i)
        i %= self._n
        if i not in self._cache:
            tr = read_trajectory(self.dataset.root / self.name / f"traj_{i:05d}.jsonl")
            if tr.dt != self.dataset.manifest["dt"]:
                raise SchemaError(f"{self.name}/{i}: dt {tr.dt} differs from manifest")
            if self.step_counts is not None and tr.n_steps != self.step_counts[i]:
                raise SchemaError(f"{self.name}/{i}: {tr.n_steps} steps, manifest says {self.step_counts[i]}")
            self._cache[i] = tr
        return self._cache[i]


# ---- reports ---------------------------------------------------------------------

def write_json(obj, path):
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, default=_json_default)
        fh.write("\n")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_csv(rows, columns, path):
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(row[c])) if isinstance(row[c], (float, np.floating)) else row[c]
                        for c in columns])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
