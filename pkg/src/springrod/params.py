"""Physical parameter sets and their flat-vector view."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .accel import RodParams, thin_rod_inertia
from .forces import SpringParams

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ParamSet:
    """One :class:`SpringParams` per spring group, either one shared
    :class:`RodParams` or one per rod, and one control scale per control group."""

    springs: tuple
    rods: tuple
    control_scale: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "springs", tuple(self.springs))
        object.__setattr__(self, "rods", tuple(self.rods))
        object.__setattr__(self, "control_scale", tuple(float(h) for h in self.control_scale))

    def check(self, topo):
        problems = []
        if len(self.springs) != topo.n_spring_groups:
            problems.append(f"{len(self.springs)} spring parameter sets for {topo.n_spring_groups} groups")
        if len(self.rods) not in (1, topo.n_rods):
            problems.append(f"{len(self.rods)} rod parameter sets for {topo.n_rods} rods")
        if len(self.control_scale) < topo.n_control_groups:
            problems.append(f"{len(self.control_scale)} control scales for {topo.n_control_groups} groups")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def shared_rods(self):
        return len(self.rods) == 1

    def rod_group(self, rod):
        return 0 if self.shared_rods else rod

    def mass_arrays(self, n_rods):
        M = np.array([r.M for r in self.rods], dtype=float)
        I = np.array([r.I for r in self.rods], dtype=float)
        if self.shared_rods:
            M = np.repeat(M, n_rods)
            I = np.repeat(I, n_rods)
        return M, I

    # ---- flat vector view --------------------------------------------------
    def names(self):
        out = []
        for g in range(len(self.springs)):
            out += [f"K[{g}]", f"c[{g}]", f"L0[{g}]"]
        for m in range(len(self.rods)):
            out += [f"M[{m}]", f"I[{m}]"]
        out += [f"h[{k}]" for k in range(len(self.control_scale))]
        return out

    def to_vector(self):
        out = []
        for s in self.springs:
            out += [s.K, s.c, s.L0]
        for r in self.rods:
            out += [r.M, r.I]
        out += list(self.control_scale)
        return np.array(out, dtype=float)

    def with_vector(self, x):
        """Same layout as ``self`` with values taken from ``x``; no positivity checks."""
        x = np.asarray(x, dtype=float)
        G, Rg = len(self.springs), len(self.rods)
        springs = [_raw(SpringParams, K=x[3 * g], c=x[3 * g + 1], L0=x[3 * g + 2]) for g in range(G)]
        off = 3 * G
        rods = [_raw(RodParams, M=x[off + 2 * m], I=x[off + 2 * m + 1]) for m in range(Rg)]
        return ParamSet(springs, rods, x[off + 2 * Rg:])

    def scaled(self, lam):
        """Multiply every force-scale quantity (K, c, M, I, h) by ``lam``."""
        return ParamSet(
            [replace(s, K=s.K * lam, c=s.c * lam) for s in self.springs],
            [RodParams(r.M * lam, r.I * lam) for r in self.rods],
            [h * lam for h in self.control_scale],
        )

    # ---- serialization ------------------------------------------------------
    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "springs": [{"K": s.K, "c": s.c, "L0": s.L0} for s in self.springs],
            "rods": [{"M": r.M, "I": r.I} for r in self.rods],
            "control_scale": list(self.control_scale),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            [SpringParams(float(s["K"]), float(s["c"]), float(s["L0"])) for s in d["springs"]],
            [RodParams(float(r["M"]), float(r["I"])) for r in d["rods"]],
            [float(h) for h in d.get("control_scale", [])],
        )


def _raw(cls, **values):
    # bypasses validation so optimizers can probe non-physical points
    obj = object.__new__(cls)
    for k, v in values.items():
        object.__setattr__(obj, k, float(v))
    return obj


def load_params(path) -> ParamSet:
    with open(path) as fh:
        return ParamSet.from_dict(json.load(fh))


def save_params(params: ParamSet, path):
    with open(path, "w") as fh:
        json.dump(params.to_dict(), fh, indent=1)
        fh.write("\n")


def default_params(topo, K=1000.0, c=10.0, M=10.0, h=2.5, hanger=(2000.0, 20.0)):
    """Ground-truth parameters used by the bundled oracle configurations.

    Spring group 0 gets ``(K, c)``; any further groups (hangers) get ``hanger``.
    Rods share one mass with thin-rod inertia.
    """
    springs = []
    for g in range(topo.n_spring_groups):
        L0 = topo.rest_lengths[g]
        k, cc = (K, c) if g == 0 else hanger
        springs.append(SpringParams(k, cc, L0))
    L = float(topo.lengths[0])
    rods = [RodParams(M, thin_rod_inertia(M, L))]
    return ParamSet(springs, rods, [h] * topo.n_control_groups)
