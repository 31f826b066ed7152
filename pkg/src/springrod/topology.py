"""Element topology: rods, springs between rod ends or world anchors, and
control-force attachment points."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources

import numpy as np

from .core import RodGeometry, SystemState, cross3, quat_between, rotate
from .errors import TopologyError

SCHEMA_VERSION = 1
PLUS, MINUS = "+", "-"


@dataclass(frozen=True)
class EndpointRef:
    """Either a rod end (``rod`` and ``end``) or a fixed world ``anchor``."""

    rod: int | None = None
    end: str = PLUS
    anchor: tuple | None = None

    @property
    def is_anchor(self):
        return self.anchor is not None

    def to_dict(self):
        if self.is_anchor:
            return {"anchor": [float(x) for x in self.anchor]}
        return {"rod": self.rod, "end": self.end}

    @classmethod
    def from_dict(cls, d):
        if "anchor" in d:
            return anchor(d["anchor"])
        return cls(rod=int(d["rod"]), end=d.get("end", PLUS))


def rod_end(rod, end=PLUS):
    return EndpointRef(rod=int(rod), end=end)


def anchor(position):
    return EndpointRef(anchor=tuple(float(x) for x in position))


@dataclass(frozen=True)
class SpringDef:
    a: EndpointRef
    b: EndpointRef
    group: int = 0


@dataclass(frozen=True)
class ControlDef:
    """Control force on ``rod`` applied at ``arm`` (body frame, defaults to the Plus end)."""

    rod: int
    arm: tuple | None = None
    group: int = 0


@dataclass(frozen=True)
class Topology:
    rods: tuple
    springs: tuple
    controls: tuple = ()
    gravity: tuple = (0.0, 0.0, -9.81)
    dt: float = 0.001
    cable_mode: bool = False
    # known rest length per spring group, used as a geometric input by sysid
    rest_lengths: tuple = ()
    # optional nominal pose per rod: ((px, py, pz), (qw, qx, qy, qz))
    nominal: tuple | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rods", tuple(self.rods))
        object.__setattr__(self, "springs", tuple(self.springs))
        object.__setattr__(self, "controls", tuple(self.controls))
        object.__setattr__(self, "gravity", tuple(float(g) for g in self.gravity))
        object.__setattr__(self, "rest_lengths", tuple(float(x) for x in self.rest_lengths))

    # ---- sizes -------------------------------------------------------------
    @property
    def n_rods(self):
        return len(self.rods)

    @property
    def n_springs(self):
        return len(self.springs)

    @property
    def n_controls(self):
        return len(self.controls)

    @property
    def n_spring_groups(self):
        return 1 + max((s.group for s in self.springs), default=-1)

    @property
    def n_control_groups(self):
        return 1 + max((c.group for c in self.controls), default=-1)

    # ---- derived index tables ---------------------------------------------
    @cached_property
    def lengths(self):
        return np.array([r.length for r in self.rods], dtype=float)

    @cached_property
    def half_body(self):
        """Body-frame Plus-end offsets, shape ``(R, 3)``."""
        return np.array([r.half_body for r in self.rods], dtype=float).reshape(-1, 3)

    @cached_property
    def anchors(self):
        pts = []
        for s in self.springs:
            for ref in (s.a, s.b):
                if ref.is_anchor and ref.anchor not in pts:
                    pts.append(ref.anchor)
        return pts

    @cached_property
    def anchor_positions(self):
        return np.array(self.anchors, dtype=float).reshape(-1, 3)

    def end_index(self, ref: EndpointRef):
        """Row of ``ref`` in the endpoint table (rod ends first, then anchors)."""
        if ref.is_anchor:
            return 2 * self.n_rods + self.anchors.index(ref.anchor)
        return 2 * ref.rod + (0 if ref.end == PLUS else 1)

    @cached_property
    def spring_a(self):
        return np.array([self.end_index(s.a) for s in self.springs], dtype=int)

    @cached_property
    def spring_b(self):
        return np.array([self.end_index(s.b) for s in self.springs], dtype=int)

    @cached_property
    def spring_group(self):
        return np.array([s.group for s in self.springs], dtype=int)

    @cached_property
    def control_rod(self):
        return np.array([c.rod for c in self.controls], dtype=int)

    @cached_property
    def control_group(self):
        return np.array([c.group for c in self.controls], dtype=int)

    @cached_property
    def control_arm(self):
        """Body-frame control arms, shape ``(C, 3)``; Plus end when unset."""
        arms = [self.rods[c.rod].half_body if c.arm is None else c.arm for c in self.controls]
        return np.array(arms, dtype=float).reshape(-1, 3)

    @cached_property
    def incidence(self):
        """Per rod, the ``(spring, end_is_plus, sign)`` triples touching it.

        ``sign`` is +1 when the rod end is the spring's ``a`` side (its force is
        ``+f u``) and -1 on the ``b`` side.
        """
        out = [[] for _ in range(self.n_rods)]
        for k, s in enumerate(self.springs):
            for ref, sign in ((s.a, 1.0), (s.b, -1.0)):
                if not ref.is_anchor:
                    out[ref.rod].append((k, ref.end == PLUS, sign))
        return out

    def nominal_state(self) -> SystemState:
        if self.nominal is None:
            raise ValueError(f"topology {self.name!r} has no nominal poses")
        p = np.array([pose[0] for pose in self.nominal], dtype=float)
        q = np.array([pose[1] for pose in self.nominal], dtype=float)
        return SystemState(p=p, v=np.zeros_like(p), q=q, w=np.zeros_like(p))

    # ---- serialization ----------------------------------------------------
    def to_dict(self):
        d = {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "rods": [{"length": r.length} for r in self.rods],
            "springs": [{"a": s.a.to_dict(), "b": s.b.to_dict(), "group": s.group} for s in self.springs],
            "controls": [
                {"rod": c.rod, "group": c.group} | ({} if c.arm is None else {"arm": list(c.arm)})
                for c in self.controls
            ],
            "gravity": list(self.gravity),
            "dt": self.dt,
            "cable_mode": self.cable_mode,
            "rest_lengths": list(self.rest_lengths),
        }
        if self.nominal is not None:
            for rod, (p, q) in zip(d["rods"], self.nominal):
                rod["position"] = list(p)
                rod["orientation"] = list(q)
        return d

    @classmethod
    def from_dict(cls, d):
        rods = d.get("rods", [])
        nominal = None
        if rods and all("position" in r for r in rods):
            nominal = tuple(
                (tuple(r["position"]), tuple(r.get("orientation", (1.0, 0.0, 0.0, 0.0)))) for r in rods
            )
        return cls(
            rods=[RodGeometry(float(r["length"])) for r in rods],
            springs=[
                SpringDef(EndpointRef.from_dict(s["a"]), EndpointRef.from_dict(s["b"]), int(s.get("group", 0)))
                for s in d.get("springs", [])
            ],
            controls=[
                ControlDef(int(c["rod"]), None if c.get("arm") is None else tuple(c["arm"]), int(c.get("group", 0)))
                for c in d.get("controls", [])
            ],
            gravity=d.get("gravity", (0.0, 0.0, -9.81)),
            dt=float(d.get("dt", 0.001)),
            cable_mode=bool(d.get("cable_mode", False)),
            rest_lengths=d.get("rest_lengths", ()),
            nominal=nominal,
            name=d.get("name", ""),
        )

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes):
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return Topology(**fields)


def validate(topo: Topology):
    """Return a list of invariant violations; an empty list means valid."""
    problems = []
    n = topo.n_rods
    if not np.isfinite(topo.dt) or topo.dt <= 0:
        problems.append(f"non-positive timestep: dt={topo.dt}")
    if len(topo.gravity) != 3 or not np.all(np.isfinite(topo.gravity)):
        problems.append("gravity must be a finite 3-vector")
    for i, r in enumerate(topo.rods):
        if not isinstance(r, RodGeometry):
            problems.append(f"rod {i}: not a RodGeometry")
    groups = set()
    for k, s in enumerate(topo.springs):
        for side, ref in (("a", s.a), ("b", s.b)):
            if ref.is_anchor:
                if len(ref.anchor) != 3 or not np.all(np.isfinite(ref.anchor)):
                    problems.append(f"spring {k}: anchor {side} must be a finite 3-vector")
            elif ref.rod is None or not 0 <= ref.rod < n:
                problems.append(f"spring {k}: dangling endpoint {side} -> rod {ref.rod}")
            elif ref.end not in (PLUS, MINUS):
                problems.append(f"spring {k}: end {side} must be '+' or '-'")
        if s.a == s.b:
            problems.append(f"spring {k}: duplicate spring endpoints")
        if s.a.is_anchor and s.b.is_anchor:
            problems.append(f"spring {k}: both endpoints are anchors")
        if s.group < 0:
            problems.append(f"spring {k}: negative group {s.group}")
        groups.add(s.group)
    if groups and groups != set(range(max(groups) + 1)):
        problems.append(f"spring groups not contiguous from 0: {sorted(groups)}")
    if topo.rest_lengths:
        if len(topo.rest_lengths) != topo.n_spring_groups:
            problems.append(
                f"rest_lengths has {len(topo.rest_lengths)} entries for {topo.n_spring_groups} spring groups")
        if any(not L > 0 for L in topo.rest_lengths):
            problems.append("rest lengths must be positive")
    cgroups = set()
    for k, c in enumerate(topo.controls):
        if not 0 <= c.rod < n:
            problems.append(f"control {k}: dangling rod index {c.rod}")
        if c.arm is not None and (len(c.arm) != 3 or not np.all(np.isfinite(c.arm))):
            problems.append(f"control {k}: arm must be a finite 3-vector")
        cgroups.add(c.group)
    if cgroups and cgroups != set(range(max(cgroups) + 1)):
        problems.append(f"control groups not contiguous from 0: {sorted(cgroups)}")
    if topo.nominal is not None and len(topo.nominal) != n:
        problems.append("nominal poses must list one pose per rod")
    return problems


def check(topo: Topology) -> Topology:
    problems = validate(topo)
    if problems:
        raise TopologyError(problems)
    return topo


def endpoint_table(topo: Topology, state: SystemState):
    """Positions and velocities of every endpoint, shape ``(..., 2R + A, 3)``.

    Rows ``2i`` and ``2i + 1`` are the Plus and Minus ends of rod ``i``; the
    anchors follow with zero velocity.
    """
    r = rotate(state.q, topo.half_body)
    wr = cross3(state.w, r)
    batch = state.batch_shape
    R = topo.n_rods
    A = len(topo.anchors)
    pos = np.empty(batch + (2 * R + A, 3))
    vel = np.zeros(batch + (2 * R + A, 3))
    pos[..., 0:2 * R:2, :] = state.p + r
    pos[..., 1:2 * R:2, :] = state.p - r
    vel[..., 0:2 * R:2, :] = state.v + wr
    vel[..., 1:2 * R:2, :] = state.v - wr
    if A:
        pos[..., 2 * R:, :] = topo.anchor_positions
    return pos, vel, r


def resolve_endpoint(topo: Topology, ref: EndpointRef, states):
    """Position and velocity of one endpoint for a list of rod states."""
    from .core import endpoint_kinematics

    if ref.is_anchor:
        return np.array(ref.anchor, dtype=float), np.zeros(3)
    st = states[ref.rod]
    e_plus, e_minus, ve_plus, ve_minus = endpoint_kinematics(st, topo.rods[ref.rod])
    return (e_plus, ve_plus) if ref.end == PLUS else (e_minus, ve_minus)


# ---- files ------------------------------------------------------------------

def load_topology(path) -> Topology:
    with open(path) as fh:
        return check(Topology.from_dict(json.load(fh)))


def save_topology(topo: Topology, path):
    with open(path, "w") as fh:
        json.dump(topo.to_dict(), fh, indent=1)
        fh.write("\n")


def bundled_path(name):
    return resources.files("springrod") / "data" / name


def bundled_topology(name="icosahedron") -> Topology:
    with bundled_path(f"{name}.json").open() as fh:
        return check(Topology.from_dict(json.load(fh)))


# ---- builders ---------------------------------------------------------------

def icosahedron_nodes(length=1.04):
    """Node pairs of the six-strut tensegrity icosahedron (expanded octahedron).

    Struts lie parallel to the coordinate axes in three pairs, offset by a
    quarter of their length.  Returns ``(nodes (12, 3), struts [(i, j)])``.
    """
    a = 0.5 * length
    b = 0.25 * length
    nodes, struts = [], []
    for axis in range(3):
        # strut along ``axis``, offset along the next axis
        off = (axis + 2) % 3
        for sgn in (1.0, -1.0):
            plus = np.zeros(3)
            plus[axis] = a
            plus[off] = sgn * b
            minus = plus.copy()
            minus[axis] = -a
            struts.append((len(nodes), len(nodes) + 1))
            nodes.extend([plus, minus])
    return np.array(nodes), struts


def icosahedron(length=1.04, rest_length=0.637, gravity=-9.81, dt=0.001, cable_mode=False,
                controls=False):
    """Six rods and 24 springs wired as the standard tensegrity icosahedron.

    Each rod end connects to the four nearest ends of the other rods, so every
    rod touches eight springs.  With ``controls`` one perturbation channel
    (group 0) is attached at every rod's Plus end.
    """
    nodes, struts = icosahedron_nodes(length)
    rods, nominal = [], []
    for i, j in struts:
        p = 0.5 * (nodes[i] + nodes[j])
        d = nodes[i] - nodes[j]
        q = quat_between(np.array([0.0, 0.0, 1.0]), d / np.linalg.norm(d))
        rods.append(RodGeometry(length))
        nominal.append((tuple(p), tuple(q)))
    node_ref = {}
    for r, (i, j) in enumerate(struts):
        node_ref[i] = rod_end(r, PLUS)
        node_ref[j] = rod_end(r, MINUS)
    strut_of = {i: r for r, pair in enumerate(struts) for i in pair}
    # the 24 cables are the shortest node-node links between different struts
    # that are not the 6 short "offset" links of a parallel strut pair
    pairs = []
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            if strut_of[i] == strut_of[j]:
                continue
            pairs.append((np.linalg.norm(nodes[i] - nodes[j]), i, j))
    pairs.sort()
    cable_len = np.sqrt(6.0) / 4.0 * length
    springs = [SpringDef(node_ref[i], node_ref[j], 0) for d, i, j in pairs if abs(d - cable_len) < 1e-9]
    ctrl = [ControlDef(r, None, 0) for r in range(len(rods))] if controls else []
    return check(Topology(
        rods=rods, springs=springs, controls=ctrl, gravity=(0.0, 0.0, gravity), dt=dt,
        cable_mode=cable_mode, rest_lengths=(rest_length,), nominal=tuple(nominal),
        name="icosahedron" + ("_perturbed" if controls else ""),
    ))


def suspended_icosahedron(length=1.04, rest_length=0.637, hanger_rest=0.3, drop=0.35, **kw):
    """Icosahedron hung from the world by one vertical spring per rod end (group 1)."""
    base = icosahedron(length, rest_length, **kw)
    state = base.nominal_state()
    pos, _, _ = endpoint_table(base, state)
    hangers = []
    for r in range(base.n_rods):
        for k, end in enumerate((PLUS, MINUS)):
            top = pos[2 * r + k] + np.array([0.0, 0.0, drop])
            hangers.append(SpringDef(rod_end(r, end), anchor(top), 1))
    return check(base.replace(
        springs=base.springs + tuple(hangers),
        rest_lengths=(rest_length, hanger_rest),
        name="icosahedron_suspended",
    ))


def simple_element(length=1.04, rest_length=0.5, span=1.2, height=0.3, gravity=-9.81, dt=0.001,
                   controls=False):
    """One rod held between two world anchors by two springs of one group."""
    rods = [RodGeometry(length)]
    springs = [
        SpringDef(rod_end(0, PLUS), anchor((0.0, 0.0, span)), 0),
        SpringDef(anchor((height, 0.0, -span)), rod_end(0, MINUS), 0),
    ]
    # rod lies roughly along z between the anchors, tilted so all axes move
    q = tuple(quat_between(np.array([0.0, 0.0, 1.0]), np.array([0.3, 0.2, 1.0]) / np.sqrt(1.13)))
    ctrl = [ControlDef(0, None, 0)] if controls else []
    return check(Topology(
        rods=rods, springs=springs, controls=ctrl, gravity=(0.0, 0.0, gravity), dt=dt,
        rest_lengths=(rest_length,), nominal=(((0.0, 0.0, 0.0), q),), name="simple_element",
    ))
