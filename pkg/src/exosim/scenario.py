"""Versioned JSON scenarios: validation, canonical form and problem assembly.

A scenario is checked in two passes: JSON-schema structure, then
cross-references and unit-range sanity. Every error found is reported with
the path of the offending field.
"""
import copy
import json
from dataclasses import dataclass
from importlib import resources

import jsonschema
import numpy as np

from .contact import CompliantContact, ContactPoint
from .exoskeleton import DesignParameter, ExoDesignSpace, ExoElement
from .multibody import BodySpec, Joint, build_model
from .muscle import (TC_ACTIVATION, TC_DEACTIVATION, BezierCurve2D, PassiveParams, TorqueMuscle,
                     default_torque_angle_curve, default_torque_velocity_curve)
from .nlp import SolverSettings
from .ocp import (BoundaryConstraint, Cost, Expr, OcProblem, PathConstraint, Stage, TerminalTerm,
                  transcribe)
from .spatial import SpatialInertia, SpatialTransform

VERSION = "1"
BUNDLED = ("pendulum_reach", "pendulum_codesign", "leg_two_stage")
AXIS_TOL = 1e-9


class ScenarioError(ValueError):
    """Scenario could not be read or failed validation; ``errors`` lists all problems."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


def load_schema():
    return json.loads(resources.files("exosim.data").joinpath("scenario.schema.json").read_text())


def bundled_scenario(name):
    """Path of a scenario shipped with the package."""
    if name not in BUNDLED:
        raise KeyError(f"no bundled scenario {name!r}; available: {', '.join(BUNDLED)}")
    return str(resources.files("exosim.data").joinpath(f"{name}.json"))


# -- canonical form ----------------------------------------------------------

def _curve_points(curve):
    return [[float(x), float(y)] for x, y in curve.control_points]


def _expr(e):
    return {"kind": e["kind"], "index": int(e.get("index", 0)), "body": int(e.get("body", 0)),
            "point": [float(v) for v in e.get("point", [0.0, 0.0, 0.0])],
            "axis": int(e.get("axis", 0)), "contact": e.get("contact", "")}


def _bound(v):
    return None if v is None else float(v)


def _constraint(c, boundary):
    out = {"expr": _expr(c["expr"])}
    if "value" in c:
        out["lower"] = out["upper"] = float(c["value"])
    else:
        out["lower"] = _bound(c.get("lower"))
        out["upper"] = _bound(c.get("upper"))
    if boundary:
        out["at"] = c.get("at")
    return out


def _contact(c, compliant):
    out = {"name": c["name"], "body": int(c["body"]), "point": [float(v) for v in c["point"]],
           "directions": [[float(v) for v in d] for d in c["directions"]]}
    if compliant:
        out["stiffness"] = float(c.get("stiffness", 0.0))
        out["damping"] = float(c.get("damping", 0.0))
        out["rest_point"] = [float(v) for v in c.get("rest_point", [0.0, 0.0, 0.0])]
    return out


def canonicalize(raw):
    """Structurally valid scenario dict with every default filled in."""
    d = {"version": raw["version"], "name": raw.get("name", ""),
         "gravity": [float(v) for v in raw.get("gravity", [0.0, 0.0, -9.81])]}
    bodies = []
    for b in raw["model"]["bodies"]:
        j = b["joint"]
        default_axes = [] if j["type"] == "floating" else [[0.0, 0.0, 1.0]]
        bodies.append({
            "name": b["name"], "parent": int(b.get("parent", -1)),
            "joint": {"type": j["type"],
                      "axes": [[float(v) for v in a] for a in j.get("axes", default_axes)],
                      "offset": [float(v) for v in j.get("offset", [0.0, 0.0, 0.0])],
                      "rotation": [[float(v) for v in r] for r in j.get("rotation", np.eye(3).tolist())]},
            "mass": float(b["mass"]), "com": [float(v) for v in b["com"]],
            "inertia": [[float(v) for v in r] for r in b.get("inertia", np.zeros((3, 3)).tolist())],
        })
    d["model"] = {"bodies": bodies}
    fa = _curve_points(default_torque_angle_curve())
    fv = _curve_points(default_torque_velocity_curve())
    pdef = PassiveParams()
    muscles = []
    for m in raw["muscles"]:
        p = m.get("passive", {})
        muscles.append({
            "name": m["name"], "dof": int(m["dof"]), "role": m["role"],
            "tau_max": float(m["tau_max"]),
            "tc_a": float(m.get("tc_a", TC_ACTIVATION)), "tc_d": float(m.get("tc_d", TC_DEACTIVATION)),
            "torque_angle": [[float(x), float(y)] for x, y in m.get("torque_angle", fa)],
            "torque_velocity": [[float(x), float(y)] for x, y in m.get("torque_velocity", fv)],
            "passive": {k: float(p.get(k, getattr(pdef, k))) for k in ("k_p", "c", "q_lo", "q_hi", "b")},
        })
    d["muscles"] = muscles
    exo = raw.get("exoskeleton", {})
    d["exoskeleton"] = {
        "elements": [{"name": e["name"], "dof": int(e["dof"]),
                      **{k: float(e.get(k, 0.0)) for k in ("spring_k", "damper_d", "rest_angle",
                                                           "actuator_limit", "added_mass",
                                                           "added_inertia")}}
                     for e in exo.get("elements", [])],
        "design": [{"element": p["element"], "parameter": p["parameter"],
                    "lower": float(p["lower"]), "upper": float(p["upper"]),
                    "free": bool(p.get("free", True))} for p in exo.get("design", [])],
    }
    stages = []
    for s in raw["stages"]:
        stages.append({
            "name": s["name"], "duration": [float(v) for v in s["duration"]],
            "intervals": int(s.get("intervals", 10)),
            "steps_per_interval": int(s.get("steps_per_interval", 10)),
            "control_interpolation": s.get("control_interpolation", "linear"),
            "transition": s.get("transition", "none"),
            "contacts": [_contact(c, False) for c in s.get("contacts", [])],
            "compliant_contacts": [_contact(c, True) for c in s.get("compliant_contacts", [])],
            "path_constraints": [_constraint(c, False) for c in s.get("path_constraints", [])],
            "boundary_constraints": [_constraint(c, True) for c in s.get("boundary_constraints", [])],
        })
    d["stages"] = stages
    c = raw["cost"]
    d["cost"] = {"excitation_weight": float(c.get("excitation_weight", 1.0)),
                 "actuator_weight": float(c.get("actuator_weight", 0.0)),
                 "time_weight": float(c.get("time_weight", 0.0)),
                 "terminal": [{"expr": _expr(t["expr"]), "target": float(t.get("target", 0.0)),
                               "weight": float(t.get("weight", 1.0))} for t in c.get("terminal", [])]}
    sv = raw.get("solver", {})
    dflt = SolverSettings()
    d["solver"] = {"kkt_tol": float(sv.get("kkt_tol", dflt.kkt_tol)),
                   "constraint_tol": float(sv.get("constraint_tol", dflt.constraint_tol)),
                   "max_iterations": int(sv.get("max_iterations", dflt.max_iterations)),
                   "hessian": sv.get("hessian", dflt.hessian)}
    g = raw.get("initial_guess", {})
    ctrl = g.get("controls", 0.1)
    d["initial_guess"] = {
        "controls": [float(v) for v in ctrl] if isinstance(ctrl, list) else float(ctrl),
        "durations": [float(v) for v in g["durations"]] if "durations" in g else None,
        "anchors": [{"stage": int(a["stage"]), "at": a["at"],
                     "state": {k: float(v) for k, v in a["state"].items()}}
                    for a in g.get("anchors", [])],
    }
    return d


# -- semantic checks ---------------------------------------------------------

def _dof_table(bodies):
    """Per-DoF flag: True for rotational DoFs, False for floating-base slots."""
    rot = []
    for b in bodies:
        if b["joint"]["type"] == "floating":
            rot += [False] * 6
        else:
            rot += [True] * len(b["joint"]["axes"])
    return rot


def _capture(errors, path, fn):
    try:
        return fn()
    except (ValueError, KeyError, TypeError) as exc:
        errors.append(f"{path}: {exc}")
        return None


def _check(d):
    errors = []
    bodies = d["model"]["bodies"]
    names = [b["name"] for b in bodies]
    if len(set(names)) != len(names):
        errors.append("model.bodies: body names must be unique")
    for i, b in enumerate(bodies):
        path = f"model.bodies[{i}]"
        pb = b["parent"]
        if pb >= i:
            errors.append(f"{path}.parent: parent {pb} must refer to an earlier body (or -1)")
        j = b["joint"]
        if j["type"] == "floating":
            if i != 0 or pb != -1:
                errors.append(f"{path}.joint.type: a floating base must be body 0 attached to the world")
        else:
            for k, ax in enumerate(j["axes"]):
                if abs(np.linalg.norm(ax) - 1.0) > AXIS_TOL:
                    errors.append(f"{path}.joint.axes[{k}]: axis must be a unit vector")
        if not np.allclose(b["inertia"], np.transpose(b["inertia"]), atol=1e-12):
            errors.append(f"{path}.inertia: inertia tensor must be symmetric")
    rot = _dof_table(bodies)
    nv = len(rot)
    nb = len(bodies)

    mnames = [m["name"] for m in d["muscles"]]
    if len(set(mnames)) != len(mnames):
        errors.append("muscles: muscle names must be unique")
    for i, m in enumerate(d["muscles"]):
        path = f"muscles[{i}]"
        if not 0 <= m["dof"] < nv:
            errors.append(f"{path}.dof: dof index {m['dof']} out of range (model has {nv} DoFs)")
        elif not rot[m["dof"]]:
            errors.append(f"{path}.dof: dof {m['dof']} is a floating-base coordinate, not a rotational joint")
        for key in ("tc_a", "tc_d"):
            if not m[key] > 0:
                errors.append(f"{path}.{key}: time constant must be > 0 s, got {m[key]}")
        for key in ("torque_angle", "torque_velocity"):
            _capture(errors, f"{path}.{key}", lambda key=key: BezierCurve2D(np.array(m[key])))
        _capture(errors, f"{path}.passive", lambda: PassiveParams(**m["passive"]))

    enames = [e["name"] for e in d["exoskeleton"]["elements"]]
    if len(set(enames)) != len(enames):
        errors.append("exoskeleton.elements: element names must be unique")
    for i, e in enumerate(d["exoskeleton"]["elements"]):
        if not 0 <= e["dof"] < nv or not rot[e["dof"]]:
            errors.append(f"exoskeleton.elements[{i}].dof: dof index {e['dof']} is not a rotational DoF")
    for i, p in enumerate(d["exoskeleton"]["design"]):
        path = f"exoskeleton.design[{i}]"
        if p["element"] not in enames:
            errors.append(f"{path}.element: unknown exoskeleton element {p['element']!r}")
        if p["lower"] > p["upper"]:
            errors.append(f"{path}: lower bound exceeds upper bound")

    n_act = _actuated_count(d)
    sizes = {"q": None, "qd": nv, "a": len(mnames), "e": len(mnames), "u_act": n_act}
    nq = sum(7 if b["joint"]["type"] == "floating" else len(b["joint"]["axes"]) for b in bodies)
    sizes["q"] = nq
    for i, s in enumerate(d["stages"]):
        path = f"stages[{i}]"
        lo, hi = s["duration"]
        if not (lo > 0 and lo <= hi):
            errors.append(f"{path}.duration: bounds must satisfy 0 < lower <= upper")
        if i == 0 and s["transition"] == "impact":
            errors.append(f"{path}.transition: the first stage cannot be entered through an impact")
        cnames = set()
        for kind in ("contacts", "compliant_contacts"):
            for k, c in enumerate(s[kind]):
                cp = f"{path}.{kind}[{k}]"
                if c["name"] in cnames:
                    errors.append(f"{cp}.name: duplicate contact name {c['name']!r}")
                cnames.add(c["name"])
                if not 0 <= c["body"] < nb:
                    errors.append(f"{cp}.body: body index {c['body']} out of range ({nb} bodies)")
                _capture(errors, f"{cp}.directions",
                         lambda c=c: ContactPoint(c["body"], c["point"], c["directions"]))
        rigid = {c["name"]: len(c["directions"]) for c in s["contacts"]}
        for kind in ("path_constraints", "boundary_constraints"):
            for k, c in enumerate(s[kind]):
                cp = f"{path}.{kind}[{k}]"
                errors += _expr_errors(c["expr"], f"{cp}.expr", sizes, nb, rigid)
                if kind == "boundary_constraints" and c.get("at") not in ("start", "end"):
                    errors.append(f"{cp}.at: boundary constraints need 'at': 'start' or 'end'")
                lo_c = -np.inf if c["lower"] is None else c["lower"]
                hi_c = np.inf if c["upper"] is None else c["upper"]
                if lo_c > hi_c:
                    errors.append(f"{cp}: lower bound exceeds upper bound")
    cost = d["cost"]
    weights = [cost["excitation_weight"], cost["actuator_weight"], cost["time_weight"]]
    weights += [t["weight"] for t in cost["terminal"]]
    if max(weights) <= 0:
        errors.append("cost: at least one weight must be positive")
    last = d["stages"][-1]
    rigid = {c["name"]: len(c["directions"]) for c in last["contacts"]}
    for k, t in enumerate(cost["terminal"]):
        errors += _expr_errors(t["expr"], f"cost.terminal[{k}].expr", sizes, nb, rigid)

    g = d["initial_guess"]
    nu = len(mnames) + n_act
    if isinstance(g["controls"], list) and len(g["controls"]) != nu:
        errors.append(f"initial_guess.controls: expected {nu} values, got {len(g['controls'])}")
    if g["durations"] is not None and len(g["durations"]) != len(d["stages"]):
        errors.append(f"initial_guess.durations: expected {len(d['stages'])} values")
    state_names = ([f"q_{i}" for i in range(nq)] + [f"qd_{i}" for i in range(nv)]
                   + [f"a_{n}" for n in mnames])
    for k, a in enumerate(g["anchors"]):
        if a["stage"] >= len(d["stages"]):
            errors.append(f"initial_guess.anchors[{k}].stage: stage {a['stage']} does not exist")
        for name in a["state"]:
            if name not in state_names:
                errors.append(f"initial_guess.anchors[{k}].state: unknown state {name!r}")
    return errors


def _actuated_count(d):
    free = {(p["element"], p["parameter"]) for p in d["exoskeleton"]["design"] if p["free"]}
    return sum(1 for e in d["exoskeleton"]["elements"]
               if e["actuator_limit"] > 0 or (e["name"], "actuator_limit") in free)


def _expr_errors(e, path, sizes, n_bodies, rigid):
    kind = e["kind"]
    if kind in sizes:
        if not 0 <= e["index"] < sizes[kind]:
            return [f"{path}.index: {kind} index {e['index']} out of range (size {sizes[kind]})"]
    elif kind in ("point_position", "point_velocity"):
        if not 0 <= e["body"] < n_bodies:
            return [f"{path}.body: body index {e['body']} out of range ({n_bodies} bodies)"]
    elif kind == "contact_force":
        if e["contact"] not in rigid:
            return [f"{path}.contact: no rigid contact named {e['contact']!r} in this stage"]
        if not 0 <= e["index"] < rigid[e["contact"]]:
            return [f"{path}.index: contact {e['contact']!r} has {rigid[e['contact']]} directions"]
    return []


def _schema_errors(raw):
    validator = jsonschema.Draft202012Validator(load_schema())
    out = []
    for err in sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path))):
        path = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
        out.append(f"{path.lstrip('.') or '<root>'}: {err.message}")
    return out


# -- scenario object ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Scenario:
    """Validated scenario in canonical form (all defaults explicit)."""

    data: dict
    source: str = None

    def __eq__(self, other):
        return isinstance(other, Scenario) and self.data == other.data

    @property
    def name(self):
        return self.data["name"]

    @property
    def n_bodies(self):
        return len(self.data["model"]["bodies"])

    @property
    def n_stages(self):
        return len(self.data["stages"])

    @property
    def muscles(self):
        return self.data["muscles"]

    def build_model(self):
        body_specs = []
        for b in self.data["model"]["bodies"]:
            j = b["joint"]
            offset = SpatialTransform(np.array(j["rotation"]), np.array(j["offset"]))
            joint = Joint(kind=j["type"], axes=tuple(tuple(a) for a in j["axes"]) or ((0.0, 0.0, 1.0),),
                          parent_body=b["parent"], frame_offset=offset)
            inertia = SpatialInertia.from_com(b["mass"], b["com"], np.array(b["inertia"]))
            body_specs.append(BodySpec(b["name"], joint, inertia))
        return build_model(body_specs, gravity=self.data["gravity"])

    def build_muscles(self):
        out = []
        for m in self.data["muscles"]:
            out.append(TorqueMuscle(
                name=m["name"], dof_index=m["dof"], sign=1 if m["role"] == "agonist" else -1,
                tau_max=m["tau_max"], active_torque_angle=BezierCurve2D(np.array(m["torque_angle"])),
                torque_velocity=BezierCurve2D(np.array(m["torque_velocity"])),
                passive=PassiveParams(**m["passive"]), tc_a=m["tc_a"], tc_d=m["tc_d"]))
        return out

    def build_exoskeleton(self):
        ex = self.data["exoskeleton"]
        elements = [ExoElement(name=e["name"], dof_index=e["dof"],
                               **{k: v for k, v in e.items() if k not in ("name", "dof")})
                    for e in ex["elements"]]
        index = {e.name: i for i, e in enumerate(elements)}
        space = ExoDesignSpace(tuple(
            DesignParameter(index[p["element"]], p["parameter"], p["lower"], p["upper"], p["free"])
            for p in ex["design"]))
        return elements, space

    def build_problem(self):
        model = self.build_model()
        muscles = self.build_muscles()
        elements, space = self.build_exoskeleton()
        stages = []
        for s in self.data["stages"]:
            stages.append(Stage(
                name=s["name"], duration_bounds=tuple(s["duration"]), n_intervals=s["intervals"],
                steps_per_interval=s["steps_per_interval"],
                contacts=tuple(ContactPoint(c["body"], c["point"], c["directions"], c["name"])
                               for c in s["contacts"]),
                compliant_contacts=tuple(
                    CompliantContact(c["body"], c["point"], c["directions"], c["name"],
                                     c["stiffness"], c["damping"], c["rest_point"])
                    for c in s["compliant_contacts"]),
                path_constraints=tuple(PathConstraint(_to_expr(c["expr"]), *_bounds(c))
                                       for c in s["path_constraints"]),
                boundary_constraints=tuple(BoundaryConstraint(c["at"], _to_expr(c["expr"]), *_bounds(c))
                                           for c in s["boundary_constraints"]),
                transition=s["transition"], control_interpolation=s["control_interpolation"]))
        c = self.data["cost"]
        cost = Cost(c["excitation_weight"], c["actuator_weight"], c["time_weight"],
                    tuple(TerminalTerm(_to_expr(t["expr"]), t["target"], t["weight"])
                          for t in c["terminal"]))
        return OcProblem(model, muscles, stages, cost, elements, space)

    def solver_settings(self, verbose=False):
        return SolverSettings(verbose=verbose, **self.data["solver"])

    def initial_point(self, nlp):
        g = self.data["initial_guess"]
        names = nlp.problem.state_names()
        anchors = {}
        for a in g["anchors"]:
            anchors.setdefault((a["stage"], a["at"]), {}).update(
                {names.index(k): v for k, v in a["state"].items()})
        return nlp.initial_guess(controls=g["controls"], durations=g["durations"], anchors=anchors)

    def transcribe(self, threads=None):
        return transcribe(self.build_problem(), threads=threads)


def _to_expr(e):
    return Expr(kind=e["kind"], index=e["index"], body=e["body"], point=tuple(e["point"]),
                axis=e["axis"], contact=e["contact"])


def _bounds(c):
    return (-np.inf if c["lower"] is None else c["lower"],
            np.inf if c["upper"] is None else c["upper"])


def parse_scenario_dict(raw, source=None):
    """Validate a decoded scenario; raises :class:`ScenarioError` listing every problem."""
    if not isinstance(raw, dict):
        raise ScenarioError(["<root>: scenario must be a JSON object"])
    if raw.get("version") != VERSION:
        raise ScenarioError([f"version: unknown scenario version {raw.get('version')!r} "
                             f"(supported: {VERSION!r})"])
    errors = _schema_errors(raw)
    if errors:
        raise ScenarioError(errors)
    data = canonicalize(raw)
    errors = _check(data)
    if errors:
        raise ScenarioError(errors)
    scenario = Scenario(data, source)
    # last line of defence: anything the object constructors still reject
    try:
        scenario.build_problem()
    except (ValueError, KeyError) as exc:
        raise ScenarioError([f"<model>: {exc}"]) from exc
    return scenario


def parse_scenario(path):
    """Read and validate a scenario file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError([f"{path}: cannot read file ({exc.strerror or exc})"]) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"]) from exc
    return parse_scenario_dict(raw, source=str(path))


def serialize(scenario):
    """Canonical JSON-compatible dict; ``parse_scenario_dict(serialize(s)) == s``."""
    return _strip_nulls(copy.deepcopy(scenario.data))


def _strip_nulls(d):
    # unbounded constraint sides and absent duration guesses are omitted
    if isinstance(d, dict):
        return {k: _strip_nulls(v) for k, v in d.items() if v is not None}
    if isinstance(d, list):
        return [_strip_nulls(v) for v in d]
    return d


def dump_scenario(scenario, path):
    with open(path, "w") as fh:
        json.dump(serialize(scenario), fh, indent=2)
        fh.write("\n")
