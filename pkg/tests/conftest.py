import os
from math import comb

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from exosim.multibody import BodySpec, Joint, build_model
from exosim.muscle import BezierCurve2D, TorqueMuscle
from exosim.spatial import SpatialInertia, SpatialTransform, rotation_about

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=15,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

G = 9.81
Y = (0.0, 1.0, 0.0)


def pendulum(mass=1.0, length=1.0, gravity=(0.0, 0.0, -G)):
    """Point mass on a massless rod hanging along -z, rotating about y."""
    body = BodySpec("arm", Joint("revolute", (Y,)), SpatialInertia.from_com(mass, [0, 0, -length]))
    return build_model([body], gravity=gravity)


def two_link(m1=5.0, m2=3.0, l1=0.5, lc1=0.25, lc2=0.25, I1=0.1, I2=0.06, gravity=(0.0, 0.0, -G)):
    """Planar leg in the x-z plane: thigh and shank hanging along -z."""
    b0 = BodySpec("thigh", Joint("revolute", (Y,)),
                  SpatialInertia.from_com(m1, [0, 0, -lc1], np.diag([I1, I1, 0.01])))
    b1 = BodySpec("shank", Joint("revolute", (Y,), parent_body=0,
                                 frame_offset=SpatialTransform(np.eye(3), [0, 0, -l1])),
                  SpatialInertia.from_com(m2, [0, 0, -lc2], np.diag([I2, I2, 0.005])))
    return build_model([b0, b1], gravity=gravity)


def _unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def _rotation(rng):
    return rotation_about(_unit(rng), rng.uniform(-np.pi, np.pi))


def random_model(rng, n_bodies=None, floating=None, gravity=(0.0, 0.0, -G), max_axes=3):
    """Random kinematic tree with 1-3 DoF revolute joints and an optional floating base."""
    n = int(rng.integers(1, 11)) if n_bodies is None else n_bodies
    floating = bool(rng.integers(0, 2)) if floating is None else floating
    body_specs = []
    for b in range(n):
        if b == 0 and floating:
            joint = Joint("floating", ((0.0, 0.0, 1.0),), -1)
        else:
            parent = -1 if b == 0 else int(rng.integers(0, b))
            axes = tuple(tuple(_unit(rng)) for _ in range(int(rng.integers(1, max_axes + 1))))
            offset = SpatialTransform(_rotation(rng), rng.uniform(-0.5, 0.5, 3))
            joint = Joint("revolute", axes, parent, offset)
        A = rng.normal(size=(3, 3))
        inertia = 0.05 * A @ A.T + 0.01 * np.eye(3)
        body_specs.append(BodySpec(f"b{b}", joint,
                              SpatialInertia.from_com(rng.uniform(0.5, 3.0), rng.uniform(-0.3, 0.3, 3),
                                                      inertia)))
    return build_model(body_specs, gravity=gravity)


def random_state(rng, model, scale=1.0):
    q = rng.uniform(-np.pi, np.pi, model.nq) * scale
    for i, j in enumerate(model.joints):
        if j.kind == "floating":
            qi = model.joint_q_index[i]
            q[qi:qi + 3] = rng.uniform(-1, 1, 3)
            quat = rng.normal(size=4)
            q[qi + 3:qi + 7] = quat / np.linalg.norm(quat)
    return q, rng.normal(size=model.nv) * scale


def muscle_pair(dof=0, tau_max=30.0, **kw):
    return (TorqueMuscle("ag", dof, 1, tau_max, **kw), TorqueMuscle("an", dof, -1, tau_max, **kw))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def double_integrator(interpolation="constant", n_intervals=20, distance=1.0):
    """Minimum-time rest-to-rest transfer of a unit mass with |u| <= 1."""
    from exosim.ocp import BoundaryConstraint, Cost, Expr, OdeProblem, Stage
    ends = [BoundaryConstraint(at, Expr("state", k), v, v)
            for at, k, v in (("start", 0, 0.0), ("start", 1, 0.0), ("end", 0, distance), ("end", 1, 0.0))]
    stage = Stage("move", (0.5, 10.0), n_intervals, 4, boundary_constraints=ends,
                  control_interpolation=interpolation)
    return OdeProblem(lambda x, u, p: np.array([x[1], u[0]]), 2, 1, [stage],
                      Cost(excitation_weight=0.0, time_weight=1.0),
                      control_bounds=(np.array([-1.0]), np.array([1.0])))


BERNSTEIN = np.array([comb(5, k) for k in range(6)], dtype=float)


def bernstein(P, t):
    """Curve point via the explicit Bernstein sum (independent of de Casteljau)."""
    k = np.arange(6)
    t = np.asarray(t, dtype=float)
    w = BERNSTEIN * t**k * (1 - t) ** (5 - k)
    return w @ P


def bisection_y(P, x, tol=1e-15):
    """y(x) by bisection on the Bernstein form; ``x`` may be an array of queries."""
    x = np.asarray(x, dtype=float)
    lo, hi = np.zeros_like(x), np.ones_like(x)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = bernstein(P, mid[..., None])[..., 0] < x
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo, initial=0.0) < tol:
            break
    y = bernstein(P, 0.5 * (lo + hi)[..., None])[..., 1]
    return np.where(x <= P[0, 0], P[0, 1], np.where(x >= P[5, 0], P[5, 1], y))


def random_curve(rng):
    x = np.cumsum(rng.uniform(0.05, 1.0, 6)) + rng.uniform(-3, 0)
    return BezierCurve2D(np.column_stack([x, rng.uniform(0, 2, 6)]))


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
