"""Kinematic-tree model description and the public dynamics entry points."""
from dataclasses import dataclass, field

import numpy as np

from ..spatial import SpatialInertia, SpatialTransform, SpatialVector
from . import kernels as K

QUAT_TOL = 1e-8
AXIS_TOL = 1e-10


class ModelError(ValueError):
    """Invalid model description."""


class DimensionError(ValueError):
    """Array argument does not match the model layout."""


@dataclass(frozen=True)
class Joint:
    """A 1-3 DoF revolute joint (one axis per DoF) or a 6-DoF floating base."""

    kind: str = "revolute"  # "revolute" | "floating"
    axes: tuple = ((0.0, 0.0, 1.0),)
    parent_body: int = -1
    frame_offset: SpatialTransform = field(default_factory=SpatialTransform)

    @property
    def dof(self):
        return 6 if self.kind == "floating" else len(self.axes)


@dataclass(frozen=True)
class BodySpec:
    name: str
    joint: Joint
    inertia: SpatialInertia


@dataclass(frozen=True, eq=False)
class MultibodyModel:
    """Immutable kinematic tree plus the flat link arrays the kernels consume.

    Multi-axis joints expand into chains of single-axis links through
    massless intermediate frames; ``body_link`` maps each body to the link
    carrying its inertia.
    """

    bodies: tuple
    gravity: np.ndarray
    dof_total: int
    nq: int
    joint_q_index: tuple  # body -> first q slot of its joint
    joint_v_index: tuple  # body -> first velocity slot of its joint
    body_link: np.ndarray
    parent: np.ndarray
    jtype: np.ndarray
    axis: np.ndarray
    Xtree: np.ndarray
    inertia: np.ndarray
    qidx: np.ndarray
    vidx: np.ndarray
    q_of_v: np.ndarray  # velocity slot -> q slot for revolute DoFs, -1 for base slots

    @property
    def nv(self):
        return self.dof_total

    @property
    def n_bodies(self):
        return len(self.bodies)

    @property
    def has_floating_base(self):
        return bool(np.any(self.jtype == K.FREE))

    @property
    def joints(self):
        return tuple(b.joint for b in self.bodies)

    def body_index(self, name):
        for i, b in enumerate(self.bodies):
            if b.name == name:
                return i
        raise KeyError(name)

    def kernel_args(self):
        return (self.parent, self.jtype, self.axis, self.Xtree, self.inertia,
                self.qidx, self.vidx, self.gravity)

    def neutral_configuration(self):
        q = np.zeros(self.nq)
        for i in np.nonzero(self.jtype == K.FREE)[0]:
            q[self.qidx[i] + 3] = 1.0
        return q


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def build_model(description, gravity=(0.0, 0.0, -9.81)):
    """Validate body and joint descriptions and assemble a :class:`MultibodyModel`.

    ``description`` is a sequence of :class:`BodySpec`; each joint's
    ``parent_body`` must index an earlier body, or be -1 for the world.
    """
    bodies = tuple(description)
    if not bodies:
        raise ModelError("model needs at least one body")
    parent, jtype, axis, Xtree, inertia, qidx, vidx = [], [], [], [], [], [], []
    body_link, jq, jv = [], [], []
    nq = nv = 0
    for b, entry in enumerate(bodies):
        jt = entry.joint
        pb = jt.parent_body
        if pb == b:
            raise ModelError(f"body {b} ({entry.name}): joint parent is itself (cycle)")
        if pb > b:
            raise ModelError(
                f"body {b} ({entry.name}): parent {pb} is not previously declared "
                "(parents must precede children, cycles are not allowed)")
        if pb < -1:
            raise ModelError(f"body {b} ({entry.name}): invalid parent index {pb}")
        if not isinstance(entry.inertia, SpatialInertia):
            raise ModelError(f"body {b} ({entry.name}): inertia must be a SpatialInertia")
        plink = -1 if pb < 0 else body_link[pb]
        X_off = jt.frame_offset.plucker()
        jq.append(nq)
        jv.append(nv)
        if jt.kind == "floating":
            if pb != -1 or b != 0:
                raise ModelError(f"body {b} ({entry.name}): floating base must be the first body, attached to the world")
            parent.append(-1)
            jtype.append(K.FREE)
            axis.append(np.zeros(3))
            Xtree.append(X_off)
            qidx.append(nq)
            vidx.append(nv)
            nq += 7
            nv += 6
        elif jt.kind == "revolute":
            axes = np.asarray(jt.axes, dtype=float).reshape(-1, 3)
            if not 1 <= len(axes) <= 3:
                raise ModelError(f"body {b} ({entry.name}): revolute joints carry 1 to 3 axes")
            for k, ax in enumerate(axes):
                if abs(np.linalg.norm(ax) - 1.0) > AXIS_TOL:
                    raise ModelError(f"body {b} ({entry.name}): joint axis {k} is not unit length")
                for other in axes[:k]:
                    if np.allclose(ax, other, atol=AXIS_TOL):
                        raise ModelError(f"body {b} ({entry.name}): joint axes must be distinct")
            for k, ax in enumerate(axes):
                parent.append(plink if k == 0 else len(parent) - 1)
                jtype.append(K.REVOLUTE)
                axis.append(ax)
                Xtree.append(X_off if k == 0 else np.eye(6))
                qidx.append(nq)
                vidx.append(nv)
                nq += 1
                nv += 1
        else:
            raise ModelError(f"body {b} ({entry.name}): unknown joint kind {jt.kind!r}")
        # intermediate links of a multi-axis joint stay massless
        n_new = len(parent) - len(inertia)
        for _ in range(n_new - 1):
            inertia.append(np.zeros((6, 6)))
        inertia.append(entry.inertia.matrix())
        body_link.append(len(parent) - 1)

    q_of_v = -np.ones(nv, dtype=np.int64)
    for i, t in enumerate(jtype):
        if t == K.REVOLUTE:
            q_of_v[vidx[i]] = qidx[i]
    g = np.asarray(gravity, dtype=float).reshape(3)
    return MultibodyModel(
        bodies=bodies,
        gravity=_readonly(g),
        dof_total=nv,
        nq=nq,
        joint_q_index=tuple(jq),
        joint_v_index=tuple(jv),
        body_link=_readonly(np.array(body_link, dtype=np.int64)),
        parent=_readonly(np.array(parent, dtype=np.int64)),
        jtype=_readonly(np.array(jtype, dtype=np.int64)),
        axis=_readonly(np.array(axis, dtype=float).reshape(-1, 3)),
        Xtree=_readonly(np.array(Xtree, dtype=float)),
        inertia=_readonly(np.array(inertia, dtype=float)),
        qidx=_readonly(np.array(qidx, dtype=np.int64)),
        vidx=_readonly(np.array(vidx, dtype=np.int64)),
        q_of_v=_readonly(q_of_v),
    )


def with_inertias(model, inertia):
    """Copy of ``model`` with the link inertia array replaced."""
    m = dict(model.__dict__)
    m["inertia"] = _readonly(np.asarray(inertia, dtype=float))
    return MultibodyModel(**m)


# -- argument checking -------------------------------------------------------

def _vec(x, n, name):
    a = np.ascontiguousarray(x, dtype=float)
    if a.shape != (n,):
        raise DimensionError(f"{name} must have shape ({n},), got {a.shape}")
    return a


def _config(model, q, check_quat=True):
    q = _vec(q, model.nq, "q")
    for i in np.nonzero(model.jtype == K.FREE)[0]:
        n = np.linalg.norm(q[model.qidx[i] + 3:model.qidx[i] + 7])
        if check_quat and abs(n - 1.0) > QUAT_TOL:
            raise DimensionError(f"floating-base quaternion is not normalized (|q| = {n})")
    return q


def _external(model, external_forces):
    """Per-body world wrenches at body origins -> per-link array (link axes)."""
    nl = model.parent.shape[0]
    fw = np.zeros((nl, 6))
    if external_forces is None:
        return fw
    if isinstance(external_forces, dict):
        items = external_forces.items()
    else:
        ef = np.asarray([
            f.as_array() if isinstance(f, SpatialVector) else np.asarray(f, dtype=float)
            for f in external_forces])
        if ef.shape != (model.n_bodies, 6):
            raise DimensionError(f"external_forces must be {model.n_bodies} x 6, got {ef.shape}")
        items = enumerate(ef)
    for b, f in items:
        if not 0 <= b < model.n_bodies:
            raise DimensionError(f"external force on unknown body {b}")
        f = f.as_array() if isinstance(f, SpatialVector) else np.asarray(f, dtype=float)
        fw[model.body_link[b]] += f
    return fw


def _transforms(model, q):
    return K.link_transforms(model.jtype, model.axis, model.Xtree, model.qidx, q)


def _link_fext(model, Xup, external_forces):
    fw = _external(model, external_forces)
    if not np.any(fw):
        return fw
    R, _ = K.world_poses(model.parent, Xup)
    return K.external_to_link(R, fw)


# -- public operations -------------------------------------------------------

def forward_kinematics(model, q):
    """World pose of every body as a list of :class:`SpatialTransform`."""
    q = _config(model, q)
    R, p = K.world_poses(model.parent, _transforms(model, q))
    out = []
    for link in model.body_link:
        U, _, Vt = np.linalg.svd(R[link])
        out.append(SpatialTransform(U @ Vt, p[link]))
    return out


def body_point_position(model, q, body, point):
    q = _config(model, q, check_quat=False)
    R, p = K.world_poses(model.parent, _transforms(model, q))
    link = model.body_link[body]
    return p[link] + R[link] @ np.asarray(point, dtype=float)


def point_jacobian(model, q, body, point):
    """3 x nv matrix J with world point velocity = J @ qd."""
    q = _config(model, q)
    if not 0 <= body < model.n_bodies:
        raise DimensionError(f"body index {body} out of range")
    pt = _vec(point, 3, "point")
    Xup = _transforms(model, q)
    R, p = K.world_poses(model.parent, Xup)
    return K.point_jacobian_world(model.parent, model.jtype, model.axis, model.vidx,
                                  model.nv, R, p, model.body_link[body], pt)


def point_bias_acceleration(model, q, qd, body, point):
    """World acceleration of a body point at zero generalized acceleration and
    zero gravity, i.e. ``Jdot @ qd``."""
    q = _config(model, q)
    qd = _vec(qd, model.nv, "qd")
    Xup = _transforms(model, q)
    R, _ = K.world_poses(model.parent, Xup)
    v, a = K.velocity_bias_pass(model.parent, model.jtype, model.axis, model.vidx, Xup, qd)
    return K.point_bias_acceleration(v, a, R, model.body_link[body], _vec(point, 3, "point"))


def rnea(model, q, qd, qdd, external_forces=None):
    """Inverse dynamics: generalized forces realizing ``qdd``."""
    q = _config(model, q)
    qd = _vec(qd, model.nv, "qd")
    qdd = _vec(qdd, model.nv, "qdd")
    Xup = _transforms(model, q)
    return K.rnea_xup(model.parent, model.jtype, model.axis, model.inertia, model.vidx,
                      model.nv, model.gravity, Xup, qd, qdd,
                      _link_fext(model, Xup, external_forces))


def crba(model, q):
    """Joint-space mass matrix."""
    q = _config(model, q)
    return K.crba_xup(model.parent, model.jtype, model.axis, model.inertia, model.vidx,
                      model.nv, _transforms(model, q))


def aba(model, q, qd, tau, external_forces=None):
    """Forward dynamics by the articulated-body algorithm."""
    q = _config(model, q)
    qd = _vec(qd, model.nv, "qd")
    tau = _vec(tau, model.nv, "tau")
    Xup = _transforms(model, q)
    return K.aba_xup(model.parent, model.jtype, model.axis, model.inertia, model.vidx,
                     model.nv, model.gravity, Xup, qd, tau,
                     _link_fext(model, Xup, external_forces))


def _link_mass_com(model):
    m = model.inertia[:, 5, 5]
    com = np.zeros((len(m), 3))
    nz = m > 0
    mc = model.inertia[:, :3, 3:]
    com[nz, 0] = mc[nz, 2, 1] / m[nz]
    com[nz, 1] = mc[nz, 0, 2] / m[nz]
    com[nz, 2] = mc[nz, 1, 0] / m[nz]
    return m, com


def total_energy(model, q, qd):
    """``(kinetic, potential)`` in joules; potential is zero at the world origin."""
    q = _config(model, q)
    qd = _vec(qd, model.nv, "qd")
    Xup = _transforms(model, q)
    M = K.crba_xup(model.parent, model.jtype, model.axis, model.inertia, model.vidx,
                   model.nv, Xup)
    R, p = K.world_poses(model.parent, Xup)
    m, com = _link_mass_com(model)
    c_world = p + np.einsum("lij,lj->li", R, com)
    kinetic = 0.5 * qd @ M @ qd
    potential = -float(np.sum(m * (c_world @ model.gravity)))
    return float(kinetic), potential


def configuration_rate(model, q, qd):
    """dq/dt for generalized velocity ``qd``."""
    q = _vec(q, model.nq, "q")
    return K.configuration_rate(model.jtype, model.qidx, model.vidx, q,
                                _vec(qd, model.nv, "qd"))


def integrate_configuration(model, q, v, dt):
    """Move ``q`` along constant generalized velocity ``v`` for time ``dt``.

    Revolute coordinates advance linearly; floating-base orientation uses the
    exact quaternion exponential of the body-frame angular velocity.
    """
    q = np.array(_vec(q, model.nq, "q"))
    v = _vec(v, model.nv, "v")
    for i in range(len(model.jtype)):
        qi, vi = model.qidx[i], model.vidx[i]
        if model.jtype[i] == K.REVOLUTE:
            q[qi] += v[vi] * dt
            continue
        quat = q[qi + 3:qi + 7]
        Rb = K.quat_to_rot(*quat)
        q[qi:qi + 3] += Rb @ v[vi + 3:vi + 6] * dt
        w = v[vi:vi + 3] * dt
        ang = np.linalg.norm(w)
        if ang > 0:
            half = 0.5 * ang
            dq = np.concatenate([[np.cos(half)], np.sin(half) * w / ang])
        else:
            dq = np.array([1.0, 0.0, 0.0, 0.0])
        q[qi + 3:qi + 7] = _quat_mul(quat, dq)
    return q


def _quat_mul(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])
