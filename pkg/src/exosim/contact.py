"""Rigid (holonomic) and compliant (spring-damper) contacts.

Rigid contacts constrain the world acceleration of a body point along 1-3
directions; forces follow from the KKT system

    [M  J^T] [ qdd]   [tau - bias]
    [J   0 ] [-lam] = [ -Jdot qd ]

solved here through its Schur complement ``J M^-1 J^T``. ``lam`` is the
force the environment applies to the body, one entry per direction.
"""
from dataclasses import dataclass

import numpy as np

from ._jit import njit
from .multibody import kernels as K
from .multibody.model import DimensionError, _config, _link_fext, _transforms, _vec
from .spatial import cross3

RANK_TOL = 1e-8


class ContactError(ValueError):
    """Rank-deficient or singular contact constraint set."""


@dataclass(frozen=True, eq=False)
class ContactPoint:
    body: int
    point: np.ndarray
    directions: np.ndarray
    name: str = ""

    def __post_init__(self):
        pt = np.asarray(self.point, dtype=float).reshape(3)
        D = np.atleast_2d(np.asarray(self.directions, dtype=float))
        if D.shape[1] != 3 or not 1 <= D.shape[0] <= 3:
            raise ContactError("contact needs 1-3 direction vectors of length 3")
        if np.max(np.abs(np.linalg.norm(D, axis=1) - 1.0)) > 1e-10:
            raise ContactError("contact directions must be unit vectors")
        if np.linalg.matrix_rank(D, tol=1e-10) < D.shape[0]:
            raise ContactError("contact directions must be linearly independent")
        object.__setattr__(self, "point", pt)
        object.__setattr__(self, "directions", D)

    @property
    def n_directions(self):
        return self.directions.shape[0]

    def __eq__(self, other):
        return (type(self) is type(other) and self.body == other.body and self.name == other.name
                and np.array_equal(self.point, other.point)
                and np.array_equal(self.directions, other.directions))


@dataclass(frozen=True, eq=False)
class CompliantContact(ContactPoint):
    stiffness: float = 0.0
    damping: float = 0.0
    rest_point: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        if self.stiffness < 0 or self.damping < 0:
            raise ContactError("stiffness and damping must be nonnegative")
        rp = np.zeros(3) if self.rest_point is None else self.rest_point
        object.__setattr__(self, "rest_point", np.asarray(rp, dtype=float).reshape(3))

    def __eq__(self, other):
        return (super().__eq__(other) and self.stiffness == other.stiffness
                and self.damping == other.damping
                and np.array_equal(self.rest_point, other.rest_point))


# -- kernels -----------------------------------------------------------------

@njit
def constraint_rows(parent, jtype, axis, vidx, nv, Xup, R, p, qd, c_link, c_point, c_dirs, c_ndir):
    """Stacked direction rows of the contact Jacobian and of Jdot qd."""
    nrows = 0
    for k in range(c_link.shape[0]):
        nrows += c_ndir[k]
    J = np.zeros((nrows, nv))
    gamma = np.zeros(nrows)
    if nrows == 0:
        return J, gamma
    v, a = K.velocity_bias_pass(parent, jtype, axis, vidx, Xup, qd)
    row = 0
    for k in range(c_link.shape[0]):
        Jp = K.point_jacobian_world(parent, jtype, axis, vidx, nv, R, p, c_link[k], c_point[k])
        bias = K.point_bias_acceleration(v, a, R, c_link[k], c_point[k])
        for d in range(c_ndir[k]):
            n = c_dirs[k, d]
            J[row] = np.dot(n, Jp)
            gamma[row] = np.dot(n, bias)
            row += 1
    return J, gamma


@njit
def compliant_wrenches(parent, jtype, axis, vidx, nv, R, p, qd, k_link, k_point, k_dirs, k_ndir,
                       k_gains, k_rest, nl):
    """World wrenches at link origins and the per-direction force components."""
    fw = np.zeros((nl, 6))
    ncomp = 0
    for k in range(k_link.shape[0]):
        ncomp += k_ndir[k]
    comps = np.zeros(ncomp)
    row = 0
    for k in range(k_link.shape[0]):
        link = k_link[k]
        pw = p[link] + np.dot(R[link], k_point[k])
        Jp = K.point_jacobian_world(parent, jtype, axis, vidx, nv, R, p, link, k_point[k])
        vw = np.dot(Jp, qd)
        raw = -k_gains[k, 0] * (pw - k_rest[k]) - k_gains[k, 1] * vw
        f = np.zeros(3)
        for d in range(k_ndir[k]):
            n = k_dirs[k, d]
            c = np.dot(n, raw)
            comps[row] = c
            f += c * n
            row += 1
        fw[link, :3] += cross3(pw - p[link], f)
        fw[link, 3:] += f
    return fw, comps


@njit
def constrained_solve(M, h, J, gamma):
    """qdd, lam for M qdd = h + J^T lam with J qdd = -gamma."""
    if J.shape[0] == 0:
        return np.linalg.solve(M, h), np.zeros(0)
    Minv_h = np.linalg.solve(M, h)
    Minv_Jt = np.linalg.solve(M, np.ascontiguousarray(J.T))
    A = np.dot(J, Minv_Jt)
    lam = np.linalg.solve(A, -gamma - np.dot(J, Minv_h))
    return Minv_h + np.dot(Minv_Jt, lam), lam


@njit
def impact_kernel(M, J, qd):
    if J.shape[0] == 0:
        return qd.copy()
    Minv_Jt = np.linalg.solve(M, np.ascontiguousarray(J.T))
    A = np.dot(J, Minv_Jt)
    return qd - np.dot(Minv_Jt, np.linalg.solve(A, np.dot(J, qd)))


# -- helpers for the public API ----------------------------------------------

def contact_arrays(model, contacts):
    """Flat arrays (link, point, directions (n, 3, 3), count) for kernels."""
    n = len(contacts)
    link = np.zeros(n, dtype=np.int64)
    point = np.zeros((n, 3))
    dirs = np.zeros((n, 3, 3))
    ndir = np.zeros(n, dtype=np.int64)
    for k, c in enumerate(contacts):
        if not 0 <= c.body < model.n_bodies:
            raise DimensionError(f"contact on unknown body {c.body}")
        link[k] = model.body_link[c.body]
        point[k] = c.point
        dirs[k, :c.n_directions] = c.directions
        ndir[k] = c.n_directions
    return link, point, dirs, ndir


def compliant_arrays(model, contacts):
    link, point, dirs, ndir = contact_arrays(model, contacts)
    gains = np.array([[c.stiffness, c.damping] for c in contacts], dtype=float).reshape(-1, 2)
    rest = np.array([c.rest_point for c in contacts], dtype=float).reshape(-1, 3)
    return link, point, dirs, ndir, gains, rest


def _rows(model, q, qd, contacts):
    Xup = _transforms(model, q)
    R, p = K.world_poses(model.parent, Xup)
    link, point, dirs, ndir = contact_arrays(model, contacts)
    J, gamma = constraint_rows(model.parent, model.jtype, model.axis, model.vidx, model.nv,
                               Xup, R, p, qd, link, point, dirs, ndir)
    return Xup, J, gamma


def check_rank(J):
    if J.shape[0] == 0:
        return
    s = np.linalg.svd(J, compute_uv=False)
    if s[0] == 0 or s[-1] / s[0] < RANK_TOL or J.shape[0] > J.shape[1]:
        raise ContactError(
            f"contact Jacobian is rank deficient ({J.shape[0]} rows, "
            f"singular values {s.min():.3g}..{s.max():.3g})")


def contact_jacobian(model, q, qd, contacts):
    """``(J, Jdot_qd)`` stacked over all contact directions."""
    q = _config(model, q)
    qd = _vec(qd, model.nv, "qd")
    _, J, gamma = _rows(model, q, qd, contacts)
    return J, gamma


def constrained_forward_dynamics(model, q, qd, tau, contacts, external_forces=None):
    """Accelerations and contact forces with all ``contacts`` held rigid."""
    q = _config(model, q)
    qd = _vec(qd, model.nv, "qd")
    tau = _vec(tau, model.nv, "tau")
    Xup, J, gamma = _rows(model, q, qd, contacts)
    if not contacts:
        qdd = K.aba_xup(model.parent, model.jtype, model.axis, model.inertia, model.vidx,
                        model.nv, model.gravity, Xup, qd, tau,
                        _link_fext(model, Xup, external_forces))
        return qdd, np.zeros(0)
    check_rank(J)
    M = K.crba_xup(model.parent, model.jtype, model.axis, model.inertia, model.vidx, model.nv, Xup)
    bias = K.rnea_xup(model.parent, model.jtype, model.axis, model.inertia, model.vidx, model.nv,
                      model.gravity, Xup, qd, np.zeros(model.nv),
                      _link_fext(model, Xup, external_forces))
    kkt = np.block([[M, J.T], [J, np.zeros((J.shape[0], J.shape[0]))]])
    if np.linalg.cond(kkt) > 1e14:
        raise ContactError("KKT matrix is singular")
    return constrained_solve(M, tau - bias, J, gamma)


def impact_map(model, q, qd_minus, new_contacts):
    """Post-impact velocity for a perfectly inelastic impulsive contact."""
    q = _config(model, q)
    qd_minus = _vec(qd_minus, model.nv, "qd_minus")
    Xup, J, _ = _rows(model, q, qd_minus, new_contacts)
    check_rank(J)
    M = K.crba_xup(model.parent, model.jtype, model.axis, model.inertia, model.vidx, model.nv, Xup)
    return impact_kernel(M, J, qd_minus)


def compliant_contact_force(model, q, qd, contact):
    """World force on the body at the contact point."""
    q = _config(model, q)
    qd = _vec(qd, model.nv, "qd")
    Xup = _transforms(model, q)
    R, p = K.world_poses(model.parent, Xup)
    link, point, dirs, ndir, gains, rest = compliant_arrays(model, [contact])
    fw, _ = compliant_wrenches(model.parent, model.jtype, model.axis, model.vidx, model.nv, R, p,
                               qd, link, point, dirs, ndir, gains, rest, model.parent.shape[0])
    return fw[link[0], 3:].copy()


def contact_wrench(model, q, contact, force):
    """Body-origin world wrench ``[moment; force]`` equivalent to ``force``
    applied at the contact point; suitable for ``external_forces``."""
    q = _config(model, q)
    Xup = _transforms(model, q)
    R, p = K.world_poses(model.parent, Xup)
    link = model.body_link[contact.body]
    pw = p[link] + R[link] @ contact.point
    f = np.asarray(force, dtype=float)
    return np.concatenate([np.cross(pw - p[link], f), f])
