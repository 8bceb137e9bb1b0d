"""Recursive rigid-body dynamics kernels over flat link arrays.

Every kernel takes the topology as arrays (``parent``, ``jtype``, ``axis``,
...) indexed by link in topological order, so a single compiled version
serves any tree. Links with ``jtype == FREE`` are 6-DoF floating joints
whose configuration is ``[position(3), quaternion(w, x, y, z)]`` and whose
velocity is the body-frame spatial velocity ``[omega; v]``.
"""
import numpy as np

from .._jit import njit
from ..spatial import cross3, crf, crm, plucker, quat_to_rot, rotation_about, skew

REVOLUTE = 0
FREE = 1


@njit
def joint_transform(jtype, axis, q, qi):
    if jtype == REVOLUTE:
        R = rotation_about(axis, q[qi])
        return plucker(np.ascontiguousarray(R.T), np.zeros(3))
    R = quat_to_rot(q[qi + 3], q[qi + 4], q[qi + 5], q[qi + 6])
    return plucker(np.ascontiguousarray(R.T), q[qi:qi + 3].copy())


@njit
def axis6(axis):
    s = np.zeros(6)
    s[0] = axis[0]
    s[1] = axis[1]
    s[2] = axis[2]
    return s


@njit
def motion_subspace(jtype, axis):
    if jtype == REVOLUTE:
        S = np.zeros((6, 1))
        S[0, 0] = axis[0]
        S[1, 0] = axis[1]
        S[2, 0] = axis[2]
        return S
    return np.eye(6)


@njit
def link_transforms(jtype, axis, Xtree, qidx, q):
    nl = jtype.shape[0]
    Xup = np.empty((nl, 6, 6))
    for i in range(nl):
        Xup[i] = np.dot(joint_transform(jtype[i], axis[i], q, qidx[i]), Xtree[i])
    return Xup


@njit
def world_poses(parent, Xup):
    """World rotation (link axes -> world axes) and origin of every link."""
    nl = parent.shape[0]
    X0 = np.empty((nl, 6, 6))
    R = np.empty((nl, 3, 3))
    p = np.empty((nl, 3))
    for i in range(nl):
        if parent[i] < 0:
            X0[i] = Xup[i]
        else:
            X0[i] = np.dot(Xup[i], X0[parent[i]])
        Et = np.ascontiguousarray(X0[i, :3, :3].T)
        R[i] = Et
        # lower-left block is -E r^x
        rx = -np.dot(Et, np.ascontiguousarray(X0[i, 3:, :3]))
        p[i, 0] = rx[2, 1]
        p[i, 1] = rx[0, 2]
        p[i, 2] = rx[1, 0]
    return R, p


@njit
def external_to_link(R, fext_world):
    """World-axis wrenches at link origins -> link coordinates."""
    nl = R.shape[0]
    out = np.zeros((nl, 6))
    for i in range(nl):
        Rt = np.ascontiguousarray(R[i].T)
        out[i, :3] = np.dot(Rt, fext_world[i, :3])
        out[i, 3:] = np.dot(Rt, fext_world[i, 3:])
    return out


@njit
def rnea_xup(parent, jtype, axis, inertia, vidx, nv, gravity, Xup, qd, qdd, fext_link):
    nl = parent.shape[0]
    v = np.zeros((nl, 6))
    a = np.zeros((nl, 6))
    f = np.zeros((nl, 6))
    a0 = np.zeros(6)
    a0[3:] = -gravity
    for i in range(nl):
        vi = vidx[i]
        p = parent[i]
        if jtype[i] == REVOLUTE:
            s = axis6(axis[i])
            vJ = s * qd[vi]
            if p < 0:
                v[i] = vJ
                a[i] = np.dot(Xup[i], a0) + s * qdd[vi]
            else:
                v[i] = np.dot(Xup[i], v[p]) + vJ
                a[i] = np.dot(Xup[i], a[p]) + s * qdd[vi] + np.dot(crm(v[i]), vJ)
        else:
            v[i] = qd[vi:vi + 6]
            a[i] = np.dot(Xup[i], a0) + qdd[vi:vi + 6]
        Iv = np.dot(inertia[i], v[i])
        f[i] = np.dot(inertia[i], a[i]) + np.dot(crf(v[i]), Iv) - fext_link[i]
    tau = np.zeros(nv)
    for i in range(nl - 1, -1, -1):
        vi = vidx[i]
        if jtype[i] == REVOLUTE:
            tau[vi] = axis[i, 0] * f[i, 0] + axis[i, 1] * f[i, 1] + axis[i, 2] * f[i, 2]
        else:
            tau[vi:vi + 6] = f[i]
        if parent[i] >= 0:
            f[parent[i]] += np.dot(Xup[i].T, f[i])
    return tau


@njit
def crba_xup(parent, jtype, axis, inertia, vidx, nv, Xup):
    nl = parent.shape[0]
    Ic = inertia.copy()
    for i in range(nl - 1, -1, -1):
        p = parent[i]
        if p >= 0:
            Ic[p] += np.dot(Xup[i].T, np.dot(Ic[i], Xup[i]))
    M = np.zeros((nv, nv))
    for i in range(nl):
        Si = motion_subspace(jtype[i], axis[i])
        ni = Si.shape[1]
        vi = vidx[i]
        F = np.dot(Ic[i], Si)
        M[vi:vi + ni, vi:vi + ni] = np.dot(Si.T, F)
        j = i
        while parent[j] >= 0:
            F = np.dot(Xup[j].T, F)
            j = parent[j]
            Sj = motion_subspace(jtype[j], axis[j])
            nj = Sj.shape[1]
            vj = vidx[j]
            blk = np.dot(F.T, Sj)
            M[vi:vi + ni, vj:vj + nj] = blk
            M[vj:vj + nj, vi:vi + ni] = blk.T
    return M


@njit
def aba_xup(parent, jtype, axis, inertia, vidx, nv, gravity, Xup, qd, tau, fext_link):
    nl = parent.shape[0]
    v = np.zeros((nl, 6))
    c = np.zeros((nl, 6))
    IA = inertia.copy()
    pA = np.zeros((nl, 6))
    for i in range(nl):
        vi = vidx[i]
        p = parent[i]
        if jtype[i] == REVOLUTE:
            s = axis6(axis[i])
            vJ = s * qd[vi]
            if p < 0:
                v[i] = vJ
            else:
                v[i] = np.dot(Xup[i], v[p]) + vJ
                c[i] = np.dot(crm(v[i]), vJ)
        else:
            v[i] = qd[vi:vi + 6]
        pA[i] = np.dot(crf(v[i]), np.dot(inertia[i], v[i])) - fext_link[i]

    # revolute: U (6,), d scalar, u scalar; free joints keep their own slots
    U = np.zeros((nl, 6))
    d = np.zeros(nl)
    u = np.zeros(nl)
    for i in range(nl - 1, -1, -1):
        vi = vidx[i]
        p = parent[i]
        if jtype[i] == REVOLUTE:
            s = axis6(axis[i])
            U[i] = np.dot(IA[i], s)
            d[i] = np.dot(s, U[i])
            u[i] = tau[vi] - np.dot(s, pA[i])
            if p >= 0:
                Ia = IA[i] - np.outer(U[i], U[i]) / d[i]
                pa = pA[i] + np.dot(Ia, c[i]) + U[i] * (u[i] / d[i])
                IA[p] += np.dot(Xup[i].T, np.dot(Ia, Xup[i]))
                pA[p] += np.dot(Xup[i].T, pa)
        # free joints are roots: nothing propagates further up

    qdd = np.zeros(nv)
    a = np.zeros((nl, 6))
    a0 = np.zeros(6)
    a0[3:] = -gravity
    for i in range(nl):
        vi = vidx[i]
        p = parent[i]
        if p < 0:
            ai = np.dot(Xup[i], a0) + c[i]
        else:
            ai = np.dot(Xup[i], a[p]) + c[i]
        if jtype[i] == REVOLUTE:
            s = axis6(axis[i])
            qdd[vi] = (u[i] - np.dot(U[i], ai)) / d[i]
            a[i] = ai + s * qdd[vi]
        else:
            acc = np.linalg.solve(IA[i], tau[vi:vi + 6] - pA[i] - np.dot(IA[i], ai))
            qdd[vi:vi + 6] = acc
            a[i] = ai + acc
    return qdd


@njit
def point_jacobian_world(parent, jtype, axis, vidx, nv, R, p, link, point):
    """3 x nv Jacobian of the world velocity of a body-fixed point."""
    J = np.zeros((3, nv))
    pw = p[link] + np.dot(R[link], point)
    j = link
    while j >= 0:
        vj = vidx[j]
        r = pw - p[j]
        if jtype[j] == REVOLUTE:
            w = np.dot(R[j], axis[j])
            J[:, vj] = cross3(w, r)
        else:
            J[:, vj:vj + 3] = -np.dot(skew(r), R[j])
            J[:, vj + 3:vj + 6] = R[j]
        j = parent[j]
    return J


@njit
def velocity_bias_pass(parent, jtype, axis, vidx, Xup, qd):
    """Spatial velocities and zero-qdd, zero-gravity accelerations (link axes)."""
    nl = parent.shape[0]
    v = np.zeros((nl, 6))
    a = np.zeros((nl, 6))
    for i in range(nl):
        vi = vidx[i]
        p = parent[i]
        if jtype[i] == REVOLUTE:
            s = axis6(axis[i])
            vJ = s * qd[vi]
            if p < 0:
                v[i] = vJ
            else:
                v[i] = np.dot(Xup[i], v[p]) + vJ
                a[i] = np.dot(Xup[i], a[p]) + np.dot(crm(v[i]), vJ)
        else:
            v[i] = qd[vi:vi + 6]
    return v, a


@njit
def point_bias_acceleration(v, a, R, link, point):
    """World classical acceleration of a body point when qdd = 0 (= Jdot qd)."""
    w = v[link, :3]
    r = point
    vp = v[link, 3:] + cross3(w, r)
    acc = a[link, 3:] + cross3(a[link, :3], r) + cross3(w, vp)
    return np.dot(R[link], acc)


@njit
def configuration_rate(jtype, qidx, vidx, q, qd):
    """dq/dt from generalized velocities (quaternion kinematics for free joints)."""
    out = np.zeros(q.shape[0])
    nl = jtype.shape[0]
    for i in range(nl):
        qi = qidx[i]
        vi = vidx[i]
        if jtype[i] == REVOLUTE:
            out[qi] = qd[vi]
        else:
            w0 = q[qi + 3]
            x0 = q[qi + 4]
            y0 = q[qi + 5]
            z0 = q[qi + 6]
            R = quat_to_rot(w0, x0, y0, z0)
            out[qi:qi + 3] = np.dot(R, qd[vi + 3:vi + 6])
            wx = qd[vi]
            wy = qd[vi + 1]
            wz = qd[vi + 2]
            # 0.5 * quat (x) (0, omega_body)
            out[qi + 3] = 0.5 * (-x0 * wx - y0 * wy - z0 * wz)
            out[qi + 4] = 0.5 * (w0 * wx + y0 * wz - z0 * wy)
            out[qi + 5] = 0.5 * (w0 * wy + z0 * wx - x0 * wz)
            out[qi + 6] = 0.5 * (w0 * wz + x0 * wy - y0 * wx)
    return out
