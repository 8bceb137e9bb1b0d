"""Compiled right-hand side of the coupled human-exoskeleton system.

State ``x = [q, qd, a_1..a_m]``, control ``u = [e_1..e_m, u_act...]``.
``SystemArrays`` holds everything that is fixed for a given set of design
parameters; ``StageArrays`` holds the contact set of one model stage.
"""
from typing import NamedTuple

import numpy as np

from .._jit import njit
from ..contact import compliant_wrenches, constrained_solve, constraint_rows, impact_kernel
from ..multibody import kernels as K
from ..muscle import activation_rate_kernel, active_torque_kernel, passive_torque_kernel


class SystemArrays(NamedTuple):
    parent: np.ndarray
    jtype: np.ndarray
    axis: np.ndarray
    Xtree: np.ndarray
    inertia: np.ndarray
    qidx: np.ndarray
    vidx: np.ndarray
    gravity: np.ndarray
    q_of_v: np.ndarray
    nq: int
    nv: int
    m_dof: np.ndarray
    m_sign: np.ndarray
    m_taumax: np.ndarray
    m_fa: np.ndarray
    m_fv: np.ndarray
    m_passive: np.ndarray
    m_tc: np.ndarray
    x_dof: np.ndarray
    x_params: np.ndarray  # spring_k, damper_d, rest_angle, actuator_limit
    x_uidx: np.ndarray    # control slot of the actuator command, -1 if none


class StageArrays(NamedTuple):
    c_link: np.ndarray
    c_point: np.ndarray
    c_dirs: np.ndarray
    c_ndir: np.ndarray
    k_link: np.ndarray
    k_point: np.ndarray
    k_dirs: np.ndarray
    k_ndir: np.ndarray
    k_gains: np.ndarray
    k_rest: np.ndarray


@njit
def actuation(sa, q, qd, a, u):
    """Generalized force vector plus per-muscle and per-element torques."""
    m = sa.m_dof.shape[0]
    ne = sa.x_dof.shape[0]
    tau = np.zeros(sa.nv)
    mt = np.zeros(m)
    xt = np.zeros(ne)
    for k in range(m):
        dof = sa.m_dof[k]
        ang = q[sa.q_of_v[dof]]
        rate = qd[dof]
        P = sa.m_passive[k]
        t = passive_torque_kernel(P[0], P[1], P[2], P[3], P[4], ang, rate)
        t += active_torque_kernel(sa.m_sign[k], sa.m_taumax[k], sa.m_fa[k], sa.m_fv[k],
                                  ang, rate, a[k])
        mt[k] = t
        tau[dof] += t
    for k in range(ne):
        dof = sa.x_dof[k]
        ang = q[sa.q_of_v[dof]]
        X = sa.x_params[k]
        cmd = u[m + sa.x_uidx[k]] if sa.x_uidx[k] >= 0 else 0.0
        t = -X[0] * (ang - X[2]) - X[1] * qd[dof] + cmd * X[3]
        xt[k] = t
        tau[dof] += t
    return tau, mt, xt


@njit
def system_rhs_full(sa, st, x, u):
    """xdot together with rigid contact forces, compliant force components,
    muscle torques and exoskeleton torques."""
    nq = sa.nq
    nv = sa.nv
    m = sa.m_dof.shape[0]
    q = x[:nq]
    qd = x[nq:nq + nv]
    a = x[nq + nv:]
    tau, mt, xt = actuation(sa, q, qd, a, u)
    Xup = K.link_transforms(sa.jtype, sa.axis, sa.Xtree, sa.qidx, q)
    nl = sa.parent.shape[0]
    R, p = K.world_poses(sa.parent, Xup)
    fw, comps = compliant_wrenches(sa.parent, sa.jtype, sa.axis, sa.vidx, nv, R, p, qd,
                                   st.k_link, st.k_point, st.k_dirs, st.k_ndir, st.k_gains,
                                   st.k_rest, nl)
    fext = K.external_to_link(R, fw)
    if st.c_link.shape[0] == 0:
        qdd = K.aba_xup(sa.parent, sa.jtype, sa.axis, sa.inertia, sa.vidx, nv, sa.gravity,
                        Xup, qd, tau, fext)
        lam = np.zeros(0)
    else:
        M = K.crba_xup(sa.parent, sa.jtype, sa.axis, sa.inertia, sa.vidx, nv, Xup)
        bias = K.rnea_xup(sa.parent, sa.jtype, sa.axis, sa.inertia, sa.vidx, nv, sa.gravity,
                          Xup, qd, np.zeros(nv), fext)
        J, gamma = constraint_rows(sa.parent, sa.jtype, sa.axis, sa.vidx, nv, Xup, R, p, qd,
                                   st.c_link, st.c_point, st.c_dirs, st.c_ndir)
        qdd, lam = constrained_solve(M, tau - bias, J, gamma)
    xdot = np.empty(x.shape[0])
    xdot[:nq] = K.configuration_rate(sa.jtype, sa.qidx, sa.vidx, q, qd)
    xdot[nq:nq + nv] = qdd
    for k in range(m):
        xdot[nq + nv + k] = activation_rate_kernel(u[k], a[k], sa.m_tc[k, 0], sa.m_tc[k, 1])
    return xdot, lam, comps, mt, xt


@njit
def system_rhs(sa, st, x, u):
    return system_rhs_full(sa, st, x, u)[0]


@njit
def rk4_segment(sa, st, x0, u0, u1, h, n_steps, constant):
    """Fixed-step RK4 over one shooting interval with linearly interpolated
    (or held, when ``constant``) controls.

    Returns the end state and the index of the first non-finite step, or -1.
    """
    dt = h / n_steps
    x = x0.copy()
    du = u1 - u0
    if constant:
        du = du * 0.0
    for k in range(n_steps):
        s0 = k / n_steps
        sm = (k + 0.5) / n_steps
        s1 = (k + 1.0) / n_steps
        ua = u0 + s0 * du
        um = u0 + sm * du
        ub = u0 + s1 * du
        k1 = system_rhs(sa, st, x, ua)
        k2 = system_rhs(sa, st, x + 0.5 * dt * k1, um)
        k3 = system_rhs(sa, st, x + 0.5 * dt * k2, um)
        k4 = system_rhs(sa, st, x + dt * k3, ub)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            return x, k
    return x, -1


@njit
def rk4_dense(sa, st, x0, u0, u1, h, n_steps, constant):
    """Like :func:`rk4_segment` but returns every step, shape (n_steps+1, nx)."""
    dt = h / n_steps
    out = np.empty((n_steps + 1, x0.shape[0]))
    out[0] = x0
    x = x0.copy()
    du = u1 - u0
    if constant:
        du = du * 0.0
    for k in range(n_steps):
        ua = u0 + (k / n_steps) * du
        um = u0 + ((k + 0.5) / n_steps) * du
        ub = u0 + ((k + 1.0) / n_steps) * du
        k1 = system_rhs(sa, st, x, ua)
        k2 = system_rhs(sa, st, x + 0.5 * dt * k1, um)
        k3 = system_rhs(sa, st, x + 0.5 * dt * k2, um)
        k4 = system_rhs(sa, st, x + dt * k3, ub)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = x
    return out


@njit
def impact_transition(sa, st, x):
    """Inelastic impact onto the rigid contacts of ``st``; q and a unchanged."""
    nq = sa.nq
    nv = sa.nv
    q = x[:nq]
    qd = x[nq:nq + nv]
    Xup = K.link_transforms(sa.jtype, sa.axis, sa.Xtree, sa.qidx, q)
    R, p = K.world_poses(sa.parent, Xup)
    J, _ = constraint_rows(sa.parent, sa.jtype, sa.axis, sa.vidx, nv, Xup, R, p, qd,
                           st.c_link, st.c_point, st.c_dirs, st.c_ndir)
    M = K.crba_xup(sa.parent, sa.jtype, sa.axis, sa.inertia, sa.vidx, nv, Xup)
    out = x.copy()
    out[nq:nq + nv] = impact_kernel(M, J, np.ascontiguousarray(qd))
    return out
