"""Agonist-antagonist torque muscles.

Each muscle produces a joint torque

    tau = tau_passive(q, qd) + sign * f_a(sign*q) * f_v(sign*qd) * tau_max * a

where ``f_a`` (active torque-angle) and ``f_v`` (torque-velocity) are
5th-order 2D Bezier curves and ``a`` follows first-order
excitation-activation dynamics. Antagonists use ``sign = -1`` so one curve
set describes both muscles of a pair.
"""
from dataclasses import dataclass, field

import numpy as np

from ._jit import njit

TC_ACTIVATION = 0.011
TC_DEACTIVATION = 0.068
EXP_CLAMP = 50.0
NEWTON_TOL = 1e-13
NEWTON_MAXITER = 100


class MuscleError(ValueError):
    pass


# -- Bezier kernels (control points as a (6, 2) array) -----------------------

@njit
def _casteljau(c, t):
    b = c.copy()
    n = b.shape[0]
    for r in range(1, n):
        for i in range(n - r):
            b[i] = (1.0 - t) * b[i] + t * b[i + 1]
    return b[0]


@njit
def bezier_point(P, t):
    return _casteljau(P[:, 0], t), _casteljau(P[:, 1], t)


@njit
def bezier_tangent(P, t):
    """(dx/dt, dy/dt) from the hodograph (a 4th-order curve)."""
    dx = 5.0 * (P[1:, 0] - P[:-1, 0])
    dy = 5.0 * (P[1:, 1] - P[:-1, 1])
    return _casteljau(dx, t), _casteljau(dy, t)


@njit
def bezier_parameter(P, x):
    """Parameter t with x(t) = x for a curve with increasing x control points.

    Newton's method safeguarded by a shrinking bisection bracket. Queries
    outside the x range clamp to the nearest endpoint.
    """
    x0 = P[0, 0]
    x5 = P[5, 0]
    if x <= x0:
        return 0.0
    if x >= x5:
        return 1.0
    lo = 0.0
    hi = 1.0
    t = (x - x0) / (x5 - x0)
    tol = NEWTON_TOL * max(1.0, abs(x0), abs(x5))
    for _ in range(NEWTON_MAXITER):
        f = _casteljau(P[:, 0], t) - x
        if abs(f) <= tol:
            break
        if f > 0.0:
            hi = t
        else:
            lo = t
        dx = 5.0 * (P[1:, 0] - P[:-1, 0])
        dfdt = _casteljau(dx, t)
        tn = t - f / dfdt if dfdt > 0.0 else -1.0
        if not (lo < tn < hi):
            tn = 0.5 * (lo + hi)
        if hi - lo < 1e-16:
            break
        t = tn
    return t


@njit
def bezier_y_at(P, x):
    t = bezier_parameter(P, x)
    return _casteljau(P[:, 1], t)


@njit
def bezier_slope_at(P, x):
    """dy/dx at x (zero outside the x range, where the curve is clamped)."""
    if x <= P[0, 0] or x >= P[5, 0]:
        return 0.0
    t = bezier_parameter(P, x)
    dxdt, dydt = bezier_tangent(P, t)
    return dydt / dxdt


# -- torque and activation kernels -------------------------------------------

@njit
def passive_torque_kernel(kp, c, q_lo, q_hi, b, q, qd):
    lo_arg = min(max(c * (q_lo - q), -EXP_CLAMP), EXP_CLAMP)
    hi_arg = min(max(c * (q - q_hi), -EXP_CLAMP), EXP_CLAMP)
    return kp * (np.exp(lo_arg) - np.exp(hi_arg)) - b * qd


@njit
def active_torque_kernel(sign, tau_max, fa, fv, q, qd, a):
    return sign * bezier_y_at(fa, sign * q) * bezier_y_at(fv, sign * qd) * tau_max * a


@njit
def activation_rate_kernel(e, a, tc_a, tc_d):
    if e >= a:
        return (e - a) * (e / tc_a + (1.0 - e) / tc_d)
    return (e - a) / tc_d


# -- public types ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BezierCurve2D:
    """Quintic Bezier curve with strictly increasing x control points."""

    control_points: np.ndarray

    def __post_init__(self):
        P = np.ascontiguousarray(self.control_points, dtype=float)
        if P.shape != (6, 2):
            raise MuscleError(f"a 5th-order curve needs 6 (x, y) control points, got shape {P.shape}")
        if not np.all(np.isfinite(P)):
            raise MuscleError("control points must be finite")
        if np.any(np.diff(P[:, 0]) <= 0):
            raise MuscleError("control point x-coordinates must be strictly increasing")
        P.setflags(write=False)
        object.__setattr__(self, "control_points", P)

    def __eq__(self, other):
        return isinstance(other, BezierCurve2D) and np.array_equal(
            self.control_points, other.control_points)

    @property
    def x_range(self):
        return self.control_points[0, 0], self.control_points[5, 0]


@dataclass(frozen=True)
class PassiveParams:
    k_p: float = 0.0   # N m
    c: float = 1.0     # 1/rad
    q_lo: float = -np.pi
    q_hi: float = np.pi
    b: float = 0.0     # N m s/rad

    def __post_init__(self):
        if not self.q_lo < self.q_hi:
            raise MuscleError(f"passive range needs q_lo < q_hi, got ({self.q_lo}, {self.q_hi})")
        if self.k_p < 0 or self.b < 0 or self.c < 0:
            raise MuscleError("passive stiffness, shape and damping must be nonnegative")

    def as_array(self):
        return np.array([self.k_p, self.c, self.q_lo, self.q_hi, self.b])


def default_torque_angle_curve(lo=-np.pi / 2, hi=np.pi / 2):
    """Bell-shaped f_a: 0.3 at the range ends, peak 1.0 at mid-range."""
    xs = np.linspace(lo, hi, 6)
    # symmetric polygon [0.3, h, h, h, h, 0.3] peaks at t = 0.5 with value
    # h - (h - 0.3) / 16; solve for a unit peak
    h = (1.0 - 0.3 / 16.0) / (15.0 / 16.0)
    return BezierCurve2D(np.column_stack([xs, [0.3, h, h, h, h, 0.3]]))


def default_torque_velocity_curve(v_max=10.0):
    """f_v: 1.0 isometric, saturating at 1.4 eccentric, 0 at v_max concentric."""
    xs = np.linspace(-v_max, v_max, 6)
    # equally spaced x makes t = 0.5 at zero velocity:
    # (1.4 + 5*1.4 + 10*1.4 + 10*0.96) / 32 = 1
    return BezierCurve2D(np.column_stack([xs, [1.4, 1.4, 1.4, 0.96, 0.0, 0.0]]))


@dataclass(frozen=True)
class TorqueMuscle:
    name: str
    dof_index: int
    sign: int
    tau_max: float
    active_torque_angle: BezierCurve2D = field(default_factory=default_torque_angle_curve)
    torque_velocity: BezierCurve2D = field(default_factory=default_torque_velocity_curve)
    passive: PassiveParams = field(default_factory=PassiveParams)
    tc_a: float = TC_ACTIVATION
    tc_d: float = TC_DEACTIVATION

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise MuscleError(f"{self.name}: sign must be +1 (agonist) or -1 (antagonist)")
        if not self.tau_max > 0:
            raise MuscleError(f"{self.name}: tau_max must be positive")
        if not (self.tc_a > 0 and self.tc_d > 0):
            raise MuscleError(f"{self.name}: activation time constants must be positive")
        for curve in (self.active_torque_angle, self.torque_velocity):
            if np.any(curve.control_points[:, 1] < 0):
                raise MuscleError(f"{self.name}: curve y-values must be nonnegative")

    @property
    def role(self):
        return "agonist" if self.sign > 0 else "antagonist"


# -- public operations -------------------------------------------------------

def bezier_eval(curve, t):
    """Point (x, y) on the curve at parameter ``t`` in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise MuscleError(f"Bezier parameter must lie in [0, 1], got {t}")
    x, y = bezier_point(curve.control_points, float(t))
    return float(x), float(y)


def bezier_value_at(curve, x_query):
    """y on the curve where x(t) = ``x_query``; clamped outside the x range."""
    return float(bezier_y_at(curve.control_points, float(x_query)))


def bezier_slope(curve, x_query):
    return float(bezier_slope_at(curve.control_points, float(x_query)))


def passive_torque(muscle, q, qd):
    p = muscle.passive
    return float(passive_torque_kernel(p.k_p, p.c, p.q_lo, p.q_hi, p.b, float(q), float(qd)))


def _check_unit(value, name):
    if not 0.0 <= value <= 1.0:
        raise MuscleError(f"{name} must lie in [0, 1], got {value}")


def active_torque(muscle, q, qd, a):
    _check_unit(a, "activation")
    return float(active_torque_kernel(
        float(muscle.sign), muscle.tau_max, muscle.active_torque_angle.control_points,
        muscle.torque_velocity.control_points, float(q), float(qd), float(a)))


def muscle_torque(muscle, q, qd, a):
    """Passive plus active torque of a single muscle."""
    return passive_torque(muscle, q, qd) + active_torque(muscle, q, qd, a)


def total_torque(muscle_pair, q, qd, a_ag, a_an):
    """Net joint torque of an (agonist, antagonist) pair.

    The passive term is the sum of both muscles' passive elements.
    """
    agonist, antagonist = muscle_pair
    if agonist.sign != 1 or antagonist.sign != -1:
        raise MuscleError("muscle_pair must be (agonist, antagonist)")
    if agonist.dof_index != antagonist.dof_index:
        raise MuscleError("agonist and antagonist must act on the same DoF")
    return muscle_torque(agonist, q, qd, a_ag) + muscle_torque(antagonist, q, qd, a_an)


def activation_rate(e, a, tc_a=TC_ACTIVATION, tc_d=TC_DEACTIVATION):
    """da/dt of the excitation-activation dynamics."""
    _check_unit(e, "excitation")
    _check_unit(a, "activation")
    return float(activation_rate_kernel(float(e), float(a), tc_a, tc_d))


def activation_closed_form(e, a0, t, tc_a=TC_ACTIVATION, tc_d=TC_DEACTIVATION):
    """Exact activation after time ``t`` under constant excitation ``e``.

    The trajectory relaxes monotonically toward ``e`` so it stays on the
    branch chosen by the initial state; starting exactly at ``e`` is a fixed
    point.
    """
    _check_unit(e, "excitation")
    _check_unit(a0, "activation")
    if t < 0:
        raise MuscleError("time must be nonnegative")
    rate = e / tc_a + (1.0 - e) / tc_d if e >= a0 else 1.0 / tc_d
    return e + (a0 - e) * np.exp(-rate * t)
