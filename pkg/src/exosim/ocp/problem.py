"""Multi-stage optimal control problem definitions."""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..contact import CompliantContact, ContactPoint, compliant_arrays, contact_arrays
from ..exoskeleton import ExoDesignSpace, attach_exo, pack_design_parameters, unpack_design_parameters
from ..multibody import kernels as MK
from ..multibody.model import DimensionError
from .dynamics import (SystemArrays, StageArrays, impact_transition, rk4_segment,
                       system_rhs_full)

EXPR_KINDS = ("state", "control", "q", "qd", "a", "e", "u_act",
              "point_position", "point_velocity", "contact_force")


class ProblemError(ValueError):
    """Inconsistent optimal control problem definition."""


class IntegrationError(RuntimeError):
    def __init__(self, step):
        super().__init__(f"non-finite state encountered at integration step {step}")
        self.step = step


@dataclass(frozen=True)
class Expr:
    """Scalar quantity evaluated at a node: a state/control component, a point
    coordinate or velocity, or a rigid contact force component."""

    kind: str
    index: int = 0
    body: int = 0
    point: tuple = (0.0, 0.0, 0.0)
    axis: int = 0
    contact: str = ""

    def __post_init__(self):
        if self.kind not in EXPR_KINDS:
            raise ProblemError(f"unknown expression kind {self.kind!r}")
        object.__setattr__(self, "point", tuple(float(v) for v in self.point))


@dataclass(frozen=True)
class PathConstraint:
    expr: Expr
    lower: float = -np.inf
    upper: float = np.inf


@dataclass(frozen=True)
class BoundaryConstraint:
    at: str  # "start" | "end"
    expr: Expr
    lower: float = -np.inf
    upper: float = np.inf

    def __post_init__(self):
        if self.at not in ("start", "end"):
            raise ProblemError(f"boundary constraint location must be 'start' or 'end', got {self.at!r}")


@dataclass(frozen=True)
class Stage:
    name: str = "stage"
    duration_bounds: tuple = (1.0, 1.0)
    n_intervals: int = 10
    steps_per_interval: int = 10
    contacts: tuple = ()
    compliant_contacts: tuple = ()
    path_constraints: tuple = ()
    boundary_constraints: tuple = ()
    transition: str = "none"  # how this stage is entered: "none" | "impact"
    control_interpolation: str = "linear"  # "linear" | "constant"

    def __post_init__(self):
        lo, hi = self.duration_bounds
        if not (lo > 0 and lo <= hi):
            raise ProblemError(f"stage {self.name}: duration bounds must satisfy 0 < lower <= upper")
        if self.n_intervals < 1 or self.steps_per_interval < 1:
            raise ProblemError(f"stage {self.name}: needs at least one interval and one step")
        if self.transition not in ("none", "impact"):
            raise ProblemError(f"stage {self.name}: unknown transition {self.transition!r}")
        if self.control_interpolation not in ("linear", "constant"):
            raise ProblemError(f"stage {self.name}: unknown control interpolation")
        for attr in ("contacts", "compliant_contacts", "path_constraints", "boundary_constraints"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))


@dataclass(frozen=True)
class TerminalTerm:
    expr: Expr
    target: float = 0.0
    weight: float = 1.0


@dataclass(frozen=True)
class Cost:
    """Effort-plus-time objective with optional terminal penalties."""

    excitation_weight: float = 1.0
    actuator_weight: float = 0.0
    time_weight: float = 0.0
    terminal: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "terminal", tuple(self.terminal))
        weights = [self.excitation_weight, self.actuator_weight, self.time_weight]
        weights += [t.weight for t in self.terminal]
        if min(weights) < 0:
            raise ProblemError("cost weights must be nonnegative")
        if max(weights) == 0:
            raise ProblemError("at least one cost weight must be positive")


class ShootingProblem:
    """Interface consumed by the multiple-shooting transcription.

    Subclasses define the state/control layout, bounds, the segment
    integrator and node expressions.
    """

    stages: tuple
    cost: Cost
    nx: int
    nu: int

    # design parameters (none by default)
    def parameter_vector(self):
        return np.zeros(0), np.zeros(0), np.zeros(0), []

    @property
    def n_params(self):
        return len(self.parameter_vector()[0])

    def excitation_slice(self):
        return slice(0, self.nu)

    def actuator_slice(self):
        return slice(self.nu, self.nu)

    def variable_of(self, expr):
        """("x" | "u", index) when ``expr`` is a plain state/control component."""
        if expr.kind == "state":
            return "x", expr.index
        if expr.kind == "control":
            return "u", expr.index
        return None

    def neutral_state(self):
        return np.zeros(self.nx)

    def state_names(self):
        return [f"x{i}" for i in range(self.nx)]

    def control_names(self):
        return [f"u{i}" for i in range(self.nu)]

    def eval_expr(self, expr, stage, x, u, p):
        var = self.variable_of(expr)
        if var is None:
            raise ProblemError(f"expression kind {expr.kind!r} is not available for this problem")
        return float(x[var[1]] if var[0] == "x" else u[var[1]])

    def check_expr(self, expr, stage):
        var = self.variable_of(expr)
        if var is not None:
            n = self.nx if var[0] == "x" else self.nu
            if not 0 <= var[1] < n:
                raise ProblemError(f"{expr.kind} index {expr.index} out of range")

    def transition(self, stage, x, p):
        return np.array(x, dtype=float)


def rk4_python(f, x0, u0, u1, h, n_steps, constant=False):
    """Generic fixed-step RK4 with linearly interpolated controls."""
    dt = h / n_steps
    x = np.array(x0, dtype=float)
    du = np.zeros_like(u1 - u0) if constant else u1 - u0
    for k in range(n_steps):
        ua = u0 + (k / n_steps) * du
        um = u0 + ((k + 0.5) / n_steps) * du
        ub = u0 + ((k + 1.0) / n_steps) * du
        k1 = f(x, ua)
        k2 = f(x + 0.5 * dt * k1, um)
        k3 = f(x + 0.5 * dt * k2, um)
        k4 = f(x + dt * k3, ub)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(k)
    return x


class OdeProblem(ShootingProblem):
    """Shooting problem for a user-supplied ODE ``rhs(x, u, p) -> xdot``."""

    def __init__(self, rhs, nx, nu, stages, cost, state_bounds=None, control_bounds=None):
        self.rhs_fn = rhs
        self.nx = int(nx)
        self.nu = int(nu)
        self.stages = tuple(stages)
        self.cost = cost
        inf = np.full
        self.state_bounds = state_bounds or (inf(nx, -np.inf), inf(nx, np.inf))
        self.control_bounds = control_bounds or (inf(nu, -np.inf), inf(nu, np.inf))

    def rhs(self, stage, x, u, p):
        return np.asarray(self.rhs_fn(x, u, p), dtype=float)

    def segment(self, stage, x0, u0, u1, h, n_steps, p):
        constant = self.stages[stage].control_interpolation == "constant"
        return rk4_python(lambda x, u: self.rhs(stage, x, u, p), x0, u0, u1, h, n_steps, constant)

    def dense_segment(self, stage, x0, u0, u1, h, n_steps, p):
        out = [np.array(x0, dtype=float)]
        for k in range(n_steps):
            s0, s1 = k / n_steps, (k + 1) / n_steps
            ua = u0 + s0 * (u1 - u0)
            ub = u0 + s1 * (u1 - u0)
            if self.stages[stage].control_interpolation == "constant":
                ua = ub = u0
            out.append(rk4_python(lambda x, u: self.rhs(stage, x, u, p), out[-1], ua, ub,
                                  h / n_steps, 1))
        return np.array(out)


class OcProblem(ShootingProblem):
    """Torque-muscle driven multibody model with optional exoskeleton.

    State ``[q, qd, a]``, controls ``[e, u_act]``. Excitations and actuator
    commands are bounded to [0, 1] and [-1, 1]; activations to [0, 1].
    """

    def __init__(self, model, muscles, stages, cost, exo_elements=(), design_space=None):
        self.model = model
        self.muscles = tuple(muscles)
        self.exo_elements = tuple(exo_elements)
        self.design_space = design_space or ExoDesignSpace()
        self.stages = tuple(stages)
        self.cost = cost
        self._sys_cache = {}
        self._validate()

    def _validate(self):
        if not self.stages:
            raise ProblemError("problem needs at least one stage")
        for mu in self.muscles:
            if not 0 <= mu.dof_index < self.model.nv or self.model.q_of_v[mu.dof_index] < 0:
                raise ProblemError(f"muscle {mu.name}: dof index {mu.dof_index} is not a rotational DoF")
        names = [mu.name for mu in self.muscles]
        if len(set(names)) != len(names):
            raise ProblemError("muscle names must be unique")
        for el in self.exo_elements:
            if not 0 <= el.dof_index < self.model.nv or self.model.q_of_v[el.dof_index] < 0:
                raise ProblemError(f"exoskeleton element {el.name}: invalid dof index {el.dof_index}")
        # raises on inconsistent bounds / element references
        pack_design_parameters(self.design_space, self.exo_elements)
        for i, st in enumerate(self.stages):
            for c in st.contacts:
                if isinstance(c, CompliantContact) or not isinstance(c, ContactPoint):
                    raise ProblemError(f"stage {st.name}: rigid contact list holds a non-rigid contact")
            contact_arrays(self.model, st.contacts)
            compliant_arrays(self.model, st.compliant_contacts)
            for pc in st.path_constraints:
                self.check_expr(pc.expr, i)
            for bc in st.boundary_constraints:
                self.check_expr(bc.expr, i)
            if i == 0 and st.transition == "impact":
                raise ProblemError("the first stage cannot be entered through an impact")
        for t in self.cost.terminal:
            self.check_expr(t.expr, len(self.stages) - 1)

    # -- layout --------------------------------------------------------------
    @property
    def nq(self):
        return self.model.nq

    @property
    def nv(self):
        return self.model.nv

    @property
    def n_muscles(self):
        return len(self.muscles)

    @cached_property
    def actuated_elements(self):
        free = {(d.element, d.name) for d in self.design_space.free}
        return tuple(i for i, el in enumerate(self.exo_elements)
                     if el.actuator_limit > 0 or (i, "actuator_limit") in free)

    @property
    def nx(self):
        return self.nq + self.nv + self.n_muscles

    @property
    def nu(self):
        return self.n_muscles + len(self.actuated_elements)

    def excitation_slice(self):
        return slice(0, self.n_muscles)

    def actuator_slice(self):
        return slice(self.n_muscles, self.nu)

    def state_names(self):
        return ([f"q_{i}" for i in range(self.nq)] + [f"qd_{i}" for i in range(self.nv)]
                + [f"a_{m.name}" for m in self.muscles])

    def control_names(self):
        return ([f"e_{m.name}" for m in self.muscles]
                + [f"u_{self.exo_elements[i].name}" for i in self.actuated_elements])

    @property
    def state_bounds(self):
        lo = np.full(self.nx, -np.inf)
        hi = np.full(self.nx, np.inf)
        lo[self.nq + self.nv:] = 0.0
        hi[self.nq + self.nv:] = 1.0
        return lo, hi

    @property
    def control_bounds(self):
        lo = np.zeros(self.nu)
        hi = np.ones(self.nu)
        lo[self.n_muscles:] = -1.0
        return lo, hi

    def neutral_state(self):
        x = np.zeros(self.nx)
        x[:self.nq] = self.model.neutral_configuration()
        return x

    def parameter_vector(self):
        return pack_design_parameters(self.design_space, self.exo_elements)

    def elements_for(self, p):
        if len(p) == 0:
            return self.exo_elements
        return tuple(unpack_design_parameters(self.design_space, self.exo_elements, p))

    # -- compiled arrays -----------------------------------------------------
    def system_arrays(self, p):
        key = np.asarray(p, dtype=float).tobytes()
        sa = self._sys_cache.get(key)
        if sa is not None:
            return sa
        elements = self.elements_for(p)
        model = attach_exo(self.model, elements)
        mus = self.muscles
        uidx = {e: k for k, e in enumerate(self.actuated_elements)}
        sa = SystemArrays(
            parent=model.parent, jtype=model.jtype, axis=model.axis, Xtree=model.Xtree,
            inertia=model.inertia, qidx=model.qidx, vidx=model.vidx, gravity=model.gravity,
            q_of_v=model.q_of_v, nq=int(model.nq), nv=int(model.nv),
            m_dof=np.array([m.dof_index for m in mus], dtype=np.int64),
            m_sign=np.array([float(m.sign) for m in mus]),
            m_taumax=np.array([m.tau_max for m in mus], dtype=float),
            m_fa=np.array([m.active_torque_angle.control_points for m in mus]).reshape(-1, 6, 2),
            m_fv=np.array([m.torque_velocity.control_points for m in mus]).reshape(-1, 6, 2),
            m_passive=np.array([m.passive.as_array() for m in mus]).reshape(-1, 5),
            m_tc=np.array([[m.tc_a, m.tc_d] for m in mus], dtype=float).reshape(-1, 2),
            x_dof=np.array([e.dof_index for e in elements], dtype=np.int64),
            x_params=np.array([[e.spring_k, e.damper_d, e.rest_angle, e.actuator_limit]
                               for e in elements], dtype=float).reshape(-1, 4),
            x_uidx=np.array([uidx.get(i, -1) for i in range(len(elements))], dtype=np.int64),
        )
        if len(self._sys_cache) > 64:
            self._sys_cache.clear()
        self._sys_cache[key] = sa
        return sa

    @cached_property
    def _stage_arrays(self):
        out = []
        for st in self.stages:
            cl, cp, cd, cn = contact_arrays(self.model, st.contacts)
            kl, kp, kd, kn, kg, kr = compliant_arrays(self.model, st.compliant_contacts)
            out.append(StageArrays(cl, cp, cd, cn, kl, kp, kd, kn, kg, kr))
        return tuple(out)

    def stage_arrays(self, stage):
        return self._stage_arrays[stage]

    # -- dynamics ------------------------------------------------------------
    def _xu(self, x, u):
        x = np.ascontiguousarray(x, dtype=float)
        u = np.ascontiguousarray(u, dtype=float)
        if x.shape != (self.nx,) or u.shape != (self.nu,):
            raise DimensionError(f"state/control must have shapes ({self.nx},)/({self.nu},)")
        return x, u

    def rhs_full(self, stage, x, u, p):
        x, u = self._xu(x, u)
        return system_rhs_full(self.system_arrays(p), self.stage_arrays(stage), x, u)

    def rhs(self, stage, x, u, p):
        return self.rhs_full(stage, x, u, p)[0]

    def segment(self, stage, x0, u0, u1, h, n_steps, p):
        x0, u0 = self._xu(x0, u0)
        u1 = np.ascontiguousarray(u1, dtype=float)
        if h <= 0 or n_steps < 1:
            raise ProblemError("segment needs h > 0 and at least one step")
        constant = self.stages[stage].control_interpolation == "constant"
        x, bad = rk4_segment(self.system_arrays(p), self.stage_arrays(stage), x0, u0, u1,
                             float(h), int(n_steps), constant)
        if bad >= 0:
            raise IntegrationError(bad)
        return x

    def dense_segment(self, stage, x0, u0, u1, h, n_steps, p):
        from .dynamics import rk4_dense
        x0, u0 = self._xu(x0, u0)
        constant = self.stages[stage].control_interpolation == "constant"
        return rk4_dense(self.system_arrays(p), self.stage_arrays(stage), x0, u0,
                         np.ascontiguousarray(u1, dtype=float), float(h), int(n_steps), constant)

    def transition(self, stage, x, p):
        x = np.ascontiguousarray(x, dtype=float)
        if self.stages[stage].transition == "impact":
            return impact_transition(self.system_arrays(p), self.stage_arrays(stage), x)
        return x.copy()

    # -- expressions ---------------------------------------------------------
    def variable_of(self, expr):
        off = {"q": 0, "qd": self.nq, "a": self.nq + self.nv}
        if expr.kind in off:
            return "x", off[expr.kind] + expr.index
        if expr.kind == "e":
            return "u", expr.index
        if expr.kind == "u_act":
            return "u", self.n_muscles + expr.index
        return super().variable_of(expr)

    def check_expr(self, expr, stage):
        sizes = {"q": self.nq, "qd": self.nv, "a": self.n_muscles, "e": self.n_muscles,
                 "u_act": len(self.actuated_elements)}
        if expr.kind in sizes and not 0 <= expr.index < sizes[expr.kind]:
            raise ProblemError(f"{expr.kind} index {expr.index} out of range (size {sizes[expr.kind]})")
        if expr.kind in ("point_position", "point_velocity"):
            if not 0 <= expr.body < self.model.n_bodies:
                raise ProblemError(f"{expr.kind}: body index {expr.body} out of range")
            if expr.axis not in (0, 1, 2):
                raise ProblemError(f"{expr.kind}: axis must be 0, 1 or 2")
        if expr.kind == "contact_force":
            self._contact_row(expr, stage)
        super().check_expr(expr, stage)

    def _contact_row(self, expr, stage):
        row = 0
        for c in self.stages[stage].contacts:
            if c.name == expr.contact:
                if not 0 <= expr.index < c.n_directions:
                    raise ProblemError(f"contact {c.name} has no direction {expr.index}")
                return row + expr.index
            row += c.n_directions
        raise ProblemError(f"stage {self.stages[stage].name} has no rigid contact named {expr.contact!r}")

    def eval_expr(self, expr, stage, x, u, p):
        var = self.variable_of(expr)
        if var is not None:
            return float(x[var[1]] if var[0] == "x" else u[var[1]])
        x = np.ascontiguousarray(x, dtype=float)
        sa = self.system_arrays(p)
        q = x[:self.nq]
        qd = x[self.nq:self.nq + self.nv]
        if expr.kind == "contact_force":
            _, lam, _, _, _ = self.rhs_full(stage, x, u, p)
            return float(lam[self._contact_row(expr, stage)])
        Xup = MK.link_transforms(sa.jtype, sa.axis, sa.Xtree, sa.qidx, q)
        R, pos = MK.world_poses(sa.parent, Xup)
        link = self.model.body_link[expr.body]
        pt = np.array(expr.point)
        if expr.kind == "point_position":
            return float((pos[link] + R[link] @ pt)[expr.axis])
        J = MK.point_jacobian_world(sa.parent, sa.jtype, sa.axis, sa.vidx, sa.nv, R, pos, link, pt)
        return float((J @ qd)[expr.axis])

    def outputs(self, stage, x, u, p):
        """Muscle torques, exo torques and contact force components at a point."""
        _, lam, comps, mt, xt = self.rhs_full(stage, x, u, p)
        return mt, xt, lam, comps


def state_derivative(problem, stage, x, u, p=None):
    """xdot of ``problem`` in ``stage`` at design parameters ``p`` (nominal if None)."""
    p = problem.parameter_vector()[0] if p is None else np.asarray(p, dtype=float)
    return problem.rhs(stage, np.asarray(x, dtype=float), np.asarray(u, dtype=float), p)


def integrate_segment(problem, stage, x0, u_start, u_end, h, n_steps, p=None):
    """RK4 over one segment with controls interpolated from ``u_start`` to ``u_end``."""
    if not h > 0 or n_steps < 1:
        raise ProblemError("segment needs h > 0 and at least one step")
    p = problem.parameter_vector()[0] if p is None else np.asarray(p, dtype=float)
    return problem.segment(stage, np.asarray(x0, dtype=float), np.asarray(u_start, dtype=float),
                           np.asarray(u_end, dtype=float), float(h), int(n_steps), p)
