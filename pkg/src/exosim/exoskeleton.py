"""Parametrized exoskeleton elements and their design-variable packing."""
from dataclasses import dataclass, replace

import numpy as np

from .multibody.model import with_inertias
from .spatial import inertia_matrix

PARAMETERS = ("spring_k", "damper_d", "rest_angle", "actuator_limit", "added_mass", "added_inertia")
NONNEGATIVE = ("spring_k", "damper_d", "actuator_limit", "added_mass", "added_inertia")


class ExoError(ValueError):
    pass


@dataclass(frozen=True)
class ExoElement:
    """Parallel spring-damper plus bounded actuator on one joint DoF.

    ``added_mass`` sits at the COM of the body moved by the DoF and
    ``added_inertia`` is an isotropic inertia about that COM.
    """

    name: str
    dof_index: int
    spring_k: float = 0.0
    damper_d: float = 0.0
    rest_angle: float = 0.0
    actuator_limit: float = 0.0
    added_mass: float = 0.0
    added_inertia: float = 0.0

    def __post_init__(self):
        for p in NONNEGATIVE:
            if getattr(self, p) < 0:
                raise ExoError(f"{self.name}: {p} must be nonnegative")

    def values(self):
        return np.array([getattr(self, p) for p in PARAMETERS], dtype=float)


@dataclass(frozen=True)
class DesignParameter:
    element: int
    name: str
    lower: float
    upper: float
    free: bool = True


@dataclass(frozen=True)
class ExoDesignSpace:
    parameters: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "parameters", tuple(self.parameters))
        seen = set()
        for d in self.parameters:
            if d.name not in PARAMETERS:
                raise ExoError(f"unknown exoskeleton parameter {d.name!r}")
            if (d.element, d.name) in seen:
                raise ExoError(f"design parameter ({d.element}, {d.name}) declared twice")
            seen.add((d.element, d.name))
            if d.lower > d.upper:
                raise ExoError(f"design parameter {d.name}: lower bound exceeds upper bound")
            if d.free and not (np.isfinite(d.lower) and np.isfinite(d.upper)):
                raise ExoError(f"free design parameter {d.name} needs finite bounds")

    @property
    def free(self):
        return tuple(d for d in self.parameters if d.free)


def exo_torque(element, q, qd, u_act):
    """Generalized torque of one element at angle ``q`` and rate ``qd``."""
    if abs(u_act) > 1.0:
        raise ExoError(f"actuator command must lie in [-1, 1], got {u_act}")
    return (-element.spring_k * (q - element.rest_angle) - element.damper_d * qd
            + u_act * element.actuator_limit)


def _body_of_dof(model, dof):
    for b, vi in enumerate(model.joint_v_index):
        if vi <= dof < vi + model.bodies[b].joint.dof:
            return b
    raise ExoError(f"dof index {dof} out of range (model has {model.nv})")


def attach_exo(model, elements):
    """New model whose body inertias include the elements' added mass/inertia."""
    inertia = np.array(model.inertia)
    for el in elements:
        if not 0 <= el.dof_index < model.nv:
            raise ExoError(f"{el.name}: dof index {el.dof_index} out of range")
        if model.q_of_v[el.dof_index] < 0:
            raise ExoError(f"{el.name}: exoskeleton elements must act on rotational joint DoFs")
        body = _body_of_dof(model, el.dof_index)
        if el.added_mass == 0 and el.added_inertia == 0:
            continue
        bi = model.bodies[body].inertia
        # added mass at the body COM: parallel axis about the body origin
        c = bi.center_of_mass
        J = el.added_inertia * np.eye(3) + el.added_mass * (c @ c * np.eye(3) - np.outer(c, c))
        if el.added_mass > 0:
            inertia[model.body_link[body]] += inertia_matrix(el.added_mass, c, J)
        else:
            inertia[model.body_link[body], :3, :3] += J
    return with_inertias(model, inertia)


def pack_design_parameters(space, elements):
    """Free parameter values with their bounds and names, in declaration order."""
    p, lo, hi, names = [], [], [], []
    for d in space.free:
        if not 0 <= d.element < len(elements):
            raise ExoError(f"design parameter refers to unknown element {d.element}")
        val = getattr(elements[d.element], d.name)
        p.append(val)
        lo.append(d.lower)
        hi.append(d.upper)
        names.append(f"{elements[d.element].name}.{d.name}")
    return np.array(p, dtype=float), np.array(lo, dtype=float), np.array(hi, dtype=float), names


def unpack_design_parameters(space, elements, p):
    """Elements with the free parameters replaced by the entries of ``p``."""
    free = space.free
    p = np.asarray(p, dtype=float)
    if p.shape != (len(free),):
        raise ExoError(f"expected {len(free)} design parameters, got {p.shape}")
    out = list(elements)
    for d, val in zip(free, p):
        out[d.element] = replace(out[d.element], **{d.name: float(val)})
    return out
