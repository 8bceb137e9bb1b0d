"""Spatial (6-D) vector algebra.

Conventions follow Featherstone's Plücker coordinates: motion and force
vectors are ordered ``[angular; linear]`` and a transform ``X`` from frame A
to frame B is built from the rotation ``E`` (A coordinates to B
coordinates) and the position ``r`` of B's origin expressed in A.

The free functions are jit-compiled kernels used by the dynamics
algorithms; the dataclasses are the validated public value types.
"""
from dataclasses import dataclass, field

import numpy as np

from ._jit import njit

ORTHO_TOL = 1e-12


@njit
def skew(v):
    S = np.zeros((3, 3))
    S[0, 1] = -v[2]
    S[0, 2] = v[1]
    S[1, 0] = v[2]
    S[1, 2] = -v[0]
    S[2, 0] = -v[1]
    S[2, 1] = v[0]
    return S


@njit
def cross3(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit
def rotation_about(axis, angle):
    """Active rotation matrix for ``angle`` about unit ``axis`` (Rodrigues)."""
    K = skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * np.dot(K, K)


@njit
def quat_to_rot(w, x, y, z):
    """Rotation matrix of the quaternion ``(w, x, y, z)``; normalizes first."""
    n = np.sqrt(w * w + x * x + y * y + z * z)
    w /= n
    x /= n
    y /= n
    z /= n
    R = np.empty((3, 3))
    R[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[0, 1] = 2.0 * (x * y - w * z)
    R[0, 2] = 2.0 * (x * z + w * y)
    R[1, 0] = 2.0 * (x * y + w * z)
    R[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[1, 2] = 2.0 * (y * z - w * x)
    R[2, 0] = 2.0 * (x * z - w * y)
    R[2, 1] = 2.0 * (y * z + w * x)
    R[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


@njit
def plucker(E, r):
    X = np.zeros((6, 6))
    X[:3, :3] = E
    X[3:, 3:] = E
    X[3:, :3] = -np.dot(E, skew(r))
    return X


@njit
def crm(v):
    """Motion cross-product operator ``v x``."""
    X = np.zeros((6, 6))
    W = skew(v[:3])
    X[:3, :3] = W
    X[3:, 3:] = W
    X[3:, :3] = skew(v[3:])
    return X


@njit
def crf(v):
    """Force cross-product operator ``v x*`` (equals ``-crm(v).T``)."""
    X = np.zeros((6, 6))
    W = skew(v[:3])
    X[:3, :3] = W
    X[3:, 3:] = W
    X[:3, 3:] = skew(v[3:])
    return X


@njit
def inertia_matrix(mass, com, inertia_origin):
    """6x6 spatial inertia from mass, COM and 3x3 inertia about the origin."""
    I = np.zeros((6, 6))
    C = skew(com)
    I[:3, :3] = inertia_origin
    I[:3, 3:] = mass * C
    I[3:, :3] = -mass * C
    I[3:, 3:] = mass * np.eye(3)
    return I


@dataclass(frozen=True)
class SpatialVector:
    """Motion (twist) or force (wrench) 6-vector split into its halves."""

    angular: np.ndarray
    linear: np.ndarray
    kind: str = "motion"

    def __post_init__(self):
        ang = np.asarray(self.angular, dtype=float).reshape(3)
        lin = np.asarray(self.linear, dtype=float).reshape(3)
        if self.kind not in ("motion", "force"):
            raise ValueError(f"kind must be 'motion' or 'force', got {self.kind!r}")
        if not (np.all(np.isfinite(ang)) and np.all(np.isfinite(lin))):
            raise ValueError("spatial vector entries must be finite")
        object.__setattr__(self, "angular", ang)
        object.__setattr__(self, "linear", lin)

    def as_array(self):
        return np.concatenate([self.angular, self.linear])

    @classmethod
    def from_array(cls, v, kind="motion"):
        v = np.asarray(v, dtype=float)
        return cls(v[:3], v[3:], kind)


@dataclass(frozen=True)
class SpatialTransform:
    """Rigid transform: ``rotation`` maps child axes into parent axes and
    ``translation`` is the child origin in parent coordinates."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHO_TOL * 100:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > ORTHO_TOL * 100:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    def plucker(self):
        """Plücker matrix mapping parent-frame motion vectors to this frame."""
        return plucker(np.ascontiguousarray(self.rotation.T), self.translation)

    def apply(self, point):
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def compose(self, other):
        """``self`` followed by ``other`` (other expressed in self's frame)."""
        return SpatialTransform(
            self.rotation @ other.rotation,
            self.translation + self.rotation @ other.translation,
        )


@dataclass(frozen=True)
class SpatialInertia:
    mass: float
    center_of_mass: np.ndarray
    rotational_inertia: np.ndarray  # about the body frame origin

    def __post_init__(self):
        m = float(self.mass)
        c = np.asarray(self.center_of_mass, dtype=float).reshape(3)
        J = np.asarray(self.rotational_inertia, dtype=float).reshape(3, 3)
        if not m > 0:
            raise ValueError(f"mass must be positive, got {m}")
        if np.max(np.abs(J - J.T)) > 1e-12 * max(1.0, np.max(np.abs(J))):
            raise ValueError("rotational inertia must be symmetric")
        if np.min(np.linalg.eigvalsh(0.5 * (J + J.T))) < -1e-12 * max(1.0, np.max(np.abs(J))):
            raise ValueError("rotational inertia must be positive semidefinite")
        object.__setattr__(self, "mass", m)
        object.__setattr__(self, "center_of_mass", c)
        object.__setattr__(self, "rotational_inertia", 0.5 * (J + J.T))

    @classmethod
    def from_com(cls, mass, com, inertia_com=None):
        """Build from an inertia tensor about the COM (parallel-axis shift).

        ``inertia_com=None`` means a point mass.
        """
        c = np.asarray(com, dtype=float).reshape(3)
        Jc = np.zeros((3, 3)) if inertia_com is None else np.asarray(inertia_com, dtype=float)
        return cls(mass, c, Jc + mass * (c @ c * np.eye(3) - np.outer(c, c)))

    def inertia_about_com(self):
        c = self.center_of_mass
        return self.rotational_inertia - self.mass * (c @ c * np.eye(3) - np.outer(c, c))

    def matrix(self):
        return inertia_matrix(self.mass, self.center_of_mass, self.rotational_inertia)
