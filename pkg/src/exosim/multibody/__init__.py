"""Spatial-algebra rigid-body dynamics for kinematic trees."""
from .model import (
    BodySpec,
    DimensionError,
    Joint,
    ModelError,
    MultibodyModel,
    aba,
    body_point_position,
    build_model,
    configuration_rate,
    crba,
    forward_kinematics,
    integrate_configuration,
    point_bias_acceleration,
    point_jacobian,
    rnea,
    total_energy,
    with_inertias,
)

__all__ = [
    "BodySpec", "DimensionError", "Joint", "ModelError", "MultibodyModel", "aba",
    "body_point_position", "build_model", "configuration_rate", "crba",
    "forward_kinematics", "integrate_configuration", "point_bias_acceleration",
    "point_jacobian", "rnea", "total_energy", "with_inertias",
]
