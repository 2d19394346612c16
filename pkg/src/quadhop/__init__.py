"""Simulation and design-optimization toolkit for spring-loaded
five-bar-leg jumping quadrupeds under reduced gravity."""

__version__ = "0.1.0"

from .linkage import (
    LegConfig,
    LegGeometry,
    forward_kinematics,
    inverse_kinematics,
    motor_jacobian,
    spring_state,
    workspace_sample,
)
from .model import MotorModel, RobotModel, SimParams

__all__ = [
    "LegConfig",
    "LegGeometry",
    "MotorModel",
    "RobotModel",
    "SimParams",
    "forward_kinematics",
    "inverse_kinematics",
    "motor_jacobian",
    "spring_state",
    "workspace_sample",
    "__version__",
]
