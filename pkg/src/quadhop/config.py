"""INI study configuration: flat sections, SI units, strict validation.

Unknown keys are rejected and every physical value passes the model type
invariants before any simulation starts, so a bad config fails fast with a
file/key diagnostic instead of a mid-run error.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field

from .linkage import LegGeometry
from .model import MotorModel, RobotModel, SimParams


class ConfigError(Exception):
    """Invalid study configuration; message carries key context."""


_ROBOT_KEYS = {
    "l0", "l1", "l2", "l3", "l4", "k", "theta_rest",
    "m_body", "m_payload", "m_hip1", "m_hip2", "m_calf3", "m_calf4", "m_paw",
    "com_offset",
    "kp", "ki", "kd", "b", "tau_sat", "omega_max",
}
_SIM_KEYS = {"gravity", "dt", "mu", "event_tol", "max_time"}
_STUDY_KEYS = {
    "squat_angle", "jump_angle", "torque", "mode",
    "cycles", "ramp_time", "axis", "duration", "paw_mass", "period",
    "payloads", "obstacle_height", "obstacle_depth",
    "drop_height", "spin_rate",
    "l1_min", "l1_max", "l1_step", "l3_min", "l3_max", "l3_step",
    "k_min", "k_max", "k_step",
    "min_margin", "max_footprint", "height_tolerance",
    "theta1", "theta2", "paw_x", "paw_z", "resolution",
}
_OUTPUT_KEYS = {"directory", "formats"}

_SECTIONS = {
    "robot": _ROBOT_KEYS,
    "sim": _SIM_KEYS,
    "study": _STUDY_KEYS,
    "output": _OUTPUT_KEYS,
}


@dataclass
class StudyConfig:
    """Validated configuration: plant, simulation, study and output."""

    robot: RobotModel
    motor: MotorModel
    sim: SimParams
    study: dict = field(default_factory=dict)
    out_dir: str = "out"
    formats: tuple = ("csv", "svg")
    source_path: str | None = None
    sha256: str = ""


def _getfloat(cp, section, key, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key)
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a number") from exc


def default_config() -> StudyConfig:
    return StudyConfig(robot=RobotModel(), motor=MotorModel(), sim=SimParams())


def load_config(path: str | None) -> StudyConfig:
    """Parse and validate a config file; None gives the shipped defaults."""
    if path is None:
        return default_config()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cp.read_file(fh, source=path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key in cp.options(section):
            if key not in _SECTIONS[section]:
                raise ConfigError(f"{path}: unknown key '{key}' in [{section}]")

    try:
        geom = LegGeometry(
            l0=_getfloat(cp, "robot", "l0", 0.09),
            l1=_getfloat(cp, "robot", "l1", 0.175),
            l2=_getfloat(cp, "robot", "l2", 0.175),
            l3=_getfloat(cp, "robot", "l3", 0.30),
            l4=_getfloat(cp, "robot", "l4", 0.30),
            k=_getfloat(cp, "robot", "k", 800.0),
            theta_rest=_getfloat(cp, "robot", "theta_rest", 17.0),
        )
        robot = RobotModel(
            geom=geom,
            m_body=_getfloat(cp, "robot", "m_body", 6.55),
            m_payload=_getfloat(cp, "robot", "m_payload", 0.25),
            m_hip1=_getfloat(cp, "robot", "m_hip1", 0.55),
            m_hip2=_getfloat(cp, "robot", "m_hip2", 0.55),
            m_calf3=_getfloat(cp, "robot", "m_calf3", 0.40),
            m_calf4=_getfloat(cp, "robot", "m_calf4", 0.40),
            m_paw=_getfloat(cp, "robot", "m_paw", 0.10),
            com_offset=_getfloat(cp, "robot", "com_offset", 0.15),
        )
        motor = MotorModel(
            kp=_getfloat(cp, "robot", "kp", MotorModel.kp),
            ki=_getfloat(cp, "robot", "ki", MotorModel.ki),
            kd=_getfloat(cp, "robot", "kd", MotorModel.kd),
            tau_sat=_getfloat(cp, "robot", "tau_sat", MotorModel.tau_sat),
            b=_getfloat(cp, "robot", "b", MotorModel.b),
            omega_max=_getfloat(cp, "robot", "omega_max", MotorModel.omega_max),
        )
        sim = SimParams(
            g=_getfloat(cp, "sim", "gravity", 3.71),
            dt=_getfloat(cp, "sim", "dt", 1e-4),
            mu=_getfloat(cp, "sim", "mu", 0.7),
            event_tol=_getfloat(cp, "sim", "event_tol", 1e-6),
            max_time=_getfloat(cp, "sim", "max_time", 12.0),
        )
    except (ValueError, Exception) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc

    study = {}
    if cp.has_section("study"):
        for key in cp.options("study"):
            study[key] = cp.get("study", key)

    out_dir = cp.get("output", "directory", fallback="out")
    formats = tuple(
        s.strip()
        for s in cp.get("output", "formats", fallback="csv,svg").split(",")
        if s.strip()
    )
    for f in formats:
        if f not in ("csv", "svg"):
            raise ConfigError(f"{path}: unknown output format '{f}'")

    with open(path, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    return StudyConfig(
        robot=robot,
        motor=motor,
        sim=sim,
        study=study,
        out_dir=out_dir,
        formats=formats,
        source_path=path,
        sha256=digest,
    )
