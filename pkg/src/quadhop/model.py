"""Robot, motor and simulation parameter sets, plus engine packing.

The default numbers describe the shipped quadruped: 6.55 kg body, 0.25 kg
payload, four 2.0 kg five-bar legs (aluminium hips, carbon-tube calves,
spring mass lumped at the paw), 24.8 Nm peak motors, simulated by default
under 3.71 m/s^2 gravity.

Link masses scale linearly with link length so that design sweeps account
for the weight of elongated links; the per-metre densities are anchored at
the default design's mass split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .linkage import THETA_MAX_DEG, THETA_MIN_DEG, LegGeometry

# Default mass split of one 2.0 kg leg.
DEFAULT_HIP_MASS = 0.55  # per hip link, aluminium
DEFAULT_CALF_MASS = 0.40  # per calf link, carbon tube
DEFAULT_PAW_MASS = 0.10  # paw + spring hardware

# Marginal per-metre densities for resizing links away from the defaults.
# Lengthening a hip adds aluminium section; lengthening a calf adds carbon
# tube.  Joint and spring hardware dominate the base masses and do not
# scale, so only the marginal material is charged.
HIP_DENSITY = 1.0  # kg/m, aluminium section
CALF_DENSITY = 0.3  # kg/m, carbon tube
_MIN_LINK_MASS = 0.05

DEFAULT_BODY_MASS = 6.55
DEFAULT_PAYLOAD_MASS = 0.25
DEFAULT_COM_OFFSET = 0.15  # bottom of body to COM, m

# Body modelled as a uniform cuboid (length x width x height).
BODY_LENGTH = 0.50
BODY_WIDTH = 0.30
BODY_HEIGHT = 0.20

# Hip placement in the body frame (m).  Rear hips sit wider so the rear
# legs keep a full workspace next to the front pair.
HIP_LONGITUDINAL = 0.25  # |x| of each hip centre
HIP_LATERAL_FRONT = 0.15
HIP_LATERAL_REAR = 0.20

MAX_PAYLOAD = 2.5  # kg
PEAK_MOTOR_TORQUE = 24.8  # Nm
SWEEP_TORQUE = 20.32  # Nm, peak torque minus safety margin used in sweeps


@dataclass(frozen=True)
class MotorModel:
    """Torque-saturated PID position actuator with a speed limit.

    The default gains are the frozen output of the calibration procedure
    (see cli.calibrate): they pin the reference design's vertical jump at
    the sweep torque budget.
    """

    kp: float = 80.0  # Nm/rad
    ki: float = 0.0  # Nm/(rad s)
    kd: float = 1.0  # Nm s/rad
    tau_sat: float = PEAK_MOTOR_TORQUE  # Nm
    b: float = 0.05  # Nm s/rad viscous
    omega_max: float = 43.0  # rad/s

    def __post_init__(self):
        if self.tau_sat <= 0.0:
            raise ValueError("tau_sat must be positive")
        if self.omega_max <= 0.0:
            raise ValueError("omega_max must be positive")
        if min(self.kp, self.ki, self.kd, self.b) < 0.0:
            raise ValueError("gains must be non-negative")


@dataclass(frozen=True)
class SimParams:
    """Integrator and environment settings."""

    g: float = 3.71  # m/s^2
    dt: float = 1e-4  # s, fixed RK4 step
    mu: float = 0.7  # Coulomb friction coefficient
    event_tol: float = 1e-6  # s, event bisection tolerance
    max_time: float = 12.0  # s, per-study guard

    def __post_init__(self):
        if self.g <= 0.0 or self.dt <= 0.0:
            raise ValueError("g and dt must be positive")
        if self.mu < 0.0:
            raise ValueError("mu must be >= 0")
        if self.event_tol <= 0.0 or self.max_time <= 0.0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class RobotModel:
    """Masses, inertias and geometry of the simulated quadruped."""

    geom: LegGeometry = field(default_factory=LegGeometry)
    m_body: float = DEFAULT_BODY_MASS
    m_payload: float = DEFAULT_PAYLOAD_MASS
    m_hip1: float = DEFAULT_HIP_MASS
    m_hip2: float = DEFAULT_HIP_MASS
    m_calf3: float = DEFAULT_CALF_MASS
    m_calf4: float = DEFAULT_CALF_MASS
    m_paw: float = DEFAULT_PAW_MASS
    com_offset: float = DEFAULT_COM_OFFSET
    body_inertia_pitch: float = DEFAULT_BODY_MASS * (BODY_LENGTH**2 + BODY_HEIGHT**2) / 12.0
    n_legs: int = 4

    def __post_init__(self):
        masses = (
            self.m_body,
            self.m_hip1,
            self.m_hip2,
            self.m_calf3,
            self.m_calf4,
            self.m_paw,
        )
        if min(masses) <= 0.0:
            raise ValueError("all masses must be positive")
        if self.m_payload < 0.0:
            raise ValueError("payload mass must be >= 0")
        if self.n_legs != 4:
            raise ValueError("model is a quadruped")

    @property
    def leg_mass(self) -> float:
        return self.m_hip1 + self.m_hip2 + self.m_calf3 + self.m_calf4 + self.m_paw

    @property
    def total_mass(self) -> float:
        return self.m_body + self.m_payload + self.n_legs * self.leg_mass

    def with_payload(self, m_payload: float) -> "RobotModel":
        return replace(self, m_payload=m_payload)

    @classmethod
    def for_geometry(
        cls, geom: LegGeometry, m_payload: float = DEFAULT_PAYLOAD_MASS
    ) -> "RobotModel":
        """Model with link masses rescaled to the candidate link lengths."""
        return cls(
            geom=geom,
            m_payload=m_payload,
            m_hip1=max(_MIN_LINK_MASS, DEFAULT_HIP_MASS + HIP_DENSITY * (geom.l1 - 0.175)),
            m_hip2=max(_MIN_LINK_MASS, DEFAULT_HIP_MASS + HIP_DENSITY * (geom.l2 - 0.175)),
            m_calf3=max(_MIN_LINK_MASS, DEFAULT_CALF_MASS + CALF_DENSITY * (geom.l3 - 0.30)),
            m_calf4=max(_MIN_LINK_MASS, DEFAULT_CALF_MASS + CALF_DENSITY * (geom.l4 - 0.30)),
        )


# ---------------------------------------------------------------------------
# Packed parameter layout consumed by both simulation engines.  The compiled
# engine mirrors these indices; PACK_LAYOUT_VERSION guards the contract.
# ---------------------------------------------------------------------------

PACK_LAYOUT_VERSION = 3

P_G = 0
P_DT = 1
P_MU = 2
P_EVENT_TOL = 3
P_L0 = 4
P_L1 = 5
P_L2 = 6
P_L3 = 7
P_L4 = 8
P_KSPRING = 9  # per single leg
P_D0 = 10  # spring natural length
P_M_HIP1 = 11  # per single leg
P_M_HIP2 = 12
P_M_CALF3 = 13
P_M_CALF4 = 14
P_M_PAW = 15
P_M_BODY = 16  # body + payload
P_I_BODY = 17
P_COM_OFF = 18
P_HIP_DX = 19  # longitudinal hip offset from body centre
P_KP = 20
P_KI = 21
P_KD = 22
P_BVISC = 23
P_TAU_SAT = 24
P_OMEGA_MAX = 25
P_LEGS_PER_UNIT = 26  # 2 in the planar engine, 4 in the vertical engine
P_SLIP_N_FLOOR = 27  # normal-force floor for friction-cone checks
P_THETA_MIN = 28  # rad
P_THETA_MAX = 29  # rad
P_KSTOP = 30  # joint-stop stiffness, Nm/rad per motor
P_CSTOP = 31  # joint-stop damping, Nm s/rad per motor
NPAR = 32

# Soft joint stops at the motor range ends: they catch the torque-limited
# overshoot after a jump release before the linkage can fold singular.
JOINT_STOP_STIFFNESS = 300.0
JOINT_STOP_DAMPING = 1.0

# Free-float (3-D attitude) parameter layout.  Link lengths reuse the
# planar indices 4..8 so the leg kinematics helper reads either vector.
F_M_BODY = 0
F_IBX = 1  # 1..3: body inertia diagonal (x, y, z)
F_L0 = P_L0
F_L1 = P_L1
F_L2 = P_L2
F_L3 = P_L3
F_L4 = P_L4
F_M_HIP1 = 9
F_M_HIP2 = 10
F_M_CALF3 = 11
F_M_CALF4 = 12
F_M_PAW = 13
F_HIPZ = 14  # hip line height in the body frame
F_HIP_XY = 15  # 8 slots: (x, y) per leg FL, FR, RL, RR
F_DT = 23
NPAR3 = 24

# Attitude sample row: t, roll, pitch, yaw (deg), world angular velocity
# (deg/s), world angular momentum, gate twist (deg), cycle phase.
NACOL = 12


def pack_float_params(
    model: RobotModel, paw_extra_mass: float = 0.0, dt: float = 1e-4
) -> np.ndarray:
    """Flatten the model for the free-floating attitude engine."""
    g = model.geom
    par = np.zeros(NPAR3, dtype=np.float64)
    par[F_M_BODY] = model.m_body + model.m_payload
    par[F_IBX] = model.m_body * (BODY_WIDTH**2 + BODY_HEIGHT**2) / 12.0
    par[F_IBX + 1] = model.m_body * (BODY_LENGTH**2 + BODY_HEIGHT**2) / 12.0
    par[F_IBX + 2] = model.m_body * (BODY_LENGTH**2 + BODY_WIDTH**2) / 12.0
    par[F_L0] = g.l0
    par[F_L1] = g.l1
    par[F_L2] = g.l2
    par[F_L3] = g.l3
    par[F_L4] = g.l4
    par[F_M_HIP1] = model.m_hip1
    par[F_M_HIP2] = model.m_hip2
    par[F_M_CALF3] = model.m_calf3
    par[F_M_CALF4] = model.m_calf4
    par[F_M_PAW] = model.m_paw + paw_extra_mass
    par[F_HIPZ] = -model.com_offset
    hips = (
        (HIP_LONGITUDINAL, HIP_LATERAL_FRONT),
        (HIP_LONGITUDINAL, -HIP_LATERAL_FRONT),
        (-HIP_LONGITUDINAL, HIP_LATERAL_REAR),
        (-HIP_LONGITUDINAL, -HIP_LATERAL_REAR),
    )
    for leg, (hx, hy) in enumerate(hips):
        par[F_HIP_XY + 2 * leg] = hx
        par[F_HIP_XY + 2 * leg + 1] = hy
    par[F_DT] = dt
    return par


def pack_params(
    model: RobotModel,
    motor: MotorModel,
    params: SimParams,
    legs_per_unit: float,
    tau_sat: float | None = None,
    paw_extra_mass: float = 0.0,
) -> np.ndarray:
    """Flatten model, motor and sim settings for the engines."""
    g = model.geom
    par = np.empty(NPAR, dtype=np.float64)
    par[P_G] = params.g
    par[P_DT] = params.dt
    par[P_MU] = params.mu
    par[P_EVENT_TOL] = params.event_tol
    par[P_L0] = g.l0
    par[P_L1] = g.l1
    par[P_L2] = g.l2
    par[P_L3] = g.l3
    par[P_L4] = g.l4
    par[P_KSPRING] = g.k
    par[P_D0] = g.rest_length
    par[P_M_HIP1] = model.m_hip1
    par[P_M_HIP2] = model.m_hip2
    par[P_M_CALF3] = model.m_calf3
    par[P_M_CALF4] = model.m_calf4
    par[P_M_PAW] = model.m_paw + paw_extra_mass
    par[P_M_BODY] = model.m_body + model.m_payload
    par[P_I_BODY] = model.body_inertia_pitch
    par[P_COM_OFF] = model.com_offset
    par[P_HIP_DX] = HIP_LONGITUDINAL
    par[P_KP] = motor.kp
    par[P_KI] = motor.ki
    par[P_KD] = motor.kd
    par[P_BVISC] = motor.b
    par[P_TAU_SAT] = motor.tau_sat if tau_sat is None else float(tau_sat)
    par[P_OMEGA_MAX] = motor.omega_max
    par[P_LEGS_PER_UNIT] = legs_per_unit
    par[P_SLIP_N_FLOOR] = 0.05 * model.total_mass * params.g
    par[P_THETA_MIN] = math.radians(THETA_MIN_DEG)
    par[P_THETA_MAX] = math.radians(THETA_MAX_DEG)
    par[P_KSTOP] = JOINT_STOP_STIFFNESS
    par[P_CSTOP] = JOINT_STOP_DAMPING
    return par
