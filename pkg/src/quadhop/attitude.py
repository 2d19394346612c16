"""Free-floating reorientation through coordinated leg cycles.

With no external moments, cyclic leg motion produces net body rotation by
conservation of angular momentum: each closed loop in joint space advances
the body by a geometric phase that depends on the path, not the speed.
Joints are kinematically prescribed, so the study isolates the
momentum-exchange physics from controller tuning.

Shipped cycles follow the extended-fast / retracted-slow paddling pattern:
roll sweeps all hips laterally, pitch sweeps the paws fore and aft inside
the leg planes, and yaw paddles the front and rear hip pairs in opposite
directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from .backend import engine, python_engine
from .errors import InfeasibleError, JointLimitError
from .linkage import THETA_MAX_DEG, THETA_MIN_DEG
from .model import NACOL, RobotModel, pack_float_params

AXES = ("roll", "pitch", "yaw")
HIP_SWING_LIMIT = 120.0  # deg, abduction range of the hip motors

DEFAULT_PERIOD = 0.75  # s
DEFAULT_DT = 1e-4  # s

# Attitude CSV columns (degrees, deg/s, kg m^2/s).
ATTITUDE_CSV_COLUMNS = (
    "time_s",
    "roll_deg",
    "pitch_deg",
    "yaw_deg",
    "wx_degps",
    "wy_degps",
    "wz_degps",
    "Lx",
    "Ly",
    "Lz",
)


@dataclass(frozen=True)
class AttitudeCycle:
    """Periodic per-leg joint schedule, 12 channels over cycle phase.

    Channel order: (hip swing, motor 1, motor 2) for legs FL, FR, RL, RR,
    in degrees.  The schedule must close (first row equals last row).
    """

    axis: str
    knots: np.ndarray  # phase fractions, ascending from 0 to 1
    joints_deg: np.ndarray  # (K, 12)
    period: float = DEFAULT_PERIOD
    paw_point_mass: float = 0.0

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        if self.period <= 0.0:
            raise ValueError("period must be positive")
        k = np.asarray(self.knots, dtype=float)
        j = np.asarray(self.joints_deg, dtype=float)
        if k.ndim != 1 or j.shape != (k.size, 12):
            raise ValueError("schedule must give 12 joint targets per knot")
        if abs(k[0]) > 1e-12 or abs(k[-1] - 1.0) > 1e-12 or np.any(np.diff(k) <= 0):
            raise ValueError("phase knots must ascend from 0 to 1")
        if not np.allclose(j[0], j[-1], atol=1e-9):
            raise ValueError("schedule must be periodic (first row == last row)")
        for leg in range(4):
            psi = j[:, 3 * leg]
            th = j[:, 3 * leg + 1 : 3 * leg + 3]
            if np.any(np.abs(psi) > HIP_SWING_LIMIT + 1e-9):
                raise JointLimitError("hip swing outside its range")
            if np.any(th < THETA_MIN_DEG - 1e-9) or np.any(th > THETA_MAX_DEG + 1e-9):
                raise JointLimitError("motor target outside its range")

    def reversed(self) -> "AttitudeCycle":
        """Same path traversed backwards (inverts the net rotation)."""
        return replace(
            self,
            knots=1.0 - np.asarray(self.knots)[::-1],
            joints_deg=np.asarray(self.joints_deg)[::-1].copy(),
        )

    def with_paw_mass(self, mass: float) -> "AttitudeCycle":
        return replace(self, paw_point_mass=mass)


@dataclass
class AttitudeResult:
    """Net rotation and rates of one free-float run."""

    net_angles: tuple[float, float, float]  # deg (roll, pitch, yaw)
    average_rates: tuple[float, float, float]  # deg/s
    cycles: float
    duration: float
    samples: np.ndarray  # NACOL columns

    @property
    def principal_rate(self) -> dict[str, float]:
        return dict(zip(AXES, self.average_rates))


def _cycle_arrays(cycle: AttitudeCycle):
    knots = np.ascontiguousarray(cycle.knots, dtype=np.float64)
    vals = np.ascontiguousarray(np.radians(cycle.joints_deg), dtype=np.float64)
    return knots, vals


def simulate_free_float(
    model: RobotModel,
    cycle: AttitudeCycle,
    duration: float = 3.0,
    initial_momentum: np.ndarray | None = None,
    dt: float = DEFAULT_DT,
    gate_axis: int = -1,
    gate_sign: float = 1.0,
    sample_stride: int = 10,
) -> AttitudeResult:
    """Integrate the free-floating robot while the legs follow the cycle.

    The body angular velocity is solved from conservation of the total
    angular momentum (``initial_momentum`` in the world frame, default
    zero); the orientation is integrated over ``duration``.
    """
    par3 = pack_float_params(model, cycle.paw_point_mass, dt)
    knots, vals = _cycle_arrays(cycle)
    L0 = np.zeros(3) if initial_momentum is None else np.asarray(initial_momentum, float)
    status, quat, phase, samples = engine().run_free_float(
        par3, knots, vals, cycle.period, duration, L0,
        gate_axis, gate_sign, sample_stride,
    )
    if status != 0:
        raise JointLimitError("schedule left the joint workspace")
    epy = python_engine()
    roll, pitch, yaw = epy.quat_to_euler(quat)
    net = (math.degrees(roll), math.degrees(pitch), math.degrees(yaw))
    return AttitudeResult(
        net_angles=net,
        average_rates=tuple(a / duration for a in net),
        cycles=phase,
        duration=duration,
        samples=samples,
    )


def recompute_momentum(model: RobotModel, cycle: AttitudeCycle, samples: np.ndarray):
    """World-frame angular momentum recomputed from sampled states.

    Independent bookkeeping for the conservation check: rebuilds the system
    inertia and joint-motion momentum at each sample and applies the
    sampled body rates.
    """
    epy = python_engine()
    par3 = pack_float_params(model, cycle.paw_point_mass, DEFAULT_DT)
    knots, vals = _cycle_arrays(cycle)
    out = np.zeros((len(samples), 3))
    for i, row in enumerate(samples):
        s = row[11]
        joints, slope = epy._sched_eval(knots, vals, s)
        rates = slope / cycle.period
        ok, inertia, h_rel = epy.float_terms(par3, joints, rates)
        if not ok:
            out[i] = np.nan
            continue
        roll, pitch, yaw = np.radians(row[1:4])
        cr, sr = math.cos(roll), math.sin(roll)
        cp, sp = math.cos(pitch), math.sin(pitch)
        cy, sy = math.cos(yaw), math.sin(yaw)
        Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
        Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
        Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
        R = Rz @ Ry @ Rx
        w_body = R.T @ np.radians(row[4:7])
        out[i] = R @ (inertia @ w_body + h_rel)
    return out


_CYCLE_CACHE: dict[str, AttitudeCycle] = {}


def load_cycle_file(path_or_text, axis: str) -> AttitudeCycle:
    """Parse a cycle file: '# key=value' headers then rows of phase + 12 targets."""
    if hasattr(path_or_text, "read"):
        text = path_or_text.read()
    else:
        with open(path_or_text, "r", encoding="utf-8") as fh:
            text = fh.read()
    period = DEFAULT_PERIOD
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if tok.startswith("period="):
                    period = float(tok.split("=", 1)[1])
            continue
        vals = [float(x) for x in line.split()]
        if len(vals) != 13:
            raise ValueError("cycle rows need a phase plus 12 joint targets")
        rows.append(vals)
    arr = np.array(rows)
    return AttitudeCycle(
        axis=axis, knots=arr[:, 0], joints_deg=arr[:, 1:], period=period
    )


def default_cycle(axis: str, model: RobotModel | None = None) -> AttitudeCycle:
    """The shipped choreography for one body axis."""
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    if axis not in _CYCLE_CACHE:
        ref = resources.files("quadhop").joinpath(f"cycles/{axis}.cycle")
        with ref.open("r", encoding="utf-8") as fh:
            _CYCLE_CACHE[axis] = load_cycle_file(fh, axis)
    return _CYCLE_CACHE[axis]


def write_cycle_file(path, cycle: AttitudeCycle):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# quadhop attitude cycle axis={cycle.axis} period={cycle.period}\n")
        fh.write("# phase, then per leg (FL FR RL RR): hip_deg theta1_deg theta2_deg\n")
        for knot, row in zip(cycle.knots, cycle.joints_deg):
            fh.write(
                f"{knot:.6f} " + " ".join(f"{v:.4f}" for v in row) + "\n"
            )


_AXIS_INDEX = {"roll": 0, "pitch": 1, "yaw": 2}

SPIN_TOLERANCE_DEG = 2.0


@dataclass
class SpinCancelResult:
    corrected: bool
    t_corrected: float
    residual_rate: float  # deg/s, the momentum cannot change in free flight
    samples: np.ndarray


def cancel_spin(
    model: RobotModel,
    axis: str,
    rate_deg_s: float,
    max_duration: float = 3.0,
    cycle: AttitudeCycle | None = None,
) -> SpinCancelResult:
    """Null the orientation drift of a single-axis spin with leg cycles.

    The default cycle for the axis is phase-locked against the spin: the
    schedule advances only while the accumulated body twist about the spin
    axis still carries the sign of the drift, so the counter-rotation never
    overshoots.  Returns the first time after which the twist stays inside
    the +/- 2 degree band through ``max_duration``.  The angular momentum
    itself cannot be changed in free flight; ``residual_rate`` reports it.

    Raises InfeasibleError when the cycle cannot keep up with the spin.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    ax = _AXIS_INDEX[axis]
    if rate_deg_s == 0.0:
        return SpinCancelResult(True, 0.0, 0.0, np.zeros((0, NACOL)))
    cyc = cycle or default_cycle(axis)
    # counter the drift: the cycle's own net rotation must oppose the spin
    probe = simulate_free_float(model, cyc, duration=cyc.period, sample_stride=50)
    if probe.net_angles[ax] * rate_deg_s > 0.0:
        cyc = cyc.reversed()

    epy = python_engine()
    par3 = pack_float_params(model, cyc.paw_point_mass, DEFAULT_DT)
    knots, vals = _cycle_arrays(cyc)
    joints0, slope0 = epy._sched_eval(knots, vals, 0.0)
    ok, inertia, _ = epy.float_terms(par3, joints0, np.zeros(12))
    if not ok:
        raise JointLimitError("cycle start pose outside the workspace")
    w0 = np.zeros(3)
    w0[ax] = math.radians(rate_deg_s)
    L0 = inertia @ w0

    status, quat, phase, samples = engine().run_free_float(
        par3, knots, vals, cyc.period, max_duration, L0,
        ax, 1.0 if rate_deg_s > 0 else -1.0, 10,
    )
    if status != 0:
        raise JointLimitError("schedule left the joint workspace")
    twist = samples[:, 10]
    inside = np.abs(twist) <= SPIN_TOLERANCE_DEG
    if not inside[-1]:
        raise InfeasibleError(
            f"{rate_deg_s} deg/s about {axis} not corrected within {max_duration} s"
        )
    # first sample after which the twist stays inside the band
    idx = len(inside) - 1
    while idx > 0 and inside[idx - 1]:
        idx -= 1
    t_corr = float(samples[idx, 0])
    if idx == 0:
        t_corr = 0.0
    return SpinCancelResult(
        corrected=True,
        t_corrected=t_corr,
        residual_rate=rate_deg_s,
        samples=samples,
    )
