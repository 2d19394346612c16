"""Jump, landing, pronking, payload and rest-posture studies.

The jump protocol follows the fixed squat-and-release sequence: motor
setpoints ramp linearly from the rest angle to the squat angle over the
loading time, then return to the rest angle in a single timestep.  Nonzero
jump angles are commanded by biasing the two motors of every leg
asymmetrically so the paw-to-base-midpoint vector tilts by the requested
angle from vertical at release.

A hard release can momentarily unload the paws before the main push, so
stance and flight phases alternate (with sticky-impact projection at each
re-contact) until a flight reaches its COM apogee untouched; that flight is
the jump.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics as dyn
from .backend import engine
from .dynamics import (
    EV_DIVERGED,
    EV_LIFTOFF,
    EV_SETTLED,
    EV_TIME,
    EV_TOPPLED,
    EV_TOUCHDOWN_FRONT,
    EV_TOUCHDOWN_REAR,
    PHASE_FLIGHT,
    PHASE_LANDED,
    PHASE_STANCE,
    SNAP_IMPACT,
    SNAP_Q,
    SNAP_QD,
    DynState,
    PlanarWorkspace,
    com_state,
    leg_kin,
    pin_impact,
    planar_parts,
    standing_state,
)
from .errors import (
    InfeasibleError,
    IntegrationDivergedError,
    SlipError,
    ToppleError,
    UnreachableError,
)
from .linkage import (
    THETA_MAX_DEG,
    THETA_MIN_DEG,
    LegGeometry,
    forward_kinematics,
    squat_path_feasible,
)
from .model import (
    MAX_PAYLOAD,
    P_COM_OFF,
    P_DT,
    P_G,
    MotorModel,
    RobotModel,
    SimParams,
    pack_params,
)

MODE_VERTICAL = "vertical"
MODE_PLANAR = "planar"

THETA_START_DEG = 17.0
RAMP_DURATION = 1.5  # s

# Landing squat: target depth grows with impact speed, ramp time sized so
# the squat roughly absorbs the fall within the available leg travel.
LANDING_DEPTH_GAIN = 18.0  # deg per m/s of impact speed
LANDING_MAX_SQUAT = 120.0
SETTLE_SPEED = 0.05  # m/s
SETTLE_HOLD = 0.2  # s

_BOUNCE_EPS = 0.1  # m/s; slower liftoffs are release transients


@dataclass(frozen=True)
class JumpCommand:
    """One squat-and-release jump request."""

    squat_angle: float = 120.0  # deg
    jump_angle: float = 0.0  # deg from vertical, positive forward
    tau_out: float = 24.8  # Nm torque saturation for this run
    mode: str = MODE_PLANAR

    def __post_init__(self):
        if not THETA_START_DEG < self.squat_angle < THETA_MAX_DEG:
            raise ValueError("squat angle must lie in (17, 175) deg")
        if not 0.0 <= self.jump_angle <= 60.0:
            raise ValueError("jump angle must lie in [0, 60] deg")
        if not 0.0 < self.tau_out <= 24.8:
            raise ValueError("tau_out must lie in (0, 24.8] Nm")
        if self.mode not in (MODE_VERTICAL, MODE_PLANAR):
            raise ValueError("mode must be 'vertical' or 'planar'")


@dataclass
class JumpResult:
    """Measured outcome of one simulated jump."""

    h_max: float
    x_max: float
    t_flight: float
    slipped: bool
    liftoff_velocity: tuple[float, float]
    liftoff_time: float
    max_friction_ratio: float
    samples: np.ndarray
    toppled: bool = False


def solve_jump_bias(geom: LegGeometry, squat_deg: float, jump_angle_deg: float) -> float:
    """Setpoint bias (deg) so the paw-to-base-midpoint vector tilts as asked.

    The two motors of each leg are commanded to squat +/- bias; the tilt of
    the vector from the paw to the midpoint of the base link, measured from
    vertical at the release pose, equals the commanded jump angle.
    """
    if jump_angle_deg == 0.0:
        return 0.0

    def tilt(delta: float) -> float:
        cfg = forward_kinematics(
            geom, squat_deg + delta, squat_deg - delta, check_limits=False
        )
        mx = 0.5 * geom.l0
        return math.degrees(math.atan2(mx - cfg.paw[0], -cfg.paw[1]))

    lo, hi = 0.0, 1.0
    limit = min(THETA_MAX_DEG - 1.0 - squat_deg, squat_deg - THETA_MIN_DEG - 1.0)
    while tilt(hi) < jump_angle_deg:
        hi = hi * 1.8
        if hi > limit:
            raise UnreachableError("jump angle beyond the command envelope")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if tilt(mid) < jump_angle_deg:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _jump_schedule(squat1: float, squat2: float, dt: float):
    """Ramp to the squat pose, then return in a single timestep."""
    th0 = math.radians(THETA_START_DEG)
    s1 = math.radians(squat1)
    s2 = math.radians(squat2)
    knots = np.array([0.0, RAMP_DURATION, RAMP_DURATION + dt, 1e9])
    vals = np.array(
        [
            [th0, th0, th0, th0],
            [s1, s2, s1, s2],
            [th0, th0, th0, th0],
            [th0, th0, th0, th0],
        ]
    )
    return knots, vals


def _hold_schedule(theta_rad: float):
    knots = np.array([0.0, 1e9])
    vals = np.tile([theta_rad] * 4, (2, 1))
    return knots, vals


class _SegmentStats:
    __slots__ = ("slipped", "t_slip", "max_ratio", "peak_n", "peak_tau")

    def __init__(self):
        self.slipped = False
        self.t_slip = math.inf
        self.max_ratio = 0.0
        self.peak_n = 0.0
        self.peak_tau = 0.0

    def merge(self, stats):
        slipped, t_slip, max_ratio, peak_n, peak_tau, _ = stats
        if slipped and not self.slipped:
            self.slipped = True
            self.t_slip = t_slip
        self.max_ratio = max(self.max_ratio, max_ratio)
        self.peak_n = max(self.peak_n, peak_n)
        self.peak_tau = max(self.peak_tau, peak_tau)


def simulate_jump(
    model: RobotModel,
    cmd: JumpCommand,
    params: SimParams,
    motors: MotorModel | None = None,
) -> JumpResult:
    """Run the full squat-release-flight protocol and measure the jump."""
    motors = motors or MotorModel()
    if cmd.mode == MODE_VERTICAL:
        h = simulate_vertical_grid_jump(
            model, cmd.squat_angle, cmd.tau_out, params, motors
        )
        return JumpResult(
            h_max=h, x_max=0.0, t_flight=0.0, slipped=False,
            liftoff_velocity=(0.0, 0.0), liftoff_time=0.0,
            max_friction_ratio=0.0, samples=np.zeros((0, dyn.NSCOL)),
        )

    delta = solve_jump_bias(model.geom, cmd.squat_angle, cmd.jump_angle)
    par = pack_params(model, motors, params, 2.0, tau_sat=cmd.tau_out)
    knots, vals = _jump_schedule(
        cmd.squat_angle + delta, cmd.squat_angle - delta, params.dt
    )
    eng = engine()

    state = standing_state(model, params)
    snap = state.snapshot
    pins = state.pins
    mask = 3
    t = 0.0
    stats = _SegmentStats()
    all_samples = []
    liftoff = None  # (t, com, vcom)
    g = params.g
    t_max = RAMP_DURATION + params.max_time

    while t < t_max:
        if mask:
            ev, t, snap, samples, seg = eng.run_planar_segment(
                par, snap, t, mask, pins, knots, vals, t_max,
                True, False, False, False, 0.0, 0.0, 10,
            )
            stats.merge(seg)
            all_samples.append(samples)
            if ev == EV_DIVERGED:
                raise IntegrationDivergedError("stance diverged during the jump")
            if ev == EV_TIME:
                raise IntegrationDivergedError("no liftoff before the time guard")
            # liftoff: all contacts release together at N <= 0
            mask = 0
            com, vcom, _ = com_state(par, snap)
            liftoff = (t, com.copy(), vcom.copy())
            continue

        com, vcom, _ = com_state(par, snap)
        eligible = vcom[1] > _BOUNCE_EPS
        t_apo = t + vcom[1] / g if eligible else t_max
        ev, t, snap, samples, seg = eng.run_planar_segment(
            par, snap, t, 0, pins, knots, vals, min(t_apo, t_max),
            False, True, False, False, 0.0, 0.0, 10,
        )
        all_samples.append(samples)
        if ev == EV_DIVERGED:
            raise IntegrationDivergedError("flight diverged during the jump")
        if ev in (EV_TOUCHDOWN_FRONT, EV_TOUCHDOWN_REAR):
            u = 0 if ev == EV_TOUCHDOWN_FRONT else 1
            ws = PlanarWorkspace()
            planar_parts(par, snap[SNAP_Q : SNAP_Q + 7], ws)
            pins = pins.copy()
            pins[u] = ws.paw_w[u]
            mask |= 1 << u
            snap = pin_impact(par, snap, mask, pins)
            continue
        if ev == EV_TIME and eligible and t >= t_apo - 1e-9:
            break
        raise IntegrationDivergedError("jump did not reach a ballistic apogee")

    if liftoff is None or t >= t_max:
        raise IntegrationDivergedError("jump protocol did not complete")

    t_lo, com_lo, vcom_lo = liftoff
    h_max = com_lo[1] + max(vcom_lo[1], 0.0) ** 2 / (2.0 * g)

    # continue the final flight to touchdown for range and flight time
    ev, t_td, snap, samples, _seg = eng.run_planar_segment(
        par, snap, t, 0, pins, knots, vals, t_max,
        False, True, False, False, 0.0, 0.0, 10,
    )
    all_samples.append(samples)
    if ev not in (EV_TOUCHDOWN_FRONT, EV_TOUCHDOWN_REAR):
        raise IntegrationDivergedError("no touchdown after apogee")
    com_td, _, _ = com_state(par, snap)

    return JumpResult(
        h_max=h_max,
        x_max=com_td[0],
        t_flight=t_td - t_lo,
        slipped=stats.slipped,
        liftoff_velocity=(vcom_lo[0], vcom_lo[1]),
        liftoff_time=t_lo,
        max_friction_ratio=stats.max_ratio,
        samples=np.vstack(all_samples) if all_samples else np.zeros((0, dyn.NSCOL)),
    )


def simulate_vertical_grid_jump(
    model: RobotModel,
    squat_angle: float,
    tau_out: float,
    params: SimParams,
    motors: MotorModel | None = None,
    sample_stride: int = 0,
):
    """Apogee height of the one-dimensional squat-and-release protocol.

    The candidate geometry is first checked against the hardware envelope
    along the commanded squat path; infeasible candidates raise
    UnreachableError, diverged runs IntegrationDivergedError.
    """
    ok, reason = squat_path_feasible(model.geom, squat_angle)
    if not ok:
        raise UnreachableError(reason)
    motors = motors or MotorModel()
    par = pack_params(model, motors, params, 4.0, tau_sat=tau_out)
    res = engine().run_vertical_jump(
        par,
        math.radians(THETA_START_DEG),
        math.radians(squat_angle),
        RAMP_DURATION,
        RAMP_DURATION + params.max_time,
        sample_stride,
    )
    if res[0] != 0:
        raise IntegrationDivergedError("vertical jump protocol failed")
    if sample_stride > 0:
        return res[1], res[7]
    return res[1]


@dataclass
class LandingResult:
    settled: bool
    t_settle: float
    peak_normal: float
    peak_torque: float
    slipped: bool
    impact_loss: float
    final_pitch: float


def simulate_landing(
    model: RobotModel,
    params: SimParams,
    drop_height: float = 0.5,
    velocity: tuple[float, float] = (0.0, 0.0),
    motors: MotorModel | None = None,
) -> LandingResult:
    """Drop the robot and absorb the impact with a timed squat.

    The robot falls legs-down from ``drop_height`` (paw clearance above the
    ground) with the given initial velocity; at touchdown the motor targets
    ramp to a squat whose depth grows with the impact speed.  Raises
    ToppleError when the body pitch passes the stability limit and
    SlipError when the stance leaves the friction cone.
    """
    motors = motors or MotorModel()
    par = pack_params(model, motors, params, 2.0)
    eng = engine()
    th0 = math.radians(THETA_START_DEG)

    # flight state: standing pose raised by the drop height
    st = standing_state(model, params)
    snap = st.snapshot.copy()
    snap[SNAP_Q + 1] += drop_height
    snap[SNAP_QD + 0] = velocity[0]
    snap[SNAP_QD + 1] = velocity[1]
    pins = np.zeros((2, 2))
    mask = 0
    t = 0.0
    knots, vals = _hold_schedule(th0)
    stats = _SegmentStats()
    impact_loss = 0.0
    t_max = params.max_time
    landed = False
    t_settle = math.inf

    while t < t_max:
        if mask == 0:
            ev, t, snap, samples, seg = eng.run_planar_segment(
                par, snap, t, 0, pins, knots, vals, t_max,
                False, True, False, True, 0.0, 0.0, 10,
            )
        else:
            ev, t, snap, samples, seg = eng.run_planar_segment(
                par, snap, t, mask, pins, knots, vals, t_max,
                True, True, True, True, SETTLE_SPEED, SETTLE_HOLD, 10,
            )
            stats.merge(seg)
        if ev == EV_DIVERGED:
            raise IntegrationDivergedError("landing diverged")
        if ev == EV_TOPPLED:
            raise ToppleError("body pitch exceeded the landing limit")
        if ev in (EV_TOUCHDOWN_FRONT, EV_TOUCHDOWN_REAR):
            u = 0 if ev == EV_TOUCHDOWN_FRONT else 1
            ws = PlanarWorkspace()
            planar_parts(par, snap[SNAP_Q : SNAP_Q + 7], ws)
            pins = pins.copy()
            pins[u] = ws.paw_w[u]
            new_mask = mask | (1 << u)
            before = snap[SNAP_IMPACT]
            snap = pin_impact(par, snap, new_mask, pins)
            impact_loss += snap[SNAP_IMPACT] - before
            if mask == 0:
                # first contact: command the absorbing squat
                speed = math.hypot(snap[SNAP_QD], snap[SNAP_QD + 1])
                depth = min(
                    LANDING_MAX_SQUAT,
                    THETA_START_DEG + LANDING_DEPTH_GAIN * speed,
                )
                travel = _squat_travel(model.geom, depth)
                t_ramp = max(0.05, 2.0 * travel / max(speed, 0.1))
                th_land = math.radians(depth)
                knots = np.array([t, t + t_ramp, 1e9])
                vals = np.array(
                    [[th0] * 4, [th_land] * 4, [th_land] * 4]
                )
            mask = new_mask
            continue
        if ev == EV_LIFTOFF:
            mask = 0
            continue
        if ev == EV_SETTLED:
            landed = True
            t_settle = t
            break
        if ev == EV_TIME:
            break

    if not landed:
        raise ToppleError("landing did not settle within the time guard")
    return LandingResult(
        settled=True,
        t_settle=t_settle,
        peak_normal=stats.peak_n,
        peak_torque=stats.peak_tau,
        slipped=stats.slipped,
        impact_loss=impact_loss,
        final_pitch=snap[SNAP_Q + 2],
    )


def _squat_travel(geom: LegGeometry, squat_deg: float) -> float:
    a = forward_kinematics(geom, THETA_START_DEG, THETA_START_DEG).paw[1]
    b = forward_kinematics(geom, squat_deg, squat_deg, check_limits=False).paw[1]
    return abs(a - b)


@dataclass(frozen=True)
class PronkGait:
    """Open-loop bound cycle parameters."""

    squat_angle: float = 85.0
    jump_angle: float = 12.0
    tau_out: float = 7.0
    ramp_time: float = 0.55


@dataclass
class PronkResult:
    forward_velocity: float
    cleared_obstacle: float
    cycles: int
    slipped: bool
    samples: np.ndarray


def simulate_pronk(
    model: RobotModel,
    gait: PronkGait,
    n_cycles: int,
    params: SimParams,
    motors: MotorModel | None = None,
) -> PronkResult:
    """Chain landing-squat-release cycles and measure the gait.

    Forward velocity is the net COM displacement over the elapsed time from
    the first release; the cleared obstacle is the largest height that fits
    under every paw at the best moment of a bound, reported for the lowest
    full flight phase.
    """
    motors = motors or MotorModel()
    delta = solve_jump_bias(model.geom, gait.squat_angle, gait.jump_angle)
    par = pack_params(model, motors, params, 2.0, tau_sat=gait.tau_out)
    eng = engine()
    th0 = math.radians(THETA_START_DEG)
    sq1 = math.radians(gait.squat_angle + delta)
    sq2 = math.radians(gait.squat_angle - delta)

    state = standing_state(model, params)
    snap = state.snapshot
    pins = state.pins
    mask = 3
    t = 0.0
    stats = _SegmentStats()
    all_samples = []
    cycles_done = 0
    clearances = []
    flight_low = math.inf
    start_mark = None  # (t, com_x) at first liftoff
    end_mark = None
    t_max = (gait.ramp_time + 3.0) * (n_cycles + 1) + params.max_time

    def loading_schedule(t_now):
        knots = np.array([t_now, t_now + gait.ramp_time, t_now + gait.ramp_time + params.dt, 1e9])
        vals = np.array(
            [[th0] * 4, [sq1, sq2, sq1, sq2], [th0] * 4, [th0] * 4]
        )
        return knots, vals

    knots, vals = loading_schedule(0.0)
    while cycles_done < n_cycles and t < t_max:
        if mask == 3:
            ev, t, snap, samples, seg = eng.run_planar_segment(
                par, snap, t, mask, pins, knots, vals, t_max,
                True, False, False, True, 0.0, 0.0, 10,
            )
            stats.merge(seg)
            all_samples.append(samples)
            if ev == EV_DIVERGED:
                raise IntegrationDivergedError("pronk stance diverged")
            if ev == EV_TOPPLED:
                raise ToppleError("pronk toppled in stance")
            if ev != EV_LIFTOFF:
                raise IntegrationDivergedError("pronk cycle stalled in stance")
            mask = 0
            if start_mark is None:
                com, _, _ = com_state(par, snap)
                start_mark = (t, com[0])
            flight_low = math.inf
            continue

        ev, t, snap, samples, seg = eng.run_planar_segment(
            par, snap, t, mask, pins, knots, vals, t_max,
            mask != 0, True, False, True, 0.0, 0.0, 10,
        )
        all_samples.append(samples)
        if len(samples):
            lows = np.minimum(
                _paw_heights_series(par, samples),
                samples[:, dyn.S_ZB] - par[P_COM_OFF],
            )
            flight_low = min(flight_low, float(np.min(lows))) if mask == 0 else flight_low
            if mask == 0:
                clear_here = float(np.max(lows))
                clearances.append(clear_here)
        if ev == EV_DIVERGED:
            raise IntegrationDivergedError("pronk flight diverged")
        if ev == EV_TOPPLED:
            raise ToppleError("pronk toppled")
        if ev in (EV_TOUCHDOWN_FRONT, EV_TOUCHDOWN_REAR):
            u = 0 if ev == EV_TOUCHDOWN_FRONT else 1
            ws = PlanarWorkspace()
            planar_parts(par, snap[SNAP_Q : SNAP_Q + 7], ws)
            pins = pins.copy()
            pins[u] = ws.paw_w[u]
            was_flight = mask == 0
            mask |= 1 << u
            snap = pin_impact(par, snap, mask, pins)
            if was_flight and mask != 3:
                continue
            if mask == 3:
                cycles_done += 1
                com, _, _ = com_state(par, snap)
                end_mark = (t, com[0])
                if cycles_done >= n_cycles:
                    break
                knots, vals = loading_schedule(t)
            continue
        if ev == EV_LIFTOFF:
            mask = 0
            continue
        raise IntegrationDivergedError("pronk cycle stalled")

    if start_mark is None or end_mark is None or cycles_done == 0:
        raise IntegrationDivergedError("pronk produced no complete cycle")
    dt_total = end_mark[0] - start_mark[0]
    dx_total = end_mark[1] - start_mark[1]
    # clearance of a bound: per-flight best moment; report the weakest bound
    per_cycle = [c for c in clearances if c > 0.0]
    cleared = max(per_cycle) if per_cycle else 0.0
    return PronkResult(
        forward_velocity=dx_total / dt_total if dt_total > 0 else 0.0,
        cleared_obstacle=cleared,
        cycles=cycles_done,
        slipped=stats.slipped,
        samples=np.vstack(all_samples) if all_samples else np.zeros((0, dyn.NSCOL)),
    )


def _paw_heights_series(par, samples):
    """Min paw height per sample row (both units)."""
    out = np.empty(len(samples))
    ws = PlanarWorkspace()
    snap = np.zeros(dyn.NSNAP)
    for i, row in enumerate(samples):
        snap[SNAP_Q] = row[dyn.S_XB]
        snap[SNAP_Q + 1] = row[dyn.S_ZB]
        snap[SNAP_Q + 2] = row[dyn.S_PHI]
        snap[SNAP_Q + 3 : SNAP_Q + 7] = row[dyn.S_TH : dyn.S_TH + 4]
        if planar_parts(par, snap[SNAP_Q : SNAP_Q + 7], ws):
            out[i] = min(ws.paw_w[0, 1], ws.paw_w[1, 1])
        else:
            out[i] = np.nan
    return out


def payload_sweep(
    model: RobotModel,
    payloads: list[float],
    cmd: JumpCommand,
    params: SimParams,
    motors: MotorModel | None = None,
) -> list[tuple[float, float]]:
    """Jump height for each payload mass (kg)."""
    out = []
    for m in payloads:
        if m > MAX_PAYLOAD:
            raise ValueError(f"payload {m} kg exceeds the {MAX_PAYLOAD} kg capacity")
        loaded = model.with_payload(m)
        if cmd.mode == MODE_VERTICAL:
            h = simulate_vertical_grid_jump(
                loaded, cmd.squat_angle, cmd.tau_out, params, motors
            )
        else:
            h = simulate_jump(loaded, cmd, params, motors).h_max
        out.append((m, h))
    return out


@dataclass(frozen=True)
class RestPosture:
    theta: float  # deg
    standing_height: float  # m, base-link line above ground
    motor_torque: float  # Nm required per motor


def find_rest_postures(
    model: RobotModel, params: SimParams | None = None, torque_limit: float = 0.5
) -> list[RestPosture]:
    """Scan symmetric poses for near-zero static motor torque.

    The required torque per motor balances gravity and spring load under a
    virtual rotation of all eight motors with the paws grounded.  Local
    minima of its magnitude below ``torque_limit`` are reported; the spring
    makes two appear, one just above the rest angle and one in a deep squat
    where the spring force line passes through the motor axes.
    """
    params = params or SimParams()
    par = pack_params(model, MotorModel(), params, 4.0)
    g = params.g
    d0 = model.geom.rest_length
    kspring = model.geom.k

    def torque(theta_deg: float) -> float | None:
        h = 0.05
        vs = []
        for d in (theta_deg - h, theta_deg + h):
            lk = leg_kin(par, math.radians(d), math.radians(d))
            if not lk.ok:
                return None
            ws = dyn.VerticalWorkspace()
            zb = -lk.pz + model.com_offset
            if not dyn.vertical_parts(par, zb, math.radians(d), ws):
                return None
            vg = g * float(ws.mass @ ws.pos[:, 1])
            ext = max(0.0, lk.length - d0)
            vspring = 4.0 * 0.5 * kspring * ext * ext
            vs.append(vg + vspring)
        dv = (vs[1] - vs[0]) / math.radians(2 * h)
        return dv / 8.0  # eight motors share the virtual rotation

    thetas = np.arange(THETA_START_DEG, THETA_MAX_DEG, 0.1)
    taus = [torque(t) for t in thetas]
    out = []
    for i in range(1, len(thetas) - 1):
        ti = taus[i]
        if ti is None or taus[i - 1] is None or taus[i + 1] is None:
            continue
        if abs(ti) <= abs(taus[i - 1]) and abs(ti) < abs(taus[i + 1]):
            if abs(ti) <= torque_limit:
                lk = leg_kin(par, math.radians(thetas[i]), math.radians(thetas[i]))
                out.append(
                    RestPosture(
                        theta=float(thetas[i]),
                        standing_height=-lk.pz,
                        motor_torque=float(ti),
                    )
                )
    return out


@dataclass(frozen=True)
class Obstacle:
    height: float
    depth: float

    def __post_init__(self):
        if self.height < 0.0 or self.depth < 0.0:
            raise ValueError("obstacle dimensions must be >= 0")


def plan_jump(
    model: RobotModel,
    obstacle: Obstacle,
    params: SimParams,
    motors: MotorModel | None = None,
) -> JumpCommand:
    """Lowest-torque command that clears the obstacle without slipping.

    Flight-phase ground clearance uses the squatted-legs rule: COM apogee
    minus the body-bottom offset.  A coarse grid over squat angle, jump
    angle and torque is searched, then the torque is refined around the
    best candidate.  Raises InfeasibleError when nothing clears.
    """
    motors = motors or MotorModel()

    def clears(res: JumpResult) -> bool:
        clearance = res.h_max - model.com_offset
        return (
            not res.slipped
            and clearance > obstacle.height
            and res.x_max >= obstacle.depth
        )

    # quick bound: the strongest vertical jump caps the reachable clearance
    best = simulate_jump(
        model, JumpCommand(120.0, 0.0, 24.8, MODE_PLANAR), params, motors
    )
    if best.h_max - model.com_offset <= obstacle.height:
        raise InfeasibleError(
            f"obstacle height {obstacle.height} m exceeds the maximum "
            f"clearance {best.h_max - model.com_offset:.2f} m"
        )

    candidates = []
    angle_grid = [0.0, 10.0, 20.0, 30.0, 40.0] if obstacle.depth > 0 else [0.0]
    for tau in (6.0, 10.0, 15.0, 20.0, 24.8):
        for squat in (90.0, 105.0, 120.0):
            for angle in angle_grid:
                cmd = JumpCommand(squat, angle, tau, MODE_PLANAR)
                try:
                    res = simulate_jump(model, cmd, params, motors)
                except IntegrationDivergedError:
                    continue
                if clears(res):
                    candidates.append((tau, squat, angle, cmd))
        if candidates:
            break  # grid is ordered by torque; the first torque level wins
    if not candidates:
        raise InfeasibleError("no command on the search grid clears the obstacle")
    candidates.sort(key=lambda c: (c[0], c[1], c[2]))
    tau_best, squat, angle, cmd_best = candidates[0]

    # refine the torque downward at the winning squat and angle
    lo = tau_best * 0.5
    hi = tau_best
    for _ in range(4):
        mid = 0.5 * (lo + hi)
        try:
            cmd = JumpCommand(squat, angle, mid, MODE_PLANAR)
            res = simulate_jump(model, cmd, params, motors)
            ok = clears(res)
        except IntegrationDivergedError:
            ok = False
        if ok:
            hi = mid
            cmd_best = cmd
        else:
            lo = mid
    return cmd_best
