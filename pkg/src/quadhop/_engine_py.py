"""Pure-Python simulation engine.

Mirrors the compiled engine's interface exactly: segment runners for the
planar model, the one-dimensional jump protocol, and the free-floating
attitude model.  Selected by the backend module when the compiled extension
is unavailable (or explicitly requested); also the readable reference for
its numerics.
"""

from __future__ import annotations

import math

import numpy as np

from . import dynamics as dyn_mod
from .dynamics import (
    EV_DIVERGED,
    EV_LIFTOFF,
    EV_SETTLED,
    EV_TIME,
    EV_TOPPLED,
    EV_TOUCHDOWN_FRONT,
    EV_TOUCHDOWN_REAR,
    NSCOL,
    NSNAP,
    PHASE_FLIGHT,
    PHASE_STANCE,
    SNAP_Q,
    SNAP_QD,
    PlanarDynamics,
    PlanarWorkspace,
    VerticalDynamics,
    _Aux,
    leg_kin,
    planar_parts,
    rk4_step,
    sample_row,
    vertical_rk4,
)
from .errors import IntegrationDivergedError
from .model import (
    F_DT,
    F_HIP_XY,
    F_HIPZ,
    F_IBX,
    F_L0,
    F_L1,
    F_L2,
    F_L3,
    F_L4,
    F_M_BODY,
    F_M_CALF3,
    F_M_CALF4,
    F_M_HIP1,
    F_M_HIP2,
    F_M_PAW,
    NACOL,
    P_COM_OFF,
    P_DT,
    P_EVENT_TOL,
    P_G,
    P_LEGS_PER_UNIT,
    P_MU,
    P_SLIP_N_FLOOR,
)

COMPILED = False

_TOPPLE_LIMIT = math.radians(60.0)


class _Schedule:
    """Piecewise-linear per-channel reference schedule."""

    def __init__(self, knots: np.ndarray, vals: np.ndarray):
        self.knots = knots
        self.vals = vals

    def __call__(self, t: float) -> np.ndarray:
        k = self.knots
        v = self.vals
        if t <= k[0]:
            return v[0]
        if t >= k[-1]:
            return v[-1]
        i = int(np.searchsorted(k, t, side="right")) - 1
        w = (t - k[i]) / (k[i + 1] - k[i])
        return v[i] + w * (v[i + 1] - v[i])


def run_planar_segment(
    par: np.ndarray,
    snap0: np.ndarray,
    t0: float,
    mask: int,
    pins: np.ndarray,
    knots: np.ndarray,
    vals: np.ndarray,
    t_end: float,
    watch_liftoff: bool,
    watch_touchdown: bool,
    watch_settle: bool,
    watch_topple: bool,
    settle_speed: float,
    settle_hold: float,
    sample_stride: int,
):
    """Integrate one contact configuration until an event or t_end.

    Returns (event, t_out, snap_out, samples, stats) where stats is
    (slipped, t_slip, max_ratio, peak_n, peak_tau, touchdown_unit).
    """
    dynamics = PlanarDynamics(par, mask, pins)
    sched = _Schedule(knots, vals)
    y = dynamics.reduce_state(snap0)
    t = t0
    dt = par[P_DT]
    tol = par[P_EVENT_TOL]
    mu = par[P_MU]
    n_floor = par[P_SLIP_N_FLOOR]

    max_rows = int(math.ceil((t_end - t0) / (sample_stride * dt))) + 3
    samples = np.zeros((max_rows, NSCOL))
    ns = 0

    slipped = False
    t_slip = math.inf
    max_ratio = 0.0
    peak_n = 0.0
    peak_tau = 0.0
    touchdown_unit = -1
    settle_since = math.nan

    aux = _Aux()
    prev_y = None
    prev_t = t
    prev_n = 0.0
    prev_pz = (math.inf, math.inf)
    step = 0
    event = EV_TIME
    phase = PHASE_STANCE if mask else PHASE_FLIGHT

    def finish(ev, tf, yf):
        snap = dynamics.full_state(yf)
        return ev, tf, snap, samples[:ns].copy()

    while True:
        try:
            k1 = dynamics.deriv(t, y, sched(t), aux)
            snap_now = dynamics.full_state(y)
        except IntegrationDivergedError:
            ev, tf, snap, smp = finish(EV_DIVERGED, prev_t, prev_y if prev_y is not None else y)
            return ev, tf, snap, smp, (slipped, t_slip, max_ratio, peak_n, peak_tau, touchdown_unit)
        if not np.all(np.isfinite(y)):
            ev, tf, snap, smp = finish(EV_DIVERGED, prev_t, prev_y if prev_y is not None else y)
            return ev, tf, snap, smp, (slipped, t_slip, max_ratio, peak_n, peak_tau, touchdown_unit)

        # contact statistics
        if mask:
            for u in (0, 1):
                if mask & (1 << u):
                    peak_n = max(peak_n, aux.N[u])
                    if aux.N[u] > n_floor:
                        ratio = abs(aux.T[u]) / aux.N[u]
                        max_ratio = max(max_ratio, ratio)
                        if ratio > mu and not slipped:
                            slipped = True
                            t_slip = t
                    elif aux.N[u] < -n_floor and not slipped:
                        slipped = True
                        t_slip = t
        for ch in range(4):
            peak_tau = max(peak_tau, abs(aux.taus[ch]))

        # events relative to the previous grid point
        if prev_y is not None and watch_liftoff and mask and aux.n_total <= 0.0 < prev_n:
            t_ev, y_ev = dyn_mod._bisect_event(
                dynamics, prev_t, prev_y, t - prev_t, sched,
                lambda a: dyn_mod._n_total_at(
                    dynamics, prev_t, prev_y, a * (t - prev_t), sched
                ),
                tol,
            )
            ev, tf, snap, smp = finish(EV_LIFTOFF, t_ev, y_ev)
            return ev, tf, snap, smp, (slipped, t_slip, max_ratio, peak_n, peak_tau, touchdown_unit)
        if watch_touchdown and mask != 3:
            pz = _free_paw_heights(par, snap_now, mask)
            hits = [
                u for u in (0, 1)
                if prev_y is not None
                and not (mask & (1 << u))
                and pz[u] <= 0.0 < prev_pz[u]
            ]
            if hits:
                u_first = min(
                    hits,
                    key=lambda u: prev_pz[u] / max(prev_pz[u] - pz[u], 1e-300),
                )
                t_ev, y_ev = dyn_mod._bisect_event(
                    dynamics, prev_t, prev_y, t - prev_t, sched,
                    lambda a: _paw_height_probe(
                        dynamics, par, prev_t, prev_y, a * (t - prev_t), sched, u_first
                    ),
                    tol,
                )
                touchdown_unit = u_first
                ev = EV_TOUCHDOWN_FRONT if u_first == 0 else EV_TOUCHDOWN_REAR
                ev, tf, snap, smp = finish(ev, t_ev, y_ev)
                return ev, tf, snap, smp, (slipped, t_slip, max_ratio, peak_n, peak_tau, touchdown_unit)
            prev_pz = pz

        if watch_topple and abs(snap_now[SNAP_Q + 2]) > _TOPPLE_LIMIT:
            ev, tf, snap, smp = finish(EV_TOPPLED, t, y)
            return ev, tf, snap, smp, (slipped, t_slip, max_ratio, peak_n, peak_tau, touchdown_unit)

        if watch_settle and mask == 3:
            speed = math.hypot(snap_now[SNAP_QD], snap_now[SNAP_QD + 1])
            if speed < settle_speed:
                if math.isnan(settle_since):
                    settle_since = t
                elif t - settle_since >= settle_hold:
                    ev, tf, snap, smp = finish(EV_SETTLED, t, y)
                    return ev, tf, snap, smp, (slipped, t_slip, max_ratio, peak_n, peak_tau, touchdown_unit)
            else:
                settle_since = math.nan

        if step % sample_stride == 0 and ns < max_rows:
            sample_row(par, snap_now, t, aux, phase, samples[ns])
            ns += 1

        if t >= t_end - 1e-15:
            ev, tf, snap, smp = finish(EV_TIME, t, y)
            return ev, tf, snap, smp, (slipped, t_slip, max_ratio, peak_n, peak_tau, touchdown_unit)

        h = min(dt, t_end - t)
        prev_y = y
        prev_t = t
        prev_n = aux.n_total
        try:
            y = rk4_step(dynamics, t, y, h, sched, _Aux())
        except IntegrationDivergedError:
            ev, tf, snap, smp = finish(EV_DIVERGED, prev_t, prev_y)
            return ev, tf, snap, smp, (slipped, t_slip, max_ratio, peak_n, peak_tau, touchdown_unit)
        t = t + h
        step += 1


def _free_paw_heights(par, snap, mask):
    ws = PlanarWorkspace()
    if not planar_parts(par, snap[SNAP_Q : SNAP_Q + 7], ws):
        raise IntegrationDivergedError("pose outside the workspace")
    return ws.paw_w[0, 1], ws.paw_w[1, 1]


def _paw_height_probe(dynamics, par, t0, y0, dt_part, sched, u):
    if dt_part <= 0.0:
        snap = dynamics.full_state(y0)
    else:
        y = rk4_step(dynamics, t0, y0, dt_part, sched, _Aux())
        snap = dynamics.full_state(y)
    ws = PlanarWorkspace()
    if not planar_parts(par, snap[SNAP_Q : SNAP_Q + 7], ws):
        raise IntegrationDivergedError("pose outside the workspace")
    return ws.paw_w[u, 1]


# ---------------------------------------------------------------------------
# Vertical jump protocol (grid-search kernel)
# ---------------------------------------------------------------------------

VJ_OK = 0
VJ_DIVERGED = 1


def run_vertical_jump(
    par: np.ndarray,
    theta_start: float,
    squat: float,
    ramp_time: float,
    t_max: float,
    sample_stride: int = 0,
):
    """Squat-ramp-release protocol in the one-dimensional mode.

    Starts standing at rest at theta_start, ramps the motor setpoint
    linearly to ``squat`` over ``ramp_time``, then steps it back in a single
    timestep.  A hard release can momentarily unload the paw before the
    main push, so stance and ballistic phases alternate (with sticky-impact
    velocity projection at each re-contact) until a flight reaches its COM
    apogee without touching down; that apogee is the jump height.

    Returns (status, h_max, t_liftoff, com_z, com_vz, work, diss, samples).
    """
    stance = VerticalDynamics(par, stance=True)
    flight = VerticalDynamics(par, stance=False)
    dt = par[P_DT]
    tol = par[P_EVENT_TOL]
    g = par[P_G]

    def ref(t: float) -> float:
        if t <= ramp_time:
            return theta_start + (squat - theta_start) * (t / ramp_time)
        return theta_start

    do_sample = sample_stride > 0
    if do_sample:
        max_rows = int(math.ceil(t_max / (sample_stride * dt))) + 8
        samples = np.zeros((max_rows, 4))  # t, com_z, com_vz, theta
    else:
        samples = np.zeros((0, 4))
    ns = 0

    def record(t, com_z, com_vz, theta):
        nonlocal ns
        if do_sample and ns < len(samples):
            samples[ns] = (t, com_z, com_vz, theta)
            ns += 1

    def fail(t):
        return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples[:ns]

    # stance integration state: [theta, thd, integ, work, diss]
    y = np.zeros(stance.ny)
    y[0] = theta_start
    t = 0.0
    step = 0
    in_stance = True
    yf = None  # flight state [zb, theta, zbd, thd, integ, work, diss]
    liftoff = (0.0, 0.0, 0.0)  # t, com_z, com_vz at last liftoff

    while t < t_max:
        if in_stance:
            aux = _Aux()
            try:
                stance.deriv(t, y, ref(t), aux)
            except IntegrationDivergedError:
                return fail(t)
            prev_n = aux.n_total
            if do_sample and step % sample_stride == 0:
                zb, dzb = stance._zb_of_theta(y[0])
                com_z, com_vz, _ = stance.com_state(zb, y[0], dzb * y[1], y[1])
                record(t, com_z, com_vz, y[0])
            prev_y = y
            prev_t = t
            try:
                y = vertical_rk4(stance, t, y, dt, ref, _Aux())
            except IntegrationDivergedError:
                return fail(t)
            if not np.all(np.isfinite(y)):
                return fail(t)
            t += dt
            step += 1
            aux2 = _Aux()
            try:
                stance.deriv(t, y, ref(t), aux2)
            except IntegrationDivergedError:
                return fail(t)
            if aux2.n_total <= 0.0 < prev_n:
                # bisect the liftoff instant
                h_br = t - prev_t
                lo, hi = 0.0, 1.0
                while (hi - lo) * h_br > tol:
                    mid = 0.5 * (lo + hi)
                    ym = vertical_rk4(stance, prev_t, prev_y, mid * h_br, ref, _Aux())
                    aux_m = _Aux()
                    stance.deriv(prev_t + mid * h_br, ym, ref(prev_t + mid * h_br), aux_m)
                    if aux_m.n_total <= 0.0:
                        hi = mid
                    else:
                        lo = mid
                y_ev = vertical_rk4(stance, prev_t, prev_y, hi * h_br, ref, _Aux())
                t = prev_t + hi * h_br
                theta = y_ev[0]
                thd = y_ev[1]
                zpair = stance._zb_of_theta(theta)
                if zpair is None:
                    return fail(t)
                zb, dzb = zpair
                com_z, com_vz, _ = stance.com_state(zb, theta, dzb * thd, thd)
                liftoff = (t, com_z, com_vz)
                yf = np.zeros(flight.ny)
                yf[0] = zb
                yf[1] = theta
                yf[2] = dzb * thd
                yf[3] = thd
                yf[4:7] = y_ev[2:5]
                in_stance = False
                record(t, com_z, com_vz, theta)
            continue

        # flight: run until touchdown or COM apogee.  Tiny hops (release
        # transients) are not candidate apogees; they run to re-contact.
        com_z, com_vz, _ = flight.com_state(yf[0], yf[1], yf[2], yf[3])
        eligible = com_vz > 0.1
        t_apo = t + com_vz / g if eligible else t_max
        touched = False
        while t < min(t_apo, t_max):
            aux = _Aux()
            if do_sample and step % sample_stride == 0:
                cz, cvz, _ = flight.com_state(yf[0], yf[1], yf[2], yf[3])
                record(t, cz, cvz, yf[1])
            lk = leg_kin(par, yf[1], yf[1])
            if not lk.ok:
                return fail(t)
            prev_pz = yf[0] - par[P_COM_OFF] + lk.pz
            prev_yf = yf
            prev_t = t
            h = min(dt, t_apo - t) if t_apo > t else dt
            try:
                yf = vertical_rk4(flight, t, yf, h, ref, _Aux())
            except IntegrationDivergedError:
                return fail(t)
            if not np.all(np.isfinite(yf)):
                return fail(t)
            t += h
            step += 1
            lk = leg_kin(par, yf[1], yf[1])
            if not lk.ok:
                return fail(t)
            pz = yf[0] - par[P_COM_OFF] + lk.pz
            if pz <= 0.0 < prev_pz:
                # bisect touchdown
                h_br = t - prev_t
                lo, hi = 0.0, 1.0
                while (hi - lo) * h_br > tol:
                    mid = 0.5 * (lo + hi)
                    ym = vertical_rk4(flight, prev_t, prev_yf, mid * h_br, ref, _Aux())
                    lkm = leg_kin(par, ym[1], ym[1])
                    if not lkm.ok:
                        return fail(t)
                    if ym[0] - par[P_COM_OFF] + lkm.pz <= 0.0:
                        hi = mid
                    else:
                        lo = mid
                yf = vertical_rk4(flight, prev_t, prev_yf, hi * h_br, ref, _Aux())
                t = prev_t + hi * h_br
                touched = True
                break
        if not touched:
            if t >= t_max:
                return fail(t)
            # apogee reached in free flight: the jump is complete
            t_lo, com_z, com_vz = liftoff
            h_max = com_z + com_vz * com_vz / (2.0 * g)
            record(t, h_max, 0.0, yf[1])
            return (
                VJ_OK, h_max, t_lo, com_z, com_vz,
                yf[4 + 1], yf[4 + 2], samples[:ns],
            )
        # sticky impact: project velocities onto the contact constraint
        ws = flight.ws
        if not dyn_mod.vertical_parts(par, yf[0], yf[1], ws):
            return fail(t)
        M2 = np.zeros((2, 2))
        for k in range(dyn_mod.NV_PARTS):
            J = ws.jac[k]
            M2 += ws.mass[k] * (J.T @ J)
            if ws.inertia[k] != 0.0:
                a = ws.ang[k]
                M2 += ws.inertia[k] * np.outer(a, a)
        A = np.array([1.0, ws.jpaw_z])
        Qd = np.array([yf[2], yf[3]])
        minv_a = dyn_mod._chol_solve(M2, A)
        lam = -float(A @ Qd) / float(A @ minv_a)
        Qd_new = Qd + lam * minv_a
        # ground anchor for the renewed stance is wherever the paw is now
        stance = VerticalDynamics(par, stance=True, paw_ground_z=ws.paw_z)
        y = np.zeros(stance.ny)
        y[0] = yf[1]
        y[1] = Qd_new[1]
        y[2:5] = yf[4:7]
        in_stance = True
    return fail(t)


# ---------------------------------------------------------------------------
# Free-floating attitude model
# ---------------------------------------------------------------------------

FF_OK = 0
FF_JOINT_LIMIT = 1

_FD_STEP = 1e-6


def _leg_points(par3, psi, t1, t2, leg):
    """Body-frame part descriptors (m, com, rod_unit, rod_inertia) of one leg."""
    # the 3-D layout shares the link-length slots, so the planar helper works
    lk = leg_kin(par3, t1, t2)
    if not lk.ok:
        return None
    hx = par3[F_HIP_XY + 2 * leg]
    hy = par3[F_HIP_XY + 2 * leg + 1]
    hz = par3[F_HIPZ]
    sp, cp = math.sin(psi), math.cos(psi)
    # in-plane axes: u along body x, d = "down" rotated about x by psi
    dy, dz = sp, -cp

    def to3(ux, lz):
        # leg-frame z is negative below the motor line
        return np.array(
            [hx - 0.5 * par3[F_L0] + ux, hy - lz * dy, hz - lz * dz]
        )

    m1 = to3(0.0, 0.0)
    m2 = to3(par3[F_L0], 0.0)
    k1 = to3(lk.k1x, lk.k1z)
    k2 = to3(lk.k2x, lk.k2z)
    paw = to3(lk.px, lk.pz)
    parts = []
    for m, a, b, ml in (
        (par3[F_M_HIP1], m1, k1, par3[F_L1]),
        (par3[F_M_HIP2], m2, k2, par3[F_L2]),
        (par3[F_M_CALF3], k1, paw, par3[F_L3]),
        (par3[F_M_CALF4], k2, paw, par3[F_L4]),
    ):
        com = 0.5 * (a + b)
        u = (b - a) / ml
        parts.append((m, com, u, m * ml * ml / 12.0))
    parts.append((par3[F_M_PAW], paw, None, 0.0))
    return parts


def float_terms(par3: np.ndarray, joints: np.ndarray, rates: np.ndarray):
    """Body-frame system inertia about the COM and joint-motion momentum.

    joints/rates: 12 values ordered (psi, theta1, theta2) per leg
    (FL, FR, RL, RR).  Returns (ok, I_sys 3x3, h_rel 3).
    """
    parts0 = _all_parts(par3, joints)
    if parts0 is None:
        return False, None, None
    speed = float(np.max(np.abs(rates)))
    if speed < 1e-14:
        dots = [(np.zeros(3), np.zeros(3) if u is not None else None) for (_, _, u, _) in parts0]
    else:
        h = _FD_STEP / speed
        pp = _all_parts(par3, joints + h * rates)
        pm = _all_parts(par3, joints - h * rates)
        if pp is None or pm is None:
            return False, None, None
        inv2h = 1.0 / (2.0 * h)
        dots = []
        for (mp, cp_, up, _), (mm, cm, um, _) in zip(pp, pm):
            cdot = (cp_ - cm) * inv2h
            udot = (up - um) * inv2h if up is not None else None
            dots.append((cdot, udot))

    mtot = sum(p[0] for p in parts0)
    com = sum(p[0] * p[1] for p in parts0) / mtot
    comdot = sum(p[0] * d[0] for p, d in zip(parts0, dots)) / mtot

    I = np.zeros((3, 3))
    h_rel = np.zeros(3)
    eye = np.eye(3)
    for (m, c, u, ml2), (cdot, udot) in zip(parts0, dots):
        d = c - com
        I += m * (float(d @ d) * eye - np.outer(d, d))
        v = cdot - comdot
        h_rel += m * np.cross(d, v)
        if u is not None:
            I += ml2 * (eye - np.outer(u, u))
            h_rel += ml2 * np.cross(u, udot)
    # the body box: its COM sits at the body origin
    db = -com
    mb = par3[F_M_BODY]
    I += mb * (float(db @ db) * eye - np.outer(db, db))
    I[0, 0] += par3[F_IBX]
    I[1, 1] += par3[F_IBX + 1]
    I[2, 2] += par3[F_IBX + 2]
    h_rel += mb * np.cross(db, -comdot)
    return True, I, h_rel


def _all_parts(par3, joints):
    parts = []
    for leg in range(4):
        p = _leg_points(
            par3, joints[3 * leg], joints[3 * leg + 1], joints[3 * leg + 2], leg
        )
        if p is None:
            return None
        parts.extend(p)
    return parts


def _sched_segment(knots, x):
    x = x - math.floor(x)
    i = int(np.searchsorted(knots, x, side="right")) - 1
    return max(0, min(i, len(knots) - 2))


def _sched_eval(knots, vals, x, seg=None):
    """Periodic piecewise-linear joint schedule over phase x in [0, 1).

    ``seg`` pins the active segment so all stages of one integration step
    see a consistent slope across knot corners.
    """
    x = x - math.floor(x)
    if seg is None:
        i = _sched_segment(knots, x)
    else:
        i = seg
        if x + 0.5 < knots[i]:  # stage point wrapped past 1.0
            x += 1.0
    w = (x - knots[i]) / (knots[i + 1] - knots[i])
    joints = vals[i] + w * (vals[i + 1] - vals[i])
    slope = (vals[i + 1] - vals[i]) / (knots[i + 1] - knots[i])
    return joints, slope


def _quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_to_euler(q):
    """Intrinsic z-y'-x'' (yaw, pitch, roll), returned as (roll, pitch, yaw)."""
    R = quat_to_matrix(q)
    pitch = -math.asin(min(1.0, max(-1.0, R[2, 0])))
    roll = math.atan2(R[2, 1], R[2, 2])
    yaw = math.atan2(R[1, 0], R[0, 0])
    return roll, pitch, yaw


def _twist_about(q, axis):
    """Signed rotation of q about the given unit axis (swing-twist)."""
    v = q[1:4]
    proj = float(v @ axis)
    tw = 2.0 * math.atan2(proj, q[0])
    if tw > math.pi:
        tw -= 2.0 * math.pi
    elif tw < -math.pi:
        tw += 2.0 * math.pi
    return tw


def run_free_float(
    par3: np.ndarray,
    knots: np.ndarray,
    vals: np.ndarray,
    period: float,
    duration: float,
    L0: np.ndarray,
    gate_axis: int,
    gate_sign: float,
    sample_stride: int,
):
    """Integrate the free-floating robot with kinematically prescribed legs.

    The joint schedule advances at 1/period in cycle phase; when gating is
    active (gate_axis >= 0) the phase only advances while the accumulated
    twist about that world axis, times gate_sign, is positive.

    Returns (status, q_final, phase_final, samples).
    """
    dt = par3[F_DT]
    q = np.array([1.0, 0.0, 0.0, 0.0])
    s = 0.0
    t = 0.0
    axis = np.zeros(3)
    if gate_axis >= 0:
        axis[gate_axis] = 1.0

    n_rows = int(math.ceil(duration / (sample_stride * dt))) + 2
    samples = np.zeros((n_rows, NACOL))
    ns = 0

    def omega_body(qc, sc, sdot, seg):
        joints, slope = _sched_eval(knots, vals, sc, seg)
        rates = slope * sdot
        ok, inertia, h_rel = float_terms(par3, joints, rates)
        if not ok:
            return None
        Rm = quat_to_matrix(qc)
        return np.linalg.solve(inertia, Rm.T @ L0 - h_rel)

    def stage(qc, sc, sdot, seg):
        w = omega_body(qc, sc, sdot, seg)
        if w is None:
            return None
        qd = 0.5 * _quat_mul(qc, np.array([0.0, w[0], w[1], w[2]]))
        return qd, w

    def record(tc, qc, sc, w):
        nonlocal ns
        if sample_stride <= 0 or ns >= n_rows:
            return
        if ns > 0 and tc < samples[ns - 1, 0] + sample_stride * dt - 1e-12:
            return
        w_world = quat_to_matrix(qc) @ w
        roll, pitch, yaw = quat_to_euler(qc)
        row = samples[ns]
        row[0] = tc
        row[1] = math.degrees(roll)
        row[2] = math.degrees(pitch)
        row[3] = math.degrees(yaw)
        row[4:7] = np.degrees(w_world)
        row[7:10] = L0
        row[10] = math.degrees(_twist_about(qc, axis)) if gate_axis >= 0 else 0.0
        row[11] = sc
        ns += 1

    while t < duration - 1e-15:
        # gate decision held through the step
        if gate_axis >= 0:
            tw = _twist_about(q, axis)
            sdot = (1.0 / period) if tw * gate_sign > 0.0 else 0.0
        else:
            sdot = 1.0 / period

        # land steps exactly on schedule knots for clean corner handling;
        # snap onto a knot when the phase sits within rounding of it
        h = min(dt, duration - t)
        if sdot > 0.0:
            x = s - math.floor(s)
            i = int(np.searchsorted(knots, x, side="right")) - 1
            i = max(0, min(i, len(knots) - 2))
            dxn = knots[i + 1] - x
            if dxn < 1e-12:
                s += dxn
                x = s - math.floor(s)
                i = int(np.searchsorted(knots, x, side="right")) - 1
                i = max(0, min(i, len(knots) - 2))
                dxn = knots[i + 1] - x
            t_knot = dxn / sdot
            if t_knot > 1e-12:
                h = min(h, t_knot)

        # one segment governs the whole step (stages may touch its corners)
        seg = _sched_segment(knots, s + 0.5 * h * sdot)
        r1 = stage(q, s, sdot, seg)
        if r1 is None:
            return FF_JOINT_LIMIT, q, s, samples[:ns]
        record(t, q, s, r1[1])
        r2 = stage(q + 0.5 * h * r1[0], s + 0.5 * h * sdot, sdot, seg)
        r3 = stage(q + 0.5 * h * r2[0], s + 0.5 * h * sdot, sdot, seg) if r2 else None
        r4 = stage(q + h * r3[0], s + h * sdot, sdot, seg) if r3 else None
        if r4 is None:
            return FF_JOINT_LIMIT, q, s, samples[:ns]
        q = q + (h / 6.0) * (r1[0] + 2.0 * r2[0] + 2.0 * r3[0] + r4[0])
        s = s + h * sdot
        q = q / math.sqrt(float(q @ q))
        t += h

    r1 = stage(q, s, 0.0, _sched_segment(knots, s))
    if r1 is not None:
        record(t, q, s, r1[1])
    return FF_OK, q, s, samples[:ns]
