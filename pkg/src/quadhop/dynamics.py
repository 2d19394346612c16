"""Minimal-coordinate planar rigid-body dynamics for stance and flight.

The planar model has seven coordinates: body position (x, z), pitch, and the
two motor angles of the front and rear leg units -- each unit aggregating the
left/right leg pair of the quadruped.  The closed five-bar loop inside each
leg is resolved analytically, so knees and ankles never appear as states.

In stance a pinned paw removes that unit's motor angles from the coordinate
set: they follow from the leg's inverse kinematics, and the ground reaction
is recovered from the constraint residual.  This kinematic reduction keeps
contact constraints satisfied exactly at every step.

The one-dimensional mode used by design sweeps constrains the body
vertically and aggregates the four synchronized legs into one unit with
four-fold masses and forces.

Velocity-product (Coriolis) terms are evaluated through directional finite
differences of the part Jacobians along the current velocity, normalised so
the result is exactly linear in the velocity magnitude.  Integration is
fixed-step RK4; events (liftoff, touchdown, settling) are located by
bisection inside the bracketing step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import model as mdl
from .errors import IntegrationDivergedError, SingularError, UnreachableError
from .linkage import LegConfig, LegGeometry
from .model import (
    NPAR,
    P_BVISC,
    P_COM_OFF,
    P_D0,
    P_DT,
    P_EVENT_TOL,
    P_G,
    P_HIP_DX,
    P_I_BODY,
    P_KD,
    P_KI,
    P_KP,
    P_KSPRING,
    P_L0,
    P_L1,
    P_L2,
    P_L3,
    P_L4,
    P_M_BODY,
    P_M_CALF3,
    P_M_CALF4,
    P_M_HIP1,
    P_M_HIP2,
    P_M_PAW,
    P_MU,
    P_OMEGA_MAX,
    P_SLIP_N_FLOOR,
    P_TAU_SAT,
    P_THETA_MAX,
    P_THETA_MIN,
    P_KSTOP,
    P_CSTOP,
    P_LEGS_PER_UNIT,
    MotorModel,
    RobotModel,
    SimParams,
    pack_params,
)

# Phase identifiers shared with the engines and the CSV writer.
PHASE_STANCE = 0
PHASE_FLIGHT = 1
PHASE_LANDED = 2

# Segment event codes.
EV_TIME = 0
EV_LIFTOFF = 1
EV_TOUCHDOWN_FRONT = 2
EV_TOUCHDOWN_REAR = 3
EV_SETTLED = 4
EV_DIVERGED = 5
EV_TOPPLED = 6

# Snapshot layout: full coordinates, velocities, PID integrators, energy
# accumulators.  Snapshots are what crosses the engine boundary.
SNAP_Q = 0  # 7 slots: xb, zb, phi, th1f, th2f, th1r, th2r
SNAP_QD = 7
SNAP_INTEG = 14  # 4 slots
SNAP_WORK = 18
SNAP_DISS = 19
SNAP_IMPACT = 20
NSNAP = 21

# Sample row layout (1 kHz trajectory decimation).
S_T = 0
S_XB = 1
S_ZB = 2
S_PHI = 3
S_TH = 4  # 4 slots
S_THD = 8  # 4 slots
S_NF = 12
S_TF = 13
S_NR = 14
S_TR = 15
S_COMX = 16
S_COMZ = 17
S_COMVX = 18
S_COMVZ = 19
S_WORK = 20
S_DISS = 21
S_VSPRING = 22
S_KE = 23
S_PE = 24
S_PHASE = 25
NSCOL = 26

_FD_STEP = 1e-6
_TOPPLE_LIMIT = math.radians(60.0)
_DIVERGE_LIMIT = 1e6


class _LegKin:
    """Leg-frame kinematics of one five-bar unit at (t1, t2) radians."""

    __slots__ = (
        "ok",
        "k1x", "k1z", "k2x", "k2z", "px", "pz",
        "dk1x", "dk1z", "dk2x", "dk2z",
        "j11", "j12", "j21", "j22",
        "length", "dL1", "dL2",
    )


def leg_kin(par: np.ndarray, t1: float, t2: float) -> _LegKin:
    """Positions, paw Jacobian and spring gradient of one leg unit."""
    lk = _LegKin()
    l0 = par[P_L0]
    l1 = par[P_L1]
    l2 = par[P_L2]
    l3 = par[P_L3]
    l4 = par[P_L4]
    s1 = math.sin(t1)
    c1 = math.cos(t1)
    s2 = math.sin(t2)
    c2 = math.cos(t2)
    lk.k1x = -l1 * s1
    lk.k1z = -l1 * c1
    lk.k2x = l0 + l2 * s2
    lk.k2z = -l2 * c2
    lk.dk1x = -l1 * c1
    lk.dk1z = l1 * s1
    lk.dk2x = l2 * c2
    lk.dk2z = l2 * s2
    dx = lk.k2x - lk.k1x
    dz = lk.k2z - lk.k1z
    d2 = dx * dx + dz * dz
    d = math.sqrt(d2)
    lk.ok = False
    if d < 1e-12 or d < abs(l3 - l4) or d > l3 + l4:
        return lk
    a = (l3 * l3 - l4 * l4 + d2) / (2.0 * d)
    h2 = l3 * l3 - a * a
    if h2 <= 1e-14:
        return lk
    h = math.sqrt(h2)
    ux = dx / d
    uz = dz / d
    bx = lk.k1x + a * ux
    bz = lk.k1z + a * uz
    plox = bx + h * uz
    ploz = bz - h * ux
    phix = bx - h * uz
    phiz = bz + h * ux
    if ploz <= phiz:
        lk.px, lk.pz = plox, ploz
    else:
        lk.px, lk.pz = phix, phiz
    # paw Jacobian from the two loop-closure distance constraints
    r1x = lk.px - lk.k1x
    r1z = lk.pz - lk.k1z
    r2x = lk.px - lk.k2x
    r2z = lk.pz - lk.k2z
    det = r1x * r2z - r1z * r2x
    if abs(det) < 1e-10:
        return lk
    b11 = r1x * lk.dk1x + r1z * lk.dk1z
    b22 = r2x * lk.dk2x + r2z * lk.dk2z
    inv = 1.0 / det
    lk.j11 = inv * r2z * b11
    lk.j12 = inv * (-r1z) * b22
    lk.j21 = inv * (-r2x) * b11
    lk.j22 = inv * r1x * b22
    lk.length = d
    lk.dL1 = -(ux * lk.dk1x + uz * lk.dk1z)
    lk.dL2 = ux * lk.dk2x + uz * lk.dk2z
    lk.ok = True
    return lk


def leg_ik(par: np.ndarray, px: float, pz: float):
    """Knee-outward motor angles (rad) for a leg-frame paw target.

    Returns (ok, t1, t2).
    """
    l0 = par[P_L0]

    def side(mx: float, outward: float, l_hip: float, l_calf: float):
        vx = px - mx
        vz = pz
        d = math.hypot(vx, vz)
        if d > l_hip + l_calf or d < abs(l_hip - l_calf) or d < 1e-12:
            return False, 0.0
        gamma = math.atan2(outward * vx, -vz)
        ca = (l_hip * l_hip + d * d - l_calf * l_calf) / (2.0 * l_hip * d)
        ca = min(1.0, max(-1.0, ca))
        return True, gamma + math.acos(ca)

    ok1, t1 = side(0.0, -1.0, par[P_L1], par[P_L3])
    ok2, t2 = side(l0, +1.0, par[P_L2], par[P_L4])
    return (ok1 and ok2), t1, t2


# ---------------------------------------------------------------------------
# Planar part table.  Parts: 0 body, then per unit (front, rear):
# hip1, hip2, calf3, calf4, paw.
# ---------------------------------------------------------------------------

N_PARTS = 11


class PlanarWorkspace:
    """Scratch arrays reused across derivative evaluations."""

    def __init__(self):
        self.pos = np.zeros((N_PARTS, 2))
        self.jac = np.zeros((N_PARTS, 2, 7))
        self.ang = np.zeros((N_PARTS, 7))
        self.mass = np.zeros(N_PARTS)
        self.inertia = np.zeros(N_PARTS)
        self.spring_len = np.zeros(2)
        self.spring_dL = np.zeros((2, 2))
        self.paw_w = np.zeros((2, 2))
        self.jpw_th = np.zeros((2, 2, 2))  # world paw jac wrt own thetas
        self.c_paw = np.zeros((2, 2))  # body-frame paw position
        self.ok = False


def _unit_offsets(par: np.ndarray, u: int):
    sx = 1.0 if u == 0 else -1.0
    return sx * par[P_HIP_DX] - 0.5 * par[P_L0], -par[P_COM_OFF]


def planar_parts(par: np.ndarray, Qf: np.ndarray, ws: PlanarWorkspace) -> bool:
    """Fill world-frame positions, Jacobians and angular rows of all parts."""
    n = par[P_LEGS_PER_UNIT]
    xb, zb, phi = Qf[0], Qf[1], Qf[2]
    c, s = math.cos(phi), math.sin(phi)
    pos = ws.pos
    jac = ws.jac
    ang = ws.ang
    jac[:] = 0.0
    ang[:] = 0.0

    # body
    pos[0, 0] = xb
    pos[0, 1] = zb
    jac[0, 0, 0] = 1.0
    jac[0, 1, 1] = 1.0
    ang[0, 2] = 1.0
    ws.mass[0] = par[P_M_BODY]
    ws.inertia[0] = par[P_I_BODY]

    l0 = par[P_L0]
    l3 = par[P_L3]
    l4 = par[P_L4]
    for u in (0, 1):
        lk = leg_kin(par, Qf[3 + 2 * u], Qf[4 + 2 * u])
        if not lk.ok:
            ws.ok = False
            return False
        offx, offz = _unit_offsets(par, u)
        ju = 3 + 2 * u
        base = 1 + 5 * u

        def place(idx, cx, cz, d1x, d1z, d2x, d2z, m, inr, da1, da2):
            # world position and Jacobian of a part with body-frame
            # position (offx+cx, offz+cz) and leg-frame theta-derivatives
            bx = offx + cx
            bz = offz + cz
            pos[idx, 0] = xb + c * bx - s * bz
            pos[idx, 1] = zb + s * bx + c * bz
            jac[idx, 0, 0] = 1.0
            jac[idx, 1, 1] = 1.0
            jac[idx, 0, 2] = -s * bx - c * bz
            jac[idx, 1, 2] = c * bx - s * bz
            jac[idx, 0, ju] = c * d1x - s * d1z
            jac[idx, 1, ju] = s * d1x + c * d1z
            jac[idx, 0, ju + 1] = c * d2x - s * d2z
            jac[idx, 1, ju + 1] = s * d2x + c * d2z
            ws.mass[idx] = m
            ws.inertia[idx] = inr
            ang[idx, 2] = 1.0
            ang[idx, ju] = da1
            ang[idx, ju + 1] = da2

        # hip links (rod from motor to knee)
        place(
            base + 0,
            0.5 * lk.k1x, 0.5 * lk.k1z,
            0.5 * lk.dk1x, 0.5 * lk.dk1z, 0.0, 0.0,
            n * par[P_M_HIP1], n * par[P_M_HIP1] * par[P_L1] ** 2 / 12.0,
            1.0, 0.0,
        )
        place(
            base + 1,
            0.5 * (l0 + lk.k2x), 0.5 * lk.k2z,
            0.0, 0.0, 0.5 * lk.dk2x, 0.5 * lk.dk2z,
            n * par[P_M_HIP2], n * par[P_M_HIP2] * par[P_L2] ** 2 / 12.0,
            0.0, 1.0,
        )
        # calf rods; orientation rates from the rod-perpendicular component
        r1x = lk.px - lk.k1x
        r1z = lk.pz - lk.k1z
        r2x = lk.px - lk.k2x
        r2z = lk.pz - lk.k2z
        da3_1 = (r1x * (lk.j21 - lk.dk1z) - r1z * (lk.j11 - lk.dk1x)) / (l3 * l3)
        da3_2 = (r1x * lk.j22 - r1z * lk.j12) / (l3 * l3)
        da4_1 = (r2x * lk.j21 - r2z * lk.j11) / (l4 * l4)
        da4_2 = (r2x * (lk.j22 - lk.dk2z) - r2z * (lk.j12 - lk.dk2x)) / (l4 * l4)
        place(
            base + 2,
            0.5 * (lk.k1x + lk.px), 0.5 * (lk.k1z + lk.pz),
            0.5 * (lk.dk1x + lk.j11), 0.5 * (lk.dk1z + lk.j21),
            0.5 * lk.j12, 0.5 * lk.j22,
            n * par[P_M_CALF3], n * par[P_M_CALF3] * l3 * l3 / 12.0,
            da3_1, da3_2,
        )
        place(
            base + 3,
            0.5 * (lk.k2x + lk.px), 0.5 * (lk.k2z + lk.pz),
            0.5 * lk.j11, 0.5 * lk.j21,
            0.5 * (lk.dk2x + lk.j12), 0.5 * (lk.dk2z + lk.j22),
            n * par[P_M_CALF4], n * par[P_M_CALF4] * l4 * l4 / 12.0,
            da4_1, da4_2,
        )
        place(
            base + 4,
            lk.px, lk.pz,
            lk.j11, lk.j21, lk.j12, lk.j22,
            n * par[P_M_PAW], 0.0,
            0.0, 0.0,
        )

        ws.spring_len[u] = lk.length
        ws.spring_dL[u, 0] = lk.dL1
        ws.spring_dL[u, 1] = lk.dL2
        ws.paw_w[u] = pos[base + 4]
        ws.jpw_th[u, 0, 0] = jac[base + 4, 0, ju]
        ws.jpw_th[u, 0, 1] = jac[base + 4, 0, ju + 1]
        ws.jpw_th[u, 1, 0] = jac[base + 4, 1, ju]
        ws.jpw_th[u, 1, 1] = jac[base + 4, 1, ju + 1]
        ws.c_paw[u, 0] = offx + lk.px
        ws.c_paw[u, 1] = offz + lk.pz
    ws.ok = True
    return True


def planar_mass_matrix(ws: PlanarWorkspace) -> np.ndarray:
    """Generalized mass matrix over the seven planar coordinates."""
    M = np.zeros((7, 7))
    for k in range(N_PARTS):
        J = ws.jac[k]
        M += ws.mass[k] * (J.T @ J)
        if ws.inertia[k] != 0.0:
            a = ws.ang[k]
            M += ws.inertia[k] * np.outer(a, a)
    return M


def pid_torque(
    motor: MotorModel, theta_ref: float, theta: float, integ: float, omega: float
) -> float:
    """Saturated PID torque with a back-EMF style speed limit (rad units)."""
    raw = (
        motor.kp * (theta_ref - theta)
        + motor.ki * integ
        - motor.kd * omega
        - motor.b * omega
    )
    tau = min(motor.tau_sat, max(-motor.tau_sat, raw))
    if omega >= motor.omega_max and tau > 0.0:
        tau = 0.0
    elif omega <= -motor.omega_max and tau < 0.0:
        tau = 0.0
    return tau


def _stop_torque(par, theta, omega):
    """Soft joint-stop torque and dissipated power at the motor range ends."""
    lo = par[P_THETA_MIN]
    hi = par[P_THETA_MAX]
    if theta < lo:
        pen = lo - theta
    elif theta > hi:
        pen = hi - theta
    else:
        return 0.0, 0.0
    c = par[P_CSTOP]
    return par[P_KSTOP] * pen - c * omega, c * omega * omega


def stop_potential(par, theta):
    """Elastic energy stored in an engaged joint stop (per motor)."""
    lo = par[P_THETA_MIN]
    hi = par[P_THETA_MAX]
    pen = (lo - theta) if theta < lo else (theta - hi) if theta > hi else 0.0
    return 0.5 * par[P_KSTOP] * pen * pen


def _pid_raw(par, ref, theta, integ, omega):
    raw = (
        par[P_KP] * (ref - theta)
        + par[P_KI] * integ
        - par[P_KD] * omega
        - par[P_BVISC] * omega
    )
    sat = par[P_TAU_SAT]
    tau = min(sat, max(-sat, raw))
    om = par[P_OMEGA_MAX]
    if omega >= om and tau > 0.0:
        tau = 0.0
    elif omega <= -om and tau < 0.0:
        tau = 0.0
    return tau


class _Aux:
    """Per-evaluation contact and actuation byproducts."""

    __slots__ = ("N", "T", "n_total", "taus", "ratio", "spring_ext")

    def __init__(self):
        self.N = [0.0, 0.0]
        self.T = [0.0, 0.0]
        self.n_total = 0.0
        self.taus = [0.0, 0.0, 0.0, 0.0]
        self.ratio = 0.0
        self.spring_ext = [0.0, 0.0]


def _chol_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cholesky solve for the small SPD systems of the reduced dynamics."""
    n = A.shape[0]
    L = np.zeros_like(A)
    for i in range(n):
        for j in range(i + 1):
            acc = A[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            if i == j:
                if acc <= 0.0:
                    raise SingularError("mass matrix not positive definite")
                L[i, i] = math.sqrt(acc)
            else:
                L[i, j] = acc / L[j, j]
    y = np.zeros(n)
    for i in range(n):
        acc = b[i]
        for k in range(i):
            acc -= L[i, k] * y[k]
        y[i] = acc / L[i, i]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        acc = y[i]
        for k in range(i + 1, n):
            acc -= L[k, i] * x[k]
        x[i] = acc / L[i, i]
    return x


class PlanarDynamics:
    """Derivative evaluator for one contact configuration (mask of pins).

    mask bit 0 pins the front unit, bit 1 the rear unit; ``pins`` holds the
    world paw anchors of pinned units.
    """

    def __init__(self, par: np.ndarray, mask: int, pins: np.ndarray):
        self.par = par
        self.mask = mask
        self.pins = pins
        self.nq = 7 - 2 * (bool(mask & 1) + bool(mask & 2))
        self.ws = PlanarWorkspace()
        self.ws_p = PlanarWorkspace()
        self.ws_m = PlanarWorkspace()
        self.ny = 2 * self.nq + 4 + 3  # q, qd, integ, work, diss, impact

    # -- coordinate embedding -------------------------------------------

    def embed(self, q: np.ndarray):
        """Full coordinates and reduction map for reduced coordinates q."""
        par = self.par
        Qf = np.empty(7)
        Qf[0:3] = q[0:3]
        phi = q[2]
        c, s = math.cos(phi), math.sin(phi)
        iq = 3
        for u in (0, 1):
            ju = 3 + 2 * u
            if self.mask & (1 << u):
                offx, offz = _unit_offsets(par, u)
                wx = self.pins[u, 0] - q[0]
                wz = self.pins[u, 1] - q[1]
                lx = c * wx + s * wz - offx
                lz = -s * wx + c * wz - offz
                ok, t1, t2 = leg_ik(par, lx, lz)
                if not ok:
                    return None, None
                Qf[ju] = t1
                Qf[ju + 1] = t2
            else:
                Qf[ju] = q[iq]
                Qf[ju + 1] = q[iq + 1]
                iq += 2
        if self.mask == 0:
            return Qf, None
        G = np.zeros((7, self.nq))
        G[0, 0] = 1.0
        G[1, 1] = 1.0
        G[2, 2] = 1.0
        iq = 3
        for u in (0, 1):
            ju = 3 + 2 * u
            if self.mask & (1 << u):
                lk = leg_kin(par, Qf[ju], Qf[ju + 1])
                if not lk.ok:
                    return None, None
                offx, offz = _unit_offsets(par, u)
                cpx = offx + lk.px
                cpz = offz + lk.pz
                # world paw jacobian wrt theta
                a11 = c * lk.j11 - s * lk.j21
                a12 = c * lk.j12 - s * lk.j22
                a21 = s * lk.j11 + c * lk.j21
                a22 = s * lk.j12 + c * lk.j22
                det = a11 * a22 - a12 * a21
                if abs(det) < 1e-12:
                    return None, None
                inv = 1.0 / det
                # columns of -J_body: paw_w partials wrt (xb, zb, phi)
                bcol = (
                    (1.0, 0.0),
                    (0.0, 1.0),
                    (-s * cpx - c * cpz, c * cpx - s * cpz),
                )
                for col in range(3):
                    rx, rz = bcol[col]
                    G[ju, col] = -inv * (a22 * rx - a12 * rz)
                    G[ju + 1, col] = -inv * (-a21 * rx + a11 * rz)
            else:
                G[ju, iq] = 1.0
                G[ju + 1, iq + 1] = 1.0
                iq += 2
        return Qf, G

    # -- generalized forces ----------------------------------------------

    def _forces(self, Qf, Qdf, integ, refs, aux: _Aux):
        par = self.par
        ws = self.ws
        n = par[P_LEGS_PER_UNIT]
        Qgen = np.zeros(7)
        g = par[P_G]
        for k in range(N_PARTS):
            mgz = ws.mass[k] * g
            Qgen -= mgz * ws.jac[k, 1]
        kspring = par[P_KSPRING] * n
        d0 = par[P_D0]
        for u in (0, 1):
            ext = ws.spring_len[u] - d0
            aux.spring_ext[u] = max(0.0, ext)
            if ext > 0.0:
                f = -kspring * ext
                Qgen[3 + 2 * u] += f * ws.spring_dL[u, 0]
                Qgen[4 + 2 * u] += f * ws.spring_dL[u, 1]
        wdot = 0.0
        ddot = 0.0
        bv = par[P_BVISC]
        for ch in range(4):
            th = Qf[3 + ch]
            om = Qdf[3 + ch]
            tau = _pid_raw(par, refs[ch], th, integ[ch], om)
            aux.taus[ch] = tau
            tau_stop, pdiss = _stop_torque(par, th, om)
            Qgen[3 + ch] += n * (tau + tau_stop)
            wdot += n * (tau + bv * om) * om
            ddot += n * (bv * om * om + pdiss)
        return Qgen, wdot, ddot

    def _bias(self, Qf, Qdf):
        """Velocity-product generalized force via directional differencing."""
        speed = float(np.max(np.abs(Qdf)))
        if speed < 1e-14:
            return np.zeros(7)
        h = _FD_STEP / speed
        okp = planar_parts(self.par, Qf + h * Qdf, self.ws_p)
        okm = planar_parts(self.par, Qf - h * Qdf, self.ws_m)
        if not (okp and okm):
            raise IntegrationDivergedError("kinematics left the workspace")
        bias = np.zeros(7)
        inv2h = 1.0 / (2.0 * h)
        for k in range(N_PARTS):
            vp = self.ws_p.jac[k] @ Qdf
            vm = self.ws_m.jac[k] @ Qdf
            adot = (vp - vm) * inv2h
            bias += self.ws.mass[k] * (self.ws.jac[k].T @ adot)
            if self.ws.inertia[k] != 0.0:
                wp = self.ws_p.ang[k] @ Qdf
                wm = self.ws_m.ang[k] @ Qdf
                bias += self.ws.inertia[k] * ((wp - wm) * inv2h) * self.ws.ang[k]
        return bias

    # -- derivative -------------------------------------------------------

    def deriv(self, t: float, y: np.ndarray, refs: np.ndarray, aux: _Aux):
        nq = self.nq
        q = y[0:nq]
        qd = y[nq : 2 * nq]
        integ = y[2 * nq : 2 * nq + 4]
        Qf, G = self.embed(q)
        if Qf is None:
            raise IntegrationDivergedError("pinned leg target unreachable")
        if not planar_parts(self.par, Qf, self.ws):
            raise IntegrationDivergedError("kinematics left the workspace")
        if self.mask == 0:
            Qdf = qd
        else:
            Qdf = G @ qd
        M = planar_mass_matrix(self.ws)
        bias = self._bias(Qf, Qdf)
        Qgen, wdot, ddot = self._forces(Qf, Qdf, integ, refs, aux)

        if self.mask == 0:
            qdd = _chol_solve(M, Qgen - bias)
            aux.N[0] = aux.N[1] = aux.T[0] = aux.T[1] = 0.0
            aux.n_total = 0.0
            Qddf = qdd
        else:
            Gdot_qd = self._gamma_dot_qd(q, qd)
            rhs = G.T @ (Qgen - bias - M @ Gdot_qd)
            Mr = G.T @ M @ G
            qdd = _chol_solve(Mr, rhs)
            Qddf = G @ qdd + Gdot_qd
            resid = M @ Qddf + bias - Qgen
            aux.n_total = 0.0
            for u in (0, 1):
                if not self.mask & (1 << u):
                    aux.N[u] = aux.T[u] = 0.0
                    continue
                ju = 3 + 2 * u
                a = self.ws.jpw_th[u]
                det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
                if abs(det) < 1e-12:
                    raise SingularError("paw Jacobian singular in stance")
                r0 = resid[ju]
                r1 = resid[ju + 1]
                # solve a^T lambda = r for the ground force on the paw
                lam_x = (a[1, 1] * r0 - a[1, 0] * r1) / det
                lam_z = (-a[0, 1] * r0 + a[0, 0] * r1) / det
                aux.T[u] = lam_x
                aux.N[u] = lam_z
                aux.n_total += lam_z

        ydot = np.empty_like(y)
        ydot[0:nq] = qd
        ydot[nq : 2 * nq] = qdd
        for ch in range(4):
            ydot[2 * nq + ch] = refs[ch] - Qf[3 + ch]
        ydot[2 * nq + 4] = wdot
        ydot[2 * nq + 5] = ddot
        ydot[2 * nq + 6] = 0.0  # impact losses change only at events
        return ydot

    def _gamma_dot_qd(self, q, qd):
        speed = float(np.max(np.abs(qd)))
        if speed < 1e-14:
            return np.zeros(7)
        h = _FD_STEP / speed
        _, Gp = self.embed(q + h * qd)
        _, Gm = self.embed(q - h * qd)
        if Gp is None or Gm is None:
            raise IntegrationDivergedError("pinned leg target unreachable")
        return (Gp @ qd - Gm @ qd) / (2.0 * h)

    # -- snapshot conversion ----------------------------------------------

    def reduce_state(self, snap: np.ndarray) -> np.ndarray:
        """Reduced integration vector from a full snapshot."""
        nq = self.nq
        y = np.zeros(self.ny)
        y[0:3] = snap[SNAP_Q : SNAP_Q + 3]
        y[nq : nq + 3] = snap[SNAP_QD : SNAP_QD + 3]
        iq = 3
        for u in (0, 1):
            if not self.mask & (1 << u):
                ju = 3 + 2 * u
                y[iq] = snap[SNAP_Q + ju]
                y[iq + 1] = snap[SNAP_Q + ju + 1]
                y[nq + iq] = snap[SNAP_QD + ju]
                y[nq + iq + 1] = snap[SNAP_QD + ju + 1]
                iq += 2
        y[2 * nq : 2 * nq + 4] = snap[SNAP_INTEG : SNAP_INTEG + 4]
        y[2 * nq + 4] = snap[SNAP_WORK]
        y[2 * nq + 5] = snap[SNAP_DISS]
        y[2 * nq + 6] = snap[SNAP_IMPACT]
        return y

    def full_state(self, y: np.ndarray) -> np.ndarray:
        """Full snapshot from the reduced integration vector."""
        nq = self.nq
        q = y[0:nq]
        qd = y[nq : 2 * nq]
        Qf, G = self.embed(q)
        if Qf is None:
            raise IntegrationDivergedError("pinned leg target unreachable")
        snap = np.zeros(NSNAP)
        snap[SNAP_Q : SNAP_Q + 7] = Qf
        snap[SNAP_QD : SNAP_QD + 7] = qd if self.mask == 0 else G @ qd
        snap[SNAP_INTEG : SNAP_INTEG + 4] = y[2 * nq : 2 * nq + 4]
        snap[SNAP_WORK] = y[2 * nq + 4]
        snap[SNAP_DISS] = y[2 * nq + 5]
        snap[SNAP_IMPACT] = y[2 * nq + 6]
        return snap


def rk4_step(dyn: PlanarDynamics, t, y, h, refs_fn, aux: _Aux):
    """One classical RK4 step; aux reflects the first-stage evaluation."""
    r1 = refs_fn(t)
    k1 = dyn.deriv(t, y, r1, aux)
    rmid = refs_fn(t + 0.5 * h)
    scratch = _Aux()
    k2 = dyn.deriv(t + 0.5 * h, y + (0.5 * h) * k1, rmid, scratch)
    k3 = dyn.deriv(t + 0.5 * h, y + (0.5 * h) * k2, rmid, scratch)
    k4 = dyn.deriv(t + h, y + h * k3, refs_fn(t + h), scratch)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def pin_impact(par: np.ndarray, snap: np.ndarray, mask: int, pins: np.ndarray):
    """Inelastic sticky-impact velocity projection for the active pin set.

    Returns the updated snapshot; the kinetic energy lost to the impact is
    added to the impact accumulator.
    """
    ws = PlanarWorkspace()
    Qf = snap[SNAP_Q : SNAP_Q + 7].copy()
    Qdf = snap[SNAP_QD : SNAP_QD + 7].copy()
    if not planar_parts(par, Qf, ws):
        raise IntegrationDivergedError("impact pose outside the workspace")
    M = planar_mass_matrix(ws)
    rows = []
    for u in (0, 1):
        if mask & (1 << u):
            base = 1 + 5 * u
            rows.append(ws.jac[base + 4, 0])
            rows.append(ws.jac[base + 4, 1])
    if not rows:
        return snap
    A = np.vstack(rows)
    Minv_At = np.column_stack([_chol_solve(M, A[i]) for i in range(A.shape[0])])
    S = A @ Minv_At
    lam = np.linalg.solve(S, -(A @ Qdf))
    dQd = Minv_At @ lam
    ke_before = 0.5 * Qdf @ M @ Qdf
    Qdf_new = Qdf + dQd
    ke_after = 0.5 * Qdf_new @ M @ Qdf_new
    out = snap.copy()
    out[SNAP_QD : SNAP_QD + 7] = Qdf_new
    out[SNAP_IMPACT] += ke_before - ke_after
    return out


def sample_row(par, snap, t, aux: _Aux, phase: int, out: np.ndarray):
    """Fill one trajectory sample row from a full snapshot."""
    ws = PlanarWorkspace()
    Qf = snap[SNAP_Q : SNAP_Q + 7]
    Qdf = snap[SNAP_QD : SNAP_QD + 7]
    if not planar_parts(par, Qf, ws):
        raise IntegrationDivergedError("sample pose outside the workspace")
    out[S_T] = t
    out[S_XB] = Qf[0]
    out[S_ZB] = Qf[1]
    out[S_PHI] = Qf[2]
    out[S_TH : S_TH + 4] = Qf[3:7]
    out[S_THD : S_THD + 4] = Qdf[3:7]
    out[S_NF] = aux.N[0]
    out[S_TF] = aux.T[0]
    out[S_NR] = aux.N[1]
    out[S_TR] = aux.T[1]
    mtot = ws.mass.sum()
    com = ws.mass @ ws.pos / mtot
    vel = np.zeros(2)
    ke = 0.0
    for k in range(N_PARTS):
        v = ws.jac[k] @ Qdf
        vel += ws.mass[k] * v
        ke += 0.5 * ws.mass[k] * float(v @ v)
        if ws.inertia[k] != 0.0:
            w = float(ws.ang[k] @ Qdf)
            ke += 0.5 * ws.inertia[k] * w * w
    vel /= mtot
    out[S_COMX] = com[0]
    out[S_COMZ] = com[1]
    out[S_COMVX] = vel[0]
    out[S_COMVZ] = vel[1]
    out[S_WORK] = snap[SNAP_WORK]
    out[S_DISS] = snap[SNAP_DISS]
    ks = par[P_KSPRING] * par[P_LEGS_PER_UNIT]
    vs = 0.0
    for u in (0, 1):
        ext = max(0.0, ws.spring_len[u] - par[P_D0])
        vs += 0.5 * ks * ext * ext
    for ch in range(4):
        vs += par[P_LEGS_PER_UNIT] * stop_potential(par, Qf[3 + ch])
    out[S_VSPRING] = vs
    out[S_KE] = ke
    out[S_PE] = par[P_G] * float(ws.mass @ ws.pos[:, 1])
    out[S_PHASE] = phase


def com_state(par, snap):
    """(com, com velocity, total mass) of a full snapshot."""
    ws = PlanarWorkspace()
    Qf = snap[SNAP_Q : SNAP_Q + 7]
    Qdf = snap[SNAP_QD : SNAP_QD + 7]
    if not planar_parts(par, Qf, ws):
        raise IntegrationDivergedError("pose outside the workspace")
    mtot = ws.mass.sum()
    com = ws.mass @ ws.pos / mtot
    mom = np.zeros(2)
    for k in range(N_PARTS):
        mom += ws.mass[k] * (ws.jac[k] @ Qdf)
    return com, mom / mtot, mtot


def angular_momentum_about_com(par, snap):
    """Planar angular momentum of the full system about its COM."""
    ws = PlanarWorkspace()
    Qf = snap[SNAP_Q : SNAP_Q + 7]
    Qdf = snap[SNAP_QD : SNAP_QD + 7]
    if not planar_parts(par, Qf, ws):
        raise IntegrationDivergedError("pose outside the workspace")
    mtot = ws.mass.sum()
    com = ws.mass @ ws.pos / mtot
    vcom = np.zeros(2)
    for k in range(N_PARTS):
        vcom += ws.mass[k] * (ws.jac[k] @ Qdf)
    vcom /= mtot
    L = 0.0
    for k in range(N_PARTS):
        r = ws.pos[k] - com
        v = ws.jac[k] @ Qdf - vcom
        L += ws.mass[k] * (r[0] * v[1] - r[1] * v[0])
        if ws.inertia[k] != 0.0:
            L += ws.inertia[k] * float(ws.ang[k] @ Qdf)
    return L


# ---------------------------------------------------------------------------
# Vertical (one-dimensional) mode: the body moves along z only and the four
# legs act as one synchronized unit.
# ---------------------------------------------------------------------------

NV_PARTS = 6  # body + hip1 + hip2 + calf3 + calf4 + paw


class VerticalWorkspace:
    def __init__(self):
        self.pos = np.zeros((NV_PARTS, 2))
        self.jac = np.zeros((NV_PARTS, 2, 2))  # columns: (zb, theta)
        self.ang = np.zeros((NV_PARTS, 2))
        self.mass = np.zeros(NV_PARTS)
        self.inertia = np.zeros(NV_PARTS)
        self.spring_len = 0.0
        self.spring_dL = 0.0
        self.paw_z = 0.0
        self.jpaw_z = 0.0  # d(paw_z)/d(theta)


def vertical_parts(par, zb, theta, ws: VerticalWorkspace) -> bool:
    """Part table of the aggregated vertical model at (zb, theta)."""
    lk = leg_kin(par, theta, theta)
    if not lk.ok:
        return False
    n = par[P_LEGS_PER_UNIT]
    offz = -par[P_COM_OFF]
    l0 = par[P_L0]
    pos = ws.pos
    jac = ws.jac
    ang = ws.ang
    jac[:] = 0.0
    ang[:] = 0.0

    pos[0, 0] = 0.0
    pos[0, 1] = zb
    jac[0, 1, 0] = 1.0
    ws.mass[0] = par[P_M_BODY]
    ws.inertia[0] = 0.0  # body cannot pitch in this mode

    def place(idx, cx, cz, dx, dz, m, inr, da):
        pos[idx, 0] = cx
        pos[idx, 1] = zb + offz + cz
        jac[idx, 0, 1] = dx
        jac[idx, 1, 0] = 1.0
        jac[idx, 1, 1] = dz
        ws.mass[idx] = m
        ws.inertia[idx] = inr
        ang[idx, 1] = da

    l3 = par[P_L3]
    l4 = par[P_L4]
    # both motor angles move together: derivative columns add
    place(
        1, 0.5 * lk.k1x, 0.5 * lk.k1z, 0.5 * lk.dk1x, 0.5 * lk.dk1z,
        n * par[P_M_HIP1], n * par[P_M_HIP1] * par[P_L1] ** 2 / 12.0, 1.0,
    )
    place(
        2, 0.5 * (l0 + lk.k2x), 0.5 * lk.k2z, 0.5 * lk.dk2x, 0.5 * lk.dk2z,
        n * par[P_M_HIP2], n * par[P_M_HIP2] * par[P_L2] ** 2 / 12.0, 1.0,
    )
    jx = lk.j11 + lk.j12
    jz = lk.j21 + lk.j22
    r1x = lk.px - lk.k1x
    r1z = lk.pz - lk.k1z
    r2x = lk.px - lk.k2x
    r2z = lk.pz - lk.k2z
    da3 = (r1x * (jz - lk.dk1z) - r1z * (jx - lk.dk1x)) / (l3 * l3)
    da4 = (r2x * (jz - lk.dk2z) - r2z * (jx - lk.dk2x)) / (l4 * l4)
    place(
        3, 0.5 * (lk.k1x + lk.px), 0.5 * (lk.k1z + lk.pz),
        0.5 * (lk.dk1x + jx), 0.5 * (lk.dk1z + jz),
        n * par[P_M_CALF3], n * par[P_M_CALF3] * l3 * l3 / 12.0, da3,
    )
    place(
        4, 0.5 * (lk.k2x + lk.px), 0.5 * (lk.k2z + lk.pz),
        0.5 * (lk.dk2x + jx), 0.5 * (lk.dk2z + jz),
        n * par[P_M_CALF4], n * par[P_M_CALF4] * l4 * l4 / 12.0, da4,
    )
    place(5, lk.px, lk.pz, jx, jz, n * par[P_M_PAW], 0.0, 0.0)

    ws.spring_len = lk.length
    ws.spring_dL = lk.dL1 + lk.dL2
    ws.paw_z = zb + offz + lk.pz
    ws.jpaw_z = jz
    return True


class VerticalDynamics:
    """Vertical-mode derivative evaluator.

    In stance the single coordinate is the motor angle; in flight the body
    height joins it.
    """

    def __init__(self, par: np.ndarray, stance: bool, paw_ground_z: float = 0.0):
        self.par = par
        self.stance = stance
        self.paw_z = paw_ground_z
        self.nq = 1 if stance else 2
        self.ws = VerticalWorkspace()
        self.ws_p = VerticalWorkspace()
        self.ws_m = VerticalWorkspace()
        self.ny = 2 * self.nq + 1 + 2  # q, qd, integ, work, diss

    def _zb_of_theta(self, theta):
        lk = leg_kin(self.par, theta, theta)
        if not lk.ok:
            return None
        return self.paw_z - lk.pz + self.par[P_COM_OFF], -(lk.j21 + lk.j22)

    def deriv(self, t, y, ref, aux: _Aux):
        par = self.par
        nq = self.nq
        if self.stance:
            theta = y[0]
            thd = y[1]
            zpair = self._zb_of_theta(theta)
            if zpair is None:
                raise IntegrationDivergedError("stance pose left the workspace")
            zb, dzb = zpair
            zbd = dzb * thd
        else:
            zb, theta = y[0], y[1]
            zbd, thd = y[2], y[3]
        integ = y[2 * nq]
        if not vertical_parts(par, zb, theta, self.ws):
            raise IntegrationDivergedError("pose left the workspace")
        ws = self.ws
        M2 = np.zeros((2, 2))
        for k in range(NV_PARTS):
            J = ws.jac[k]
            M2 += ws.mass[k] * (J.T @ J)
            if ws.inertia[k] != 0.0:
                a = ws.ang[k]
                M2 += ws.inertia[k] * np.outer(a, a)
        Qd2 = np.array([zbd, thd])
        bias = self._bias(zb, theta, Qd2)
        n = par[P_LEGS_PER_UNIT]
        Qgen = np.zeros(2)
        g = par[P_G]
        for k in range(NV_PARTS):
            Qgen -= ws.mass[k] * g * ws.jac[k, 1]
        ext = ws.spring_len - par[P_D0]
        aux.spring_ext[0] = max(0.0, ext)
        if ext > 0.0:
            Qgen[1] -= n * par[P_KSPRING] * ext * ws.spring_dL
        tau = _pid_raw(par, ref, theta, integ, thd)
        aux.taus[0] = tau
        tau_stop, pdiss = _stop_torque(par, theta, thd)
        Qgen[1] += 2.0 * n * (tau + tau_stop)
        bv = par[P_BVISC]
        wdot = 2.0 * n * (tau + bv * thd) * thd
        ddot = 2.0 * n * (bv * thd * thd + pdiss)

        ydot = np.empty_like(y)
        if self.stance:
            G = np.array([dzb, 1.0])
            Gdot_qd = self._gamma_dot_qd_stance(theta, thd)
            mr = float(G @ M2 @ G)
            rhs = float(G @ (Qgen - bias - M2 @ Gdot_qd))
            thdd = rhs / mr
            Qdd2 = G * thdd + Gdot_qd
            resid = M2 @ Qdd2 + bias - Qgen
            aux.N[0] = resid[0]
            aux.T[0] = 0.0
            aux.n_total = resid[0]
            ydot[0] = thd
            ydot[1] = thdd
        else:
            Qdd2 = _chol_solve(M2, Qgen - bias)
            aux.N[0] = aux.T[0] = aux.n_total = 0.0
            ydot[0] = zbd
            ydot[1] = thd
            ydot[2] = Qdd2[0]
            ydot[3] = Qdd2[1]
        ydot[2 * nq] = ref - theta
        ydot[2 * nq + 1] = wdot
        ydot[2 * nq + 2] = ddot
        return ydot

    def _bias(self, zb, theta, Qd2):
        speed = float(np.max(np.abs(Qd2)))
        if speed < 1e-14:
            return np.zeros(2)
        h = _FD_STEP / speed
        okp = vertical_parts(self.par, zb + h * Qd2[0], theta + h * Qd2[1], self.ws_p)
        okm = vertical_parts(self.par, zb - h * Qd2[0], theta - h * Qd2[1], self.ws_m)
        if not (okp and okm):
            raise IntegrationDivergedError("pose left the workspace")
        bias = np.zeros(2)
        inv2h = 1.0 / (2.0 * h)
        for k in range(NV_PARTS):
            vp = self.ws_p.jac[k] @ Qd2
            vm = self.ws_m.jac[k] @ Qd2
            adot = (vp - vm) * inv2h
            bias += self.ws.mass[k] * (self.ws.jac[k].T @ adot)
            if self.ws.inertia[k] != 0.0:
                wp = self.ws_p.ang[k] @ Qd2
                wm = self.ws_m.ang[k] @ Qd2
                bias += self.ws.inertia[k] * ((wp - wm) * inv2h) * self.ws.ang[k]
        return bias

    def _gamma_dot_qd_stance(self, theta, thd):
        if abs(thd) < 1e-14:
            return np.zeros(2)
        h = _FD_STEP / abs(thd)
        zp = self._zb_of_theta(theta + h * thd)
        zm = self._zb_of_theta(theta - h * thd)
        if zp is None or zm is None:
            raise IntegrationDivergedError("stance pose left the workspace")
        # d(dzb)/dt * thd = dzb'(theta) * thd^2
        return np.array([(zp[1] - zm[1]) * thd / (2.0 * h), 0.0])

    def com_state(self, zb, theta, zbd, thd):
        if not vertical_parts(self.par, zb, theta, self.ws):
            raise IntegrationDivergedError("pose left the workspace")
        ws = self.ws
        mtot = ws.mass.sum()
        com_z = float(ws.mass @ ws.pos[:, 1]) / mtot
        Qd2 = np.array([zbd, thd])
        mom_z = 0.0
        for k in range(NV_PARTS):
            mom_z += ws.mass[k] * float(ws.jac[k, 1] @ Qd2)
        return com_z, mom_z / mtot, mtot


def vertical_rk4(dyn: VerticalDynamics, t, y, h, ref_fn, aux: _Aux):
    r1 = ref_fn(t)
    k1 = dyn.deriv(t, y, r1, aux)
    rm = ref_fn(t + 0.5 * h)
    scratch = _Aux()
    k2 = dyn.deriv(t + 0.5 * h, y + (0.5 * h) * k1, rm, scratch)
    k3 = dyn.deriv(t + 0.5 * h, y + (0.5 * h) * k2, rm, scratch)
    k4 = dyn.deriv(t + h, y + h * k3, ref_fn(t + h), scratch)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# ---------------------------------------------------------------------------
# Public single-step API
# ---------------------------------------------------------------------------


@dataclass
class DynState:
    """Full dynamic state of the planar robot plus contact bookkeeping."""

    phase: int = PHASE_STANCE
    t: float = 0.0
    snapshot: np.ndarray = field(default_factory=lambda: np.zeros(NSNAP))
    pins: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    mask: int = 3
    normal: tuple[float, float] = (0.0, 0.0)
    tangential: tuple[float, float] = (0.0, 0.0)
    slipped: bool = False

    def copy(self) -> "DynState":
        return replace(
            self, snapshot=self.snapshot.copy(), pins=self.pins.copy()
        )


def standing_state(
    model: RobotModel, params: SimParams, theta_deg: float | None = None
) -> DynState:
    """Both paws on the ground at a symmetric pose, at rest."""
    theta = math.radians(
        model.geom.theta_rest if theta_deg is None else theta_deg
    )
    par = pack_params(model, MotorModel(), params, 2.0)
    lk = leg_kin(par, theta, theta)
    if not lk.ok:
        raise UnreachableError("standing pose not assemblable")
    zb = -lk.pz + model.com_offset
    snap = np.zeros(NSNAP)
    snap[SNAP_Q + 1] = zb
    for u in (0, 1):
        snap[SNAP_Q + 3 + 2 * u] = theta
        snap[SNAP_Q + 4 + 2 * u] = theta
    st = DynState(phase=PHASE_STANCE, snapshot=snap, mask=3)
    for u in (0, 1):
        offx, _ = _unit_offsets(par, u)
        st.pins[u, 0] = offx + lk.px
        st.pins[u, 1] = 0.0
    return st


def _refs_array(refs) -> np.ndarray:
    arr = np.asarray(refs, dtype=float).ravel()
    if arr.size == 1:
        arr = np.full(4, arr[0])
    if arr.size != 4:
        raise ValueError("refs must give one target or four")
    return arr


def step_stance(
    model: RobotModel,
    motors: MotorModel,
    params: SimParams,
    state: DynState,
    refs,
) -> DynState:
    """Advance one stance step with pinned paws; lift off at N <= 0.

    ``refs`` are motor target angles in radians (scalar or one per channel).
    The liftoff event is located by bisection to the event tolerance and the
    returned state is at the event time with phase set to flight.
    """
    if state.phase != PHASE_STANCE:
        raise ValueError("step_stance requires a stance-phase state")
    par = pack_params(model, motors, params, 2.0)
    dyn = PlanarDynamics(par, state.mask, state.pins)
    refs_v = _refs_array(refs)
    refs_fn = lambda _t: refs_v
    y0 = dyn.reduce_state(state.snapshot)
    aux = _Aux()
    dyn.deriv(state.t, y0, refs_v, aux)
    n0 = aux.n_total
    h = params.dt
    y1 = rk4_step(dyn, state.t, y0, h, refs_fn, aux)
    _check_finite(y1)
    aux1 = _Aux()
    dyn.deriv(state.t + h, y1, refs_v, aux1)
    out = state.copy()
    if aux1.n_total <= 0.0 < n0:
        t_ev, y_ev = _bisect_event(
            dyn,
            state.t,
            y0,
            h,
            refs_fn,
            lambda a: _n_total_at(dyn, state.t, y0, a * h, refs_fn),
            params.event_tol,
        )
        out.t = t_ev
        out.snapshot = dyn.full_state(y_ev)
        out.phase = PHASE_FLIGHT
        out.mask = 0
    else:
        out.t = state.t + h
        out.snapshot = dyn.full_state(y1)
    out.normal = (aux1.N[0], aux1.N[1])
    out.tangential = (aux1.T[0], aux1.T[1])
    out.slipped = state.slipped or _cone_violated(par, aux1)
    return out


def _n_total_at(dyn, t0, y0, dt_part, refs_fn):
    if dt_part <= 0.0:
        aux = _Aux()
        dyn.deriv(t0, y0, refs_fn(t0), aux)
        return aux.n_total
    aux = _Aux()
    y = rk4_step(dyn, t0, y0, dt_part, refs_fn, aux)
    aux2 = _Aux()
    dyn.deriv(t0 + dt_part, y, refs_fn(t0 + dt_part), aux2)
    return aux2.n_total


def _bisect_event(dyn, t0, y0, h, refs_fn, g_of_frac, tol):
    lo, hi = 0.0, 1.0
    while (hi - lo) * h > tol:
        mid = 0.5 * (lo + hi)
        if g_of_frac(mid) <= 0.0:
            hi = mid
        else:
            lo = mid
    aux = _Aux()
    y_ev = rk4_step(dyn, t0, y0, hi * h, refs_fn, aux)
    return t0 + hi * h, y_ev


def _cone_violated(par, aux: _Aux) -> bool:
    mu = par[P_MU]
    floor = par[P_SLIP_N_FLOOR]
    for u in (0, 1):
        if aux.N[u] > floor and abs(aux.T[u]) > mu * aux.N[u]:
            return True
        if aux.N[u] < -floor:
            return True
    return False


def step_flight(
    model: RobotModel,
    motors: MotorModel,
    params: SimParams,
    state: DynState,
    refs,
) -> DynState:
    """Advance one flight step; touchdown pins the paw that strikes ground."""
    if state.phase != PHASE_FLIGHT:
        raise ValueError("step_flight requires a flight-phase state")
    par = pack_params(model, motors, params, 2.0)
    dyn = PlanarDynamics(par, 0, state.pins)
    refs_v = _refs_array(refs)
    refs_fn = lambda _t: refs_v
    y0 = dyn.reduce_state(state.snapshot)
    aux = _Aux()
    h = params.dt
    y1 = rk4_step(dyn, state.t, y0, h, refs_fn, aux)
    _check_finite(y1)
    out = state.copy()
    pz0 = _paw_heights(par, dyn.full_state(y0))
    pz1 = _paw_heights(par, dyn.full_state(y1))
    hit = [u for u in (0, 1) if pz1[u] <= 0.0 < pz0[u]]
    if hit:
        u_first = min(
            hit, key=lambda u: pz0[u] / max(pz0[u] - pz1[u], 1e-300)
        )
        t_ev, y_ev = _bisect_event(
            dyn,
            state.t,
            y0,
            h,
            refs_fn,
            lambda a: _paw_height_at(dyn, par, state.t, y0, a * h, refs_fn, u_first),
            params.event_tol,
        )
        snap = dyn.full_state(y_ev)
        new_mask = state.mask | (1 << u_first)
        pins = state.pins.copy()
        ws = PlanarWorkspace()
        planar_parts(par, snap[SNAP_Q : SNAP_Q + 7], ws)
        pins[u_first, 0] = ws.paw_w[u_first, 0]
        pins[u_first, 1] = ws.paw_w[u_first, 1]
        snap = pin_impact(par, snap, new_mask, pins)
        out.t = t_ev
        out.snapshot = snap
        out.mask = new_mask
        out.pins = pins
        out.phase = PHASE_STANCE
    else:
        out.t = state.t + h
        out.snapshot = dyn.full_state(y1)
        out.mask = 0
    out.normal = (0.0, 0.0)
    out.tangential = (0.0, 0.0)
    return out


def _paw_heights(par, snap):
    ws = PlanarWorkspace()
    if not planar_parts(par, snap[SNAP_Q : SNAP_Q + 7], ws):
        raise IntegrationDivergedError("pose outside the workspace")
    return ws.paw_w[0, 1], ws.paw_w[1, 1]


def _paw_height_at(dyn, par, t0, y0, dt_part, refs_fn, u):
    if dt_part <= 0.0:
        return _paw_heights(par, dyn.full_state(y0))[u]
    aux = _Aux()
    y = rk4_step(dyn, t0, y0, dt_part, refs_fn, aux)
    return _paw_heights(par, dyn.full_state(y))[u]


def detect_slip(state: DynState, mu: float | None = None) -> bool:
    """True when the sticky-contact assumption was violated during stance."""
    if mu is None:
        return state.slipped
    floor = 0.0
    for u in (0, 1):
        n = state.normal[u]
        t = state.tangential[u]
        if n > floor and abs(t) > mu * n:
            return True
    return state.slipped


def mass_matrix(model: RobotModel, config: LegConfig) -> np.ndarray:
    """Planar flight-mode mass matrix with all legs at the given pose."""
    par = pack_params(model, MotorModel(), SimParams(), 2.0)
    ws = PlanarWorkspace()
    Qf = np.zeros(7)
    Qf[1] = 1.0  # arbitrary height; the matrix depends only on joint angles
    t1 = math.radians(config.theta1)
    t2 = math.radians(config.theta2)
    Qf[3], Qf[4], Qf[5], Qf[6] = t1, t2, t1, t2
    if not planar_parts(par, Qf, ws):
        raise SingularError("configuration outside the workspace")
    return planar_mass_matrix(ws)


def kinetic_energy(model: RobotModel, config: LegConfig, Qdf) -> float:
    """Direct part-by-part kinetic energy for the mass-matrix pose."""
    M = mass_matrix(model, config)
    v = np.asarray(Qdf, dtype=float)
    return 0.5 * float(v @ M @ v)


def _check_finite(y: np.ndarray):
    if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > _DIVERGE_LIMIT:
        raise IntegrationDivergedError("state diverged")
