# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled simulation engine: planar stance/flight segments, the
one-dimensional jump protocol, and the free-floating attitude model.

Mirrors _engine_py numerics exactly (same part tables, finite-difference
conventions, event bisection and sampling raster); the pure-Python module
is the readable reference.
"""

from libc.math cimport atan2, ceil, cos, fabs, floor, hypot, isfinite, sin, sqrt

cdef extern from "math.h":
    double acos(double) nogil
    double asin(double) nogil

cdef inline double _acos(double x) nogil:
    return acos(x)

cdef inline double _asin(double x) nogil:
    return asin(x)

import numpy as np

COMPILED = True
LAYOUT_VERSION = 3

# --- parameter layout (mirrors model.py) -----------------------------------
cdef enum:
    P_G = 0
    P_DT = 1
    P_MU = 2
    P_EVENT_TOL = 3
    P_L0 = 4
    P_L1 = 5
    P_L2 = 6
    P_L3 = 7
    P_L4 = 8
    P_KSPRING = 9
    P_D0 = 10
    P_M_HIP1 = 11
    P_M_HIP2 = 12
    P_M_CALF3 = 13
    P_M_CALF4 = 14
    P_M_PAW = 15
    P_M_BODY = 16
    P_I_BODY = 17
    P_COM_OFF = 18
    P_HIP_DX = 19
    P_KP = 20
    P_KI = 21
    P_KD = 22
    P_BVISC = 23
    P_TAU_SAT = 24
    P_OMEGA_MAX = 25
    P_LEGS_PER_UNIT = 26
    P_SLIP_N_FLOOR = 27
    P_THETA_MIN = 28
    P_THETA_MAX = 29
    P_KSTOP = 30
    P_CSTOP = 31

cdef enum:
    F_M_BODY = 0
    F_IBX = 1
    F_M_HIP1 = 9
    F_M_HIP2 = 10
    F_M_CALF3 = 11
    F_M_CALF4 = 12
    F_M_PAW = 13
    F_HIPZ = 14
    F_HIP_XY = 15
    F_DT = 23

cdef enum:
    EV_TIME = 0
    EV_LIFTOFF = 1
    EV_TOUCHDOWN_FRONT = 2
    EV_TOUCHDOWN_REAR = 3
    EV_SETTLED = 4
    EV_DIVERGED = 5
    EV_TOPPLED = 6

cdef enum:
    S_T = 0
    S_XB = 1
    S_ZB = 2
    S_PHI = 3
    S_TH = 4
    S_THD = 8
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

DEF NSCOL = 26
DEF NSNAP = 21
DEF NPARTS = 11
DEF NVPARTS = 6
DEF NACOL = 12
DEF FD_STEP = 1e-6
DEF DIVERGE_LIMIT = 1e6
DEF TOPPLE_LIMIT = 1.0471975511965976  # 60 deg

DEF PHASE_STANCE = 0
DEF PHASE_FLIGHT = 1

DEF VJ_OK = 0
DEF VJ_DIVERGED = 1
DEF FF_OK = 0
DEF FF_JOINT_LIMIT = 1


# ---------------------------------------------------------------------------
# leg kinematics
# ---------------------------------------------------------------------------

cdef struct LegKin:
    int ok
    double k1x, k1z, k2x, k2z, px, pz
    double dk1x, dk1z, dk2x, dk2z
    double j11, j12, j21, j22
    double length, dL1, dL2


cdef int leg_kin_c(const double* par, double t1, double t2, LegKin* lk) nogil:
    cdef double l0 = par[P_L0], l1 = par[P_L1], l2 = par[P_L2]
    cdef double l3 = par[P_L3], l4 = par[P_L4]
    cdef double s1 = sin(t1), c1 = cos(t1), s2 = sin(t2), c2 = cos(t2)
    cdef double dx, dz, d2, d, a, h2, h, ux, uz, bx, bz
    cdef double plox, ploz, phix, phiz
    cdef double r1x, r1z, r2x, r2z, det, b11, b22, inv
    lk.ok = 0
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
    d = sqrt(d2)
    if d < 1e-12 or d < fabs(l3 - l4) or d > l3 + l4:
        return 0
    a = (l3 * l3 - l4 * l4 + d2) / (2.0 * d)
    h2 = l3 * l3 - a * a
    if h2 <= 1e-14:
        return 0
    h = sqrt(h2)
    ux = dx / d
    uz = dz / d
    bx = lk.k1x + a * ux
    bz = lk.k1z + a * uz
    plox = bx + h * uz
    ploz = bz - h * ux
    phix = bx - h * uz
    phiz = bz + h * ux
    if ploz <= phiz:
        lk.px = plox
        lk.pz = ploz
    else:
        lk.px = phix
        lk.pz = phiz
    r1x = lk.px - lk.k1x
    r1z = lk.pz - lk.k1z
    r2x = lk.px - lk.k2x
    r2z = lk.pz - lk.k2z
    det = r1x * r2z - r1z * r2x
    if fabs(det) < 1e-10:
        return 0
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
    lk.ok = 1
    return 1


cdef int leg_ik_c(const double* par, double px, double pz, double* t1, double* t2) nogil:
    cdef double vx, vz, d, gamma, ca
    # side 1
    vx = px
    vz = pz
    d = hypot(vx, vz)
    if d > par[P_L1] + par[P_L3] or d < fabs(par[P_L1] - par[P_L3]) or d < 1e-12:
        return 0
    gamma = atan2(-vx, -vz)
    ca = (par[P_L1] * par[P_L1] + d * d - par[P_L3] * par[P_L3]) / (2.0 * par[P_L1] * d)
    if ca > 1.0:
        ca = 1.0
    elif ca < -1.0:
        ca = -1.0
    t1[0] = gamma + _acos(ca)
    # side 2
    vx = px - par[P_L0]
    d = hypot(vx, vz)
    if d > par[P_L2] + par[P_L4] or d < fabs(par[P_L2] - par[P_L4]) or d < 1e-12:
        return 0
    gamma = atan2(vx, -vz)
    ca = (par[P_L2] * par[P_L2] + d * d - par[P_L4] * par[P_L4]) / (2.0 * par[P_L2] * d)
    if ca > 1.0:
        ca = 1.0
    elif ca < -1.0:
        ca = -1.0
    t2[0] = gamma + _acos(ca)
    return 1


# ---------------------------------------------------------------------------
# planar part table
# ---------------------------------------------------------------------------

cdef struct Parts:
    double pos[NPARTS][2]
    double jac[NPARTS][2][7]
    double ang[NPARTS][7]
    double mass[NPARTS]
    double inertia[NPARTS]
    double spring_len[2]
    double spring_dL[2][2]
    double paw_w[2][2]
    double jpw_th[2][2][2]
    double c_paw[2][2]


cdef inline void _unit_offsets(const double* par, int u, double* offx, double* offz) nogil:
    offx[0] = (par[P_HIP_DX] if u == 0 else -par[P_HIP_DX]) - 0.5 * par[P_L0]
    offz[0] = -par[P_COM_OFF]


cdef void _place(
    Parts* ws, int idx, int ju, double xb, double zb, double c, double s,
    double offx, double offz,
    double cx, double cz, double d1x, double d1z, double d2x, double d2z,
    double m, double inr, double da1, double da2,
) nogil:
    cdef double bx = offx + cx
    cdef double bz = offz + cz
    cdef int j
    ws.pos[idx][0] = xb + c * bx - s * bz
    ws.pos[idx][1] = zb + s * bx + c * bz
    for j in range(7):
        ws.jac[idx][0][j] = 0.0
        ws.jac[idx][1][j] = 0.0
        ws.ang[idx][j] = 0.0
    ws.jac[idx][0][0] = 1.0
    ws.jac[idx][1][1] = 1.0
    ws.jac[idx][0][2] = -s * bx - c * bz
    ws.jac[idx][1][2] = c * bx - s * bz
    ws.jac[idx][0][ju] = c * d1x - s * d1z
    ws.jac[idx][1][ju] = s * d1x + c * d1z
    ws.jac[idx][0][ju + 1] = c * d2x - s * d2z
    ws.jac[idx][1][ju + 1] = s * d2x + c * d2z
    ws.mass[idx] = m
    ws.inertia[idx] = inr
    ws.ang[idx][2] = 1.0
    ws.ang[idx][ju] = da1
    ws.ang[idx][ju + 1] = da2


cdef int planar_parts_c(const double* par, const double* Qf, Parts* ws) nogil:
    cdef double n = par[P_LEGS_PER_UNIT]
    cdef double xb = Qf[0], zb = Qf[1], phi = Qf[2]
    cdef double c = cos(phi), s = sin(phi)
    cdef double l0 = par[P_L0], l3 = par[P_L3], l4 = par[P_L4]
    cdef LegKin lk
    cdef int u, ju, base, j
    cdef double offx, offz
    cdef double r1x, r1z, r2x, r2z, da3_1, da3_2, da4_1, da4_2

    for j in range(7):
        ws.jac[0][0][j] = 0.0
        ws.jac[0][1][j] = 0.0
        ws.ang[0][j] = 0.0
    ws.pos[0][0] = xb
    ws.pos[0][1] = zb
    ws.jac[0][0][0] = 1.0
    ws.jac[0][1][1] = 1.0
    ws.ang[0][2] = 1.0
    ws.mass[0] = par[P_M_BODY]
    ws.inertia[0] = par[P_I_BODY]

    for u in range(2):
        if not leg_kin_c(par, Qf[3 + 2 * u], Qf[4 + 2 * u], &lk):
            return 0
        _unit_offsets(par, u, &offx, &offz)
        ju = 3 + 2 * u
        base = 1 + 5 * u
        _place(ws, base + 0, ju, xb, zb, c, s, offx, offz,
               0.5 * lk.k1x, 0.5 * lk.k1z,
               0.5 * lk.dk1x, 0.5 * lk.dk1z, 0.0, 0.0,
               n * par[P_M_HIP1], n * par[P_M_HIP1] * par[P_L1] * par[P_L1] / 12.0,
               1.0, 0.0)
        _place(ws, base + 1, ju, xb, zb, c, s, offx, offz,
               0.5 * (l0 + lk.k2x), 0.5 * lk.k2z,
               0.0, 0.0, 0.5 * lk.dk2x, 0.5 * lk.dk2z,
               n * par[P_M_HIP2], n * par[P_M_HIP2] * par[P_L2] * par[P_L2] / 12.0,
               0.0, 1.0)
        r1x = lk.px - lk.k1x
        r1z = lk.pz - lk.k1z
        r2x = lk.px - lk.k2x
        r2z = lk.pz - lk.k2z
        da3_1 = (r1x * (lk.j21 - lk.dk1z) - r1z * (lk.j11 - lk.dk1x)) / (l3 * l3)
        da3_2 = (r1x * lk.j22 - r1z * lk.j12) / (l3 * l3)
        da4_1 = (r2x * lk.j21 - r2z * lk.j11) / (l4 * l4)
        da4_2 = (r2x * (lk.j22 - lk.dk2z) - r2z * (lk.j12 - lk.dk2x)) / (l4 * l4)
        _place(ws, base + 2, ju, xb, zb, c, s, offx, offz,
               0.5 * (lk.k1x + lk.px), 0.5 * (lk.k1z + lk.pz),
               0.5 * (lk.dk1x + lk.j11), 0.5 * (lk.dk1z + lk.j21),
               0.5 * lk.j12, 0.5 * lk.j22,
               n * par[P_M_CALF3], n * par[P_M_CALF3] * l3 * l3 / 12.0,
               da3_1, da3_2)
        _place(ws, base + 3, ju, xb, zb, c, s, offx, offz,
               0.5 * (lk.k2x + lk.px), 0.5 * (lk.k2z + lk.pz),
               0.5 * lk.j11, 0.5 * lk.j21,
               0.5 * (lk.dk2x + lk.j12), 0.5 * (lk.dk2z + lk.j22),
               n * par[P_M_CALF4], n * par[P_M_CALF4] * l4 * l4 / 12.0,
               da4_1, da4_2)
        _place(ws, base + 4, ju, xb, zb, c, s, offx, offz,
               lk.px, lk.pz,
               lk.j11, lk.j21, lk.j12, lk.j22,
               n * par[P_M_PAW], 0.0, 0.0, 0.0)
        ws.spring_len[u] = lk.length
        ws.spring_dL[u][0] = lk.dL1
        ws.spring_dL[u][1] = lk.dL2
        ws.paw_w[u][0] = ws.pos[base + 4][0]
        ws.paw_w[u][1] = ws.pos[base + 4][1]
        ws.jpw_th[u][0][0] = ws.jac[base + 4][0][ju]
        ws.jpw_th[u][0][1] = ws.jac[base + 4][0][ju + 1]
        ws.jpw_th[u][1][0] = ws.jac[base + 4][1][ju]
        ws.jpw_th[u][1][1] = ws.jac[base + 4][1][ju + 1]
        ws.c_paw[u][0] = offx + lk.px
        ws.c_paw[u][1] = offz + lk.pz
    return 1


cdef void planar_mass_c(const Parts* ws, double* M) nogil:
    cdef int k, i, j
    cdef double m, inr
    for i in range(49):
        M[i] = 0.0
    for k in range(NPARTS):
        m = ws.mass[k]
        inr = ws.inertia[k]
        for i in range(7):
            for j in range(i, 7):
                M[7 * i + j] += m * (
                    ws.jac[k][0][i] * ws.jac[k][0][j]
                    + ws.jac[k][1][i] * ws.jac[k][1][j]
                )
                if inr != 0.0:
                    M[7 * i + j] += inr * ws.ang[k][i] * ws.ang[k][j]
    for i in range(7):
        for j in range(i):
            M[7 * i + j] = M[7 * j + i]


cdef int chol_solve_c(double* A, double* b, double* x, int n) nogil:
    # in-place Cholesky of the row-major n x n matrix A, then solve
    cdef int i, j, k
    cdef double acc
    for i in range(n):
        for j in range(i + 1):
            acc = A[n * i + j]
            for k in range(j):
                acc -= A[n * i + k] * A[n * j + k]
            if i == j:
                if acc <= 0.0:
                    return 0
                A[n * i + i] = sqrt(acc)
            else:
                A[n * i + j] = acc / A[n * j + j]
    for i in range(n):
        acc = b[i]
        for k in range(i):
            acc -= A[n * i + k] * x[k]
        x[i] = acc / A[n * i + i]
    for i in range(n - 1, -1, -1):
        acc = x[i]
        for k in range(i + 1, n):
            acc -= A[n * k + i] * x[k]
        x[i] = acc / A[n * i + i]
    return 1


cdef inline double _pid_raw_c(const double* par, double ref, double theta,
                              double integ, double omega) nogil:
    cdef double raw = (
        par[P_KP] * (ref - theta)
        + par[P_KI] * integ
        - par[P_KD] * omega
        - par[P_BVISC] * omega
    )
    cdef double sat = par[P_TAU_SAT]
    cdef double tau = raw
    if tau > sat:
        tau = sat
    elif tau < -sat:
        tau = -sat
    if omega >= par[P_OMEGA_MAX] and tau > 0.0:
        tau = 0.0
    elif omega <= -par[P_OMEGA_MAX] and tau < 0.0:
        tau = 0.0
    return tau


cdef inline void _stop_torque_c(const double* par, double theta, double omega,
                                double* tau, double* pdiss) nogil:
    cdef double lo = par[P_THETA_MIN]
    cdef double hi = par[P_THETA_MAX]
    cdef double pen, c
    if theta < lo:
        pen = lo - theta
    elif theta > hi:
        pen = hi - theta
    else:
        tau[0] = 0.0
        pdiss[0] = 0.0
        return
    c = par[P_CSTOP]
    tau[0] = par[P_KSTOP] * pen - c * omega
    pdiss[0] = c * omega * omega


cdef inline double _stop_pot_c(const double* par, double theta) nogil:
    cdef double lo = par[P_THETA_MIN]
    cdef double hi = par[P_THETA_MAX]
    cdef double pen
    if theta < lo:
        pen = lo - theta
    elif theta > hi:
        pen = theta - hi
    else:
        return 0.0
    return 0.5 * par[P_KSTOP] * pen * pen


cdef struct AuxC:
    double N[2]
    double T[2]
    double n_total
    double taus[4]
    double spring_ext[2]


cdef struct PlanarCtx:
    const double* par
    int mask
    int nq
    double pins[2][2]
    Parts ws
    Parts ws_p
    Parts ws_m


cdef int _embed_c(PlanarCtx* ctx, const double* q, double* Qf, double* G) nogil:
    # G is 7 x nq row-major (may be NULL when mask == 0)
    cdef const double* par = ctx.par
    cdef double phi = q[2]
    cdef double c = cos(phi), s = sin(phi)
    cdef int iq = 3, u, ju, col, i
    cdef double offx, offz, wx, wz, lx, lz, t1, t2
    cdef LegKin lk
    cdef double cpx, cpz, a11, a12, a21, a22, det, inv, rx, rz
    Qf[0] = q[0]
    Qf[1] = q[1]
    Qf[2] = q[2]
    for u in range(2):
        ju = 3 + 2 * u
        if ctx.mask & (1 << u):
            _unit_offsets(par, u, &offx, &offz)
            wx = ctx.pins[u][0] - q[0]
            wz = ctx.pins[u][1] - q[1]
            lx = c * wx + s * wz - offx
            lz = -s * wx + c * wz - offz
            if not leg_ik_c(par, lx, lz, &t1, &t2):
                return 0
            Qf[ju] = t1
            Qf[ju + 1] = t2
        else:
            Qf[ju] = q[iq]
            Qf[ju + 1] = q[iq + 1]
            iq += 2
    if ctx.mask == 0 or G == NULL:
        return 1
    for i in range(7 * ctx.nq):
        G[i] = 0.0
    G[0 * ctx.nq + 0] = 1.0
    G[1 * ctx.nq + 1] = 1.0
    G[2 * ctx.nq + 2] = 1.0
    iq = 3
    for u in range(2):
        ju = 3 + 2 * u
        if ctx.mask & (1 << u):
            if not leg_kin_c(par, Qf[ju], Qf[ju + 1], &lk):
                return 0
            _unit_offsets(par, u, &offx, &offz)
            cpx = offx + lk.px
            cpz = offz + lk.pz
            a11 = c * lk.j11 - s * lk.j21
            a12 = c * lk.j12 - s * lk.j22
            a21 = s * lk.j11 + c * lk.j21
            a22 = s * lk.j12 + c * lk.j22
            det = a11 * a22 - a12 * a21
            if fabs(det) < 1e-12:
                return 0
            inv = 1.0 / det
            for col in range(3):
                if col == 0:
                    rx = 1.0
                    rz = 0.0
                elif col == 1:
                    rx = 0.0
                    rz = 1.0
                else:
                    rx = -s * cpx - c * cpz
                    rz = c * cpx - s * cpz
                G[ju * ctx.nq + col] = -inv * (a22 * rx - a12 * rz)
                G[(ju + 1) * ctx.nq + col] = -inv * (-a21 * rx + a11 * rz)
        else:
            G[ju * ctx.nq + iq] = 1.0
            G[(ju + 1) * ctx.nq + iq + 1] = 1.0
            iq += 2
    return 1


cdef int _deriv_c(PlanarCtx* ctx, double t, const double* y, const double* refs,
                  double* ydot, AuxC* aux) nogil:
    """Reduced-state derivative.  y = [q, qd, integ4, W, D, Imp]."""
    cdef const double* par = ctx.par
    cdef int nq = ctx.nq
    cdef int i, j, k, u, ju, ch
    cdef double Qf[7]
    cdef double G[49]
    cdef double Qdf[7]
    cdef double M[49]
    cdef double bias[7]
    cdef double Qgen[7]
    cdef double tmp7[7]
    cdef double Gdqd[7]
    cdef double qp[7]
    cdef double Qfp[7]
    cdef double Qfm[7]
    cdef double Gp[49]
    cdef double vp[2]
    cdef double vm[2]
    cdef double speed, h, inv2h, mgz, ext, f, wdot, ddot, tau, om, th
    cdef double tau_stop, pdiss
    cdef double Mr[49]
    cdef double rhsr[7]
    cdef double qdd[7]
    cdef double Qddf[7]
    cdef double resid[7]
    cdef double a00, a01, a10, a11d, det, r0, r1
    cdef double wp, wm
    cdef double n = par[P_LEGS_PER_UNIT]

    if not _embed_c(ctx, y, Qf, G if ctx.mask else NULL):
        return 0
    if not planar_parts_c(par, Qf, &ctx.ws):
        return 0
    if ctx.mask == 0:
        for i in range(7):
            Qdf[i] = y[nq + i]
    else:
        for i in range(7):
            Qdf[i] = 0.0
            for j in range(nq):
                Qdf[i] += G[i * nq + j] * y[nq + j]
    planar_mass_c(&ctx.ws, M)

    # velocity-product bias via directional differencing
    speed = 0.0
    for i in range(7):
        if fabs(Qdf[i]) > speed:
            speed = fabs(Qdf[i])
    for i in range(7):
        bias[i] = 0.0
    if speed >= 1e-14:
        h = FD_STEP / speed
        for i in range(7):
            Qfp[i] = Qf[i] + h * Qdf[i]
            Qfm[i] = Qf[i] - h * Qdf[i]
        if not planar_parts_c(par, Qfp, &ctx.ws_p):
            return 0
        if not planar_parts_c(par, Qfm, &ctx.ws_m):
            return 0
        inv2h = 1.0 / (2.0 * h)
        for k in range(NPARTS):
            for i in range(2):
                vp[i] = 0.0
                vm[i] = 0.0
                for j in range(7):
                    vp[i] += ctx.ws_p.jac[k][i][j] * Qdf[j]
                    vm[i] += ctx.ws_m.jac[k][i][j] * Qdf[j]
                vp[i] = (vp[i] - vm[i]) * inv2h
            for j in range(7):
                bias[j] += ctx.ws.mass[k] * (
                    ctx.ws.jac[k][0][j] * vp[0] + ctx.ws.jac[k][1][j] * vp[1]
                )
            if ctx.ws.inertia[k] != 0.0:
                wp = 0.0
                wm = 0.0
                for j in range(7):
                    wp += ctx.ws_p.ang[k][j] * Qdf[j]
                    wm += ctx.ws_m.ang[k][j] * Qdf[j]
                wp = (wp - wm) * inv2h
                for j in range(7):
                    bias[j] += ctx.ws.inertia[k] * wp * ctx.ws.ang[k][j]

    # generalized forces: gravity, springs, motors, joint stops
    for i in range(7):
        Qgen[i] = 0.0
    for k in range(NPARTS):
        mgz = ctx.ws.mass[k] * par[P_G]
        for j in range(7):
            Qgen[j] -= mgz * ctx.ws.jac[k][1][j]
    for u in range(2):
        ext = ctx.ws.spring_len[u] - par[P_D0]
        aux.spring_ext[u] = ext if ext > 0.0 else 0.0
        if ext > 0.0:
            f = -par[P_KSPRING] * n * ext
            Qgen[3 + 2 * u] += f * ctx.ws.spring_dL[u][0]
            Qgen[4 + 2 * u] += f * ctx.ws.spring_dL[u][1]
    wdot = 0.0
    ddot = 0.0
    for ch in range(4):
        th = Qf[3 + ch]
        om = Qdf[3 + ch]
        tau = _pid_raw_c(par, refs[ch], th, y[2 * nq + ch], om)
        aux.taus[ch] = tau
        _stop_torque_c(par, th, om, &tau_stop, &pdiss)
        Qgen[3 + ch] += n * (tau + tau_stop)
        wdot += n * (tau + par[P_BVISC] * om) * om
        ddot += n * (par[P_BVISC] * om * om + pdiss)

    if ctx.mask == 0:
        for i in range(7):
            tmp7[i] = Qgen[i] - bias[i]
        if not chol_solve_c(M, tmp7, qdd, 7):
            return 0
        aux.N[0] = aux.N[1] = aux.T[0] = aux.T[1] = 0.0
        aux.n_total = 0.0
        for i in range(7):
            ydot[i] = y[nq + i]
            ydot[nq + i] = qdd[i]
    else:
        # Gamma_dot * qd via directional differencing of the embedding
        speed = 0.0
        for i in range(nq):
            if fabs(y[nq + i]) > speed:
                speed = fabs(y[nq + i])
        for i in range(7):
            Gdqd[i] = 0.0
        if speed >= 1e-14:
            h = FD_STEP / speed
            for i in range(nq):
                qp[i] = y[i] + h * y[nq + i]
            if not _embed_c(ctx, qp, Qfp, Gp):
                return 0
            for i in range(7):
                Gdqd[i] = 0.0
                for j in range(nq):
                    Gdqd[i] += Gp[i * nq + j] * y[nq + j]
            for i in range(nq):
                qp[i] = y[i] - h * y[nq + i]
            if not _embed_c(ctx, qp, Qfm, Gp):
                return 0
            inv2h = 1.0 / (2.0 * h)
            for i in range(7):
                vp[0] = 0.0
                for j in range(nq):
                    vp[0] += Gp[i * nq + j] * y[nq + j]
                Gdqd[i] = (Gdqd[i] - vp[0]) * inv2h
        # rhs = G^T (Qgen - bias - M Gdqd); Mr = G^T M G
        for i in range(7):
            tmp7[i] = 0.0
            for j in range(7):
                tmp7[i] += M[7 * i + j] * Gdqd[j]
            tmp7[i] = Qgen[i] - bias[i] - tmp7[i]
        for i in range(nq):
            rhsr[i] = 0.0
            for k in range(7):
                rhsr[i] += G[k * nq + i] * tmp7[k]
        # MG = M @ G (7 x nq, reusing Gp as scratch), then Mr = G^T MG
        for i in range(7):
            for j in range(nq):
                vp[0] = 0.0
                for k in range(7):
                    vp[0] += M[7 * i + k] * G[k * nq + j]
                Gp[i * nq + j] = vp[0]  # reuse Gp as MG scratch
        for i in range(nq):
            for j in range(nq):
                vp[0] = 0.0
                for k in range(7):
                    vp[0] += G[k * nq + i] * Gp[k * nq + j]
                Mr[nq * i + j] = vp[0]
        if not chol_solve_c(Mr, rhsr, qdd, nq):
            return 0
        for i in range(7):
            Qddf[i] = Gdqd[i]
            for j in range(nq):
                Qddf[i] += G[i * nq + j] * qdd[j]
        for i in range(7):
            resid[i] = bias[i] - Qgen[i]
            for j in range(7):
                resid[i] += M[7 * i + j] * Qddf[j]
        aux.n_total = 0.0
        for u in range(2):
            if not (ctx.mask & (1 << u)):
                aux.N[u] = 0.0
                aux.T[u] = 0.0
                continue
            ju = 3 + 2 * u
            a00 = ctx.ws.jpw_th[u][0][0]
            a01 = ctx.ws.jpw_th[u][0][1]
            a10 = ctx.ws.jpw_th[u][1][0]
            a11d = ctx.ws.jpw_th[u][1][1]
            det = a00 * a11d - a01 * a10
            if fabs(det) < 1e-12:
                return 0
            r0 = resid[ju]
            r1 = resid[ju + 1]
            aux.T[u] = (a11d * r0 - a10 * r1) / det
            aux.N[u] = (-a01 * r0 + a00 * r1) / det
            aux.n_total += aux.N[u]
        for i in range(nq):
            ydot[i] = y[nq + i]
            ydot[nq + i] = qdd[i]
    for ch in range(4):
        ydot[2 * nq + ch] = refs[ch] - Qf[3 + ch]
    ydot[2 * nq + 4] = wdot
    ydot[2 * nq + 5] = ddot
    ydot[2 * nq + 6] = 0.0
    return 1


# ---------------------------------------------------------------------------
# schedules, stepping, snapshots, samples
# ---------------------------------------------------------------------------

cdef struct Sched:
    const double* knots
    const double* vals  # K x 4 row-major
    int K


cdef void _sched_eval_c(const Sched* sc, double t, double* refs) nogil:
    cdef int i, c
    cdef double w
    if t <= sc.knots[0]:
        for c in range(4):
            refs[c] = sc.vals[c]
        return
    if t >= sc.knots[sc.K - 1]:
        for c in range(4):
            refs[c] = sc.vals[4 * (sc.K - 1) + c]
        return
    i = 0
    while i + 1 < sc.K and sc.knots[i + 1] <= t:
        i += 1
    w = (t - sc.knots[i]) / (sc.knots[i + 1] - sc.knots[i])
    for c in range(4):
        refs[c] = sc.vals[4 * i + c] + w * (sc.vals[4 * (i + 1) + c] - sc.vals[4 * i + c])


cdef int _rk4_c(PlanarCtx* ctx, double t, const double* y, double h,
                const Sched* sc, double* y_out, AuxC* aux) nogil:
    cdef int ny = 2 * ctx.nq + 7
    cdef double k1[21]
    cdef double k2[21]
    cdef double k3[21]
    cdef double k4[21]
    cdef double yt[21]
    cdef double refs[4]
    cdef AuxC scratch
    cdef int i
    _sched_eval_c(sc, t, refs)
    if not _deriv_c(ctx, t, y, refs, k1, aux):
        return 0
    _sched_eval_c(sc, t + 0.5 * h, refs)
    for i in range(ny):
        yt[i] = y[i] + 0.5 * h * k1[i]
    if not _deriv_c(ctx, t + 0.5 * h, yt, refs, k2, &scratch):
        return 0
    for i in range(ny):
        yt[i] = y[i] + 0.5 * h * k2[i]
    if not _deriv_c(ctx, t + 0.5 * h, yt, refs, k3, &scratch):
        return 0
    _sched_eval_c(sc, t + h, refs)
    for i in range(ny):
        yt[i] = y[i] + h * k3[i]
    if not _deriv_c(ctx, t + h, yt, refs, k4, &scratch):
        return 0
    for i in range(ny):
        y_out[i] = y[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return 1


cdef int _reduce_state_c(PlanarCtx* ctx, const double* snap, double* y) nogil:
    cdef int nq = ctx.nq
    cdef int iq = 3, u, ju, i
    for i in range(2 * nq + 7):
        y[i] = 0.0
    for i in range(3):
        y[i] = snap[i]
        y[nq + i] = snap[7 + i]
    for u in range(2):
        ju = 3 + 2 * u
        if not (ctx.mask & (1 << u)):
            y[iq] = snap[ju]
            y[iq + 1] = snap[ju + 1]
            y[nq + iq] = snap[7 + ju]
            y[nq + iq + 1] = snap[7 + ju + 1]
            iq += 2
    for i in range(4):
        y[2 * nq + i] = snap[14 + i]
    y[2 * nq + 4] = snap[18]
    y[2 * nq + 5] = snap[19]
    y[2 * nq + 6] = snap[20]
    return 1


cdef int _full_state_c(PlanarCtx* ctx, const double* y, double* snap) nogil:
    cdef int nq = ctx.nq
    cdef double Qf[7]
    cdef double G[49]
    cdef int i, j
    if not _embed_c(ctx, y, Qf, G if ctx.mask else NULL):
        return 0
    for i in range(7):
        snap[i] = Qf[i]
    if ctx.mask == 0:
        for i in range(7):
            snap[7 + i] = y[nq + i]
    else:
        for i in range(7):
            snap[7 + i] = 0.0
            for j in range(nq):
                snap[7 + i] += G[i * nq + j] * y[nq + j]
    for i in range(4):
        snap[14 + i] = y[2 * nq + i]
    snap[18] = y[2 * nq + 4]
    snap[19] = y[2 * nq + 5]
    snap[20] = y[2 * nq + 6]
    return 1


cdef int _sample_row_c(const double* par, const double* snap, double t,
                       const AuxC* aux, int phase, double* out) nogil:
    cdef Parts ws
    cdef int k, j
    cdef double mtot = 0.0, comx = 0.0, comz = 0.0
    cdef double velx = 0.0, velz = 0.0
    cdef double ke = 0.0, vx, vz, w, ext, vs
    if not planar_parts_c(par, snap, &ws):
        return 0
    out[S_T] = t
    out[S_XB] = snap[0]
    out[S_ZB] = snap[1]
    out[S_PHI] = snap[2]
    for j in range(4):
        out[S_TH + j] = snap[3 + j]
        out[S_THD + j] = snap[10 + j]
    out[S_NF] = aux.N[0]
    out[S_TF] = aux.T[0]
    out[S_NR] = aux.N[1]
    out[S_TR] = aux.T[1]
    for k in range(NPARTS):
        mtot += ws.mass[k]
        comx += ws.mass[k] * ws.pos[k][0]
        comz += ws.mass[k] * ws.pos[k][1]
        vx = 0.0
        vz = 0.0
        for j in range(7):
            vx += ws.jac[k][0][j] * snap[7 + j]
            vz += ws.jac[k][1][j] * snap[7 + j]
        velx += ws.mass[k] * vx
        velz += ws.mass[k] * vz
        ke += 0.5 * ws.mass[k] * (vx * vx + vz * vz)
        if ws.inertia[k] != 0.0:
            w = 0.0
            for j in range(7):
                w += ws.ang[k][j] * snap[7 + j]
            ke += 0.5 * ws.inertia[k] * w * w
    out[S_COMX] = comx / mtot
    out[S_COMZ] = comz / mtot
    out[S_COMVX] = velx / mtot
    out[S_COMVZ] = velz / mtot
    out[S_WORK] = snap[18]
    out[S_DISS] = snap[19]
    vs = 0.0
    for k in range(2):
        ext = ws.spring_len[k] - par[P_D0]
        if ext > 0.0:
            vs += 0.5 * par[P_KSPRING] * par[P_LEGS_PER_UNIT] * ext * ext
    for j in range(4):
        vs += par[P_LEGS_PER_UNIT] * _stop_pot_c(par, snap[3 + j])
    out[S_VSPRING] = vs
    out[S_KE] = ke
    cdef double pe = 0.0
    for k in range(NPARTS):
        pe += ws.mass[k] * ws.pos[k][1]
    out[S_PE] = par[P_G] * pe
    out[S_PHASE] = phase
    return 1


# ---------------------------------------------------------------------------
# planar segment runner
# ---------------------------------------------------------------------------

def run_planar_segment(
    double[::1] par not None,
    double[::1] snap0 not None,
    double t0,
    int mask,
    double[:, ::1] pins not None,
    double[::1] knots not None,
    double[:, ::1] vals not None,
    double t_end,
    bint watch_liftoff,
    bint watch_touchdown,
    bint watch_settle,
    bint watch_topple,
    double settle_speed,
    double settle_hold,
    int sample_stride,
):
    cdef PlanarCtx ctx
    cdef Sched sc
    cdef AuxC aux, aux_s
    cdef double y[21]
    cdef double y_prev[21]
    cdef double y_try[21]
    cdef double y_ev[21]
    cdef double snap_now[21]
    cdef double refs[4]
    cdef double row[NSCOL]
    cdef int ny, i, u, step, ns, max_rows, event, phase, u_first, hit0, hit1
    cdef double t, dt, tol, mu, n_floor, h, prev_n, prev_t
    cdef double prev_pz0, prev_pz1, pz0, pz1
    cdef double slipped_t, max_ratio, peak_n, peak_tau, ratio, speed, settle_since
    cdef double lo, hi, mid, g_mid, frac0, frac1
    cdef bint slipped, diverged
    cdef Parts ws_ev
    cdef int touchdown_unit = -1

    ctx.par = &par[0]
    ctx.mask = mask
    ctx.nq = 7 - 2 * ((mask & 1) + ((mask >> 1) & 1))
    for u in range(2):
        ctx.pins[u][0] = pins[u, 0]
        ctx.pins[u][1] = pins[u, 1]
    sc.knots = &knots[0]
    sc.vals = &vals[0, 0]
    sc.K = knots.shape[0]
    ny = 2 * ctx.nq + 7

    dt = par[P_DT]
    tol = par[P_EVENT_TOL]
    mu = par[P_MU]
    n_floor = par[P_SLIP_N_FLOOR]
    max_rows = <int>ceil((t_end - t0) / (sample_stride * dt)) + 3
    samples_np = np.zeros((max_rows, NSCOL))
    cdef double[:, ::1] samples = samples_np
    ns = 0

    _reduce_state_c(&ctx, &snap0[0], y)
    t = t0
    slipped = False
    slipped_t = float("inf")
    max_ratio = 0.0
    peak_n = 0.0
    peak_tau = 0.0
    settle_since = float("nan")
    prev_pz0 = float("inf")
    prev_pz1 = float("inf")
    prev_n = 0.0
    prev_t = t
    step = 0
    event = EV_TIME
    phase = PHASE_STANCE if mask else PHASE_FLIGHT
    diverged = False
    cdef bint have_prev = False

    while True:
        _sched_eval_c(&sc, t, refs)
        if not _deriv_c(&ctx, t, y, refs, y_try, &aux):
            diverged = True
        if not diverged:
            for i in range(ny):
                if not isfinite(y[i]) or fabs(y[i]) > DIVERGE_LIMIT:
                    diverged = True
                    break
        if not diverged and not _full_state_c(&ctx, y, snap_now):
            diverged = True
        if diverged:
            event = EV_DIVERGED
            if have_prev:
                for i in range(ny):
                    y[i] = y_prev[i]
                t = prev_t
                _full_state_c(&ctx, y, snap_now)
            break

        if mask:
            for u in range(2):
                if mask & (1 << u):
                    if aux.N[u] > peak_n:
                        peak_n = aux.N[u]
                    if aux.N[u] > n_floor:
                        ratio = fabs(aux.T[u]) / aux.N[u]
                        if ratio > max_ratio:
                            max_ratio = ratio
                        if ratio > mu and not slipped:
                            slipped = True
                            slipped_t = t
                    elif aux.N[u] < -n_floor and not slipped:
                        slipped = True
                        slipped_t = t
        for i in range(4):
            if fabs(aux.taus[i]) > peak_tau:
                peak_tau = fabs(aux.taus[i])

        if have_prev and watch_liftoff and mask:
            if aux.n_total <= 0.0 < prev_n:
                lo = 0.0
                hi = 1.0
                h = t - prev_t
                while (hi - lo) * h > tol:
                    mid = 0.5 * (lo + hi)
                    if mid * h <= 0.0:
                        g_mid = prev_n
                    else:
                        if not _rk4_c(&ctx, prev_t, y_prev, mid * h, &sc, y_try, &aux_s):
                            break
                        _sched_eval_c(&sc, prev_t + mid * h, refs)
                        if not _deriv_c(&ctx, prev_t + mid * h, y_try, refs, y_ev, &aux_s):
                            break
                        g_mid = aux_s.n_total
                    if g_mid <= 0.0:
                        hi = mid
                    else:
                        lo = mid
                if _rk4_c(&ctx, prev_t, y_prev, hi * h, &sc, y_ev, &aux_s):
                    for i in range(ny):
                        y[i] = y_ev[i]
                    t = prev_t + hi * h
                    event = EV_LIFTOFF
                    _full_state_c(&ctx, y, snap_now)
                    break
                event = EV_DIVERGED
                break
        if watch_touchdown and mask != 3:
            if not planar_parts_c(&par[0], snap_now, &ws_ev):
                event = EV_DIVERGED
                break
            pz0 = ws_ev.paw_w[0][1]
            pz1 = ws_ev.paw_w[1][1]
            hit0 = have_prev and (not (mask & 1)) and pz0 <= 0.0 < prev_pz0
            hit1 = have_prev and (not (mask & 2)) and pz1 <= 0.0 < prev_pz1
            if hit0 or hit1:
                if hit0 and hit1:
                    frac0 = prev_pz0 / (prev_pz0 - pz0)
                    frac1 = prev_pz1 / (prev_pz1 - pz1)
                    u_first = 0 if frac0 <= frac1 else 1
                elif hit0:
                    u_first = 0
                else:
                    u_first = 1
                lo = 0.0
                hi = 1.0
                h = t - prev_t
                while (hi - lo) * h > tol:
                    mid = 0.5 * (lo + hi)
                    if not _rk4_c(&ctx, prev_t, y_prev, mid * h, &sc, y_try, &aux_s):
                        break
                    if not _full_state_c(&ctx, y_try, y_ev):
                        break
                    if not planar_parts_c(&par[0], y_ev, &ws_ev):
                        break
                    if ws_ev.paw_w[u_first][1] <= 0.0:
                        hi = mid
                    else:
                        lo = mid
                if _rk4_c(&ctx, prev_t, y_prev, hi * h, &sc, y_ev, &aux_s):
                    for i in range(ny):
                        y[i] = y_ev[i]
                    t = prev_t + hi * h
                    touchdown_unit = u_first
                    event = EV_TOUCHDOWN_FRONT if u_first == 0 else EV_TOUCHDOWN_REAR
                    _full_state_c(&ctx, y, snap_now)
                    break
                event = EV_DIVERGED
                break
            prev_pz0 = pz0
            prev_pz1 = pz1

        if watch_topple and fabs(snap_now[2]) > TOPPLE_LIMIT:
            event = EV_TOPPLED
            break

        if watch_settle and mask == 3:
            speed = hypot(snap_now[7], snap_now[8])
            if speed < settle_speed:
                if settle_since != settle_since:
                    settle_since = t
                elif t - settle_since >= settle_hold:
                    event = EV_SETTLED
                    break
            else:
                settle_since = float("nan")

        if step % sample_stride == 0 and ns < max_rows:
            if _sample_row_c(&par[0], snap_now, t, &aux, phase, row):
                for i in range(NSCOL):
                    samples[ns, i] = row[i]
                ns += 1

        if t >= t_end - 1e-15:
            event = EV_TIME
            break

        h = dt if dt < t_end - t else t_end - t
        for i in range(ny):
            y_prev[i] = y[i]
        prev_t = t
        prev_n = aux.n_total
        have_prev = True
        if not _rk4_c(&ctx, t, y, h, &sc, y_try, &aux_s):
            event = EV_DIVERGED
            _full_state_c(&ctx, y, snap_now)
            break
        for i in range(ny):
            y[i] = y_try[i]
        t += h
        step += 1

    snap_out = np.zeros(NSNAP)
    cdef double[::1] so = snap_out
    _full_state_c(&ctx, y, &so[0])
    stats = (bool(slipped), slipped_t, max_ratio, peak_n, peak_tau, touchdown_unit)
    return event, t, snap_out, samples_np[:ns].copy(), stats


# ---------------------------------------------------------------------------
# vertical (one-dimensional) engine
# ---------------------------------------------------------------------------

cdef struct VParts:
    double pos[NVPARTS][2]
    double jac[NVPARTS][2][2]
    double ang[NVPARTS][2]
    double mass[NVPARTS]
    double inertia[NVPARTS]
    double spring_len
    double spring_dL
    double paw_z
    double jpaw_z


cdef int vertical_parts_c(const double* par, double zb, double theta, VParts* ws) nogil:
    cdef LegKin lk
    cdef double n = par[P_LEGS_PER_UNIT]
    cdef double offz = -par[P_COM_OFF]
    cdef double l0 = par[P_L0], l3 = par[P_L3], l4 = par[P_L4]
    cdef double jx, jz, r1x, r1z, r2x, r2z, da3, da4
    cdef int k, i, j
    if not leg_kin_c(par, theta, theta, &lk):
        return 0
    for k in range(NVPARTS):
        for i in range(2):
            ws.ang[k][i] = 0.0
            for j in range(2):
                ws.jac[k][i][j] = 0.0
    ws.pos[0][0] = 0.0
    ws.pos[0][1] = zb
    ws.jac[0][1][0] = 1.0
    ws.mass[0] = par[P_M_BODY]
    ws.inertia[0] = 0.0

    jx = lk.j11 + lk.j12
    jz = lk.j21 + lk.j22
    r1x = lk.px - lk.k1x
    r1z = lk.pz - lk.k1z
    r2x = lk.px - lk.k2x
    r2z = lk.pz - lk.k2z
    da3 = (r1x * (jz - lk.dk1z) - r1z * (jx - lk.dk1x)) / (l3 * l3)
    da4 = (r2x * (jz - lk.dk2z) - r2z * (jx - lk.dk2x)) / (l4 * l4)

    # hip1
    ws.pos[1][0] = 0.5 * lk.k1x
    ws.pos[1][1] = zb + offz + 0.5 * lk.k1z
    ws.jac[1][0][1] = 0.5 * lk.dk1x
    ws.jac[1][1][0] = 1.0
    ws.jac[1][1][1] = 0.5 * lk.dk1z
    ws.mass[1] = n * par[P_M_HIP1]
    ws.inertia[1] = n * par[P_M_HIP1] * par[P_L1] * par[P_L1] / 12.0
    ws.ang[1][1] = 1.0
    # hip2
    ws.pos[2][0] = 0.5 * (l0 + lk.k2x)
    ws.pos[2][1] = zb + offz + 0.5 * lk.k2z
    ws.jac[2][0][1] = 0.5 * lk.dk2x
    ws.jac[2][1][0] = 1.0
    ws.jac[2][1][1] = 0.5 * lk.dk2z
    ws.mass[2] = n * par[P_M_HIP2]
    ws.inertia[2] = n * par[P_M_HIP2] * par[P_L2] * par[P_L2] / 12.0
    ws.ang[2][1] = 1.0
    # calf3
    ws.pos[3][0] = 0.5 * (lk.k1x + lk.px)
    ws.pos[3][1] = zb + offz + 0.5 * (lk.k1z + lk.pz)
    ws.jac[3][0][1] = 0.5 * (lk.dk1x + jx)
    ws.jac[3][1][0] = 1.0
    ws.jac[3][1][1] = 0.5 * (lk.dk1z + jz)
    ws.mass[3] = n * par[P_M_CALF3]
    ws.inertia[3] = n * par[P_M_CALF3] * l3 * l3 / 12.0
    ws.ang[3][1] = da3
    # calf4
    ws.pos[4][0] = 0.5 * (lk.k2x + lk.px)
    ws.pos[4][1] = zb + offz + 0.5 * (lk.k2z + lk.pz)
    ws.jac[4][0][1] = 0.5 * (lk.dk2x + jx)
    ws.jac[4][1][0] = 1.0
    ws.jac[4][1][1] = 0.5 * (lk.dk2z + jz)
    ws.mass[4] = n * par[P_M_CALF4]
    ws.inertia[4] = n * par[P_M_CALF4] * l4 * l4 / 12.0
    ws.ang[4][1] = da4
    # paw
    ws.pos[5][0] = lk.px
    ws.pos[5][1] = zb + offz + lk.pz
    ws.jac[5][0][1] = jx
    ws.jac[5][1][0] = 1.0
    ws.jac[5][1][1] = jz
    ws.mass[5] = n * par[P_M_PAW]
    ws.inertia[5] = 0.0

    ws.spring_len = lk.length
    ws.spring_dL = lk.dL1 + lk.dL2
    ws.paw_z = zb + offz + lk.pz
    ws.jpaw_z = jz
    return 1


cdef struct VCtx:
    const double* par
    int stance
    double paw_anchor
    VParts ws
    VParts ws_p
    VParts ws_m


cdef int _zb_of_theta_c(VCtx* ctx, double theta, double* zb, double* dzb) nogil:
    cdef LegKin lk
    if not leg_kin_c(ctx.par, theta, theta, &lk):
        return 0
    zb[0] = ctx.paw_anchor - lk.pz + ctx.par[P_COM_OFF]
    dzb[0] = -(lk.j21 + lk.j22)
    return 1


cdef int _vderiv_c(VCtx* ctx, double t, const double* y, double ref,
                   double* ydot, AuxC* aux) nogil:
    cdef const double* par = ctx.par
    cdef int nq = 1 if ctx.stance else 2
    cdef double theta, thd, zb, zbd, dzb, integ
    cdef double M2[4]
    cdef double Ms[4]
    cdef double Qd2[2]
    cdef double bias[2]
    cdef double Qgen[2]
    cdef double Qdd2[2]
    cdef double rhs2[2]
    cdef double n = par[P_LEGS_PER_UNIT]
    cdef int k, i, j
    cdef double ext, tau, tau_stop, pdiss, wdot, ddot
    cdef double speed, h, inv2h, vpx, vpz, vmx, vmz, wp, wm
    cdef double g0, g1, mr, rhsr, thdd, zp, zp_d, zm, zm_d, gd0
    cdef double resid0, resid1

    if ctx.stance:
        theta = y[0]
        thd = y[1]
        if not _zb_of_theta_c(ctx, theta, &zb, &dzb):
            return 0
        zbd = dzb * thd
        integ = y[2]
    else:
        zb = y[0]
        theta = y[1]
        zbd = y[2]
        thd = y[3]
        integ = y[4]
    if not vertical_parts_c(par, zb, theta, &ctx.ws):
        return 0
    for i in range(4):
        M2[i] = 0.0
    for k in range(NVPARTS):
        for i in range(2):
            for j in range(2):
                M2[2 * i + j] += ctx.ws.mass[k] * (
                    ctx.ws.jac[k][0][i] * ctx.ws.jac[k][0][j]
                    + ctx.ws.jac[k][1][i] * ctx.ws.jac[k][1][j]
                )
                if ctx.ws.inertia[k] != 0.0:
                    M2[2 * i + j] += ctx.ws.inertia[k] * ctx.ws.ang[k][i] * ctx.ws.ang[k][j]
    Qd2[0] = zbd
    Qd2[1] = thd

    bias[0] = 0.0
    bias[1] = 0.0
    speed = fabs(Qd2[0])
    if fabs(Qd2[1]) > speed:
        speed = fabs(Qd2[1])
    if speed >= 1e-14:
        h = FD_STEP / speed
        if not vertical_parts_c(par, zb + h * Qd2[0], theta + h * Qd2[1], &ctx.ws_p):
            return 0
        if not vertical_parts_c(par, zb - h * Qd2[0], theta - h * Qd2[1], &ctx.ws_m):
            return 0
        inv2h = 1.0 / (2.0 * h)
        for k in range(NVPARTS):
            vpx = (ctx.ws_p.jac[k][0][0] * Qd2[0] + ctx.ws_p.jac[k][0][1] * Qd2[1]
                   - ctx.ws_m.jac[k][0][0] * Qd2[0] - ctx.ws_m.jac[k][0][1] * Qd2[1]) * inv2h
            vpz = (ctx.ws_p.jac[k][1][0] * Qd2[0] + ctx.ws_p.jac[k][1][1] * Qd2[1]
                   - ctx.ws_m.jac[k][1][0] * Qd2[0] - ctx.ws_m.jac[k][1][1] * Qd2[1]) * inv2h
            for j in range(2):
                bias[j] += ctx.ws.mass[k] * (
                    ctx.ws.jac[k][0][j] * vpx + ctx.ws.jac[k][1][j] * vpz
                )
            if ctx.ws.inertia[k] != 0.0:
                wp = (ctx.ws_p.ang[k][0] * Qd2[0] + ctx.ws_p.ang[k][1] * Qd2[1]
                      - ctx.ws_m.ang[k][0] * Qd2[0] - ctx.ws_m.ang[k][1] * Qd2[1]) * inv2h
                for j in range(2):
                    bias[j] += ctx.ws.inertia[k] * wp * ctx.ws.ang[k][j]

    Qgen[0] = 0.0
    Qgen[1] = 0.0
    for k in range(NVPARTS):
        Qgen[0] -= ctx.ws.mass[k] * par[P_G] * ctx.ws.jac[k][1][0]
        Qgen[1] -= ctx.ws.mass[k] * par[P_G] * ctx.ws.jac[k][1][1]
    ext = ctx.ws.spring_len - par[P_D0]
    aux.spring_ext[0] = ext if ext > 0.0 else 0.0
    if ext > 0.0:
        Qgen[1] -= n * par[P_KSPRING] * ext * ctx.ws.spring_dL
    tau = _pid_raw_c(par, ref, theta, integ, thd)
    aux.taus[0] = tau
    _stop_torque_c(par, theta, thd, &tau_stop, &pdiss)
    Qgen[1] += 2.0 * n * (tau + tau_stop)
    wdot = 2.0 * n * (tau + par[P_BVISC] * thd) * thd
    ddot = 2.0 * n * (par[P_BVISC] * thd * thd + pdiss)

    if ctx.stance:
        g0 = dzb
        g1 = 1.0
        gd0 = 0.0
        if fabs(thd) >= 1e-14:
            h = FD_STEP / fabs(thd)
            if not _zb_of_theta_c(ctx, theta + h * thd, &zp, &zp_d):
                return 0
            if not _zb_of_theta_c(ctx, theta - h * thd, &zm, &zm_d):
                return 0
            gd0 = (zp_d - zm_d) * thd / (2.0 * h)
        mr = (g0 * (M2[0] * g0 + M2[1] * g1) + g1 * (M2[2] * g0 + M2[3] * g1))
        rhsr = (
            g0 * (Qgen[0] - bias[0] - M2[0] * gd0)
            + g1 * (Qgen[1] - bias[1] - M2[2] * gd0)
        )
        thdd = rhsr / mr
        Qdd2[0] = g0 * thdd + gd0
        Qdd2[1] = thdd
        resid0 = M2[0] * Qdd2[0] + M2[1] * Qdd2[1] + bias[0] - Qgen[0]
        aux.N[0] = resid0
        aux.T[0] = 0.0
        aux.n_total = resid0
        ydot[0] = thd
        ydot[1] = thdd
        ydot[2] = ref - theta
        ydot[3] = wdot
        ydot[4] = ddot
    else:
        Ms[0] = M2[0]
        Ms[1] = M2[1]
        Ms[2] = M2[2]
        Ms[3] = M2[3]
        rhs2[0] = Qgen[0] - bias[0]
        rhs2[1] = Qgen[1] - bias[1]
        if not chol_solve_c(Ms, rhs2, Qdd2, 2):
            return 0
        aux.N[0] = 0.0
        aux.T[0] = 0.0
        aux.n_total = 0.0
        ydot[0] = zbd
        ydot[1] = thd
        ydot[2] = Qdd2[0]
        ydot[3] = Qdd2[1]
        ydot[4] = ref - theta
        ydot[5] = wdot
        ydot[6] = ddot
    return 1


cdef double _ramp_ref(double t, double theta_start, double squat, double ramp_time) nogil:
    if t <= ramp_time:
        return theta_start + (squat - theta_start) * (t / ramp_time)
    return theta_start


cdef int _vrk4_c(VCtx* ctx, double t, const double* y, double h,
                 double theta_start, double squat, double ramp_time,
                 double* y_out, AuxC* aux) nogil:
    cdef int ny = 5 if ctx.stance else 7
    cdef double k1[7]
    cdef double k2[7]
    cdef double k3[7]
    cdef double k4[7]
    cdef double yt[7]
    cdef AuxC scratch
    cdef int i
    cdef double rm
    if not _vderiv_c(ctx, t, y, _ramp_ref(t, theta_start, squat, ramp_time), k1, aux):
        return 0
    rm = _ramp_ref(t + 0.5 * h, theta_start, squat, ramp_time)
    for i in range(ny):
        yt[i] = y[i] + 0.5 * h * k1[i]
    if not _vderiv_c(ctx, t + 0.5 * h, yt, rm, k2, &scratch):
        return 0
    for i in range(ny):
        yt[i] = y[i] + 0.5 * h * k2[i]
    if not _vderiv_c(ctx, t + 0.5 * h, yt, rm, k3, &scratch):
        return 0
    for i in range(ny):
        yt[i] = y[i] + h * k3[i]
    if not _vderiv_c(ctx, t + h, yt, _ramp_ref(t + h, theta_start, squat, ramp_time), k4, &scratch):
        return 0
    for i in range(ny):
        y_out[i] = y[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return 1


cdef int _vcom_c(VCtx* ctx, double zb, double theta, double zbd, double thd,
                 double* com_z, double* com_vz) nogil:
    cdef double mtot = 0.0, cz = 0.0, mz = 0.0
    cdef int k
    if not vertical_parts_c(ctx.par, zb, theta, &ctx.ws):
        return 0
    for k in range(NVPARTS):
        mtot += ctx.ws.mass[k]
        cz += ctx.ws.mass[k] * ctx.ws.pos[k][1]
        mz += ctx.ws.mass[k] * (ctx.ws.jac[k][1][0] * zbd + ctx.ws.jac[k][1][1] * thd)
    com_z[0] = cz / mtot
    com_vz[0] = mz / mtot
    return 1


def run_vertical_jump(
    double[::1] par not None,
    double theta_start,
    double squat,
    double ramp_time,
    double t_max,
    int sample_stride = 0,
):
    cdef VCtx stance
    cdef VCtx flight
    cdef AuxC aux, aux2, aux_s
    cdef double y[7]
    cdef double y2[7]
    cdef double yf[7]
    cdef double yf2[7]
    cdef double y_ev[7]
    cdef double dt = par[P_DT]
    cdef double tol = par[P_EVENT_TOL]
    cdef double g = par[P_G]
    cdef double t = 0.0, prev_t, prev_n, h_br, lo, hi, mid
    cdef double zb, dzb, com_z, com_vz, t_apo, h, prev_pz, pz
    cdef double lift_t = 0.0, lift_z = 0.0, lift_vz = 0.0
    cdef int step = 0, i, in_stance = 1, touched, eligible
    cdef LegKin lk
    cdef double M2[4]
    cdef double A2[2]
    cdef double minv_a[2]
    cdef double lam, qd0, qd1
    cdef int k, ii, jj

    stance.par = &par[0]
    stance.stance = 1
    stance.paw_anchor = 0.0
    flight.par = &par[0]
    flight.stance = 0
    flight.paw_anchor = 0.0

    cdef int do_sample = sample_stride > 0
    cdef int max_rows = (<int>ceil(t_max / (sample_stride * dt)) + 8) if do_sample else 0
    samples_np = np.zeros((max_rows, 4))
    cdef double[:, ::1] samples = samples_np
    cdef int ns = 0

    for i in range(7):
        y[i] = 0.0
        yf[i] = 0.0
    y[0] = theta_start

    while t < t_max:
        if in_stance:
            if not _vderiv_c(&stance, t, y, _ramp_ref(t, theta_start, squat, ramp_time), y2, &aux):
                return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
            prev_n = aux.n_total
            if do_sample and step % sample_stride == 0 and ns < max_rows:
                if _zb_of_theta_c(&stance, y[0], &zb, &dzb):
                    if _vcom_c(&stance, zb, y[0], dzb * y[1], y[1], &com_z, &com_vz):
                        samples[ns, 0] = t
                        samples[ns, 1] = com_z
                        samples[ns, 2] = com_vz
                        samples[ns, 3] = y[0]
                        ns += 1
            prev_t = t
            for i in range(5):
                y2[i] = y[i]
            if not _vrk4_c(&stance, t, y2, dt, theta_start, squat, ramp_time, y, &aux_s):
                return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
            for i in range(5):
                if not isfinite(y[i]) or fabs(y[i]) > DIVERGE_LIMIT:
                    return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
            t += dt
            step += 1
            if not _vderiv_c(&stance, t, y, _ramp_ref(t, theta_start, squat, ramp_time), yf2, &aux2):
                return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
            if aux2.n_total <= 0.0 < prev_n:
                h_br = t - prev_t
                lo = 0.0
                hi = 1.0
                while (hi - lo) * h_br > tol:
                    mid = 0.5 * (lo + hi)
                    if not _vrk4_c(&stance, prev_t, y2, mid * h_br, theta_start, squat, ramp_time, y_ev, &aux_s):
                        return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
                    if not _vderiv_c(&stance, prev_t + mid * h_br, y_ev,
                                     _ramp_ref(prev_t + mid * h_br, theta_start, squat, ramp_time),
                                     yf2, &aux_s):
                        return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
                    if aux_s.n_total <= 0.0:
                        hi = mid
                    else:
                        lo = mid
                if not _vrk4_c(&stance, prev_t, y2, hi * h_br, theta_start, squat, ramp_time, y_ev, &aux_s):
                    return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
                t = prev_t + hi * h_br
                if not _zb_of_theta_c(&stance, y_ev[0], &zb, &dzb):
                    return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
                if not _vcom_c(&stance, zb, y_ev[0], dzb * y_ev[1], y_ev[1], &com_z, &com_vz):
                    return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
                lift_t = t
                lift_z = com_z
                lift_vz = com_vz
                yf[0] = zb
                yf[1] = y_ev[0]
                yf[2] = dzb * y_ev[1]
                yf[3] = y_ev[1]
                yf[4] = y_ev[2]
                yf[5] = y_ev[3]
                yf[6] = y_ev[4]
                in_stance = 0
                if do_sample and ns < max_rows:
                    samples[ns, 0] = t
                    samples[ns, 1] = com_z
                    samples[ns, 2] = com_vz
                    samples[ns, 3] = y_ev[0]
                    ns += 1
            continue

        # flight
        if not _vcom_c(&flight, yf[0], yf[1], yf[2], yf[3], &com_z, &com_vz):
            return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
        eligible = com_vz > 0.1
        t_apo = (t + com_vz / g) if eligible else t_max
        touched = 0
        while t < (t_apo if t_apo < t_max else t_max):
            if do_sample and step % sample_stride == 0 and ns < max_rows:
                if _vcom_c(&flight, yf[0], yf[1], yf[2], yf[3], &com_z, &com_vz):
                    samples[ns, 0] = t
                    samples[ns, 1] = com_z
                    samples[ns, 2] = com_vz
                    samples[ns, 3] = yf[1]
                    ns += 1
            if not leg_kin_c(&par[0], yf[1], yf[1], &lk):
                return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
            prev_pz = yf[0] - par[P_COM_OFF] + lk.pz
            for i in range(7):
                yf2[i] = yf[i]
            prev_t = t
            h = dt
            if t_apo > t and t_apo - t < h:
                h = t_apo - t
            if not _vrk4_c(&flight, t, yf2, h, theta_start, squat, ramp_time, yf, &aux_s):
                return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
            for i in range(7):
                if not isfinite(yf[i]) or fabs(yf[i]) > DIVERGE_LIMIT:
                    return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
            t += h
            step += 1
            if not leg_kin_c(&par[0], yf[1], yf[1], &lk):
                return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
            pz = yf[0] - par[P_COM_OFF] + lk.pz
            if pz <= 0.0 < prev_pz:
                h_br = t - prev_t
                lo = 0.0
                hi = 1.0
                while (hi - lo) * h_br > tol:
                    mid = 0.5 * (lo + hi)
                    if not _vrk4_c(&flight, prev_t, yf2, mid * h_br, theta_start, squat, ramp_time, y_ev, &aux_s):
                        return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
                    if not leg_kin_c(&par[0], y_ev[1], y_ev[1], &lk):
                        return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
                    if y_ev[0] - par[P_COM_OFF] + lk.pz <= 0.0:
                        hi = mid
                    else:
                        lo = mid
                if not _vrk4_c(&flight, prev_t, yf2, hi * h_br, theta_start, squat, ramp_time, yf, &aux_s):
                    return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
                t = prev_t + hi * h_br
                touched = 1
                break
        if not touched:
            if t >= t_max:
                return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
            h = lift_z + lift_vz * lift_vz / (2.0 * g)
            if do_sample and ns < max_rows:
                samples[ns, 0] = t
                samples[ns, 1] = h
                samples[ns, 2] = 0.0
                samples[ns, 3] = yf[1]
                ns += 1
            return VJ_OK, h, lift_t, lift_z, lift_vz, yf[5], yf[6], samples_np[:ns]
        # sticky impact projection at re-contact
        if not vertical_parts_c(&par[0], yf[0], yf[1], &flight.ws):
            return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
        for ii in range(4):
            M2[ii] = 0.0
        for k in range(NVPARTS):
            for ii in range(2):
                for jj in range(2):
                    M2[2 * ii + jj] += flight.ws.mass[k] * (
                        flight.ws.jac[k][0][ii] * flight.ws.jac[k][0][jj]
                        + flight.ws.jac[k][1][ii] * flight.ws.jac[k][1][jj]
                    )
                    if flight.ws.inertia[k] != 0.0:
                        M2[2 * ii + jj] += flight.ws.inertia[k] * flight.ws.ang[k][ii] * flight.ws.ang[k][jj]
        A2[0] = 1.0
        A2[1] = flight.ws.jpaw_z
        if not chol_solve_c(M2, A2, minv_a, 2):
            return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]
        A2[0] = 1.0
        A2[1] = flight.ws.jpaw_z
        qd0 = yf[2]
        qd1 = yf[3]
        lam = -(A2[0] * qd0 + A2[1] * qd1) / (A2[0] * minv_a[0] + A2[1] * minv_a[1])
        stance.paw_anchor = flight.ws.paw_z
        y[0] = yf[1]
        y[1] = qd1 + lam * minv_a[1]
        y[2] = yf[4]
        y[3] = yf[5]
        y[4] = yf[6]
        in_stance = 1
    return VJ_DIVERGED, 0.0, t, 0.0, 0.0, 0.0, 0.0, samples_np[:ns]


# ---------------------------------------------------------------------------
# free-floating attitude engine
# ---------------------------------------------------------------------------

DEF NFPART = 21  # 4 legs x 5 parts + body handled separately


cdef struct FPart:
    double m
    double c[3]
    double u[3]
    double ml2
    int has_rod


cdef int _leg_parts_c(const double* par3, double psi, double t1, double t2,
                      int leg, FPart* out) nogil:
    cdef LegKin lk
    cdef double hx, hy, hz, sp, cp, dy_, dz_
    cdef double m1[3]
    cdef double m2[3]
    cdef double k1[3]
    cdef double k2[3]
    cdef double paw[3]
    cdef double l0 = par3[P_L0]
    cdef int i
    if not leg_kin_c(par3, t1, t2, &lk):
        return 0
    hx = par3[F_HIP_XY + 2 * leg]
    hy = par3[F_HIP_XY + 2 * leg + 1]
    hz = par3[F_HIPZ]
    sp = sin(psi)
    cp = cos(psi)
    dy_ = sp
    dz_ = -cp

    m1[0] = hx - 0.5 * l0
    m1[1] = hy
    m1[2] = hz
    m2[0] = hx + 0.5 * l0
    m2[1] = hy
    m2[2] = hz
    k1[0] = hx - 0.5 * l0 + lk.k1x
    k1[1] = hy - lk.k1z * dy_
    k1[2] = hz - lk.k1z * dz_
    k2[0] = hx - 0.5 * l0 + lk.k2x
    k2[1] = hy - lk.k2z * dy_
    k2[2] = hz - lk.k2z * dz_
    paw[0] = hx - 0.5 * l0 + lk.px
    paw[1] = hy - lk.pz * dy_
    paw[2] = hz - lk.pz * dz_

    # hip rods
    out[0].m = par3[F_M_HIP1]
    out[1].m = par3[F_M_HIP2]
    out[2].m = par3[F_M_CALF3]
    out[3].m = par3[F_M_CALF4]
    out[4].m = par3[F_M_PAW]
    for i in range(3):
        out[0].c[i] = 0.5 * (m1[i] + k1[i])
        out[0].u[i] = (k1[i] - m1[i]) / par3[P_L1]
        out[1].c[i] = 0.5 * (m2[i] + k2[i])
        out[1].u[i] = (k2[i] - m2[i]) / par3[P_L2]
        out[2].c[i] = 0.5 * (k1[i] + paw[i])
        out[2].u[i] = (paw[i] - k1[i]) / par3[P_L3]
        out[3].c[i] = 0.5 * (k2[i] + paw[i])
        out[3].u[i] = (paw[i] - k2[i]) / par3[P_L4]
        out[4].c[i] = paw[i]
        out[4].u[i] = 0.0
    out[0].ml2 = out[0].m * par3[P_L1] * par3[P_L1] / 12.0
    out[1].ml2 = out[1].m * par3[P_L2] * par3[P_L2] / 12.0
    out[2].ml2 = out[2].m * par3[P_L3] * par3[P_L3] / 12.0
    out[3].ml2 = out[3].m * par3[P_L4] * par3[P_L4] / 12.0
    out[4].ml2 = 0.0
    out[0].has_rod = 1
    out[1].has_rod = 1
    out[2].has_rod = 1
    out[3].has_rod = 1
    out[4].has_rod = 0
    return 1


cdef int _all_parts_c(const double* par3, const double* joints, FPart* out) nogil:
    cdef int leg
    for leg in range(4):
        if not _leg_parts_c(par3, joints[3 * leg], joints[3 * leg + 1],
                            joints[3 * leg + 2], leg, &out[5 * leg]):
            return 0
    return 1


cdef int float_terms_c(const double* par3, const double* joints, const double* rates,
                       double* I9, double* h3) nogil:
    cdef FPart p0[NFPART - 1]
    cdef FPart pp[NFPART - 1]
    cdef FPart pm[NFPART - 1]
    cdef double jp[12]
    cdef double speed = 0.0, h, inv2h
    cdef double mtot, com[3], comdot[3], d[3], v[3], ud[3], db[3]
    cdef double cdot[3]
    cdef double mb = par3[F_M_BODY]
    cdef int i, k, j
    if not _all_parts_c(par3, joints, p0):
        return 0
    for i in range(12):
        if fabs(rates[i]) > speed:
            speed = fabs(rates[i])
    if speed >= 1e-14:
        h = FD_STEP / speed
        for i in range(12):
            jp[i] = joints[i] + h * rates[i]
        if not _all_parts_c(par3, jp, pp):
            return 0
        for i in range(12):
            jp[i] = joints[i] - h * rates[i]
        if not _all_parts_c(par3, jp, pm):
            return 0
        inv2h = 1.0 / (2.0 * h)
    else:
        inv2h = 0.0
        for k in range(NFPART - 1):
            pp[k] = p0[k]
            pm[k] = p0[k]

    mtot = mb
    for i in range(3):
        com[i] = 0.0
        comdot[i] = 0.0
    for k in range(NFPART - 1):
        mtot += p0[k].m
        for i in range(3):
            com[i] += p0[k].m * p0[k].c[i]
            comdot[i] += p0[k].m * (pp[k].c[i] - pm[k].c[i]) * inv2h
    # body COM is at the body-frame origin
    for i in range(3):
        com[i] /= mtot
        comdot[i] /= mtot

    for i in range(9):
        I9[i] = 0.0
    for i in range(3):
        h3[i] = 0.0
    cdef double dd, dv0, dv1, dv2
    for k in range(NFPART - 1):
        for i in range(3):
            d[i] = p0[k].c[i] - com[i]
            cdot[i] = (pp[k].c[i] - pm[k].c[i]) * inv2h
            v[i] = cdot[i] - comdot[i]
        dd = d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
        for i in range(3):
            for j in range(3):
                I9[3 * i + j] += p0[k].m * ((dd if i == j else 0.0) - d[i] * d[j])
        h3[0] += p0[k].m * (d[1] * v[2] - d[2] * v[1])
        h3[1] += p0[k].m * (d[2] * v[0] - d[0] * v[2])
        h3[2] += p0[k].m * (d[0] * v[1] - d[1] * v[0])
        if p0[k].has_rod:
            dd = 0.0  # reuse: keep
            for i in range(3):
                ud[i] = (pp[k].u[i] - pm[k].u[i]) * inv2h
            for i in range(3):
                for j in range(3):
                    I9[3 * i + j] += p0[k].ml2 * ((1.0 if i == j else 0.0) - p0[k].u[i] * p0[k].u[j])
            h3[0] += p0[k].ml2 * (p0[k].u[1] * ud[2] - p0[k].u[2] * ud[1])
            h3[1] += p0[k].ml2 * (p0[k].u[2] * ud[0] - p0[k].u[0] * ud[2])
            h3[2] += p0[k].ml2 * (p0[k].u[0] * ud[1] - p0[k].u[1] * ud[0])
    for i in range(3):
        db[i] = -com[i]
    dd = db[0] * db[0] + db[1] * db[1] + db[2] * db[2]
    for i in range(3):
        for j in range(3):
            I9[3 * i + j] += mb * ((dd if i == j else 0.0) - db[i] * db[j])
    I9[0] += par3[F_IBX]
    I9[4] += par3[F_IBX + 1]
    I9[8] += par3[F_IBX + 2]
    dv0 = -comdot[0]
    dv1 = -comdot[1]
    dv2 = -comdot[2]
    h3[0] += mb * (db[1] * dv2 - db[2] * dv1)
    h3[1] += mb * (db[2] * dv0 - db[0] * dv2)
    h3[2] += mb * (db[0] * dv1 - db[1] * dv0)
    return 1


cdef void _quat_mul_c(const double* a, const double* b, double* out) nogil:
    out[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    out[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2]
    out[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1]
    out[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]


cdef void _quat_matrix_c(const double* q, double* R) nogil:
    cdef double w = q[0], x = q[1], y = q[2], z = q[3]
    R[0] = 1 - 2 * (y * y + z * z)
    R[1] = 2 * (x * y - z * w)
    R[2] = 2 * (x * z + y * w)
    R[3] = 2 * (x * y + z * w)
    R[4] = 1 - 2 * (x * x + z * z)
    R[5] = 2 * (y * z - x * w)
    R[6] = 2 * (x * z - y * w)
    R[7] = 2 * (y * z + x * w)
    R[8] = 1 - 2 * (x * x + y * y)


cdef double _twist_about_c(const double* q, int axis) nogil:
    cdef double tw = 2.0 * atan2(q[1 + axis], q[0])
    if tw > 3.141592653589793:
        tw -= 6.283185307179586
    elif tw < -3.141592653589793:
        tw += 6.283185307179586
    return tw


cdef int _sched12_seg_c(const double* knots, int K, double x) nogil:
    cdef int i = 0
    x = x - floor(x)
    while i + 1 < K and knots[i + 1] <= x:
        i += 1
    if i > K - 2:
        i = K - 2
    return i


cdef void _sched12_c(const double* knots, const double* vals, int K, double x,
                     int seg, double* joints, double* slope) nogil:
    # seg == -1 looks the segment up; otherwise it is pinned so all stages
    # of one step share a consistent slope across knot corners
    cdef int i, c
    cdef double w
    x = x - floor(x)
    if seg < 0:
        i = _sched12_seg_c(knots, K, x)
    else:
        i = seg
        if x + 0.5 < knots[i]:  # stage point wrapped past 1.0
            x += 1.0
    w = (x - knots[i]) / (knots[i + 1] - knots[i])
    for c in range(12):
        joints[c] = vals[12 * i + c] + w * (vals[12 * (i + 1) + c] - vals[12 * i + c])
        slope[c] = (vals[12 * (i + 1) + c] - vals[12 * i + c]) / (knots[i + 1] - knots[i])


cdef int _omega_body_c(const double* par3, const double* knots, const double* vals,
                       int K, const double* q, double s, double sdot, int seg,
                       const double* L0, double* w) nogil:
    cdef double joints[12]
    cdef double slope[12]
    cdef double rates[12]
    cdef double I9[9]
    cdef double h3[3]
    cdef double R[9]
    cdef double Lb[3]
    cdef int i
    _sched12_c(knots, vals, K, s, seg, joints, slope)
    for i in range(12):
        rates[i] = slope[i] * sdot
    if not float_terms_c(par3, joints, rates, I9, h3):
        return 0
    _quat_matrix_c(q, R)
    for i in range(3):
        Lb[i] = R[i] * L0[0] + R[3 + i] * L0[1] + R[6 + i] * L0[2] - h3[i]
    if not chol_solve_c(I9, Lb, w, 3):
        return 0
    return 1


def run_free_float(
    double[::1] par3 not None,
    double[::1] knots not None,
    double[:, ::1] vals not None,
    double period,
    double duration,
    double[::1] L0 not None,
    int gate_axis,
    double gate_sign,
    int sample_stride,
):
    cdef double dt = par3[F_DT]
    cdef double q[4]
    cdef double qn[4]
    cdef double k1q[4]
    cdef double k2q[4]
    cdef double k3q[4]
    cdef double k4q[4]
    cdef double qt[4]
    cdef double w1[3]
    cdef double w2[3]
    cdef double w3[3]
    cdef double w4[3]
    cdef double omega_q[4]
    cdef double s = 0.0, t = 0.0, sdot, h, tw, x, t_knot, norm
    cdef int K = knots.shape[0]
    cdef int i, idx, ns = 0, seg = 0
    cdef double R[9]
    cdef double ww[3]
    cdef double roll, pitch, yaw, sy

    cdef int n_rows = <int>ceil(duration / (sample_stride * dt)) + 2
    samples_np = np.zeros((n_rows, NACOL))
    cdef double[:, ::1] samples = samples_np

    q[0] = 1.0
    q[1] = q[2] = q[3] = 0.0

    while t < duration - 1e-15:
        if gate_axis >= 0:
            tw = _twist_about_c(q, gate_axis)
            sdot = (1.0 / period) if tw * gate_sign > 0.0 else 0.0
        else:
            sdot = 1.0 / period
        h = dt
        if duration - t < h:
            h = duration - t
        if sdot > 0.0:
            # land steps on schedule knots; snap when within rounding
            x = s - floor(s)
            idx = 0
            while idx + 1 < K and knots[idx + 1] <= x:
                idx += 1
            if idx > K - 2:
                idx = K - 2
            if knots[idx + 1] - x < 1e-12:
                s += knots[idx + 1] - x
                x = s - floor(s)
                idx = 0
                while idx + 1 < K and knots[idx + 1] <= x:
                    idx += 1
                if idx > K - 2:
                    idx = K - 2
            t_knot = (knots[idx + 1] - x) / sdot
            if t_knot > 1e-12 and t_knot < h:
                h = t_knot

        seg = _sched12_seg_c(&knots[0], K, s + 0.5 * h * sdot)
        if not _omega_body_c(&par3[0], &knots[0], &vals[0, 0], K, q, s, sdot, seg, &L0[0], w1):
            return FF_JOINT_LIMIT, np.array([q[0], q[1], q[2], q[3]]), s, samples_np[:ns]

        if sample_stride > 0 and ns < n_rows and (
            ns == 0 or t >= samples[ns - 1, 0] + sample_stride * dt - 1e-12
        ):
            _quat_matrix_c(q, R)
            for i in range(3):
                ww[i] = R[3 * i] * w1[0] + R[3 * i + 1] * w1[1] + R[3 * i + 2] * w1[2]
            sy = R[6]
            if sy > 1.0:
                sy = 1.0
            elif sy < -1.0:
                sy = -1.0
            pitch = -_asin(sy)
            roll = atan2(R[7], R[8])
            yaw = atan2(R[3], R[0])
            samples[ns, 0] = t
            samples[ns, 1] = roll * 57.29577951308232
            samples[ns, 2] = pitch * 57.29577951308232
            samples[ns, 3] = yaw * 57.29577951308232
            for i in range(3):
                samples[ns, 4 + i] = ww[i] * 57.29577951308232
                samples[ns, 7 + i] = L0[i]
            samples[ns, 10] = (_twist_about_c(q, gate_axis) * 57.29577951308232) if gate_axis >= 0 else 0.0
            samples[ns, 11] = s
            ns += 1

        omega_q[0] = 0.0
        omega_q[1] = w1[0]
        omega_q[2] = w1[1]
        omega_q[3] = w1[2]
        _quat_mul_c(q, omega_q, k1q)
        for i in range(4):
            k1q[i] *= 0.5
            qt[i] = q[i] + 0.5 * h * k1q[i]
        if not _omega_body_c(&par3[0], &knots[0], &vals[0, 0], K, qt, s + 0.5 * h * sdot, sdot, seg, &L0[0], w2):
            return FF_JOINT_LIMIT, np.array([q[0], q[1], q[2], q[3]]), s, samples_np[:ns]
        omega_q[1] = w2[0]
        omega_q[2] = w2[1]
        omega_q[3] = w2[2]
        _quat_mul_c(qt, omega_q, k2q)
        for i in range(4):
            k2q[i] *= 0.5
            qt[i] = q[i] + 0.5 * h * k2q[i]
        if not _omega_body_c(&par3[0], &knots[0], &vals[0, 0], K, qt, s + 0.5 * h * sdot, sdot, seg, &L0[0], w3):
            return FF_JOINT_LIMIT, np.array([q[0], q[1], q[2], q[3]]), s, samples_np[:ns]
        omega_q[1] = w3[0]
        omega_q[2] = w3[1]
        omega_q[3] = w3[2]
        _quat_mul_c(qt, omega_q, k3q)
        for i in range(4):
            k3q[i] *= 0.5
            qt[i] = q[i] + h * k3q[i]
        if not _omega_body_c(&par3[0], &knots[0], &vals[0, 0], K, qt, s + h * sdot, sdot, seg, &L0[0], w4):
            return FF_JOINT_LIMIT, np.array([q[0], q[1], q[2], q[3]]), s, samples_np[:ns]
        omega_q[1] = w4[0]
        omega_q[2] = w4[1]
        omega_q[3] = w4[2]
        _quat_mul_c(qt, omega_q, k4q)
        for i in range(4):
            k4q[i] *= 0.5
            q[i] = q[i] + (h / 6.0) * (k1q[i] + 2.0 * k2q[i] + 2.0 * k3q[i] + k4q[i])
        s = s + h * sdot
        norm = sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
        for i in range(4):
            q[i] /= norm
        t += h

    if _omega_body_c(&par3[0], &knots[0], &vals[0, 0], K, q, s, 0.0, _sched12_seg_c(&knots[0], K, s), &L0[0], w1):
        if sample_stride > 0 and ns < n_rows:
            _quat_matrix_c(q, R)
            for i in range(3):
                ww[i] = R[3 * i] * w1[0] + R[3 * i + 1] * w1[1] + R[3 * i + 2] * w1[2]
            sy = R[6]
            if sy > 1.0:
                sy = 1.0
            elif sy < -1.0:
                sy = -1.0
            samples[ns, 0] = t
            samples[ns, 1] = atan2(R[7], R[8]) * 57.29577951308232
            samples[ns, 2] = -_asin(sy) * 57.29577951308232
            samples[ns, 3] = atan2(R[3], R[0]) * 57.29577951308232
            for i in range(3):
                samples[ns, 4 + i] = ww[i] * 57.29577951308232
                samples[ns, 7 + i] = L0[i]
            samples[ns, 10] = (_twist_about_c(q, gate_axis) * 57.29577951308232) if gate_axis >= 0 else 0.0
            samples[ns, 11] = s
            ns += 1
    return FF_OK, np.array([q[0], q[1], q[2], q[3]]), s, samples_np[:ns]
