"""Planar five-bar leg geometry: kinematics, spring state, and workspace.

Each leg is a closed five-bar chain: two motors on the body separated by the
base link ``l0``, hip links ``l1``/``l2`` down to passive knees, and calf
links ``l3``/``l4`` meeting at the paw.  The sagittal leg frame puts motor 1
at the origin, motor 2 at ``(l0, 0)``, x pointing forward and z up; gravity
acts along -z.  Motor angles are measured from the body-down direction and
are positive rotating each knee outward, away from the mechanism midline
(so motor 1 swings its knee toward -x, motor 2 toward +x).

Only one assembly mode is ever constructed: the paw below the knees with
both knees outward.  The alternate circle-intersection branch is rejected.

A single linear tension-only spring spans the two knees.  Its natural length
is the knee separation at the rest angle ``theta_rest``, so it is slack at
and below that pose and pulls the knees together when stretched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import JointLimitError, SingularError, UnreachableError

# Admissible motor range.  The lower bound keeps clear of the inward-knee
# branch flip, the upper bound prevents knee collision behind the base link.
THETA_MIN_DEG = 5.0
THETA_MAX_DEG = 175.0

_SINGULAR_DET = 1e-10

# Hardware envelope of the spring-cord-pulley leg, checked over commanded
# squat paths.  The paw must keep clear of the knee line so the calf pair
# never folds onto the spring hardware, and the spring-cord run has finite
# travel.  Values are calibrated once against the validated design study.
SQUAT_CLEARANCE_MIN = 0.197  # m, paw depth below the knee line
SPRING_EXTENSION_LIMIT = 1.39  # max extension as a fraction of natural length


@dataclass(frozen=True)
class LegGeometry:
    """Link lengths and spring parameters of one five-bar leg.

    Lengths in metres, stiffness in N/m, rest angle in degrees.
    """

    l0: float = 0.09
    l1: float = 0.175
    l2: float = 0.175
    l3: float = 0.30
    l4: float = 0.30
    k: float = 800.0
    theta_rest: float = 17.0
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        for name in ("l0", "l1", "l2", "l3", "l4"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if self.k < 0.0:
            raise ValueError("spring stiffness k must be >= 0")
        if not 0.0 < self.theta_rest < 90.0:
            raise ValueError("theta_rest must lie in (0, 90) degrees")
        if self.validate:
            k1, k2 = _knees(self, self.theta_rest, self.theta_rest)
            status = _paw_below(k1, k2, self.l3, self.l4)[0]
            if status != _OK:
                raise UnreachableError(
                    "no paw solution at the rest pose; geometry cannot assemble"
                )

    @property
    def rest_length(self) -> float:
        """Spring natural length: knee separation at the rest angle."""
        k1, k2 = _knees(self, self.theta_rest, self.theta_rest)
        return math.hypot(k2[0] - k1[0], k2[1] - k1[1])

    @property
    def reach_limit(self) -> float:
        """Envelope bound on paw extension: shorter of the two straight chains."""
        return min(self.l1 + self.l3, self.l2 + self.l4)


@dataclass(frozen=True)
class LegConfig:
    """One assembled leg pose on the paw-below, knee-outward branch."""

    theta1: float  # deg
    theta2: float  # deg
    knee1: tuple[float, float]
    knee2: tuple[float, float]
    paw: tuple[float, float]
    branch: str = "paw_below"


@dataclass(frozen=True)
class SpringState:
    length: float
    extension: float
    force: float


# internal status codes shared with the simulation engines
_OK = 0
_UNREACHABLE = 1
_SINGULAR = 2


def _knees(geom: LegGeometry, theta1_deg: float, theta2_deg: float):
    t1 = math.radians(theta1_deg)
    t2 = math.radians(theta2_deg)
    k1 = (-geom.l1 * math.sin(t1), -geom.l1 * math.cos(t1))
    k2 = (geom.l0 + geom.l2 * math.sin(t2), -geom.l2 * math.cos(t2))
    return k1, k2


def _paw_below(k1, k2, l3: float, l4: float):
    """Lower intersection of circles (k1, l3) and (k2, l4).

    Returns (status, paw).  The paw-below branch takes the candidate with
    the smaller z; ties cannot occur away from the singular h = 0 case.
    """
    dx = k2[0] - k1[0]
    dz = k2[1] - k1[1]
    d2 = dx * dx + dz * dz
    d = math.sqrt(d2)
    if d < 1e-12 or d < abs(l3 - l4):
        return _SINGULAR, (math.nan, math.nan)
    if d > l3 + l4:
        return _UNREACHABLE, (math.nan, math.nan)
    a = (l3 * l3 - l4 * l4 + d2) / (2.0 * d)
    h2 = l3 * l3 - a * a
    if h2 <= 0.0:
        # chain exactly straight or numerically folded
        if h2 > -1e-12:
            h2 = 0.0
        else:
            return _SINGULAR, (math.nan, math.nan)
    h = math.sqrt(h2)
    ux, uz = dx / d, dz / d
    bx, bz = k1[0] + a * ux, k1[1] + a * uz
    # the two candidates sit at +/- h along the unit normal (uz, -ux)
    p_lo = (bx + h * uz, bz - h * ux)
    p_hi = (bx - h * uz, bz + h * ux)
    paw = p_lo if p_lo[1] <= p_hi[1] else p_hi
    return _OK, paw


def _check_limits(theta1_deg: float, theta2_deg: float):
    if not (THETA_MIN_DEG <= theta1_deg <= THETA_MAX_DEG) or not (
        THETA_MIN_DEG <= theta2_deg <= THETA_MAX_DEG
    ):
        raise JointLimitError(
            f"motor angles ({theta1_deg:.3f}, {theta2_deg:.3f}) deg outside "
            f"[{THETA_MIN_DEG}, {THETA_MAX_DEG}]"
        )


def forward_kinematics(
    geom: LegGeometry,
    theta1_deg: float,
    theta2_deg: float,
    check_limits: bool = True,
) -> LegConfig:
    """Assemble the leg for the given motor angles.

    Raises UnreachableError when the knees are too far apart for the calves
    to meet, SingularError when they are too close or coincident, and
    JointLimitError for angles outside the admissible range.
    """
    if check_limits:
        _check_limits(theta1_deg, theta2_deg)
    k1, k2 = _knees(geom, theta1_deg, theta2_deg)
    status, paw = _paw_below(k1, k2, geom.l3, geom.l4)
    if status == _UNREACHABLE:
        raise UnreachableError("knee separation exceeds l3 + l4")
    if status == _SINGULAR:
        raise SingularError("knee separation below |l3 - l4| or knees coincident")
    return LegConfig(theta1_deg, theta2_deg, k1, k2, paw)


def inverse_kinematics(geom: LegGeometry, paw) -> tuple[float, float]:
    """Motor angles (deg) that place the paw, knee-outward branch.

    The result round-trips through forward_kinematics to well below 1e-9 m
    anywhere inside the sampled workspace.
    """
    px, pz = float(paw[0]), float(paw[1])

    def side(mx: float, outward: float, l_hip: float, l_calf: float) -> float:
        vx, vz = px - mx, pz
        d = math.hypot(vx, vz)
        if d > l_hip + l_calf or d < abs(l_hip - l_calf) or d < 1e-12:
            raise UnreachableError("paw outside the annulus of one chain")
        # angle of (paw - motor) from body-down, positive toward this
        # motor's outward side
        gamma = math.atan2(outward * vx, -vz)
        cos_alpha = (l_hip * l_hip + d * d - l_calf * l_calf) / (2.0 * l_hip * d)
        cos_alpha = min(1.0, max(-1.0, cos_alpha))
        # knee sits outward of the paw ray on this branch
        return math.degrees(gamma + math.acos(cos_alpha))

    theta1 = side(0.0, -1.0, geom.l1, geom.l3)
    theta2 = side(geom.l0, +1.0, geom.l2, geom.l4)
    cfg = forward_kinematics(geom, theta1, theta2, check_limits=False)
    if math.hypot(cfg.paw[0] - px, cfg.paw[1] - pz) > 1e-7:
        raise UnreachableError("paw not on the paw-below, knee-outward branch")
    return theta1, theta2


def spring_state(geom: LegGeometry, config: LegConfig) -> SpringState:
    """Length, extension and tension of the knee-to-knee spring."""
    length = math.hypot(
        config.knee2[0] - config.knee1[0], config.knee2[1] - config.knee1[1]
    )
    extension = max(0.0, length - geom.rest_length)
    return SpringState(length, extension, geom.k * extension)


def spring_length_gradient(geom: LegGeometry, theta1_deg: float, theta2_deg: float):
    """d(spring length)/d(theta1, theta2) in m/rad.

    For symmetric geometry this reduces to l1*cos(theta) per motor.
    """
    t1 = math.radians(theta1_deg)
    t2 = math.radians(theta2_deg)
    k1, k2 = _knees(geom, theta1_deg, theta2_deg)
    dx, dz = k2[0] - k1[0], k2[1] - k1[1]
    d = math.hypot(dx, dz)
    if d < 1e-12:
        return 0.0, 0.0
    ux, uz = dx / d, dz / d
    # dk1/dt1 = l1*(-cos t1, sin t1), dk2/dt2 = l2*(cos t2, sin t2)
    g1 = -(ux * (-geom.l1 * math.cos(t1)) + uz * (geom.l1 * math.sin(t1)))
    g2 = ux * (geom.l2 * math.cos(t2)) + uz * (geom.l2 * math.sin(t2))
    return g1, g2


def motor_jacobian(geom: LegGeometry, config: LegConfig) -> np.ndarray:
    """2x2 map from motor rates (rad/s) to paw velocity (m/s).

    Differentiates both loop-closure distance constraints; raises
    SingularError when the calf directions become collinear.
    """
    t1 = math.radians(config.theta1)
    t2 = math.radians(config.theta2)
    r1x = config.paw[0] - config.knee1[0]
    r1z = config.paw[1] - config.knee1[1]
    r2x = config.paw[0] - config.knee2[0]
    r2z = config.paw[1] - config.knee2[1]
    det = r1x * r2z - r1z * r2x
    if abs(det) < _SINGULAR_DET:
        raise SingularError("calf links collinear; paw velocity undefined")
    # r1 . dpaw = r1 . dknee1, r2 . dpaw = r2 . dknee2
    b11 = r1x * (-geom.l1 * math.cos(t1)) + r1z * (geom.l1 * math.sin(t1))
    b22 = r2x * (geom.l2 * math.cos(t2)) + r2z * (geom.l2 * math.sin(t2))
    inv = 1.0 / det
    return np.array(
        [
            [inv * r2z * b11, inv * (-r1z) * b22],
            [inv * (-r2x) * b11, inv * r1x * b22],
        ]
    )


def squat_path_feasible(geom: LegGeometry, squat_deg: float) -> tuple[bool, str]:
    """Check a symmetric squat command against the leg hardware envelope.

    Scans theta from the rest angle to ``squat_deg``: the loop must close,
    the paw must stay at least SQUAT_CLEARANCE_MIN below the knee line, and
    the spring must stay within its stretch limit.  Returns (ok, reason).
    """
    d0 = geom.rest_length
    theta = geom.theta_rest
    while True:
        t = math.radians(theta)
        k1 = (-geom.l1 * math.sin(t), -geom.l1 * math.cos(t))
        k2 = (geom.l0 + geom.l2 * math.sin(t), -geom.l2 * math.cos(t))
        dx, dz = k2[0] - k1[0], k2[1] - k1[1]
        d = math.hypot(dx, dz)
        if d >= geom.l3 + geom.l4:
            return False, "loop cannot close along the squat path"
        a = (geom.l3**2 - geom.l4**2 + d * d) / (2.0 * d)
        h2 = geom.l3**2 - a * a
        if h2 <= 0.0 or math.sqrt(h2) < SQUAT_CLEARANCE_MIN:
            return False, "paw too close to the knee line at squat"
        if d - d0 > SPRING_EXTENSION_LIMIT * d0:
            return False, "spring over-travel along the squat path"
        if theta >= squat_deg:
            return True, ""
        theta = min(theta + 0.25, squat_deg)


@dataclass(frozen=True)
class Workspace:
    """Reachable paw positions over an admissible motor-angle grid."""

    theta_grid: np.ndarray  # sampled angles, deg
    reachable: np.ndarray  # (n, n) bool
    paws: np.ndarray  # (n, n, 2), nan where not reachable
    min_extension: float  # min paw distance from the base-link midpoint
    max_extension: float
    reach_limit: float  # straight-chain envelope bound


def workspace_sample(geom: LegGeometry, resolution_deg: float) -> Workspace:
    """Scan the admissible (theta1, theta2) grid and collect reachable paws."""
    if resolution_deg <= 0.0:
        raise ValueError("resolution must be positive")
    n = int(math.floor((THETA_MAX_DEG - THETA_MIN_DEG) / resolution_deg)) + 1
    grid = THETA_MIN_DEG + resolution_deg * np.arange(n)
    reachable = np.zeros((n, n), dtype=bool)
    paws = np.full((n, n, 2), np.nan)
    midx = 0.5 * geom.l0
    min_ext = math.inf
    max_ext = 0.0
    for i, t1 in enumerate(grid):
        for j, t2 in enumerate(grid):
            k1, k2 = _knees(geom, t1, t2)
            status, paw = _paw_below(k1, k2, geom.l3, geom.l4)
            if status != _OK:
                continue
            reachable[i, j] = True
            paws[i, j] = paw
            ext = math.hypot(paw[0] - midx, paw[1])
            min_ext = min(min_ext, ext)
            max_ext = max(max_ext, ext)
    if not reachable.any():
        min_ext = math.nan
        max_ext = math.nan
    return Workspace(
        theta_grid=grid,
        reachable=reachable,
        paws=paws,
        min_extension=min_ext,
        max_extension=max_ext,
        reach_limit=geom.reach_limit,
    )
