"""Exhaustive grid search over leg link lengths and spring stiffness.

Every grid point is evaluated with the one-dimensional squat-and-release
protocol at a fixed squat angle and torque budget.  Evaluations are pure,
so points can be farmed out to a worker pool and merged in any order; the
output is always sorted lexicographically by (l1, l3, k) and is therefore
identical across runs and worker counts.  Completed points are appended to
a checkpoint CSV so an interrupted sweep resumes without recomputing.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from .errors import AllFilteredError, IntegrationDivergedError, UnreachableError
from .jump import simulate_vertical_grid_jump
from .linkage import LegGeometry, forward_kinematics, spring_length_gradient
from .model import SWEEP_TORQUE, MotorModel, RobotModel, SimParams

STATUS_OK = "ok"
STATUS_UNREACHABLE = "unreachable"
STATUS_DIVERGED = "diverged"

SWEEP_CSV_COLUMNS = ("l1_m", "l2_m", "l3_m", "l4_m", "k_Npm", "h_max_m", "status")


@dataclass(frozen=True)
class GridSpec:
    """Ranges and steps of the symmetric design sweep."""

    l1_min: float = 0.10
    l1_max: float = 0.35
    l1_step: float = 0.005
    l3_min: float = 0.15
    l3_max: float = 0.45
    l3_step: float = 0.005
    k_min: float = 600.0
    k_max: float = 1000.0
    k_step: float = 50.0
    l0: float = 0.09
    squat_angle: float = 120.0
    tau_out: float = SWEEP_TORQUE
    theta_rest: float = 17.0

    def __post_init__(self):
        if min(self.l1_step, self.l3_step, self.k_step) <= 0.0:
            raise ValueError("grid steps must be positive")
        if self.l1_min > self.l1_max or self.l3_min > self.l3_max or self.k_min > self.k_max:
            raise ValueError("grid ranges must be non-empty")

    def axis(self, lo: float, hi: float, step: float) -> list[float]:
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return [round(lo + i * step, 9) for i in range(n)]

    def points(self) -> list[tuple[float, float, float]]:
        """Grid points in lexicographic (l1, l3, k) order."""
        return [
            (l1, l3, k)
            for l1 in self.axis(self.l1_min, self.l1_max, self.l1_step)
            for l3 in self.axis(self.l3_min, self.l3_max, self.l3_step)
            for k in self.axis(self.k_min, self.k_max, self.k_step)
        ]


@dataclass(frozen=True)
class EvalRecord:
    l1: float
    l2: float
    l3: float
    l4: float
    k: float
    h_max: float  # nan unless status == ok
    status: str

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    def csv_row(self) -> str:
        h = format(self.h_max, ".10g") if self.ok else ""
        return (
            f"{self.l1:.10g},{self.l2:.10g},{self.l3:.10g},{self.l4:.10g},"
            f"{self.k:.10g},{h},{self.status}"
        )

    @staticmethod
    def from_csv_row(line: str) -> "EvalRecord":
        parts = line.strip().split(",")
        if len(parts) != 7:
            raise ValueError("malformed sweep row")
        l1, l2, l3, l4, k = (float(x) for x in parts[:5])
        status = parts[6]
        h = float(parts[5]) if parts[5] else math.nan
        return EvalRecord(l1, l2, l3, l4, k, h, status)


_EVAL_CTX: dict = {}


def _init_worker(spec: GridSpec, motor: MotorModel, params: SimParams, payload: float):
    _EVAL_CTX["spec"] = spec
    _EVAL_CTX["motor"] = motor
    _EVAL_CTX["params"] = params
    _EVAL_CTX["payload"] = payload


def _eval_point(point: tuple[float, float, float]) -> EvalRecord:
    l1, l3, k = point
    spec: GridSpec = _EVAL_CTX["spec"]
    try:
        geom = LegGeometry(
            l0=spec.l0, l1=l1, l2=l1, l3=l3, l4=l3, k=k, theta_rest=spec.theta_rest
        )
    except (UnreachableError, ValueError):
        return EvalRecord(l1, l1, l3, l3, k, math.nan, STATUS_UNREACHABLE)
    model = RobotModel.for_geometry(geom, m_payload=_EVAL_CTX["payload"])
    try:
        h = simulate_vertical_grid_jump(
            model, spec.squat_angle, spec.tau_out, _EVAL_CTX["params"], _EVAL_CTX["motor"]
        )
    except UnreachableError:
        return EvalRecord(l1, l1, l3, l3, k, math.nan, STATUS_UNREACHABLE)
    except IntegrationDivergedError:
        return EvalRecord(l1, l1, l3, l3, k, math.nan, STATUS_DIVERGED)
    return EvalRecord(l1, l1, l3, l3, k, h, STATUS_OK)


def _point_key(l1: float, l3: float, k: float) -> tuple:
    return (round(l1, 9), round(l3, 9), round(k, 9))


def read_checkpoint(path: str) -> dict[tuple, EvalRecord]:
    """Completed evaluations from a (possibly truncated) checkpoint CSV."""
    done: dict[tuple, EvalRecord] = {}
    if not path or not os.path.exists(path):
        return done
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("l1_m"):
                continue
            try:
                rec = EvalRecord.from_csv_row(line)
            except ValueError:
                continue  # torn tail line from an interrupted run
            done[_point_key(rec.l1, rec.l3, rec.k)] = rec
    return done


def checkpoint_header() -> str:
    return "# units: m, m, m, m, N/m, m, -\n" + ",".join(SWEEP_CSV_COLUMNS) + "\n"


def grid_search(
    spec: GridSpec,
    params: SimParams | None = None,
    motor: MotorModel | None = None,
    payload: float = 0.25,
    workers: int | None = None,
    checkpoint: str | None = None,
    progress=None,
) -> list[EvalRecord]:
    """Evaluate every grid point; returns records sorted by (l1, l3, k).

    ``checkpoint`` names an append-only CSV: completed points are written
    as they finish and are skipped when the sweep is restarted.
    """
    params = params or SimParams()
    motor = motor or MotorModel()
    pts = spec.points()
    done = read_checkpoint(checkpoint) if checkpoint else {}
    todo = [p for p in pts if _point_key(*p) not in done]

    ck = None
    if checkpoint:
        fresh = not os.path.exists(checkpoint) or os.path.getsize(checkpoint) == 0
        ck = open(checkpoint, "a", encoding="utf-8")
        if fresh:
            ck.write(checkpoint_header())
            ck.flush()

    results: dict[tuple, EvalRecord] = dict(done)
    n_workers = workers if workers and workers > 0 else (os.cpu_count() or 1)
    try:
        if todo:
            if n_workers <= 1:
                _init_worker(spec, motor, params, payload)
                it = map(_eval_point, todo)
                for i, rec in enumerate(it):
                    results[_point_key(rec.l1, rec.l3, rec.k)] = rec
                    if ck:
                        ck.write(rec.csv_row() + "\n")
                        ck.flush()
                    if progress:
                        progress(len(done) + i + 1, len(pts))
            else:
                with ProcessPoolExecutor(
                    max_workers=n_workers,
                    initializer=_init_worker,
                    initargs=(spec, motor, params, payload),
                ) as pool:
                    for i, rec in enumerate(
                        pool.map(_eval_point, todo, chunksize=32)
                    ):
                        results[_point_key(rec.l1, rec.l3, rec.k)] = rec
                        if ck:
                            ck.write(rec.csv_row() + "\n")
                            ck.flush()
                        if progress:
                            progress(len(done) + i + 1, len(pts))
    finally:
        if ck:
            ck.close()
    return [results[_point_key(*p)] for p in pts]


def authority_margin(geom: LegGeometry, tau_sat: float, theta_deg: float) -> float:
    """Fraction of motor torque left after statically holding the spring."""
    if tau_sat <= 0.0:
        raise ValueError("tau_sat must be positive")
    cfg = forward_kinematics(geom, theta_deg, theta_deg, check_limits=False)
    length = math.hypot(
        cfg.knee2[0] - cfg.knee1[0], cfg.knee2[1] - cfg.knee1[1]
    )
    ext = max(0.0, length - geom.rest_length)
    g1, g2 = spring_length_gradient(geom, theta_deg, theta_deg)
    tau_spring = geom.k * ext * max(abs(g1), abs(g2))
    return 1.0 - tau_spring / tau_sat


@dataclass(frozen=True)
class SelectionCriteria:
    """Design-selection constraints behind the shipped leg parameters."""

    min_margin: float = 0.30  # authority margin at full squat
    max_footprint: float = 0.175  # hip link length cap, m
    height_tolerance: float = 0.0  # m of jump height tradeable for leg reach

    def __post_init__(self):
        if not 0.0 < self.min_margin < 1.0:
            raise ValueError("min_margin must lie in (0, 1)")


@dataclass
class SelectionReport:
    chosen: EvalRecord
    optimum: EvalRecord
    n_ok: int
    n_survivors: int
    chosen_margin: float
    optimum_margin: float


def select_design(
    records: list[EvalRecord],
    criteria: SelectionCriteria,
    spec: GridSpec | None = None,
) -> SelectionReport:
    """Pick the best surviving design and report the unconstrained optimum.

    Survivors satisfy the authority margin at the full squat angle and the
    footprint cap; among them the maximum-height record wins.  A nonzero
    height tolerance trades height for leg reach: within the tolerance of
    the best surviving height, the design with the longest standing reach
    is preferred.
    """
    spec = spec or GridSpec()
    ok = [r for r in records if r.ok and not math.isnan(r.h_max)]
    if not ok:
        raise AllFilteredError("no successful evaluations to select from")
    optimum = max(ok, key=lambda r: r.h_max)

    def margin_of(rec: EvalRecord) -> float:
        geom = LegGeometry(
            l0=spec.l0, l1=rec.l1, l2=rec.l2, l3=rec.l3, l4=rec.l4,
            k=rec.k, theta_rest=spec.theta_rest, validate=False,
        )
        return authority_margin(geom, spec.tau_out, spec.squat_angle)

    survivors = [
        r
        for r in ok
        if r.l1 <= criteria.max_footprint + 1e-12
        and margin_of(r) >= criteria.min_margin
    ]
    if not survivors:
        raise AllFilteredError("selection criteria rejected every design")
    best_h = max(r.h_max for r in survivors)
    if criteria.height_tolerance > 0.0:
        near = [r for r in survivors if r.h_max >= best_h - criteria.height_tolerance]
        chosen = max(near, key=lambda r: (r.l1 + r.l3, r.h_max))
    else:
        chosen = max(survivors, key=lambda r: r.h_max)
    return SelectionReport(
        chosen=chosen,
        optimum=optimum,
        n_ok=len(ok),
        n_survivors=len(survivors),
        chosen_margin=margin_of(chosen),
        optimum_margin=margin_of(optimum),
    )
