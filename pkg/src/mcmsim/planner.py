"""Lane-change application logic: target discovery, prescription generation,
verification, and loading into the speed controller.

The prescriber opens a gap by telling the leading conflicting vehicle in the
target lane to run a lower speed for a while.  The prescribed profile holds
the receiver's current speed for ``dt1`` seconds, drops it by ``dV`` for
``dt2 = d0 / dV`` seconds, then restores it, which shortens the receiver's
travelled distance by exactly ``d0`` and turns the current gap ``d`` into
``d + d0``.  The receiver tracks the profile with proportional speed
feedback, which smooths the two speed steps into ramps.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from .trajectory import TimedTrajectory, position_at

__all__ = [
    "PlannerError",
    "UnknownLane",
    "TooSlow",
    "HorizonTooShort",
    "Lane",
    "LaneGeometry",
    "PrescriptionParams",
    "VerificationLimits",
    "filter_in_lane",
    "find_leading",
    "generate_prescribed",
    "implied_speeds",
    "verify_prescription",
    "PrescriptionFollower",
    "follower_accel",
    "load_prescription",
]

MIN_DECELERATION_WIDTH = 0.1  # m/s; below this the profile degenerates

# Proportional speed-tracking gain and comfort acceleration bound used when a
# prescription is executed (and assumed when one is verified).
FOLLOW_GAIN = 1.0        # 1/s
FOLLOW_ACCEL_LIMIT = 3.0  # m/s^2


class PlannerError(ValueError):
    pass


class UnknownLane(PlannerError):
    pass


class TooSlow(PlannerError):
    """Receiver cannot shed dV without stopping."""


class HorizonTooShort(PlannerError):
    """Receiver's trajectory does not span the prescribed maneuver."""


@dataclass(frozen=True)
class Lane:
    """Rectangular lane zone described by its centerline and width."""

    lane_id: int
    start: tuple[float, float]
    end: tuple[float, float]
    width: float


@dataclass(frozen=True)
class LaneGeometry:
    lanes: tuple[Lane, ...]

    def lane(self, lane_id: int) -> Lane:
        for ln in self.lanes:
            if ln.lane_id == lane_id:
                return ln
        raise UnknownLane(f"no lane with id {lane_id}")

    def contains(self, lane_id: int, point) -> bool:
        """Point-in-rectangle test, boundary inclusive."""
        ln = self.lane(lane_id)
        p = np.asarray(point, dtype=float)
        a = np.asarray(ln.start, dtype=float)
        b = np.asarray(ln.end, dtype=float)
        axis = b - a
        length = float(np.linalg.norm(axis))
        axis /= length
        rel = p - a
        s = float(rel @ axis)
        lateral = abs(float(rel[0] * axis[1] - rel[1] * axis[0]))
        return -1e-9 <= s <= length + 1e-9 and lateral <= ln.width / 2.0 + 1e-9


@dataclass(frozen=True)
class PrescriptionParams:
    """Prescription shape: desired extra gap d0, deceleration width dV,
    wait-before-action dt1, and the planner's conflict distance threshold."""

    d0: float = 20.0
    dv: float = 20.0 / 3.6
    dt1: float = 2.0
    collision_threshold: float = 20.0
    sample_dt: float = 0.1
    resume_tail: float = 2.0

    def __post_init__(self) -> None:
        if self.d0 <= 0:
            raise ValueError("d0 must be positive")
        if self.dv < MIN_DECELERATION_WIDTH:
            raise ValueError(f"dV must be >= {MIN_DECELERATION_WIDTH} m/s")
        if self.dt1 < 0:
            raise ValueError("dt1 must be >= 0")
        if self.collision_threshold <= 0 or self.sample_dt <= 0 or self.resume_tail <= 0:
            raise ValueError("thresholds and sampling intervals must be positive")

    @property
    def dt2(self) -> float:
        return self.d0 / self.dv


@dataclass(frozen=True)
class VerificationLimits:
    max_decel: float = 5.0
    min_speed: float = 0.0
    max_lateral_dev: float = 0.5
    # Window the speed feedback is granted to settle a demanded speed drop;
    # sustained braking demands are averaged over at least this long.
    smoothing_window: float = 3.5


def filter_in_lane(candidates, lane: LaneGeometry, target_lane_id: int) -> list:
    """Keep candidates whose current position lies inside the target lane.

    ``candidates`` are (station, trajectory, position) triples; the lane
    boundary counts as inside.
    """
    lane.lane(target_lane_id)  # raises UnknownLane
    return [c for c in candidates if lane.contains(target_lane_id, c[2])]


def find_leading(candidates, heading) -> int:
    """Station furthest ahead along the travel direction ``heading``.

    Equivalent to repeating the pairwise in-front test (positive projection
    of the relative position on the heading) until one vehicle wins, but
    order independent: the argmax of ``position . heading``.
    """
    if not candidates:
        raise PlannerError("no candidates")
    n = np.asarray(heading, dtype=float)
    best_station = None
    best_proj = -np.inf
    for station, pos in candidates:
        proj = float(np.asarray(pos, dtype=float) @ n)
        if proj > best_proj:
            best_proj = proj
            best_station = station
    return best_station


def _arc_lengths(xy: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(xy, axis=0), axis=1)
    return np.concatenate(([0.0], np.cumsum(seg)))


def _point_along(xy: np.ndarray, arc: np.ndarray, s: float) -> np.ndarray:
    x = np.interp(s, arc, xy[:, 0])
    y = np.interp(s, arc, xy[:, 1])
    return np.array([x, y])


def generate_prescribed(
    receiver_tt: TimedTrajectory,
    receiver_speed: float,
    current_gap: float,
    params: PrescriptionParams,
    now: float,
) -> TimedTrajectory:
    """Build the prescribed trajectory for the receiver.

    The profile runs along the receiver's own path (only the timing
    changes): hold ``receiver_speed`` for ``dt1``, hold
    ``receiver_speed - dV`` for ``dt2 = d0 / dV``, then resume for a short
    tail.  The cumulative shortfall against the original plan is exactly
    ``d0``, so the total gap becomes ``current_gap + d0``.
    """
    if receiver_speed <= params.dv:
        raise TooSlow(
            f"receiver at {receiver_speed:.2f} m/s cannot shed {params.dv:.2f} m/s"
        )
    dt2 = params.dt2
    horizon = params.dt1 + dt2
    if receiver_tt.t_end < now + horizon:
        raise HorizonTooShort(
            f"trajectory ends at {receiver_tt.t_end:.2f} s, need {now + horizon:.2f} s"
        )

    # Anchor on the receiver's current position along its path.
    if receiver_tt.t_start <= now <= receiver_tt.t_end:
        anchor = position_at(receiver_tt, now)
    else:
        anchor = receiver_tt.xy[0]
    # Path geometry from the anchor onward.
    idx = int(np.searchsorted(receiver_tt.t, now, side="right"))
    idx = min(max(idx, 1), len(receiver_tt) - 1)
    path = np.vstack([anchor, receiver_tt.xy[idx:]])
    arc = _arc_lengths(path)

    # Sample grid: regular steps plus the exact profile breakpoints.
    total = horizon + params.resume_tail
    n = int(np.floor(total / params.sample_dt + 1e-9))
    taus = set(np.round(np.arange(n + 1) * params.sample_dt, 9))
    taus.update((params.dt1, params.dt1 + dt2, total))
    tau = np.array(sorted(taus))

    low = receiver_speed - params.dv
    # Distance travelled by the piecewise-constant speed profile at each tau.
    s = np.where(
        tau <= params.dt1,
        receiver_speed * tau,
        np.where(
            tau <= params.dt1 + dt2,
            receiver_speed * params.dt1 + low * (tau - params.dt1),
            receiver_speed * params.dt1 + low * dt2
            + receiver_speed * (tau - params.dt1 - dt2),
        ),
    )
    if s[-1] > arc[-1] + 1e-6:
        raise HorizonTooShort(
            f"path covers {arc[-1]:.1f} m, profile needs {s[-1]:.1f} m"
        )
    pts = np.array([_point_along(path, arc, si) for si in s])
    return TimedTrajectory(pts, now + tau)


def implied_speeds(tt: TimedTrajectory) -> tuple[np.ndarray, np.ndarray]:
    """Per-segment speeds implied by a timed trajectory.

    Returns segment start times and signed speeds; the sign follows the
    overall travel direction, so backing up along the path reads negative.
    """
    disp = np.diff(tt.xy, axis=0)
    dt = np.diff(tt.t)
    direction = tt.xy[-1] - tt.xy[0]
    norm = np.linalg.norm(direction)
    if norm > 0:
        direction = direction / norm
        signs = np.sign(disp @ direction)
        signs[signs == 0] = 1.0
    else:
        signs = np.ones(len(dt))
    speeds = signs * np.linalg.norm(disp, axis=1) / dt
    return tt.t[:-1].copy(), speeds


def _lateral_deviation(tt: TimedTrajectory, own_planned: TimedTrajectory) -> float:
    """Largest distance from prescription points to the own-path polyline.

    The path is extended beyond both endpoints so a purely longitudinal
    offset (a prescription starting slightly behind the current plan start)
    does not read as lateral deviation.
    """
    path = own_planned.xy
    first_dir = path[1] - path[0]
    first_dir = first_dir / np.linalg.norm(first_dir)
    last_dir = path[-1] - path[-2]
    last_dir = last_dir / np.linalg.norm(last_dir)
    path = np.vstack([path[0] - 1e3 * first_dir, path, path[-1] + 1e3 * last_dir])
    a = path[:-1]
    b = path[1:]
    ab = b - a
    ab_len2 = np.einsum("ij,ij->i", ab, ab)
    worst = 0.0
    for p in tt.xy:
        ap = p - a
        t = np.clip(np.einsum("ij,ij->i", ap, ab) / ab_len2, 0.0, 1.0)
        closest = a + ab * t[:, None]
        d = np.min(np.linalg.norm(closest - p, axis=1))
        worst = max(worst, float(d))
    return worst


def verify_prescription(
    tt: TimedTrajectory,
    limits: VerificationLimits,
    own_planned: TimedTrajectory,
) -> bool:
    """Decide whether a prescribed trajectory is safe to execute.

    Rejects when implied speeds fall below ``min_speed``, when points leave
    the own planned path by more than ``max_lateral_dev``, or when the
    demanded braking is unachievable: for every pair of samples the speed
    drop must not exceed ``max_decel * max(elapsed, smoothing_window)``.
    The window absorbs the step discontinuities that the speed feedback
    smooths out while still rejecting sustained over-limit braking.
    """
    if _lateral_deviation(tt, own_planned) > limits.max_lateral_dev + 1e-9:
        return False
    times, speeds = implied_speeds(tt)
    if np.any(speeds < limits.min_speed - 1e-9):
        return False
    n = len(speeds)
    dt_pairs = times[None, :] - times[:, None]          # t_j - t_i
    drop = speeds[:, None] - speeds[None, :]            # v_i - v_j
    allow = limits.max_decel * np.maximum(dt_pairs, limits.smoothing_window)
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    return not np.any(drop[upper] > allow[upper] + 1e-9)


def follower_accel(
    target_speed: float,
    current_speed: float,
    gain: float = FOLLOW_GAIN,
    accel_limit: float = FOLLOW_ACCEL_LIMIT,
) -> float:
    """Proportional speed-tracking command, clamped to the comfort bound."""
    return float(np.clip(gain * (target_speed - current_speed), -accel_limit, accel_limit))


class PrescriptionFollower:
    """Target-speed schedule derived from a prescribed trajectory.

    At each control step the commanded acceleration is
    ``gain * (target_speed(t) - current_speed)`` clamped to
    ``[-accel_limit, +accel_limit]``, which realizes a smooth version of the
    stepped prescription.
    """

    def __init__(
        self,
        tt: TimedTrajectory,
        gain: float = FOLLOW_GAIN,
        accel_limit: float = FOLLOW_ACCEL_LIMIT,
    ) -> None:
        self.trajectory = tt
        self.gain = gain
        self.accel_limit = accel_limit
        times, speeds = implied_speeds(tt)
        self._times = times.tolist()
        self._speeds = speeds.tolist()
        self.t_end = tt.t_end

    def target_speed_at(self, t: float) -> float:
        if t <= self._times[0]:
            return self._speeds[0]
        i = bisect.bisect_right(self._times, t) - 1
        i = min(i, len(self._speeds) - 1)
        return self._speeds[i]

    def done(self, t: float) -> bool:
        return t >= self.t_end

    def accel_command(self, t: float, current_speed: float) -> float:
        return follower_accel(
            self.target_speed_at(t), current_speed, self.gain, self.accel_limit
        )


def load_prescription(
    tt: TimedTrajectory,
    controller=None,
    gain: float = FOLLOW_GAIN,
    accel_limit: float = FOLLOW_ACCEL_LIMIT,
) -> PrescriptionFollower:
    """Turn a verified prescription into the speed-command stream.

    Returns the follower; when ``controller`` exposes ``install_follower``
    it is attached there as well.
    """
    follower = PrescriptionFollower(tt, gain, accel_limit)
    if controller is not None and hasattr(controller, "install_follower"):
        controller.install_follower(follower)
    return follower
