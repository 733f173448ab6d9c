"""Trajectory representations and geometry used by the coordination stack.

Two trajectory flavours exist.  A planner produces a *speed* trajectory:
positions along a path, each annotated with the speed the vehicle intends
to hold from that point to the next.  Before a trajectory goes on the wire
it is converted to a *timed* trajectory (position, absolute time), which is
what collision checks and prescription execution operate on.

The conversion assumes constant speed per segment, so the arrival time at
point ``n`` is the cumulative sum of ``segment_length / segment_speed``
added to the start time.  A stop (``v == 0``) may therefore only terminate
a trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TrajectoryError",
    "NoNearbyPoint",
    "ZeroSpeed",
    "OutOfRange",
    "NoOverlap",
    "SpeedTrajectory",
    "TimedTrajectory",
    "CollisionReport",
    "convert_trajectory",
    "thin_trajectory",
    "position_at",
    "detect_collision",
]

# Conversion refuses to anchor onto a trajectory further away than this.
NEARBY_LIMIT_M = 50.0


class TrajectoryError(ValueError):
    """Base class for trajectory domain errors."""


class NoNearbyPoint(TrajectoryError):
    """Current position is too far from every trajectory point."""


class ZeroSpeed(TrajectoryError):
    """A non-final segment has speed <= 0, so its travel time is undefined."""


class OutOfRange(TrajectoryError):
    """Queried time lies outside the trajectory's time span."""


class NoOverlap(TrajectoryError):
    """Two trajectories share no usable time overlap."""


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise TrajectoryError(f"expected (n, 2) positions, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise TrajectoryError("a trajectory needs at least 2 points")
    return arr


@dataclass(frozen=True, eq=False)
class SpeedTrajectory:
    """Planned path: positions (n, 2) with the speed held from each point on.

    The final speed is allowed to be zero (a stop terminating the plan);
    earlier speeds must be positive, which :func:`convert_trajectory`
    enforces when it divides by them.
    """

    xy: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        xy = _as_points(self.xy)
        v = np.asarray(self.v, dtype=np.float64)
        if v.shape != (xy.shape[0],):
            raise TrajectoryError("speed array must match point count")
        seg = np.linalg.norm(np.diff(xy, axis=0), axis=1)
        if np.any(seg == 0.0):
            raise TrajectoryError("consecutive points must be distinct")
        xy.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "v", v)

    def __len__(self) -> int:
        return self.xy.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpeedTrajectory):
            return NotImplemented
        return np.array_equal(self.xy, other.xy) and np.array_equal(self.v, other.v)

    def __hash__(self) -> int:
        return hash((self.xy.tobytes(), self.v.tobytes()))


@dataclass(frozen=True, eq=False)
class TimedTrajectory:
    """Timed path: positions (n, 2) with strictly increasing absolute times."""

    xy: np.ndarray
    t: np.ndarray

    def __post_init__(self) -> None:
        xy = _as_points(self.xy)
        t = np.asarray(self.t, dtype=np.float64)
        if t.shape != (xy.shape[0],):
            raise TrajectoryError("time array must match point count")
        if np.any(np.diff(t) <= 0.0):
            raise TrajectoryError("times must be strictly increasing")
        xy.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "t", t)

    def __len__(self) -> int:
        return self.xy.shape[0]

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimedTrajectory):
            return NotImplemented
        return np.array_equal(self.xy, other.xy) and np.array_equal(self.t, other.t)

    def __hash__(self) -> int:
        return hash((self.xy.tobytes(), self.t.tobytes()))


@dataclass(frozen=True)
class CollisionReport:
    """Outcome of sampling two timed trajectories against a distance threshold."""

    colliding: bool
    t_min: float
    d_min: float


def convert_trajectory(
    st: SpeedTrajectory, current_position, t0: float
) -> TimedTrajectory:
    """Convert a speed trajectory to a timed one, anchored at the vehicle.

    The output starts at the trajectory point nearest ``current_position``
    (ties broken toward the lower index) with time ``t0``; each later time
    adds ``segment_length / segment_speed`` for the segment leading to it.

    Raises ``NoNearbyPoint`` if every point is further than 50 m away and
    ``ZeroSpeed`` if a retained non-final segment has speed <= 0.
    """
    pos = np.asarray(current_position, dtype=np.float64)
    dists = np.linalg.norm(st.xy - pos, axis=1)
    idx = int(np.argmin(dists))
    if dists[idx] > NEARBY_LIMIT_M:
        raise NoNearbyPoint(
            f"nearest trajectory point is {dists[idx]:.1f} m away (limit {NEARBY_LIMIT_M:g} m)"
        )
    # Anchoring on the very last point would leave a single-point output;
    # keep the final segment instead.
    idx = min(idx, len(st) - 2)

    xy = st.xy[idx:]
    seg_v = st.v[idx:-1]
    if np.any(seg_v <= 0.0):
        bad = int(np.flatnonzero(seg_v <= 0.0)[0])
        raise ZeroSpeed(f"segment {idx + bad} has speed {seg_v[bad]:g} <= 0")
    seg_len = np.linalg.norm(np.diff(xy, axis=0), axis=1)
    times = np.empty(xy.shape[0], dtype=np.float64)
    times[0] = t0
    times[1:] = t0 + np.cumsum(seg_len / seg_v)
    return TimedTrajectory(xy, times)


def thin_trajectory(tt: TimedTrajectory, factor: int) -> TimedTrajectory:
    """Keep every ``factor``-th point starting at index 0, plus the last point."""
    if factor < 1:
        raise TrajectoryError(f"thinning factor must be >= 1, got {factor}")
    if factor == 1:
        return tt
    n = len(tt)
    keep = list(range(0, n, factor))
    if keep[-1] != n - 1:
        keep.append(n - 1)
    return TimedTrajectory(tt.xy[keep], tt.t[keep])


def position_at(tt: TimedTrajectory, t: float) -> np.ndarray:
    """Linearly interpolated position at time ``t`` (within the time span)."""
    if t < tt.t[0] or t > tt.t[-1]:
        raise OutOfRange(
            f"t={t:g} outside trajectory span [{tt.t[0]:g}, {tt.t[-1]:g}]"
        )
    x = np.interp(t, tt.t, tt.xy[:, 0])
    y = np.interp(t, tt.t, tt.xy[:, 1])
    return np.array([x, y])


def _sample_times(start: float, end: float, dt: float) -> np.ndarray:
    n = int(np.floor((end - start) / dt + 1e-9))
    times = start + np.arange(n + 1) * dt
    if times[-1] < end - 1e-12:
        times = np.append(times, end)
    return times


def detect_collision(
    a: TimedTrajectory, b: TimedTrajectory, threshold: float, dt: float = 0.1
) -> CollisionReport:
    """Sample the overlapping span of two trajectories and find minimum separation.

    Separation is Euclidean distance between interpolated positions at each
    sample (both span ends included).  ``colliding`` is true iff the minimum
    separation is strictly below ``threshold``.
    """
    if dt <= 0.0:
        raise TrajectoryError(f"sampling step must be positive, got {dt}")
    start = max(a.t[0], b.t[0])
    end = min(a.t[-1], b.t[-1])
    if end - start < dt:
        raise NoOverlap(
            f"overlap [{start:g}, {end:g}] shorter than sampling step {dt:g}"
        )
    times = _sample_times(start, end, dt)
    ax = np.interp(times, a.t, a.xy[:, 0])
    ay = np.interp(times, a.t, a.xy[:, 1])
    bx = np.interp(times, b.t, b.xy[:, 0])
    by = np.interp(times, b.t, b.xy[:, 1])
    sep = np.hypot(ax - bx, ay - by)
    i = int(np.argmin(sep))
    d_min = float(sep[i])
    return CollisionReport(colliding=d_min < threshold, t_min=float(times[i]), d_min=d_min)
