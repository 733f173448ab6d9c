# Speed-to-time trajectory conversion, thinning, and collision checking.
#
# A planner hands us positions with planned speeds; before the trajectory
# goes on the wire it becomes (position, time) pairs, assuming constant
# speed per segment.

import numpy as np

from mcmsim import (
    SpeedTrajectory,
    convert_trajectory,
    detect_collision,
    position_at,
    thin_trajectory,
)

# A 300 m straight plan, one point per metre, cruising at 30 km/h.
v = 30.0 / 3.6
xs = np.arange(0.0, 300.0)
plan = SpeedTrajectory(np.column_stack([xs, np.zeros_like(xs)]), np.full(len(xs), v))

timed = convert_trajectory(plan, current_position=(0.0, 0.0), t0=0.0)
print(f"converted {len(timed)} points, spanning {timed.t_start:.1f}..{timed.t_end:.1f} s")
print("first times:", np.round(timed.t[:5], 3), "(1 m at 8.33 m/s = 0.12 s per segment)")

# One-fifth thinning keeps the message inside a single frame.
thin = thin_trajectory(timed, 5)
print(f"thinned to {len(thin)} points; endpoints preserved: "
      f"{thin.t[0] == timed.t[0] and thin.t[-1] == timed.t[-1]}")

# Interpolate anywhere inside the span.
print("position at t=10 s:", np.round(position_at(thin, 10.0), 2))

# Collision check against a vehicle in the adjacent lane, 8 m behind.
other_xs = np.arange(-8.0, 292.0)
other = convert_trajectory(
    SpeedTrajectory(np.column_stack([other_xs, np.full_like(other_xs, -3.5)]),
                    np.full(len(other_xs), v)),
    current_position=(-8.0, -3.5), t0=0.0,
)
report = detect_collision(thin, other, threshold=20.0, dt=0.1)
print(f"adjacent vehicle: min separation {report.d_min:.2f} m at t={report.t_min:.1f} s "
      f"-> colliding={report.colliding} (threshold 20 m)")
