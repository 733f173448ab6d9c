# The two-vehicle lane change, with and without coordination.
#
# With coordination the receiver opens the gap smoothly before the lane
# change; without it the receiver only notices the cut-in at the lane
# boundary and brakes to a standstill.  Speed profiles are saved as a PNG
# when matplotlib is available.

from mcmsim import ScenarioConfig
from mcmsim.world import build_world, step_world


def run_with_history(cfg):
    world = build_world(cfg)
    times, speeds, gaps = [], [], []
    receiver = world.by_station[2]
    prescriber = world.by_station[1]
    while world.arrival_time is None and world.tick < 12000:
        step_world(world)
        if world.tick % 10 == 0:
            times.append(world.now)
            speeds.append(receiver.speed)
            gaps.append(prescriber.x - receiver.x)
    return world, times, speeds, gaps


for label, cfg in (
    ("with coordination   ", ScenarioConfig()),
    ("without coordination", ScenarioConfig(mcm_enabled=False)),
):
    world, times, speeds, gaps = run_with_history(cfg)
    receiver = world.by_station[2]
    print(f"{label}: arrival {world.arrival_time:6.2f} s, "
          f"min speed {min(speeds):5.2f} m/s, "
          f"emergency stops {receiver.emergency_episodes}, "
          f"gap at lane change {world.gap_at_lc_onset and round(world.gap_at_lc_onset, 1)} m")
    if cfg.mcm_enabled:
        coordinated = (times, speeds)
    else:
        baseline = (times, speeds)

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(*coordinated, label="receiver, coordinated")
    ax.plot(*baseline, label="receiver, uncoordinated")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("speed [m/s]")
    ax.set_title("Receiver speed during the prescriber's lane change")
    ax.legend()
    fig.tight_layout()
    fig.savefig("lane_change_speeds.png", dpi=120)
    print("saved lane_change_speeds.png")
except ImportError:
    print("matplotlib not installed; skipping the plot")
