# Two coordination engines talking over a toy loopback bus.
#
# Station 1 wants the lane change (prescriber), station 2 sits in the
# target lane (receiver).  The script drives both engines tick by tick,
# first over a perfect link, then with every fourth message dropped to
# show retransmission at work.

import numpy as np

from mcmsim.protocol import (
    CollisionRisk,
    CoordinationState,
    EmptyIntentionSet,
    LaneChangeDesired,
    ManeuverComplete,
    Phase,
    PrescribedTrajectoryReady,
    ProtocolParams,
    VerificationResult,
    collect_intentions,
    step,
)
from mcmsim.trajectory import TimedTrajectory


def trajectory(t0):
    xs = np.arange(30, dtype=float) * 2.0
    return TimedTrajectory(np.column_stack([xs, np.zeros(30)]), t0 + 0.25 * np.arange(30))


def run(drop_every=None):
    params = ProtocolParams(t_timeout=1.0, advertising_duration=0.5)
    states = {
        1: CoordinationState(station_id=1, params=params),
        2: CoordinationState(station_id=2, params=params,
                             own_trajectory=trajectory(0.0)),
    }
    pending = {1: [LaneChangeDesired()], 2: []}
    bus = []          # (deliver_at, message)
    sent = 0
    done_timer = {}

    t = 0.0
    while t < 8.0:
        due = [m for (at, m) in bus if at <= t]
        bus = [(at, m) for (at, m) in bus if at > t]
        for station in (1, 2):
            inbox = tuple(m for m in due
                          if m.header.sender_id != station
                          and m.header.target_id in (0, station))
            events = tuple(pending[station])
            pending[station] = []
            if station in done_timer:
                done_timer[station] -= 1
                if done_timer[station] == 0:
                    events += (ManeuverComplete(),)
                    del done_timer[station]
            old_phase = states[station].phase
            states[station], out = step(states[station], t, inbox, events)
            new = states[station]
            if new.phase != old_phase:
                print(f"  t={t:5.2f}  station {station}: "
                      f"{old_phase.name} -> {new.phase.name}")
            for sig in new.signals:
                if sig == "plan":
                    try:
                        intents = collect_intentions(new, t)
                        target = intents[0][0]
                        pending[station] += [
                            CollisionRisk((target,)),
                            PrescribedTrajectoryReady(trajectory(t), target),
                        ]
                    except EmptyIntentionSet:
                        pending[station].append(CollisionRisk(()))
                elif sig == "verify":
                    pending[station].append(VerificationResult(True))
                elif sig.startswith("actuate"):
                    done_timer[station] = 60
            for m in out:
                sent += 1
                if drop_every and sent % drop_every == 0:
                    continue  # the channel ate this one
                bus.append((round(t + 0.02, 9), m))
        t = round(t + 0.01, 9)
        if all(s.phase in (Phase.DONE, Phase.IDLE) for s in states.values()) \
                and not bus and not done_timer:
            break
    print(f"  outcomes: P={states[1].outcome}  R={states[2].outcome}  "
          f"({sent} messages transmitted)")


print("perfect link:")
run()
print("\nlossy link (every 4th message dropped):")
run(drop_every=4)
