"""Fixed-step world: vehicles on a two-lane straight road over a lossy,
delayed broadcast channel.

The step loop is single threaded and fully deterministic: the clock is
derived from an integer tick count, message loss is the only random element
and draws from one seeded generator in a fixed order.  Each tick delivers
due messages, runs every vehicle's protocol engine and controller against
the same world snapshot, then integrates kinematics.

Controller modes follow the scenario roles: cruising on the own plan,
following a prescription, constant-time-gap car following, emergency stop
(the no-coordination reaction to a cut-in), and the lane change itself.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

from . import protocol
from .codec import encoded_size
from .config import ScenarioConfig
from .messages import (
    Advertisement,
    Cam,
    Intention,
    McmMessage,
    MessageHeader,
    MsgType,
)
from .planner import (
    HorizonTooShort,
    Lane,
    LaneGeometry,
    PrescriptionFollower,
    TooSlow,
    find_leading,
    filter_in_lane,
    generate_prescribed,
    load_prescription,
    verify_prescription,
)
from .protocol import (
    CollisionRisk,
    CoordinationState,
    EmptyIntentionSet,
    LaneChangeDesired,
    ManeuverComplete,
    Phase,
    PrescribedTrajectoryReady,
    Role,
    ScenarioAbort,
    VerificationResult,
    collect_intentions,
)
from .trajectory import (
    SpeedTrajectory,
    TimedTrajectory,
    convert_trajectory,
    detect_collision,
    thin_trajectory,
)

__all__ = [
    "Controller",
    "VehicleState",
    "ChannelState",
    "WorldState",
    "car_following_accel",
    "smoothstep",
    "lane_change_offset",
    "execute_lane_change",
    "baseline_receiver_behavior",
    "step_world",
    "build_world",
]


class Controller(IntEnum):
    CRUISE_PLANNED = 0
    PRESCRIPTION_FOLLOWING = 1
    CAR_FOLLOWING = 2
    EMERGENCY_STOP = 3
    LANE_CHANGING = 4


def smoothstep(p: float) -> float:
    p = min(max(p, 0.0), 1.0)
    return p * p * (3.0 - 2.0 * p)


def lane_change_offset(y_from: float, y_to: float, progress: float) -> float:
    """Lateral position during a lane change (smoothstep blend)."""
    return y_from + (y_to - y_from) * smoothstep(progress)


def car_following_accel(
    gap: float,
    v: float,
    v_lead: float,
    time_gap: float = 1.5,
    standstill: float = 5.0,
    k_v: float = 0.8,
    k_d: float = 0.3,
    max_accel: float = 2.0,
    max_decel: float = 5.0,
) -> float:
    """Constant-time-gap law: ``a = k_v (v_lead - v) + k_d (gap - (s0 + v T))``."""
    if gap <= 0:
        raise ValueError("gap must be positive")
    a = k_v * (v_lead - v) + k_d * (gap - (standstill + v * time_gap))
    return float(min(max(a, -max_decel), max_accel))


@dataclass
class VehicleState:
    """Mutable per-vehicle simulation state plus its application glue."""

    station_id: int
    label: str
    x: float
    y: float
    speed: float
    lane_id: int
    cruise_speed: float
    controller: Controller = Controller.CRUISE_PLANNED
    heading: tuple[float, float] = (1.0, 0.0)
    planned: SpeedTrajectory | None = None
    coordination: CoordinationState | None = None

    # lane-change interpolation
    lc_progress: float = 0.0
    lc_from_y: float = 0.0
    lc_to_y: float = 0.0
    lc_target_lane: int = 0

    # controllers
    follower: PrescriptionFollower | None = None
    accel_cap: float | None = None     # cautious restart after an emergency stop
    intruder_station: int = 0

    # application-side memory
    pending_events: list = None
    gap_at_prescription: float | None = None
    gap_target: float | None = None
    lc_earliest: float | None = None   # prescription start + dt1
    maneuver_done_sent: bool = False
    follower_done_sent: bool = False
    emergency_episodes: int = 0

    def __post_init__(self) -> None:
        if self.pending_events is None:
            self.pending_events = []

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass
class ChannelState:
    """Broadcast channel: per-copy Bernoulli loss and a fixed delay."""

    loss_rate: float
    latency_ticks: int
    rng: random.Random
    in_flight: deque = None  # (due_tick, recipient, message)

    def __post_init__(self) -> None:
        if self.in_flight is None:
            self.in_flight = deque()


class WorldState:
    """Simulation container; the clock is ``tick * dt`` with integer ticks."""

    def __init__(self, cfg: ScenarioConfig, vehicles: list[VehicleState],
                 measured_station: int, lanes: LaneGeometry) -> None:
        self.cfg = cfg
        self.vehicles = sorted(vehicles, key=lambda v: v.station_id)
        self.by_station = {v.station_id: v for v in self.vehicles}
        self.measured_station = measured_station
        self.lanes = lanes
        self.tick = 0
        self.dt = cfg.dt_sim_s
        self.channel = ChannelState(
            loss_rate=cfg.loss_rate,
            latency_ticks=max(0, int(round(cfg.latency_s / cfg.dt_sim_s))),
            rng=random.Random(cfg.seed),
        )
        self.cam_period_ticks = max(1, int(round(1.0 / (cfg.cam_frequency_hz * cfg.dt_sim_s))))
        self.goal_x = self.by_station[measured_station].x + cfg.goal_distance_m
        self.prescriber_station = 1
        self.lc_desired_at: float | None = None
        self.lc_onset_time: float | None = None
        self.gap_at_lc_onset: float | None = None
        self.arrival_time: float | None = None
        self.min_gap = math.inf
        self.coordination_events: list[tuple[float, int, str]] = []
        self.msg_log: list[tuple[float, int, int, int]] = []  # (time, type, sender, target)
        self.bandwidth: dict[tuple[int, int], int] = {}       # (second, type) -> bytes
        self.tx_count: dict[int, int] = {}
        self.tx_bytes: dict[int, int] = {}
        self.sent_copies = 0
        self.delivered_copies = 0
        self.dropped_copies = 0
        self.trace_lines: list[str] = []
        self._inboxes: dict[int, list[McmMessage]] = {v.station_id: [] for v in self.vehicles}

    @property
    def now(self) -> float:
        return self.tick * self.dt

    # -- transmission ---------------------------------------------------------

    def transmit(self, sender: int, msg: McmMessage) -> None:
        cfg = self.cfg
        if cfg.silence_station == sender and self.now >= cfg.silence_at_s:
            return
        size = encoded_size(msg)
        mtype = int(msg.header.msg_type)
        second = int(self.now)
        self.bandwidth[(second, mtype)] = self.bandwidth.get((second, mtype), 0) + size
        self.tx_count[mtype] = self.tx_count.get(mtype, 0) + 1
        self.tx_bytes[mtype] = self.tx_bytes.get(mtype, 0) + size
        if mtype not in (MsgType.CAM,) and msg.header.target_id != msg.header.sender_id:
            self.msg_log.append((self.now, mtype, msg.header.sender_id, msg.header.target_id))
        due = self.tick + self.channel.latency_ticks
        for v in self.vehicles:
            if v.station_id == sender:
                continue
            self.sent_copies += 1
            if self.channel.rng.random() < self.channel.loss_rate:
                self.dropped_copies += 1
                continue
            self.channel.in_flight.append((due, v.station_id, msg))

    def deliver_due(self) -> None:
        q = self.channel.in_flight
        while q and q[0][0] <= self.tick:
            _due, recipient, msg = q.popleft()
            self.delivered_copies += 1
            self._inboxes[recipient].append(msg)


# -- application glue ----------------------------------------------------------


def _planned_trajectory(world: WorldState, v: VehicleState) -> SpeedTrajectory:
    """Stand-alone plan from the current position to just past the goal line.

    Points every ``plan_spacing_m`` at cruise speed.  The prescriber's plan
    includes its intended lane change starting at the current position.
    """
    cfg = world.cfg
    end_x = world.goal_x + cfg.post_goal_margin_m
    xs = np.arange(v.x, end_x + 1e-9, cfg.plan_spacing_m)
    if xs[-1] < end_x - 1e-9:
        xs = np.append(xs, end_x)
    if v.station_id == world.prescriber_station and v.lane_id == 0 and cfg.mcm_enabled:
        target_y = -cfg.lane_width_m
        span = max(v.speed, 1.0) * cfg.lane_change_duration_s
        prog = np.clip((xs - v.x) / span, 0.0, 1.0)
        ys = np.array([lane_change_offset(v.y, target_y, p) for p in prog])
    else:
        ys = np.full_like(xs, v.y)
    xy = np.column_stack([xs, ys])
    return SpeedTrajectory(xy, np.full(len(xs), v.cruise_speed))


def _own_timed(world: WorldState, v: VehicleState, thin: bool) -> TimedTrajectory:
    plan = _planned_trajectory(world, v)
    tt = convert_trajectory(plan, (v.x, v.y), world.now)
    return thin_trajectory(tt, world.cfg.thin_factor) if thin else tt


def _position_from_cam(state: CoordinationState, station: int, now: float):
    """Peer position estimate from its last CAM, dead-reckoned to ``now``.

    A raw CAM pose is stale by up to one beacon period plus latency, which
    would bias gap measurements by speed * staleness; extrapolating along
    the reported heading removes that bias."""
    rec = state.cam_of(station)
    if rec is None:
        return None
    age = max(0.0, now - rec.generated_at)
    pos = np.array([
        rec.x + rec.speed * math.cos(rec.heading) * age,
        rec.y + rec.speed * math.sin(rec.heading) * age,
    ])
    return pos, rec.speed


def _plan_prescriptions(world: WorldState, v: VehicleState) -> list:
    """Prescriber application step: pick the target and build its trajectory."""
    cfg = world.cfg
    state = v.coordination
    try:
        intents = collect_intentions(state, world.now)
    except EmptyIntentionSet:
        return [CollisionRisk(())]
    own_tt = _own_timed(world, v, thin=False)
    candidates = []
    for station, tt in intents:
        cam = _position_from_cam(state, station, world.now)
        if cam is not None:
            pos, speed = cam
        else:
            pos, speed = tt.xy[0], None
        report = detect_collision(own_tt, tt, cfg.collision_threshold_m, 0.1)
        if report.colliding:
            candidates.append((station, tt, pos, speed))
    target_lane = 1
    in_lane = filter_in_lane(
        [(c[0], c[1], c[2]) for c in candidates], world.lanes, target_lane
    )
    kept = {c[0] for c in in_lane}
    candidates = [c for c in candidates if c[0] in kept]
    if not candidates:
        return [CollisionRisk(())]
    leader = find_leading([(c[0], c[2]) for c in candidates], v.heading)
    chosen = next(c for c in candidates if c[0] == leader)
    _station, tt, pos, speed = chosen
    if speed is None:
        speed = v.cruise_speed
    gap = float((v.position - pos) @ np.asarray(v.heading))
    try:
        prescription = generate_prescribed(
            tt, speed, gap, cfg.prescription_params(), world.now
        )
    except (TooSlow, HorizonTooShort):
        return [ScenarioAbort()]
    v.gap_at_prescription = gap
    v.gap_target = gap + cfg.d0_m
    v.lc_earliest = world.now + cfg.dt1
    targets = tuple(sorted(c[0] for c in candidates))
    return [CollisionRisk(targets), PrescribedTrajectoryReady(prescription, leader)]


def _verify(world: WorldState, v: VehicleState) -> list:
    tt = v.coordination.received_prescription
    ok = verify_prescription(tt, world.cfg.verification_limits(),
                             _own_timed(world, v, thin=False))
    return [VerificationResult(ok)]


def _begin_lane_change(world: WorldState, v: VehicleState) -> None:
    if v.controller == Controller.LANE_CHANGING or v.lane_id == 1:
        return
    v.controller = Controller.LANE_CHANGING
    v.lc_progress = 0.0
    v.lc_from_y = v.y
    v.lc_to_y = -world.cfg.lane_width_m
    v.lc_target_lane = 1
    if v.station_id == world.prescriber_station and world.lc_onset_time is None:
        world.lc_onset_time = world.now
        measured = world.by_station[world.measured_station]
        world.gap_at_lc_onset = v.x - measured.x


def _handle_signals(world: WorldState, v: VehicleState, old_phase: Phase) -> None:
    state = v.coordination
    for sig in state.signals:
        if sig == protocol.SIG_PLAN:
            v.pending_events.extend(_plan_prescriptions(world, v))
        elif sig == protocol.SIG_VERIFY:
            v.pending_events.extend(_verify(world, v))
        elif sig == protocol.SIG_ACTUATE_RECEIVER:
            v.follower = load_prescription(
                state.accepted_prescription,
                gain=world.cfg.follow_gain,
                accel_limit=world.cfg.follow_accel_limit_mps2,
            )
            v.follower_done_sent = False
            v.controller = Controller.PRESCRIPTION_FOLLOWING
        elif sig == protocol.SIG_ACTUATE_PRESCRIBER:
            pass  # lane change starts once the gap is confirmed open
        elif sig == protocol.SIG_REVERT:
            v.follower = None
            if v.controller in (Controller.PRESCRIPTION_FOLLOWING, Controller.LANE_CHANGING):
                v.controller = Controller.CRUISE_PLANNED
            world.coordination_events.append((world.now, v.station_id, state.outcome))
        elif sig == protocol.SIG_STANDALONE:
            world.coordination_events.append((world.now, v.station_id, state.outcome))
            if v.station_id == world.prescriber_station:
                _begin_lane_change(world, v)
        elif sig == protocol.SIG_DONE:
            if v.controller == Controller.PRESCRIPTION_FOLLOWING:
                v.follower = None
                v.controller = Controller.CRUISE_PLANNED
            world.coordination_events.append((world.now, v.station_id, state.outcome))


def _prescriber_actuation(world: WorldState, v: VehicleState) -> None:
    """During actuation, watch the CAM-reported gap and launch the lane change."""
    state = v.coordination
    if state.phase != Phase.ACTUATING or state.role != Role.PRESCRIBER:
        return
    if v.controller == Controller.LANE_CHANGING or v.lane_id == 1:
        return
    if v.lc_earliest is not None and world.now < v.lc_earliest:
        return
    cam = _position_from_cam(state, state.peer_id, world.now)
    if cam is None or v.gap_target is None:
        return
    pos, _speed = cam
    gap = float((v.position - pos) @ np.asarray(v.heading))
    if gap >= v.gap_target - world.cfg.lc_gap_margin_m:
        _begin_lane_change(world, v)


def baseline_receiver_behavior(
    v: VehicleState, intruder: VehicleState, lane_center_y: float,
    lane_width: float, emergency_gap: float,
) -> bool:
    """Uncoordinated reaction to a cut-in.

    The receiver notices the intruder only once its lateral position enters
    the receiver's lane strip; if it is then ahead and closer than
    ``emergency_gap`` the receiver brakes to a standstill.  Returns True
    when the emergency stop is triggered.
    """
    if abs(intruder.y - lane_center_y) >= lane_width / 2.0:
        return False
    gap = intruder.x - v.x
    return 0.0 < gap < emergency_gap


def _emergency_watch(world: WorldState, v: VehicleState) -> None:
    cfg = world.cfg
    lane_center = 0.0 if v.lane_id == 0 else -cfg.lane_width_m
    for u in world.vehicles:
        if u.station_id == v.station_id or u.lane_id == v.lane_id:
            continue
        if baseline_receiver_behavior(v, u, lane_center, cfg.lane_width_m,
                                      cfg.emergency_gap_m):
            v.controller = Controller.EMERGENCY_STOP
            v.intruder_station = u.station_id
            v.emergency_episodes += 1
            return


def _controller_accel(world: WorldState, v: VehicleState) -> float:
    cfg = world.cfg
    now = world.now

    if v.controller in (Controller.CRUISE_PLANNED, Controller.CAR_FOLLOWING):
        _emergency_watch(world, v)

    mode = v.controller
    if mode == Controller.PRESCRIPTION_FOLLOWING:
        if v.follower is None:
            return 0.0
        if v.follower.done(now) and not v.follower_done_sent:
            v.follower_done_sent = True
            v.pending_events.append(ManeuverComplete())
            v.follower = None
            v.controller = Controller.CRUISE_PLANNED
            return _cruise_accel(world, v)
        return v.follower.accel_command(now, v.speed)

    if mode == Controller.EMERGENCY_STOP:
        if v.speed > 0.0:
            return -cfg.max_decel_mps2
        intruder = world.by_station.get(v.intruder_station)
        gap = math.inf if intruder is None else intruder.x - v.x
        if gap >= cfg.resume_gap_m:
            v.controller = Controller.CRUISE_PLANNED
            v.accel_cap = cfg.restart_accel_mps2
        return 0.0

    if mode == Controller.CAR_FOLLOWING:
        lead = None
        for u in world.vehicles:
            if u.station_id != v.station_id and u.lane_id == v.lane_id and u.x > v.x:
                if lead is None or u.x < lead.x:
                    lead = u
        if lead is None:
            return _cruise_accel(world, v)
        return car_following_accel(
            lead.x - v.x, v.speed, lead.speed,
            time_gap=cfg.cf_time_gap_s, standstill=cfg.cf_standstill_m,
            k_v=cfg.cf_speed_gain, k_d=cfg.cf_gap_gain,
            max_accel=cfg.max_accel_mps2, max_decel=cfg.max_decel_mps2,
        )

    # CRUISE_PLANNED and the longitudinal part of LANE_CHANGING
    return _cruise_accel(world, v)


def _cruise_accel(world: WorldState, v: VehicleState) -> float:
    cfg = world.cfg
    cap = cfg.max_accel_mps2
    if v.accel_cap is not None:
        if v.speed >= v.cruise_speed - 0.05:
            v.accel_cap = None
        else:
            cap = v.accel_cap
    a = cfg.cruise_gain * (v.cruise_speed - v.speed)
    return float(min(max(a, -cfg.max_decel_mps2), cap))


def execute_lane_change(world: WorldState, v: VehicleState) -> None:
    """Advance the lateral smoothstep; longitudinal motion is untouched."""
    v.lc_progress = min(1.0, v.lc_progress + world.dt / world.cfg.lane_change_duration_s)
    v.y = lane_change_offset(v.lc_from_y, v.lc_to_y, v.lc_progress)
    if v.lc_progress >= 1.0:
        v.lane_id = v.lc_target_lane
        v.controller = Controller.CRUISE_PLANNED
        if (
            v.coordination is not None
            and v.coordination.phase == Phase.ACTUATING
            and not v.maneuver_done_sent
        ):
            v.maneuver_done_sent = True
            v.pending_events.append(ManeuverComplete())


_EVENT_NAMES = {
    LaneChangeDesired: "lane_change_desired",
    CollisionRisk: "collision_risk",
    PrescribedTrajectoryReady: "prescription_ready",
    VerificationResult: "verification",
    ManeuverComplete: "maneuver_complete",
    ScenarioAbort: "scenario_abort",
}


def _trace(world: WorldState, v: VehicleState, old: CoordinationState,
           events, outbox) -> None:
    new = v.coordination
    if new.phase == old.phase and not outbox:
        return
    evt = "+".join(_EVENT_NAMES.get(type(e), "msg") for e in events) or "-"
    sent = ",".join(MsgType(m.header.msg_type).name for m in outbox) or "-"
    world.trace_lines.append(
        f"{world.now:.2f}, {v.station_id}, {old.phase.name}, {evt}, "
        f"{new.phase.name}, sent=[{sent}]"
    )


def step_world(world: WorldState) -> None:
    """Advance one simulation tick."""
    cfg = world.cfg
    world.deliver_due()
    now = world.now

    # scenario trigger
    if world.lc_desired_at is None and now >= cfg.lc_trigger_time_s:
        world.lc_desired_at = now
        prescriber = world.by_station[world.prescriber_station]
        if cfg.mcm_enabled:
            prescriber.pending_events.append(LaneChangeDesired())
        else:
            _begin_lane_change(world, prescriber)

    outboxes: list[tuple[int, McmMessage]] = []
    cam_tick = cfg.mcm_enabled and world.tick % world.cam_period_ticks == 0

    # pass 1: protocol and control decisions on a consistent snapshot
    accels: dict[int, float] = {}
    for v in world.vehicles:
        inbox = world._inboxes[v.station_id]
        if inbox:
            world._inboxes[v.station_id] = []
        events = ()
        if v.pending_events:
            events = tuple(v.pending_events)
            v.pending_events = []

        if v.coordination is not None:
            state = v.coordination
            if state.phase in (Phase.IDLE, Phase.DONE) and any(
                isinstance(m.payload, Advertisement) for m in inbox
            ):
                state = replace(state, own_trajectory=_own_timed(world, v, thin=True))
            new_state, out = protocol.step(state, now, inbox, events)
            old = v.coordination
            v.coordination = new_state
            if new_state.signals:
                _handle_signals(world, v, old.phase)
            _prescriber_actuation(world, v)
            if cfg.trace and (out or new_state.phase != old.phase):
                _trace(world, v, old, events, out)
            for msg in out:
                outboxes.append((v.station_id, msg))
            if cam_tick:
                seqs = list(v.coordination.next_seq)
                seq = seqs[MsgType.CAM]
                seqs[MsgType.CAM] = seq + 1
                v.coordination = replace(v.coordination, next_seq=tuple(seqs))
                header = MessageHeader(
                    msg_type=MsgType.CAM, sender_id=v.station_id, target_id=0,
                    seq=seq, generation_time_ms=int(round(now * 1000.0)),
                )
                outboxes.append((v.station_id, McmMessage(
                    header, Cam(v.x, v.y, v.speed, 0.0))))
            if cfg.stream_mcm and cam_tick:
                seqs = list(v.coordination.next_seq)
                seq = seqs[MsgType.INTENTION]
                seqs[MsgType.INTENTION] = seq + 1
                v.coordination = replace(v.coordination, next_seq=tuple(seqs))
                header = MessageHeader(
                    msg_type=MsgType.INTENTION, sender_id=v.station_id,
                    target_id=v.station_id, seq=seq,
                    generation_time_ms=int(round(now * 1000.0)),
                )
                outboxes.append((v.station_id, McmMessage(
                    header, Intention(_own_timed(world, v, thin=True)))))

        accels[v.station_id] = _controller_accel(world, v)

    # pass 2: transmit and integrate
    for sender, msg in outboxes:
        world.transmit(sender, msg)
    for v in world.vehicles:
        a = accels[v.station_id]
        v.speed = max(0.0, v.speed + a * world.dt)
        v.x += v.speed * v.heading[0] * world.dt
        if v.controller == Controller.LANE_CHANGING:
            execute_lane_change(world, v)

    # metrics
    prescriber = world.by_station[world.prescriber_station]
    measured = world.by_station[world.measured_station]
    if prescriber is not measured:
        world.min_gap = min(world.min_gap, prescriber.x - measured.x)
    if world.arrival_time is None and measured.x >= world.goal_x:
        if world.lc_desired_at is not None:
            world.arrival_time = world.now - world.lc_desired_at

    world.tick += 1


def build_world(cfg: ScenarioConfig) -> WorldState:
    """Create the initial world for the configured scenario."""
    speed = cfg.speed
    lane0_y = 0.0
    lane1_y = -cfg.lane_width_m
    lanes = LaneGeometry((
        Lane(0, (0.0, lane0_y), (cfg.road_length_m, lane0_y), cfg.lane_width_m),
        Lane(1, (0.0, lane1_y), (cfg.road_length_m, lane1_y), cfg.lane_width_m),
    ))

    def make(station: int, label: str, x: float, lane: int,
             controller: Controller = Controller.CRUISE_PLANNED) -> VehicleState:
        return VehicleState(
            station_id=station, label=label, x=x,
            y=lane0_y if lane == 0 else lane1_y,
            speed=speed, lane_id=lane, cruise_speed=speed, controller=controller,
        )

    if cfg.scenario == "lane_change_2":
        p = make(1, "P", 20.0 + cfg.initial_gap_m, 0)
        r = make(2, "R", 20.0, 1)
        vehicles = [p, r]
        measured = 2
    else:  # lane_change_4
        px = 40.0
        p = make(1, "P", px, 0)
        a = make(2, "A", px + cfg.gap_front_m, 1)
        b = make(3, "B", px - cfg.gap_target_m, 1)
        c = make(4, "C", px - cfg.gap_target_m - cfg.gap_follower_m, 1,
                 controller=Controller.CAR_FOLLOWING)
        vehicles = [p, a, b, c]
        measured = 3

    world = WorldState(cfg, vehicles, measured, lanes)
    if cfg.mcm_enabled:
        params = cfg.protocol_params()
        for v in world.vehicles:
            v.coordination = CoordinationState(station_id=v.station_id, params=params)
    for v in world.vehicles:
        v.planned = _planned_trajectory(world, v)
    return world
