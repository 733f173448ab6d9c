"""Deterministic coordination state machines for prescriber and receiver roles.

One engine instance per station.  The engine is a pure function of its
inputs: :func:`step` consumes the current state, the simulation time, the
inbound messages and local application events, and returns a new state plus
the messages to transmit.  No randomness, no clocks, no I/O; replaying a
recorded input log reproduces the output byte for byte.

Flow for a lane change (prescriber P, receiver R)::

    P: Idle --LaneChangeDesired--> Advertising     broadcasts Advertisement at f
    R: Idle --Advertisement-->     IntentionSent   sends Intention (reliable)
    R: --Ack-->                    AwaitingPrescription
    P: advertising window ends --> Prescribing     application picks target,
                                                   builds prescribed trajectory
    P: --PrescribedTrajectoryReady--> AwaitingAcceptance   Prescription (reliable),
                                                   Cancel(NotTarget) to the rest
    R: --Prescription-->           Verifying       application checks safety
    R: --VerificationResult(ok)--> Actuating       Acceptance (reliable)
    P: --Acceptance(accepted)-->   Actuating       both exchange CAMs; a CAM gap
                                                   longer than the liveness window
                                                   aborts to stand-alone driving
    P: --ManeuverComplete-->       Done            sends Fin (prescriber only)

Intention, Prescription and Acceptance are retransmitted every
``dt_resend`` until acknowledged; when a resend comes due beyond
``t_timeout`` after the first transmission the send fails, the prescriber
cancels the scenario and the receiver silently returns to stand-alone
driving.  A station that is already coordinating refuses Advertisements
from any other station with Cancel(Refused); all other out-of-context
messages are dropped without acknowledgement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum

from .messages import (
    Ack,
    Acceptance,
    Advertisement,
    Cam,
    Cancel,
    CancelReason,
    Fin,
    Intention,
    McmMessage,
    MessageHeader,
    MsgType,
    Prescription,
)
from .trajectory import TimedTrajectory

__all__ = [
    "Role",
    "Phase",
    "ProtocolParams",
    "ReliableSend",
    "CamRecord",
    "CoordinationState",
    "LaneChangeDesired",
    "CollisionRisk",
    "PrescribedTrajectoryReady",
    "VerificationResult",
    "ManeuverComplete",
    "ScenarioAbort",
    "EmptyIntentionSet",
    "step",
    "collect_intentions",
    "tick_reliable_sends",
    "check_cam_liveness",
    "delivery_success_probability",
    "planned_transmissions",
]

EPS = 1e-9
_FAR_FUTURE = math.inf


class Role(IntEnum):
    IDLE = 0
    PRESCRIBER = 1
    RECEIVER = 2


class Phase(IntEnum):
    IDLE = 0
    # prescriber side
    ADVERTISING = 1
    PRESCRIBING = 2
    AWAITING_ACCEPTANCE = 3
    # receiver side
    INTENTION_SENT = 4
    AWAITING_PRESCRIPTION = 5
    VERIFYING = 6
    # shared
    ACTUATING = 7
    DONE = 8


# Signals the engine raises toward the local application (planner/controller).
SIG_PLAN = "plan"                        # prescriber: intentions collected, plan now
SIG_VERIFY = "verify"                    # receiver: prescription stored, verify it
SIG_ACTUATE_RECEIVER = "actuate_prescription"
SIG_ACTUATE_PRESCRIBER = "actuate_prescriber"
SIG_REVERT = "revert_to_planned"         # resume the stand-alone planned trajectory
SIG_STANDALONE = "proceed_standalone"    # prescriber: continue maneuver uncoordinated
SIG_DONE = "coordination_done"


class EmptyIntentionSet(RuntimeError):
    """No receiver responded during the advertising window."""


@dataclass(frozen=True)
class ProtocolParams:
    """Timing knobs of the coordination service.

    ``t_timeout`` and ``dt_resend`` govern reliable delivery, ``cam_frequency``
    the periodic message rate, ``advertising_duration`` how long the
    prescriber solicits intentions, and ``cam_liveness_window`` the CAM gap
    both sides tolerate while actuating.  The guard fields bound how long a
    side may sit in an intermediate phase when its peer vanished without a
    (reliable) Cancel reaching it.
    """

    t_timeout: float = 2.0
    dt_resend: float = 0.1
    cam_frequency: float = 10.0
    advertising_duration: float = 1.0
    cam_liveness_window: float = 2.0
    max_recalc: int = 3
    guard_slack: float = 1.0
    actuation_slack: float = 6.0

    def __post_init__(self) -> None:
        if self.t_timeout < 0:
            raise ValueError("t_timeout must be >= 0")
        for name in ("dt_resend", "cam_frequency", "advertising_duration",
                     "cam_liveness_window", "guard_slack", "actuation_slack"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_recalc < 1:
            raise ValueError("max_recalc must be >= 1")


@dataclass(frozen=True)
class ReliableSend:
    """A message retransmitted until acknowledged or timed out.

    ``seqs`` lists the sequence numbers of every copy transmitted so far;
    an Ack matching any of them settles the send.
    """

    message: McmMessage
    first_sent: float
    last_sent: float
    resend_interval: float
    timeout: float
    seqs: tuple[int, ...]

    def matches(self, ack: Ack, ack_sender: int) -> bool:
        return (
            ack.acked_type == self.message.header.msg_type
            and ack.acked_seq in self.seqs
            and ack_sender == self.message.header.target_id
        )


@dataclass(frozen=True)
class CamRecord:
    heard_at: float      # local receipt time (liveness clock)
    generated_at: float  # sender's sample time (dead reckoning)
    x: float
    y: float
    speed: float
    heading: float


# Local application events ---------------------------------------------------


@dataclass(frozen=True)
class LaneChangeDesired:
    pass


@dataclass(frozen=True)
class CollisionRisk:
    targets: tuple[int, ...]


@dataclass(frozen=True)
class PrescribedTrajectoryReady:
    trajectory: TimedTrajectory
    target: int


@dataclass(frozen=True)
class VerificationResult:
    ok: bool


@dataclass(frozen=True)
class ManeuverComplete:
    pass


@dataclass(frozen=True)
class ScenarioAbort:
    pass


@dataclass(frozen=True)
class CoordinationState:
    """Per-station protocol state.  Immutable; evolved by :func:`step`."""

    station_id: int
    params: ProtocolParams
    role: Role = Role.IDLE
    phase: Phase = Phase.IDLE
    phase_entered_at: float = 0.0
    peer_id: int = 0
    pending_sends: tuple[ReliableSend, ...] = ()
    # Next sequence number per message type, indexed by MsgType value.
    next_seq: tuple[int, ...] = (1,) * (len(MsgType) + 1)
    # Raw intention receipts (station, seq, trajectory); deduplicated on read.
    intentions: tuple[tuple[int, int, TimedTrajectory], ...] = ()
    refused_by: tuple[int, ...] = ()
    canceled_stations: tuple[int, ...] = ()
    conflict_targets: tuple[int, ...] = ()
    prescription_sent: TimedTrajectory | None = None
    prescription_attempts: int = 0
    received_prescription: TimedTrajectory | None = None
    accepted_prescription: TimedTrajectory | None = None
    advertising_started_at: float = 0.0
    last_advertisement_at: float = -_FAR_FUTURE
    last_cam: tuple[tuple[int, CamRecord], ...] = ()
    own_trajectory: TimedTrajectory | None = None
    outcome: str | None = None
    fin_sent: bool = False
    signals: tuple[str, ...] = ()
    wake_at: float = 0.0

    # -- read helpers --------------------------------------------------------

    def cam_of(self, station: int) -> CamRecord | None:
        for sid, rec in self.last_cam:
            if sid == station:
                return rec
        return None

    @property
    def active(self) -> bool:
        return self.phase not in (Phase.IDLE, Phase.DONE)


def planned_transmissions(t_timeout: float, dt_resend: float) -> int:
    """Physical transmissions a reliable send performs: the initial copy plus
    one resend per full ``dt_resend`` slot inside ``t_timeout``."""
    return 1 + int(math.floor(t_timeout / dt_resend + EPS))


def delivery_success_probability(lam: float, t_timeout: float, t_resend: float) -> float:
    """Closed-form success probability ``1 - lam ** (t_timeout / t_resend)``.

    The exponent counts resend slots only; the simulator additionally
    performs the initial transmission (see :func:`planned_transmissions`),
    so at ``t_timeout == 0`` the formula gives 0 while one physical copy is
    still sent.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("loss rate must lie in [0, 1]")
    if t_resend <= 0:
        raise ValueError("t_resend must be positive")
    if t_timeout < 0:
        raise ValueError("t_timeout must be >= 0")
    return 1.0 - lam ** (t_timeout / t_resend)


# -- internal working representation ------------------------------------------


def _ms(now: float) -> int:
    return int(round(now * 1000.0))


class _Work:
    """Mutable scratch copy of a CoordinationState during one step."""

    def __init__(self, state: CoordinationState, now: float) -> None:
        self.s = dict(vars(state))
        self.s["signals"] = ()
        self.now = now
        self.out: list[McmMessage] = []
        self.params: ProtocolParams = state.params
        # One session-changing message per tick: once the session ends or a
        # new one starts, the rest of this tick's inbox is stale.
        self.halt_inbox = False

    # field access
    def __getitem__(self, key: str):
        return self.s[key]

    def __setitem__(self, key: str, value) -> None:
        self.s[key] = value

    def signal(self, name: str) -> None:
        self.s["signals"] = self.s["signals"] + (name,)

    def enter(self, role: Role, phase: Phase) -> None:
        self.s["role"] = role
        self.s["phase"] = phase
        self.s["phase_entered_at"] = self.now

    def emit(self, payload, target: int, reliable: bool = False) -> McmMessage:
        mtype = _PAYLOAD_TO_TYPE[type(payload)]
        seqs = list(self.s["next_seq"])
        seq = seqs[mtype]
        seqs[mtype] = seq + 1
        self.s["next_seq"] = tuple(seqs)
        header = MessageHeader(
            msg_type=mtype,
            sender_id=self.s["station_id"],
            target_id=target,
            seq=seq,
            generation_time_ms=_ms(self.now),
        )
        msg = McmMessage(header, payload)
        self.out.append(msg)
        if reliable:
            send = ReliableSend(
                message=msg,
                first_sent=self.now,
                last_sent=self.now,
                resend_interval=self.params.dt_resend,
                timeout=self.params.t_timeout,
                seqs=(seq,),
            )
            self.s["pending_sends"] = self.s["pending_sends"] + (send,)
        return msg

    def resend(self, send: ReliableSend) -> ReliableSend:
        mtype = send.message.header.msg_type
        seqs = list(self.s["next_seq"])
        seq = seqs[mtype]
        seqs[mtype] = seq + 1
        self.s["next_seq"] = tuple(seqs)
        header = replace(send.message.header, seq=seq, generation_time_ms=_ms(self.now))
        msg = McmMessage(header, send.message.payload)
        self.out.append(msg)
        return replace(send, message=msg, last_sent=self.now, seqs=send.seqs + (seq,))

    def ack(self, msg: McmMessage) -> None:
        self.emit(Ack(int(msg.header.msg_type), msg.header.seq), msg.header.sender_id)

    def clear_pendings(self, msg_type: MsgType | None = None) -> None:
        if msg_type is None:
            self.s["pending_sends"] = ()
        else:
            self.s["pending_sends"] = tuple(
                p for p in self.s["pending_sends"]
                if p.message.header.msg_type != msg_type
            )

    def record_cam(self, sender: int, cam: Cam, generated_at: float) -> None:
        rec = CamRecord(self.now, generated_at, cam.x, cam.y, cam.speed, cam.heading)
        table = tuple((s, r) for s, r in self.s["last_cam"] if s != sender)
        self.s["last_cam"] = table + ((sender, rec),)

    def abort(self, outcome: str, sig: str, cancel_reason: CancelReason | None = None) -> None:
        if cancel_reason is not None and self.s["peer_id"]:
            self.emit(Cancel(cancel_reason), self.s["peer_id"])
        self.clear_pendings()
        self.enter(Role.IDLE, Phase.IDLE)
        self.s["peer_id"] = 0
        self.s["outcome"] = outcome
        self.signal(sig)
        self.halt_inbox = True

    def finish(self, outcome: str, sig: str) -> None:
        self.clear_pendings()
        self.s["phase"] = Phase.DONE
        self.s["phase_entered_at"] = self.now
        self.s["outcome"] = outcome
        self.signal(sig)
        self.halt_inbox = True

    def responders(self) -> list[int]:
        seen: list[int] = []
        for station, _seq, _tt in self.s["intentions"]:
            if station not in seen and station not in self.s["refused_by"]:
                seen.append(station)
        return seen

    def cancel_not_targeted(self, keep: int | None = None) -> None:
        canceled = list(self.s["canceled_stations"])
        for station in self.responders():
            if station != keep and station not in canceled:
                self.emit(Cancel(CancelReason.NOT_TARGET), station)
                canceled.append(station)
        self.s["canceled_stations"] = tuple(canceled)


_PAYLOAD_TO_TYPE = {
    Advertisement: MsgType.ADVERTISEMENT,
    Intention: MsgType.INTENTION,
    Prescription: MsgType.PRESCRIPTION,
    Acceptance: MsgType.ACCEPTANCE,
    Fin: MsgType.FIN,
    Cancel: MsgType.CANCEL,
    Ack: MsgType.ACK,
    Cam: MsgType.CAM,
}


# -- message handling ----------------------------------------------------------


def _handle_idle_message(w: _Work, msg: McmMessage) -> None:
    payload = msg.payload
    if isinstance(payload, Cam):
        w.record_cam(msg.header.sender_id, payload, msg.header.generation_time_ms / 1000.0)
        return
    if isinstance(payload, Advertisement):
        if w["own_trajectory"] is None:
            return  # nothing to offer; stay stand-alone
        w.enter(Role.RECEIVER, Phase.INTENTION_SENT)
        w["peer_id"] = msg.header.sender_id
        w["outcome"] = None
        w.emit(Intention(w["own_trajectory"]), msg.header.sender_id, reliable=True)
        w.halt_inbox = True
    # every other message is out of context while idle: dropped silently


def _handle_active_message(w: _Work, msg: McmMessage) -> None:
    payload = msg.payload
    sender = msg.header.sender_id
    role: Role = w["role"]
    phase: Phase = w["phase"]
    peer: int = w["peer_id"]

    if isinstance(payload, Cam):
        w.record_cam(sender, payload, msg.header.generation_time_ms / 1000.0)
        return

    if isinstance(payload, Advertisement):
        if sender != peer:
            # Already coordinating: refuse instructions from anyone else.
            w.emit(Cancel(CancelReason.REFUSED), sender)
        return

    if isinstance(payload, Ack):
        remaining = []
        cleared_intention = False
        for p in w["pending_sends"]:
            if p.matches(payload, sender):
                if p.message.header.msg_type == MsgType.INTENTION:
                    cleared_intention = True
            else:
                remaining.append(p)
        w["pending_sends"] = tuple(remaining)
        if cleared_intention and role == Role.RECEIVER and phase == Phase.INTENTION_SENT:
            w.enter(Role.RECEIVER, Phase.AWAITING_PRESCRIPTION)
        return

    if isinstance(payload, Intention):
        if role != Role.PRESCRIBER:
            return
        w.ack(msg)
        if phase == Phase.ADVERTISING:
            w["intentions"] = w["intentions"] + (
                (sender, msg.header.seq, payload.trajectory),
            )
        elif sender != peer and sender not in w["canceled_stations"]:
            # Straggler after target selection: acknowledged but not served.
            w.emit(Cancel(CancelReason.NOT_TARGET), sender)
            w["canceled_stations"] = w["canceled_stations"] + (sender,)
        return

    if isinstance(payload, Prescription):
        if role != Role.RECEIVER or sender != peer:
            return
        w.ack(msg)
        # The peer holding our intention implies it was delivered.
        w.clear_pendings(MsgType.INTENTION)
        if phase in (Phase.INTENTION_SENT, Phase.AWAITING_PRESCRIPTION):
            w["received_prescription"] = payload.trajectory
            w.clear_pendings(MsgType.ACCEPTANCE)
            w.enter(Role.RECEIVER, Phase.VERIFYING)
            w.signal(SIG_VERIFY)
        elif phase == Phase.VERIFYING and payload.trajectory != w["received_prescription"]:
            w["received_prescription"] = payload.trajectory
            w.signal(SIG_VERIFY)
        return

    if isinstance(payload, Acceptance):
        if role != Role.PRESCRIBER or sender != peer:
            return
        w.ack(msg)
        # The peer answering implies the prescription was delivered.
        w.clear_pendings(MsgType.PRESCRIPTION)
        if phase != Phase.AWAITING_ACCEPTANCE:
            return
        if payload.accepted:
            w.enter(Role.PRESCRIBER, Phase.ACTUATING)
            w.signal(SIG_ACTUATE_PRESCRIBER)
        elif w["prescription_attempts"] >= w.params.max_recalc:
            w.abort("rejected", SIG_STANDALONE, CancelReason.SCENARIO_ABORTED)
        else:
            w.enter(Role.PRESCRIBER, Phase.PRESCRIBING)
            w.signal(SIG_PLAN)
        return

    if isinstance(payload, Fin):
        # Fin closes a running maneuver; in any other phase it is stale.
        if role == Role.RECEIVER and sender == peer and phase == Phase.ACTUATING:
            w.finish("success", SIG_DONE)
        return

    if isinstance(payload, Cancel):
        if role == Role.PRESCRIBER and phase == Phase.ADVERTISING:
            if payload.reason == CancelReason.REFUSED:
                w["refused_by"] = w["refused_by"] + (sender,)
                return
        if sender != peer:
            return
        if payload.reason == CancelReason.COMM_LOSS:
            # Communication error: the scenario stops, nobody forces the move.
            sig = SIG_REVERT
        else:
            sig = SIG_STANDALONE if role == Role.PRESCRIBER else SIG_REVERT
        w.abort(f"peer_cancel_{payload.reason.name.lower()}", sig)
        return


# -- event handling ------------------------------------------------------------


def _handle_event(w: _Work, event) -> None:
    role: Role = w["role"]
    phase: Phase = w["phase"]

    if isinstance(event, LaneChangeDesired):
        if phase in (Phase.IDLE, Phase.DONE):
            w["intentions"] = ()
            w["refused_by"] = ()
            w["canceled_stations"] = ()
            w["conflict_targets"] = ()
            w["prescription_sent"] = None
            w["prescription_attempts"] = 0
            w["peer_id"] = 0
            w["outcome"] = None
            w["fin_sent"] = False
            w["last_advertisement_at"] = -_FAR_FUTURE
            w["advertising_started_at"] = w.now
            w.enter(Role.PRESCRIBER, Phase.ADVERTISING)
        return

    if isinstance(event, CollisionRisk):
        if role == Role.PRESCRIBER and phase == Phase.PRESCRIBING:
            w["conflict_targets"] = tuple(event.targets)
            if not event.targets:
                w.cancel_not_targeted()
                w.finish("no_conflict", SIG_STANDALONE)
        return

    if isinstance(event, PrescribedTrajectoryReady):
        if role == Role.PRESCRIBER and phase == Phase.PRESCRIBING:
            w.clear_pendings(MsgType.PRESCRIPTION)  # supersede a rejected attempt
            w["peer_id"] = event.target
            w["prescription_sent"] = event.trajectory
            w["prescription_attempts"] = w["prescription_attempts"] + 1
            w.emit(Prescription(event.trajectory), event.target, reliable=True)
            w.cancel_not_targeted(keep=event.target)
            w.enter(Role.PRESCRIBER, Phase.AWAITING_ACCEPTANCE)
        return

    if isinstance(event, VerificationResult):
        if role == Role.RECEIVER and phase == Phase.VERIFYING:
            tt = w["received_prescription"]
            if event.ok:
                w["accepted_prescription"] = tt
                w.emit(Acceptance(True, tt), w["peer_id"], reliable=True)
                w.enter(Role.RECEIVER, Phase.ACTUATING)
                w.signal(SIG_ACTUATE_RECEIVER)
            else:
                w.emit(Acceptance(False, None), w["peer_id"], reliable=True)
                w.enter(Role.RECEIVER, Phase.AWAITING_PRESCRIPTION)
        return

    if isinstance(event, ManeuverComplete):
        if phase != Phase.ACTUATING:
            return
        if role == Role.PRESCRIBER:
            if not w["fin_sent"]:
                w.emit(Fin(), w["peer_id"])
                w["fin_sent"] = True
            w.finish("success", SIG_DONE)
        else:
            w.finish("success", SIG_DONE)
        return

    if isinstance(event, ScenarioAbort):
        if w["phase"] not in (Phase.IDLE, Phase.DONE):
            sig = SIG_STANDALONE if role == Role.PRESCRIBER else SIG_REVERT
            w.abort("aborted", sig, CancelReason.SCENARIO_ABORTED)
        return


# -- periodic work -------------------------------------------------------------


def _advance_advertising(w: _Work) -> None:
    if w["phase"] != Phase.ADVERTISING:
        return
    end = w["advertising_started_at"] + w.params.advertising_duration
    if w.now >= end - EPS:
        w.enter(Role.PRESCRIBER, Phase.PRESCRIBING)
        w.signal(SIG_PLAN)
        return
    interval = 1.0 / w.params.cam_frequency
    if w.now - w["last_advertisement_at"] >= interval - EPS:
        w.emit(Advertisement(), 0)
        w["last_advertisement_at"] = w.now


def _tick_reliable(w: _Work) -> None:
    pendings = w["pending_sends"]
    if not pendings:
        return
    kept: list[ReliableSend] = []
    failed: list[ReliableSend] = []
    for p in pendings:
        if w.now - p.last_sent >= p.resend_interval - EPS:
            # Timeout is evaluated at resend boundaries so an in-flight Ack
            # has one resend interval to arrive.
            if w.now - p.first_sent > p.timeout + EPS:
                failed.append(p)
            else:
                kept.append(w.resend(p))
        else:
            kept.append(p)
    w["pending_sends"] = tuple(kept)
    if not failed:
        return
    if w["role"] == Role.PRESCRIBER:
        w.abort("send_timeout", SIG_STANDALONE, CancelReason.COMM_LOSS)
        return
    # Receiver side: an unacknowledged Intention means the coordination never
    # took hold, so return to stand-alone driving.  An unacknowledged
    # Acceptance while already actuating is different: the loaded
    # deceleration is conservative and time bounded, and the peer may well
    # have received the acceptance (only the return path failed), so keep
    # actuating and let CAM liveness or the actuation guard resolve it.
    if any(p.message.header.msg_type == MsgType.INTENTION for p in failed):
        w.abort("send_timeout", SIG_REVERT)
    elif w["phase"] != Phase.ACTUATING:
        w.abort("send_timeout", SIG_REVERT)


def _check_liveness(w: _Work) -> None:
    if w["phase"] != Phase.ACTUATING or not w["peer_id"]:
        return
    rec = None
    for sid, r in w["last_cam"]:
        if sid == w["peer_id"]:
            rec = r
    baseline = w["phase_entered_at"] if rec is None else max(rec.heard_at, w["phase_entered_at"])
    if w.now - baseline > w.params.cam_liveness_window + EPS:
        # A communication error stops the scenario outright: both sides
        # return to their stand-alone plans and the maneuver is abandoned
        # (the prescriber does not force the merge into a half-opened gap).
        w.abort("comm_loss", SIG_REVERT, CancelReason.COMM_LOSS)


def _check_guards(w: _Work) -> None:
    """Bound every waiting phase so a vanished peer cannot strand us.

    Cancel is not delivered reliably, so a side may be left waiting for a
    message that will never come; these deadlines return it to stand-alone
    driving."""
    phase: Phase = w["phase"]
    p = w.params
    entered = w["phase_entered_at"]
    if phase == Phase.AWAITING_PRESCRIPTION:
        if w.now > entered + p.advertising_duration + p.t_timeout + p.guard_slack + EPS:
            w.abort("guard_timeout", SIG_REVERT)
    elif phase == Phase.VERIFYING:
        if w.now > entered + p.guard_slack + EPS:
            w.abort("guard_timeout", SIG_REVERT)
    elif phase == Phase.PRESCRIBING:
        if w.now > entered + p.guard_slack + EPS:
            w.cancel_not_targeted()
            w.abort("guard_timeout", SIG_STANDALONE)
    elif phase == Phase.AWAITING_ACCEPTANCE:
        # The prescription may take t_timeout to deliver and the acceptance
        # another t_timeout to come back.
        if w.now > entered + 2.0 * p.t_timeout + p.guard_slack + EPS:
            w.abort("guard_timeout", SIG_STANDALONE, CancelReason.SCENARIO_ABORTED)
    elif phase == Phase.ACTUATING:
        tt = w["prescription_sent"] if w["role"] == Role.PRESCRIBER else w["accepted_prescription"]
        if tt is not None and w.now > tt.t_end + p.actuation_slack + EPS:
            if w["role"] == Role.PRESCRIBER:
                w.abort("guard_timeout", SIG_STANDALONE, CancelReason.SCENARIO_ABORTED)
            else:
                w.abort("guard_timeout", SIG_REVERT)


def _compute_wake(w: _Work) -> float:
    p = w.params
    phase: Phase = w["phase"]
    entered = w["phase_entered_at"]
    wake = _FAR_FUTURE
    for send in w["pending_sends"]:
        wake = min(wake, send.last_sent + send.resend_interval)
    if phase == Phase.ADVERTISING:
        wake = min(wake, w["last_advertisement_at"] + 1.0 / p.cam_frequency)
        wake = min(wake, w["advertising_started_at"] + p.advertising_duration)
    elif phase == Phase.AWAITING_PRESCRIPTION:
        wake = min(wake, entered + p.advertising_duration + p.t_timeout + p.guard_slack)
    elif phase == Phase.VERIFYING:
        wake = min(wake, entered + p.guard_slack)
    elif phase == Phase.PRESCRIBING:
        wake = min(wake, entered + p.guard_slack)
    elif phase == Phase.AWAITING_ACCEPTANCE:
        wake = min(wake, entered + 2.0 * p.t_timeout + p.guard_slack)
    elif phase == Phase.ACTUATING:
        rec = None
        for sid, r in w["last_cam"]:
            if sid == w["peer_id"]:
                rec = r
        baseline = entered if rec is None else max(rec.heard_at, entered)
        wake = min(wake, baseline + p.cam_liveness_window)
        tt = w["prescription_sent"] if w["role"] == Role.PRESCRIBER else w["accepted_prescription"]
        if tt is not None:
            wake = min(wake, tt.t_end + p.actuation_slack)
    return wake


# -- public operations ----------------------------------------------------------


def step(
    state: CoordinationState,
    now: float,
    inbox=(),
    events=(),
) -> tuple[CoordinationState, list[McmMessage]]:
    """Advance one station's protocol by one tick.

    ``inbox`` holds messages addressed to this station or broadcast;
    ``events`` holds local application events.  Returns the successor state
    and the messages to transmit, in emission order.
    """
    if not inbox and not events and not state.signals and now + EPS < state.wake_at:
        return state, []

    w = _Work(state, now)

    for msg in inbox:
        if w.halt_inbox:
            break
        if msg.header.target_id not in (0, state.station_id):
            continue
        if msg.header.sender_id == state.station_id:
            continue
        if w["phase"] in (Phase.IDLE, Phase.DONE):
            _handle_idle_message(w, msg)
        else:
            _handle_active_message(w, msg)

    for event in events:
        _handle_event(w, event)

    _advance_advertising(w)
    _tick_reliable(w)
    _check_liveness(w)
    _check_guards(w)
    w["wake_at"] = _compute_wake(w)

    return CoordinationState(**w.s), w.out


def collect_intentions(
    state: CoordinationState, now: float
) -> list[tuple[int, TimedTrajectory]]:
    """Intentions gathered while advertising, one entry per station.

    Duplicate responses keep the highest sequence number; stations that
    refused are excluded.  Raises :class:`EmptyIntentionSet` when nobody
    responded.
    """
    if state.role != Role.PRESCRIBER:
        raise RuntimeError("only a prescriber holds intentions")
    window_end = state.advertising_started_at + state.params.advertising_duration
    if state.phase == Phase.ADVERTISING or now + EPS < window_end:
        raise RuntimeError("advertising window still open")
    best: dict[int, tuple[int, TimedTrajectory]] = {}
    for station, seq, tt in state.intentions:
        if station in state.refused_by:
            continue
        if station not in best or seq > best[station][0]:
            best[station] = (seq, tt)
    if not best:
        raise EmptyIntentionSet("no intentions received during advertising")
    return [(station, best[station][1]) for station in sorted(best)]


def tick_reliable_sends(
    state: CoordinationState, now: float
) -> tuple[CoordinationState, list[McmMessage]]:
    """Retransmit due reliable sends; fail those whose retry budget expired."""
    w = _Work(state, now)
    _tick_reliable(w)
    w["wake_at"] = _compute_wake(w)
    return CoordinationState(**w.s), w.out


def check_cam_liveness(
    state: CoordinationState, now: float
) -> tuple[CoordinationState, list[McmMessage]]:
    """Abort an actuating coordination whose peer has gone silent."""
    w = _Work(state, now)
    _check_liveness(w)
    w["wake_at"] = _compute_wake(w)
    return CoordinationState(**w.s), w.out
