"""Message model for maneuver coordination traffic.

Seven coordination message types plus the periodic awareness beacon (CAM).
Messages are immutable values: a common header and a type-specific payload.
``target_id == 0`` means broadcast; Advertisement and Cam are the only
broadcast types the protocol itself emits, every other message is addressed
to one station.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

from .trajectory import TimedTrajectory

__all__ = [
    "MsgType",
    "CancelReason",
    "Scenario",
    "BROADCAST",
    "PROTOCOL_VERSION",
    "MessageHeader",
    "Advertisement",
    "Intention",
    "Prescription",
    "Acceptance",
    "Fin",
    "Cancel",
    "Ack",
    "Cam",
    "McmMessage",
    "validate_message",
]

BROADCAST = 0
PROTOCOL_VERSION = 1


class MsgType(IntEnum):
    ADVERTISEMENT = 1
    INTENTION = 2
    PRESCRIPTION = 3
    ACCEPTANCE = 4
    FIN = 5
    CANCEL = 6
    ACK = 7
    CAM = 8


class CancelReason(IntEnum):
    REFUSED = 1
    COMM_LOSS = 2
    SCENARIO_ABORTED = 3
    NOT_TARGET = 4


class Scenario(IntEnum):
    LANE_CHANGE = 1


@dataclass(frozen=True)
class MessageHeader:
    msg_type: int
    sender_id: int
    target_id: int
    seq: int
    generation_time_ms: int
    scenario: int = Scenario.LANE_CHANGE
    version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class Advertisement:
    pass


@dataclass(frozen=True)
class Intention:
    trajectory: TimedTrajectory


@dataclass(frozen=True)
class Prescription:
    trajectory: TimedTrajectory


@dataclass(frozen=True)
class Acceptance:
    accepted: bool
    selected_trajectory: TimedTrajectory | None


@dataclass(frozen=True)
class Fin:
    pass


@dataclass(frozen=True)
class Cancel:
    reason: CancelReason


@dataclass(frozen=True)
class Ack:
    acked_type: int
    acked_seq: int


@dataclass(frozen=True)
class Cam:
    x: float
    y: float
    speed: float
    heading: float


Payload = (
    Advertisement
    | Intention
    | Prescription
    | Acceptance
    | Fin
    | Cancel
    | Ack
    | Cam
)

_PAYLOAD_TYPES: dict[type, MsgType] = {
    Advertisement: MsgType.ADVERTISEMENT,
    Intention: MsgType.INTENTION,
    Prescription: MsgType.PRESCRIPTION,
    Acceptance: MsgType.ACCEPTANCE,
    Fin: MsgType.FIN,
    Cancel: MsgType.CANCEL,
    Ack: MsgType.ACK,
    Cam: MsgType.CAM,
}

# Types that must carry a nonzero target station; Advertisement and Cam
# are broadcast (target 0).
_TARGETED = {
    MsgType.INTENTION,
    MsgType.PRESCRIPTION,
    MsgType.ACCEPTANCE,
    MsgType.FIN,
    MsgType.CANCEL,
    MsgType.ACK,
}


@dataclass(frozen=True)
class McmMessage:
    header: MessageHeader
    payload: Payload

    @property
    def msg_type(self) -> MsgType:
        return MsgType(self.header.msg_type)


def validate_message(m: McmMessage) -> None:
    """Raise ``ValueError`` when a message breaks the model invariants."""
    expected = _PAYLOAD_TYPES[type(m.payload)]
    if m.header.msg_type != expected:
        raise ValueError(
            f"header type {m.header.msg_type} does not match payload {type(m.payload).__name__}"
        )
    if expected in _TARGETED and m.header.target_id == 0:
        raise ValueError(f"{expected.name} requires a nonzero target station")
    if expected in (MsgType.ADVERTISEMENT, MsgType.CAM) and m.header.target_id != 0:
        raise ValueError(f"{expected.name} is broadcast only (target must be 0)")
    if isinstance(m.payload, Acceptance) and m.payload.accepted:
        if m.payload.selected_trajectory is None:
            raise ValueError("accepted Acceptance must carry a selected trajectory")
