"""Bit-exact binary encoding of coordination messages.

The layout is little-endian and frozen by golden files so byte counts in
the bandwidth experiments are reproducible exactly.

Header, 21 bytes::

    offset  size  field
    0       1     msg_type        u8
    1       1     version         u8
    2       4     sender_id       u32
    6       4     target_id       u32
    10      2     seq             u16
    12      1     scenario        u8
    13      8     generation_time u64 (milliseconds)

Payloads follow the header:

* ``Advertisement`` / ``Fin`` -- empty.
* ``Intention`` / ``Prescription`` -- trajectory block: point count u16,
  then per point x, y, t as IEEE-754 f64 (24 bytes per point).
* ``Acceptance`` -- accepted u8, then a trajectory block (count 0 when no
  trajectory is attached).
* ``Cancel`` -- reason u8.
* ``Ack`` -- acked_type u8, acked_seq u16.
* ``Cam`` -- x, y, speed, heading as f64 (32 bytes).
"""

from __future__ import annotations

import struct

import numpy as np

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
    PROTOCOL_VERSION,
)
from .trajectory import TimedTrajectory

__all__ = [
    "CodecError",
    "Truncated",
    "UnknownType",
    "BadVersion",
    "encode",
    "decode",
    "encoded_size",
    "HEADER_SIZE",
    "POINT_SIZE",
]

_HEADER = struct.Struct("<BBIIHBQ")
HEADER_SIZE = _HEADER.size  # 21
POINT_SIZE = 24


class CodecError(ValueError):
    """Decoding failure; ``offset`` is the earliest offending byte."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class Truncated(CodecError):
    pass


class UnknownType(CodecError):
    pass


class BadVersion(CodecError):
    pass


def _encode_trajectory(tt: TimedTrajectory | None) -> bytes:
    if tt is None:
        return struct.pack("<H", 0)
    n = len(tt)
    block = np.empty((n, 3), dtype="<f8")
    block[:, 0] = tt.xy[:, 0]
    block[:, 1] = tt.xy[:, 1]
    block[:, 2] = tt.t
    return struct.pack("<H", n) + block.tobytes()


def encode(m: McmMessage) -> bytes:
    """Serialize a valid message to its wire bytes."""
    h = m.header
    head = _HEADER.pack(
        h.msg_type, h.version, h.sender_id, h.target_id, h.seq, h.scenario,
        h.generation_time_ms,
    )
    p = m.payload
    if isinstance(p, (Advertisement, Fin)):
        return head
    if isinstance(p, (Intention, Prescription)):
        return head + _encode_trajectory(p.trajectory)
    if isinstance(p, Acceptance):
        return (
            head
            + struct.pack("<B", 1 if p.accepted else 0)
            + _encode_trajectory(p.selected_trajectory)
        )
    if isinstance(p, Cancel):
        return head + struct.pack("<B", int(p.reason))
    if isinstance(p, Ack):
        return head + struct.pack("<BH", p.acked_type, p.acked_seq)
    if isinstance(p, Cam):
        return head + struct.pack("<dddd", p.x, p.y, p.speed, p.heading)
    raise TypeError(f"unsupported payload {type(p).__name__}")


def encoded_size(m: McmMessage) -> int:
    """Wire size in bytes without materializing the encoding."""
    p = m.payload
    if isinstance(p, (Advertisement, Fin)):
        return HEADER_SIZE
    if isinstance(p, (Intention, Prescription)):
        return HEADER_SIZE + 2 + POINT_SIZE * len(p.trajectory)
    if isinstance(p, Acceptance):
        n = 0 if p.selected_trajectory is None else len(p.selected_trajectory)
        return HEADER_SIZE + 1 + 2 + POINT_SIZE * n
    if isinstance(p, Cancel):
        return HEADER_SIZE + 1
    if isinstance(p, Ack):
        return HEADER_SIZE + 3
    if isinstance(p, Cam):
        return HEADER_SIZE + 32
    raise TypeError(f"unsupported payload {type(p).__name__}")


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise Truncated(f"need {n} bytes for {what}", self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))


def _decode_trajectory(r: _Reader) -> TimedTrajectory | None:
    (count,) = r.unpack("<H", "trajectory point count")
    if count == 0:
        return None
    raw = r.take(count * POINT_SIZE, "trajectory points")
    block = np.frombuffer(raw, dtype="<f8").reshape(count, 3)
    return TimedTrajectory(block[:, :2].copy(), block[:, 2].copy())


def decode(data: bytes) -> McmMessage:
    """Parse wire bytes back into a message; inverse of :func:`encode`."""
    r = _Reader(data)
    fields = r.unpack("<BBIIHBQ", "header")
    msg_type, version, sender, target, seq, scenario, gen_ms = fields
    if version != PROTOCOL_VERSION:
        raise BadVersion(f"unsupported version {version}", 1)
    try:
        mtype = MsgType(msg_type)
    except ValueError:
        raise UnknownType(f"unknown message type {msg_type}", 0) from None
    header = MessageHeader(
        msg_type=mtype,
        sender_id=sender,
        target_id=target,
        seq=seq,
        generation_time_ms=gen_ms,
        scenario=scenario,
        version=version,
    )
    if mtype == MsgType.ADVERTISEMENT:
        payload = Advertisement()
    elif mtype == MsgType.FIN:
        payload = Fin()
    elif mtype in (MsgType.INTENTION, MsgType.PRESCRIPTION):
        tt = _decode_trajectory(r)
        if tt is None:
            raise Truncated("trajectory block must not be empty", r.pos - 2)
        payload = Intention(tt) if mtype == MsgType.INTENTION else Prescription(tt)
    elif mtype == MsgType.ACCEPTANCE:
        (accepted,) = r.unpack("<B", "accepted flag")
        payload = Acceptance(bool(accepted), _decode_trajectory(r))
    elif mtype == MsgType.CANCEL:
        off = r.pos
        (reason,) = r.unpack("<B", "cancel reason")
        try:
            payload = Cancel(CancelReason(reason))
        except ValueError:
            raise UnknownType(f"unknown cancel reason {reason}", off) from None
    elif mtype == MsgType.ACK:
        acked_type, acked_seq = r.unpack("<BH", "ack payload")
        payload = Ack(acked_type, acked_seq)
    else:  # CAM
        x, y, speed, heading = r.unpack("<dddd", "cam payload")
        payload = Cam(x, y, speed, heading)
    if r.pos != len(data):
        raise CodecError(f"{len(data) - r.pos} trailing bytes", r.pos)
    return McmMessage(header, payload)
