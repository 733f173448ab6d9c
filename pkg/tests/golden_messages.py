"""Canonical messages frozen by the golden wire-format files."""

import numpy as np

from mcmsim.messages import (
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
from mcmsim.trajectory import TimedTrajectory


def _header(mtype, sender, target, seq, gen_ms):
    return MessageHeader(msg_type=mtype, sender_id=sender, target_id=target,
                         seq=seq, generation_time_ms=gen_ms)


def _trajectory(n, x0=0.0, y0=-3.5, t0=2.0):
    xs = x0 + 5.0 * np.arange(n)
    ys = np.full(n, y0)
    ts = t0 + 0.5 * np.arange(n)
    return TimedTrajectory(np.column_stack([xs, ys]), ts)


def golden_messages() -> dict[str, McmMessage]:
    return {
        "advertisement": McmMessage(
            _header(MsgType.ADVERTISEMENT, 1, 0, 1, 1000), Advertisement()),
        "intention": McmMessage(
            _header(MsgType.INTENTION, 2, 1, 1, 1020), Intention(_trajectory(50))),
        "prescription": McmMessage(
            _header(MsgType.PRESCRIPTION, 1, 2, 1, 2010), Prescription(_trajectory(52))),
        "acceptance": McmMessage(
            _header(MsgType.ACCEPTANCE, 2, 1, 2, 2050),
            Acceptance(True, _trajectory(52))),
        "fin": McmMessage(_header(MsgType.FIN, 1, 2, 1, 14120), Fin()),
        "cancel": McmMessage(
            _header(MsgType.CANCEL, 1, 4, 1, 2010), Cancel(CancelReason.NOT_TARGET)),
        "ack": McmMessage(
            _header(MsgType.ACK, 1, 2, 3, 1040), Ack(int(MsgType.INTENTION), 1)),
        "cam": McmMessage(
            _header(MsgType.CAM, 2, 0, 9, 1900),
            Cam(27.5, -3.5, 8.25, 0.0)),
    }
