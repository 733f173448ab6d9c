# The binary wire format: sizes, round trips, and why event-driven
# trajectory messages matter for bandwidth.

import numpy as np

from mcmsim import (
    Cam,
    Intention,
    McmMessage,
    MessageHeader,
    MsgType,
    TimedTrajectory,
    decode,
    encode,
    encoded_size,
)
from mcmsim.messages import Advertisement, Fin


def header(mtype, sender=1, target=2, seq=1):
    return MessageHeader(msg_type=mtype, sender_id=sender, target_id=target,
                         seq=seq, generation_time_ms=1000)


# Header-only messages are 21 bytes.
fin = McmMessage(header(MsgType.FIN), Fin())
print(f"Fin:            {encoded_size(fin):5d} B")

ad = McmMessage(header(MsgType.ADVERTISEMENT, target=0), Advertisement())
print(f"Advertisement:  {encoded_size(ad):5d} B")

cam = McmMessage(header(MsgType.CAM, target=0), Cam(27.5, -3.5, 8.33, 0.0))
print(f"CAM:            {encoded_size(cam):5d} B")

# A trajectory-bearing message grows 24 bytes per point.
for n in (10, 50, 100):
    xs = np.arange(n, dtype=float)
    tt = TimedTrajectory(np.column_stack([xs, np.zeros(n)]), 0.5 * np.arange(n))
    intention = McmMessage(header(MsgType.INTENTION), Intention(tt))
    ratio = encoded_size(intention) / encoded_size(cam)
    print(f"Intention({n:3d}): {encoded_size(intention):5d} B  = {ratio:5.1f}x CAM")

# Round trip is exact, including every float bit.
blob = encode(cam)
print("\nCAM wire bytes:", blob.hex())
print("decode(encode(m)) == m:", decode(blob) == cam)
