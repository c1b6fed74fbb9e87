"""In-memory packet model and its canonical byte serialization.

Wire layout (all integers big-endian, timestamps in microseconds)::

    source:  type=0 | seq u32 | send_ts u64 | tx u32 | len u16 | payload
    repair:  type=1 | first u32 | last u32 | seed u64 | send_ts u64
             | applied_id u32 | tx u32 | len u16 | combined payload
    ack:     type=2 | cumulative u32 | send_ts u64 | fb_id u32 | fb_dir u8
    fec:     type=3 | block u32 | first u32 | k u8 | n u8 | index u8
             | send_ts u64 | applied_id u32 | tx u32 | len u16 | payload

``fb_dir`` is 0 for no feedback, 1 for increase, 2 for decrease. ``tx`` is
the sender's count of forward transmissions (sources and repairs alike), so
the receiver can observe loss runs as the channel produced them. Packets in
symbolic mode carry ``payload=None`` and a nominal ``size`` used for byte
accounting only; they cannot be serialized.
"""

import enum
import struct
from dataclasses import dataclass
from typing import Optional

SOURCE, REPAIR, ACK, FEC_REPAIR = 0, 1, 2, 3

_SOURCE = struct.Struct(">BIQIH")
_REPAIR = struct.Struct(">BIIQQIIH")
_ACK = struct.Struct(">BIQIB")
_FEC = struct.Struct(">BIIBBBQIIH")

SOURCE_HEADER = _SOURCE.size
REPAIR_HEADER = _REPAIR.size
ACK_HEADER = _ACK.size
FEC_HEADER = _FEC.size


class Direction(enum.IntEnum):
    HOLD = 0
    INCREASE = 1
    DECREASE = 2


@dataclass(frozen=True)
class RedundancyFeedback:
    request_id: int
    direction: Direction


@dataclass
class SourcePacket:
    seq: int
    send_ts: int
    payload: Optional[bytes] = None
    size: int = 0
    tx_seq: int = 0

    def __post_init__(self):
        if self.payload is not None:
            self.size = len(self.payload)

    @property
    def wire_size(self):
        return SOURCE_HEADER + self.size


@dataclass
class RepairPacket:
    first_seq: int
    last_seq: int
    coeff_seed: int
    send_ts: int
    combined_payload: Optional[bytes] = None
    size: int = 0
    applied_id: int = 0
    tx_seq: int = 0

    def __post_init__(self):
        if self.first_seq > self.last_seq:
            raise ValueError("repair window must satisfy first_seq <= last_seq")
        if self.combined_payload is not None:
            self.size = len(self.combined_payload)

    @property
    def wire_size(self):
        return REPAIR_HEADER + self.size


@dataclass
class AckPacket:
    cumulative_seq: int
    send_ts: int
    feedback: Optional[RedundancyFeedback] = None

    @property
    def wire_size(self):
        return ACK_HEADER


@dataclass
class FecRepairPacket:
    block: int
    first_seq: int
    k: int
    n: int
    index: int  # position among the n block packets, k <= index < n
    send_ts: int
    payload: Optional[bytes] = None
    size: int = 0
    applied_id: int = 0
    tx_seq: int = 0

    def __post_init__(self):
        if self.payload is not None:
            self.size = len(self.payload)

    @property
    def wire_size(self):
        return FEC_HEADER + self.size


def serialize(pkt):
    if isinstance(pkt, AckPacket):
        fb = pkt.feedback
        return _ACK.pack(ACK, pkt.cumulative_seq, pkt.send_ts,
                         fb.request_id if fb else 0, int(fb.direction) if fb else 0)
    payload = getattr(pkt, "combined_payload", None) if isinstance(pkt, RepairPacket) \
        else pkt.payload
    if payload is None:
        raise ValueError("symbolic packets carry no payload and cannot be serialized")
    if isinstance(pkt, SourcePacket):
        head = _SOURCE.pack(SOURCE, pkt.seq, pkt.send_ts, pkt.tx_seq, len(payload))
    elif isinstance(pkt, RepairPacket):
        head = _REPAIR.pack(REPAIR, pkt.first_seq, pkt.last_seq, pkt.coeff_seed,
                            pkt.send_ts, pkt.applied_id, pkt.tx_seq, len(payload))
    elif isinstance(pkt, FecRepairPacket):
        head = _FEC.pack(FEC_REPAIR, pkt.block, pkt.first_seq, pkt.k, pkt.n,
                         pkt.index, pkt.send_ts, pkt.applied_id, pkt.tx_seq, len(payload))
    else:
        raise TypeError(f"cannot serialize {type(pkt).__name__}")
    return head + bytes(payload)


def deserialize(data):
    kind = data[0]
    if kind == SOURCE:
        _, seq, ts, tx, n = _SOURCE.unpack_from(data)
        return SourcePacket(seq, ts, bytes(data[SOURCE_HEADER:SOURCE_HEADER + n]), tx_seq=tx)
    if kind == REPAIR:
        _, first, last, seed, ts, applied, tx, n = _REPAIR.unpack_from(data)
        body = bytes(data[REPAIR_HEADER:REPAIR_HEADER + n])
        return RepairPacket(first, last, seed, ts, body, applied_id=applied, tx_seq=tx)
    if kind == ACK:
        _, cum, ts, fb_id, fb_dir = _ACK.unpack_from(data)
        fb = RedundancyFeedback(fb_id, Direction(fb_dir)) if fb_dir else None
        return AckPacket(cum, ts, fb)
    if kind == FEC_REPAIR:
        _, block, first, k, n, index, ts, applied, tx, size = _FEC.unpack_from(data)
        body = bytes(data[FEC_HEADER:FEC_HEADER + size])
        return FecRepairPacket(block, first, k, n, index, ts, body, applied_id=applied,
                               tx_seq=tx)
    raise ValueError(f"unknown packet type byte {kind}")
