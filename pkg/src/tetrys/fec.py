"""Systematic block FEC(k, n) over GF(256) with a Cauchy generator.

Repair ``r`` of a block is ``sum_j C[r][j] * src_j`` with
``C[r][j] = 1 / (x_r + y_j)``, ``y_j = j`` and ``x_r = k + r``. Every square
submatrix of a Cauchy matrix is invertible, so any ``k`` of the ``n`` block
packets recover the sources.
"""

from dataclasses import dataclass

import numpy as np

from . import gf256
from .codec import pad, unpad
from .packets import FecRepairPacket, SourcePacket

MAX_GROUP = 255


@dataclass(frozen=True)
class FecBlockConfig:
    k: int
    n: int
    max_group: int = MAX_GROUP

    def __post_init__(self):
        if not 1 <= self.k < self.n:
            raise ValueError(f"FEC requires 1 <= k < n, got k={self.k}, n={self.n}")
        if self.n > self.max_group:
            raise ValueError(f"group size {self.n} exceeds {self.max_group}")

    @property
    def redundancy(self):
        return (self.n - self.k) / self.n


# redundancy-ladder rungs at a group size near 10
LADDER_BLOCKS = (FecBlockConfig(9, 10), FecBlockConfig(8, 10),
                 FecBlockConfig(6, 9), FecBlockConfig(5, 10))


def generator_row(k, index):
    """Coefficients producing block packet ``index`` (0 <= index < n) from sources."""
    if index < k:
        return [1 if j == index else 0 for j in range(k)]
    return [gf256.inv(index ^ j) for j in range(k)]


def encode_payloads(sources, k, n):
    """Repair payloads (padded arrays) for one block of ``k`` source payloads."""
    if len(sources) != k:
        raise ValueError(f"expected {k} sources, got {len(sources)}")
    length = max(len(s) for s in sources) + 2
    rows = np.stack([pad(s, length) for s in sources])
    return [gf256.combine(generator_row(k, i), rows) for i in range(k, n)]


def decode_payloads(received, k, n):
    """Recover all ``k`` sources from ``{index: payload bytes}`` (sources raw,
    repairs padded). Raises ``ValueError`` when fewer than ``k`` are present."""
    if len(received) < k:
        raise ValueError(f"need {k} block packets, have {len(received)}")
    if all(i in received for i in range(k)):
        return [received[i] for i in range(k)]
    chosen = sorted(received)[:k]
    length = max(len(received[i]) + (2 if i < k else 0) for i in chosen)
    rows = []
    for i in chosen:
        buf = received[i]
        if i < k:
            rows.append(pad(buf, length))
        else:
            arr = np.zeros(length, dtype=np.uint8)
            arr[:len(buf)] = np.frombuffer(buf, dtype=np.uint8)
            rows.append(arr)
    m_inv = gf256.mat_inv([generator_row(k, i) for i in chosen])
    rows = np.stack(rows)
    out = []
    for j in range(k):
        if j in received:
            out.append(received[j])
        else:
            out.append(unpad(gf256.combine(m_inv[j], rows)))
    return out


def fec_encode_block(sources, cfg, block=0, first_seq=1, now=0):
    """FecRepairPacket list for one block; ``sources`` are payload bytes."""
    return [FecRepairPacket(block, first_seq, cfg.k, cfg.n, cfg.k + r, now, p.tobytes())
            for r, p in enumerate(encode_payloads(sources, cfg.k, cfg.n))]


def fec_decode_block(received, cfg, now):
    """Deliveries ``(seq, payload, ts)`` for the missing sources of one block.

    ``received`` mixes SourcePacket and FecRepairPacket of a single block
    whose first source is the smallest ``first_seq`` among its repairs, or the
    smallest source seq when no repair arrived. Fewer than ``k`` packets
    recover nothing.
    """
    repairs = [p for p in received if isinstance(p, FecRepairPacket)]
    sources = [p for p in received if isinstance(p, SourcePacket)]
    if len(repairs) + len(sources) < cfg.k or not repairs:
        return []
    first = repairs[0].first_seq
    by_index = {p.seq - first: p.payload for p in sources}
    by_index.update({p.index: p.payload for p in repairs})
    payloads = decode_payloads(by_index, cfg.k, cfg.n)
    have = {p.seq for p in sources}
    return [(first + j, payloads[j], now) for j in range(cfg.k) if first + j not in have]


class FecDecoder:
    """Stream receiver: direct deliveries plus per-block recovery."""

    def __init__(self):
        self.blocks = {}  # block id -> dict(first, k, n, repairs, done)
        self.delivered = set()
        self.payloads = {}  # seq -> payload of sources still in an open block
        self.decoded_blocks = 0

    def receiver_on_packet(self, pkt, now):
        if isinstance(pkt, SourcePacket):
            if pkt.seq in self.delivered:
                return []
            self.delivered.add(pkt.seq)
            if pkt.payload is not None:
                self.payloads[pkt.seq] = pkt.payload
            return [(pkt.seq, pkt.payload, now)]
        blk = self.blocks.get(pkt.block)
        if blk is None:
            blk = self.blocks[pkt.block] = {"first": pkt.first_seq, "k": pkt.k, "n": pkt.n,
                                            "repairs": {}, "done": False}
            self._prune(pkt.first_seq)
        if blk["done"]:
            return []
        blk["repairs"][pkt.index] = pkt.payload
        first, k = blk["first"], blk["k"]
        have = [s for s in range(first, first + k) if s in self.delivered]
        if len(have) + len(blk["repairs"]) < k:
            return []
        blk["done"] = True
        out = []
        if len(have) < k:
            if pkt.payload is None:
                payloads = [None] * k
            else:
                received = {s - first: self.payloads[s] for s in have}
                received.update(blk["repairs"])
                payloads = decode_payloads(received, k, blk["n"])
            for j in range(k):
                s = first + j
                if s not in self.delivered:
                    self.delivered.add(s)
                    out.append((s, payloads[j], now))
            self.decoded_blocks += 1
        for s in range(first, first + k):
            self.payloads.pop(s, None)
        return out

    def _prune(self, first):
        if len(self.payloads) > 4096:
            for s in [s for s in self.payloads if s < first - 1024]:
                del self.payloads[s]
