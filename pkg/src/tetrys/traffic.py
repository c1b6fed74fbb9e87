"""Packet sources: constant bit rate and a statistical video model.

The video model stands in for an H.264 encoder. Its bit rate drops by a
fixed fraction per QP step (or follows a per-QP table) and each frame's byte
budget gets a GOP-start boost and uniform jitter before being split into
near-equal packets no larger than the MTU.
"""

import logging
import math
import random
from dataclasses import dataclass
from typing import Optional

log = logging.getLogger(__name__)

# two measured points of the 'Foreman' CIF sequence (x264, Baseline)
FOREMAN_TABLE = {20: 1357.2, 21: 1143.2}


@dataclass(frozen=True)
class CbrSource:
    rate: float = 1900.0  # kb/s
    packet_size: int = 500  # bytes
    count: int = 50000

    @property
    def interval_ms(self):
        return self.packet_size * 8.0 / self.rate

    def schedule(self):
        """Yield ``(send_ms, size)`` for every packet."""
        t = self.interval_ms
        for m in range(self.count):
            yield m * t, self.packet_size


def next_cbr_packet(src, index):
    """Send time (ms) and size of the ``index``-th packet (0-based)."""
    return index * src.interval_ms, src.packet_size


@dataclass(frozen=True)
class VideoRateModel:
    base_qp: int = 27
    base_rate: float = 774.1  # kb/s at base_qp
    gain_per_step: float = 0.15
    frame_rate: float = 30.0
    table: Optional[dict] = None
    gop: int = 30
    gop_weight: float = 4.0
    jitter: float = 0.2
    mtu: int = 1500

    def __post_init__(self):
        if not 0 < self.gain_per_step < 1:
            raise ValueError("gain_per_step must lie in (0, 1)")
        if self.base_rate <= 0 or self.frame_rate <= 0:
            raise ValueError("rates must be positive")


def video_rate(model, qp_offset):
    """Encoding bit rate (kb/s) at ``base_qp + qp_offset``."""
    if model.table:
        qp = model.base_qp + qp_offset
        lo, hi = min(model.table), max(model.table)
        if not lo <= qp <= hi:
            log.warning("QP %d outside rate table [%d, %d]; clamping", qp, lo, hi)
            qp = min(max(qp, lo), hi)
        return float(model.table[qp])
    return model.base_rate * (1.0 - model.gain_per_step) ** qp_offset


def frame_budget(model, qp_offset, frame_index, rng):
    """Bytes of one frame: mean ``rate / fps`` with GOP boost and jitter."""
    mean = video_rate(model, qp_offset) * 1000.0 / 8.0 / model.frame_rate
    g = model.gop
    norm = g / (g - 1 + model.gop_weight)
    w = norm * (model.gop_weight if frame_index % g == 0 else 1.0)
    jit = 1.0 + rng.uniform(-model.jitter, model.jitter) if model.jitter else 1.0
    return mean * w * jit


def split_frame(nbytes, mtu):
    nbytes = max(int(round(nbytes)), 1)
    count = math.ceil(nbytes / mtu)
    base, extra = divmod(nbytes, count)
    return [base + 1 if i < extra else base for i in range(count)]


def video_packets_for_frame(model, qp_offset, frame_index, rng):
    """Payload sizes of the packets carrying one frame."""
    return split_frame(frame_budget(model, qp_offset, frame_index, rng), model.mtu)


class VideoSource:
    """Frame-paced packet schedule whose QP can change between frames.

    Packets of a frame are spread evenly over the frame interval.
    ``qp_offset`` is read once per frame through the ``qp`` callable.
    """

    def __init__(self, model, duration_s, seed=0, qp=lambda: 0):
        self.model = model
        self.frames = int(round(duration_s * model.frame_rate))
        self.rng = random.Random(seed)
        self.qp = qp

    def schedule(self):
        period = 1000.0 / self.model.frame_rate
        for f in range(self.frames):
            sizes = video_packets_for_frame(self.model, self.qp(), f, self.rng)
            step = period / len(sizes)
            t0 = f * period
            for i, size in enumerate(sizes):
                yield t0 + i * step, size
