"""Deterministic discrete-event simulation of one sender/receiver pair.

The clock is integer microseconds. Events at equal times run in insertion
order. Packet timestamps are carried in headers and read by the receiver as
if clocks were perfectly synchronized.
"""

import csv
import hashlib
import heapq
import logging
import os
import random
from dataclasses import dataclass, field

import numpy as np

from . import channel as chan
from .adapt import (HOLD, LossEstimator, ReceiverController, RecoveryModel, SenderLadder,
                    LadderPosition, compute_t_i, decide, fec_decide, ladder_n)
from .codec import TetrysDecoder, TetrysEncoder
from .fec import FecBlockConfig, FecDecoder, encode_payloads
from .config import parse_qp_table
from .packets import AckPacket, FecRepairPacket, RepairPacket, SourcePacket
from .recovery import CalibrationTable
from .traffic import CbrSource, VideoRateModel, VideoSource

log = logging.getLogger(__name__)

EMIT, ARRIVAL, FEEDBACK, ACK_TIMER, SCHEDULE_CHANGE = range(5)


@dataclass
class MetricsLog:
    d_max_us: int
    send_us: list = field(default_factory=list)  # index seq - 1
    delivery_us: list = field(default_factory=list)  # None when never delivered
    decoded: list = field(default_factory=list)  # True when recovered by decoding
    nominal_delay_us: list = field(default_factory=list)
    rung: list = field(default_factory=list)  # (t_us, index, ratio)
    sent: list = field(default_factory=list)  # (t_us, wire bytes, is_repair)
    events: list = field(default_factory=list)  # (t_us, kind, request_id, direction, rung)
    segments_s: list = field(default_factory=list)  # loss-schedule segment starts
    end_of_traffic_us: int = 0
    end_us: int = 0
    counters: dict = field(default_factory=dict)

    @property
    def emitted(self):
        return len(self.send_us)

    def on_time(self, i):
        d = self.delivery_us[i]
        return d is not None and d <= self.send_us[i] + self.d_max_us

    def digest(self):
        h = hashlib.sha256()
        h.update(repr((self.send_us, self.delivery_us, self.decoded, self.rung,
                       self.events, self.sent)).encode())
        return h.hexdigest()


def ilr(log_, start_s=None, end_s=None):
    """Fraction of sources not delivered within the deadline, optionally for
    those sent in ``[start_s, end_s)``."""
    lo = -1 if start_s is None else start_s * 1e6
    hi = float("inf") if end_s is None else end_s * 1e6
    total = bad = 0
    for i, s in enumerate(log_.send_us):
        if lo <= s < hi:
            total += 1
            if not log_.on_time(i):
                bad += 1
    return bad / total if total else 0.0


def outcome_counts(log_):
    on_time = late = never = 0
    for i in range(log_.emitted):
        d = log_.delivery_us[i]
        if d is None:
            never += 1
        elif d <= log_.send_us[i] + log_.d_max_us:
            on_time += 1
        else:
            late += 1
    return on_time, late, never


def recovery_delay_samples(log_):
    """Recovery delay (ms) of every source that was lost and later decoded,
    measured from its loss-free arrival ``send_ts + one-way delay``."""
    out = []
    for i, dec in enumerate(log_.decoded):
        if dec:
            nominal = log_.send_us[i] + log_.nominal_delay_us[i]
            out.append((log_.delivery_us[i] - nominal) / 1000.0)
    return out


def mean_redundancy(log_, start_s=None, end_s=None):
    """Time-weighted mean ladder ratio over the traffic period (or a window of it)."""
    lo = 0 if start_s is None else int(start_s * 1e6)
    hi = log_.end_of_traffic_us if end_s is None else min(int(end_s * 1e6),
                                                          log_.end_of_traffic_us)
    if not log_.rung or hi <= lo:
        return 0.0
    acc = 0.0
    pts = log_.rung + [(hi, None, None)]
    for (t0, _, r), (t1, _, _) in zip(pts, pts[1:]):
        a, b = max(t0, lo), min(t1, hi)
        if b > a:
            acc += r * (b - a)
    return acc / (hi - lo)


def bandwidth_timeline(log_, bin_ms=1000.0):
    """kb/s of all forward transmissions per ``bin_ms`` bin over the traffic period."""
    if not log_.sent:
        return []
    bin_us = int(bin_ms * 1000)
    nbins = max(1, -(-log_.end_of_traffic_us // bin_us))
    acc = np.zeros(nbins)
    for t, nbytes, _ in log_.sent:
        idx = min(t // bin_us, nbins - 1)
        acc[idx] += nbytes
    return list(acc * 8 / bin_ms)


def traffic_period_us(log_):
    """End of the traffic period: one mean source spacing past the last emission."""
    n = log_.emitted
    if n < 2:
        return log_.end_of_traffic_us
    return log_.end_of_traffic_us + log_.end_of_traffic_us / (n - 1)


def mean_bandwidth(log_, start_s=None, end_s=None):
    lo = 0 if start_s is None else start_s * 1e6
    end = traffic_period_us(log_)
    hi = end if end_s is None else min(end_s * 1e6, end)
    if hi <= lo:
        return 0.0
    total = sum(b for t, b, _ in log_.sent if lo <= t < hi)
    return total * 8 / ((hi - lo) / 1000.0)


def summary(log_):
    on_time, late, never = outcome_counts(log_)
    return {
        "ilr": ilr(log_),
        "mean_redundancy": mean_redundancy(log_),
        "mean_kbps": mean_bandwidth(log_),
        "on_time_rate": on_time / max(log_.emitted, 1),
        "degraded_intervals": degraded_intervals(log_),
        "emitted": log_.emitted,
    }


def degraded_intervals(log_):
    """Number of maximal runs of consecutive sources missing their deadline."""
    runs, prev_bad = 0, False
    for i in range(log_.emitted):
        bad = not log_.on_time(i)
        if bad and not prev_bad:
            runs += 1
        prev_bad = bad
    return runs


def rung_at(log_, t_us):
    """Ladder (index, ratio) in force at ``t_us``."""
    cur = log_.rung[0] if log_.rung else (0, 0, 0.0)
    for entry in log_.rung:
        if entry[0] > t_us:
            break
        cur = entry
    return cur[1], cur[2]


def write_csvs(log_, out_dir, bin_ms=1000.0):
    """Write packets.csv, timeline.csv and events.csv into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "packets.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seq", "send_ts_ms", "delivery_ts_ms", "on_time"])
        for i in range(log_.emitted):
            d = log_.delivery_us[i]
            w.writerow([i + 1, log_.send_us[i] / 1000.0, "LOST" if d is None else d / 1000.0,
                        int(log_.on_time(i))])
    with open(os.path.join(out_dir, "timeline.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "rung", "redundancy", "kbps"])
        for b, kbps in enumerate(bandwidth_timeline(log_, bin_ms)):
            t_us = int(b * bin_ms * 1000)
            idx, ratio = rung_at(log_, t_us)
            w.writerow([t_us / 1e6, idx, round(ratio, 6), round(kbps, 3)])
    with open(os.path.join(out_dir, "events.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_ms", "event", "request_id", "direction", "rung"])
        for t, kind, rid, direction, rung in log_.events:
            w.writerow([t / 1000.0, kind, rid, direction, rung])


def _sub_seed(seed, tag):
    return int.from_bytes(hashlib.sha256(f"{seed}:{tag}".encode()).digest()[:8], "big")


class Simulation:
    """One scenario run. ``table`` overrides the configured calibration table."""

    def __init__(self, cfg, table=None):
        cfg.validate()
        self.cfg = cfg
        r, t, c, ch = cfg.run, cfg.traffic, cfg.codec, cfg.channel
        self.ccfg = cfg.controller_config()
        seed = r.seed
        self.payloads = r.payloads
        self.d_max_us = int(round(r.d_max_ms * 1000))
        self.ack_us = int(round(r.ack_period_ms * 1000))
        self.delay = chan.DelaySchedule(ch.delay)
        self.fwd = chan.Link(chan.LossSchedule(ch.loss, _sub_seed(seed, "fwd")), self.delay)
        self.back = chan.Link(chan.Bernoulli(ch.feedback_loss, _sub_seed(seed, "back")),
                              self.delay)
        self.payload_rng = random.Random(_sub_seed(seed, "payload"))
        self.log = MetricsLog(self.d_max_us, segments_s=[s.start_s for s in ch.loss])
        self.adaptive = c.scheme != "none" and c.mode == "adaptive"
        self.scheme = c.scheme

        ladder = self.ccfg.ladder
        if self.adaptive:
            start = min(range(len(ladder)), key=lambda i: abs(ladder[i] - c.redundancy))
        else:
            start = 0
        self.ladder = SenderLadder(self.ccfg, LadderPosition(start))

        # sender side
        if c.scheme == "tetrys":
            k = self._k_of(ladder[start]) if self.adaptive else max(1, round(1 / c.redundancy) - 1)
            self.fixed_ratio = 1.0 / (k + 1)
            self.encoder = TetrysEncoder(k, _sub_seed(seed, "coeff"), c.window_cap)
        elif c.scheme == "fec":
            if self.adaptive:
                self.fec_cfg = self._fec_block(start)
            elif c.fec_k:
                self.fec_cfg = FecBlockConfig(c.fec_k, c.fec_n)
            else:
                self.fec_cfg = self._fec_block(min(range(len(ladder)),
                                                   key=lambda i: abs(ladder[i] - c.redundancy)))
            self.fixed_ratio = self.fec_cfg.redundancy
            self.block = 0
            self.block_sources = []
            self.next_seq = 1
            self.applied_id = 0
        else:
            self.fixed_ratio = 0.0
            self.next_seq = 1

        # receiver side
        self.estimator = LossEstimator()
        self.t_est = None
        self.owd_est = None
        self.last_src = None
        if c.scheme == "tetrys":
            self.decoder = TetrysDecoder()
        elif c.scheme == "fec":
            self.decoder = FecDecoder()
        else:
            self.decoder = None
        self.controller = ReceiverController(self.ccfg, start) if self.adaptive else None
        self.model = None
        if self.adaptive and c.scheme == "tetrys":
            tbl = table
            if tbl is None:
                path = cfg.controller.calibration
                tbl = CalibrationTable.load(path) if path else CalibrationTable.default()
            self.model = RecoveryModel(tbl)
        self.originals = {} if self.payloads else None
        self.corrupt = 0

        # traffic
        self.qp_shift = c.qp_shift if c.scheme != "none" else 0
        if t.type == "cbr":
            self.traffic = CbrSource(t.rate_kbps, t.packet_size, t.packets).schedule()
        else:
            model = VideoRateModel(t.base_qp, t.rate_kbps, t.gain, t.fps,
                                   parse_qp_table(t.qp_table) or None, t.gop, t.gop_weight,
                                   t.jitter, t.mtu)
            self.traffic = VideoSource(model, t.duration_s, _sub_seed(seed, "video"),
                                       qp=self._qp_offset).schedule()

    # ------------------------------------------------------------ helpers

    @staticmethod
    def _k_of(ratio):
        return ladder_n(ratio) - 1

    def _fec_block(self, index):
        ratio = self.ccfg.ladder[index]
        table = {0.1: (9, 10), 0.2: (8, 10), round(1 / 3, 3): (6, 9), 0.5: (5, 10)}
        k, n = table.get(round(ratio, 3), (None, None))
        if k is None:
            n = 10
            k = max(1, min(n - 1, round(n * (1 - ratio))))
        return FecBlockConfig(k, n)

    def _qp_offset(self):
        if not self.cfg.codec.qp_coupling:
            return self.qp_shift
        return self.qp_shift + (self.ladder.pos.index if self.adaptive else 0)

    def _current_ratio(self):
        if self.adaptive:
            return self.ccfg.ladder[self.ladder.pos.index]
        return self.fixed_ratio

    def _push(self, t, kind, obj=None):
        self._order += 1
        heapq.heappush(self._heap, (t, self._order, kind, obj))

    def _payload(self, size):
        return self.payload_rng.getrandbits(8 * size).to_bytes(size, "big") if size else b""

    # ------------------------------------------------------------ run

    def run(self):
        self._heap = []
        self._order = 0
        self._tx = 0
        lg = self.log
        lg.rung.append((0, self.ladder.pos.index, self._current_ratio()))
        for i, s in enumerate(self.cfg.channel.loss):
            if s.start_s > 0:
                self._push(int(s.start_s * 1e6), SCHEDULE_CHANGE, i)
        first = next(self.traffic, None)
        if first is not None:
            self._push(int(round(first[0] * 1000)), EMIT, first[1])
        if self.scheme != "none":
            self._push(self.ack_us, ACK_TIMER)
        self._end = None
        handlers = {EMIT: self._on_emit, ARRIVAL: self._on_arrival,
                    FEEDBACK: self._on_feedback, ACK_TIMER: self._on_ack_timer,
                    SCHEDULE_CHANGE: self._on_schedule_change}
        heap = self._heap
        while heap:
            t, _, kind, obj = heapq.heappop(heap)
            if self._end is not None and t > self._end:
                break
            handlers[kind](t, obj)
        lg.end_us = self._end or 0
        lg.counters = self._counters()
        return lg

    def _counters(self):
        out = {"corrupt": self.corrupt}
        d = self.decoder
        if isinstance(d, TetrysDecoder):
            out.update(dependent_discards=d.dependent_discards, decode_events=d.decode_events,
                       abandoned=d.abandoned, evicted=self.encoder.evicted,
                       repairs_received=d.repairs_received)
        return out

    # ------------------------------------------------------------ sender

    def _send(self, now, pkt):
        lg = self.log
        is_repair = not isinstance(pkt, SourcePacket)
        self._tx += 1
        pkt.tx_seq = self._tx
        lg.sent.append((now, pkt.wire_size, is_repair))
        arrival = self.fwd.send(now)
        if arrival is not None:
            self._push(arrival, ARRIVAL, pkt)

    def _on_emit(self, now, size):
        lg = self.log
        payload = self._payload(size) if self.payloads else None
        lg.send_us.append(now)
        lg.delivery_us.append(None)
        lg.decoded.append(False)
        lg.nominal_delay_us.append(int(round(self.delay.delay_ms(now / 1000.0) * 1000)))
        seq = lg.emitted
        if self.originals is not None:
            self.originals[seq] = payload
        if self.scheme == "tetrys":
            for pkt in self.encoder.on_source_ready(payload, now, size=size):
                self._send(now, pkt)
        elif self.scheme == "fec":
            pkt = SourcePacket(seq, now, payload, size=size)
            self._send(now, pkt)
            self.block_sources.append(pkt)
            if len(self.block_sources) >= self.fec_cfg.k:
                self._flush_block(now)
        else:
            self._send(now, SourcePacket(seq, now, payload, size=size))
        nxt = next(self.traffic, None)
        if nxt is not None:
            self._push(max(int(round(nxt[0] * 1000)), now), EMIT, nxt[1])
        else:
            if self.scheme == "fec" and self.block_sources:
                self._flush_block(now)
            lg.end_of_traffic_us = now
            n_mean = ladder_n(max(self._current_ratio(), 1e-9)) if self._current_ratio() else 1
            t_mean = now / max(lg.emitted - 1, 1)
            self._end = (now + self.d_max_us + int(self.delay.max_delay_ms * 1000)
                         + int(10 * n_mean * t_mean))

    def _flush_block(self, now):
        srcs = self.block_sources
        k = len(srcs)
        n = k + (self.fec_cfg.n - self.fec_cfg.k)
        first = srcs[0].seq
        if srcs[0].payload is not None:
            bodies = [p.tobytes() for p in encode_payloads([s.payload for s in srcs], k, n)]
        else:
            size = max(s.size for s in srcs) + 2
            bodies = [None] * (n - k)
        for r, body in enumerate(bodies):
            pkt = FecRepairPacket(self.block, first, k, n, k + r, now, body,
                                  applied_id=self.applied_id)
            if body is None:
                pkt.size = size
            self._send(now, pkt)
        self.block += 1
        self.block_sources = []
        if self.adaptive:
            self.fec_cfg = self._fec_block(self.ladder.pos.index)

    def _on_feedback(self, now, ack):
        if self.scheme == "tetrys":
            self.encoder.on_ack(ack)
        fb = ack.feedback
        if fb is None or not self.adaptive:
            return
        if fb.request_id in self.ladder.applied:
            return
        changed = self.ladder.apply(fb)
        idx = self.ladder.pos.index
        self.log.events.append((now, "applied", fb.request_id, fb.direction.name, idx))
        if self.scheme == "tetrys":
            self.encoder.applied_id = fb.request_id
            if changed:
                self.encoder.set_k(self._k_of(self.ccfg.ladder[idx]))
        else:
            self.applied_id = fb.request_id
        if changed:
            self.log.rung.append((now, idx, self.ccfg.ladder[idx]))

    # ------------------------------------------------------------ receiver

    def _on_arrival(self, now, pkt):
        lg = self.log
        self.estimator.observe(pkt.tx_seq)
        if isinstance(pkt, SourcePacket):
            self._observe_source(pkt, now)
        for seq, payload, ts in self.decoder.receiver_on_packet(pkt, now) if self.decoder \
                else [(pkt.seq, pkt.payload, now)]:
            i = seq - 1
            if lg.delivery_us[i] is None:
                lg.delivery_us[i] = ts
                if not (isinstance(pkt, SourcePacket) and pkt.seq == seq):
                    lg.decoded[i] = True
                if self.originals is not None and payload != self.originals[seq]:
                    self.corrupt += 1
        if self.adaptive and not isinstance(pkt, SourcePacket):
            if pkt.applied_id and self.controller.outstanding is not None:
                rtt = 2 * (self.owd_est or 0) / 1000.0
                if self.controller.on_applied(pkt.applied_id, now / 1000.0, rtt):
                    fb_log = self.controller.log[-1]
                    lg.events.append((now, "confirmed", fb_log[2], fb_log[3], fb_log[4]))
            self._decision(now)

    def _observe_source(self, pkt, now):
        owd = now - pkt.send_ts
        self.owd_est = owd if self.owd_est is None else self.owd_est + 0.05 * (owd - self.owd_est)
        if self.last_src is not None:
            j, ts = self.last_src
            if pkt.seq > j:
                gap = (pkt.send_ts - ts) / (pkt.seq - j) / 1000.0
                self.t_est = gap if self.t_est is None else self.t_est + 0.05 * (gap - self.t_est)
        self.last_src = (pkt.seq, pkt.send_ts)

    def _decision(self, now):
        ctl = self.controller
        if ctl.outstanding is not None or now / 1000.0 < ctl.cooldown_until:
            return
        if self.t_est is None:
            return
        now_ms = now / 1000.0
        p_hat, b_hat = self.estimator.p, self.estimator.b
        if self.scheme == "fec":
            d = fec_decide(self.ccfg.ladder[ctl.pos.index], p_hat,
                           self.ccfg.min_fec, self.ccfg.max_fec)
        else:
            dec = self.decoder
            Z = dec.Z
            t_i = None
            if Z > 0:
                gap = dec.first_gap_seq
                prev = dec.last_received_before(gap)
                if prev is None:
                    t_i = self.ccfg.d_max
                else:
                    t_i = compute_t_i(gap, (prev[0], prev[1] / 1000.0), self.t_est,
                                      self.ccfg.d_max, now_ms)
            d = decide(Z, t_i, p_hat, b_hat, ctl.pos, self.ccfg, self.model, self.t_est)
        if d != HOLD:
            fb = ctl.offer(d, now_ms)
            if fb is not None:
                self.log.events.append((now, "request", fb.request_id, fb.direction.name,
                                        ctl.pos.index))

    def _on_ack_timer(self, now, _):
        if self.adaptive:
            self._decision(now)
        fb = self.controller.feedback if self.adaptive else None
        if isinstance(self.decoder, TetrysDecoder):
            ack = self.decoder.make_ack(now, fb)
        else:
            ack = AckPacket(0, now, fb)
        arrival = self.back.send(now)
        if arrival is not None:
            self._push(arrival, FEEDBACK, ack)
        if self._end is None or now + self.ack_us <= self._end:
            self._push(now + self.ack_us, ACK_TIMER)

    def _on_schedule_change(self, now, index):
        s = self.cfg.channel.loss[index]
        self.log.events.append((now, f"segment:{s.model}", index, "", -1))


def run(cfg, table=None):
    """Execute one scenario and return its MetricsLog."""
    return Simulation(cfg, table).run()


# ------------------------------------------------------------ scripted traces

def run_trace(k, steps, lost):
    """Replay a scripted exchange over a zero-delay path.

    ``steps`` is a sequence of ``"src"`` (sender emits the next source and any
    repair due) and ``"ack"`` (receiver acknowledges). Packets whose label
    (``P3``, ``R(1..4)``, ``ACK1``) is in ``lost`` are dropped. Returns the
    list of human-readable events.
    """
    enc = TetrysEncoder(k, seed=7)
    dec = TetrysDecoder()
    events = []
    acks = 0
    rng = random.Random(3)
    sent = {}
    for step in steps:
        if step == "src":
            payload = bytes(rng.getrandbits(8) for _ in range(rng.randint(1, 40)))
            for pkt in enc.on_source_ready(payload, 0):
                if isinstance(pkt, SourcePacket):
                    label = f"P{pkt.seq}"
                    sent[pkt.seq] = pkt.payload
                else:
                    label = f"R({pkt.first_seq}..{pkt.last_seq})"
                if label in lost:
                    events.append(f"{label} lost")
                    continue
                events.append(f"{label} received")
                got = dec.receiver_on_packet(pkt, 0)
                rec = [s for s, p, _ in got if not (isinstance(pkt, SourcePacket) and s == pkt.seq)]
                for s, p, _ in got:
                    if p != sent[s]:
                        raise AssertionError(f"P{s} decoded incorrectly")
                if rec:
                    events.append("recovered " + ",".join(f"P{s}" for s in rec))
                elif isinstance(pkt, RepairPacket) and dec.y:
                    events.append(f"pending y={dec.y} z={dec.z} Z={dec.Z}")
        elif step == "ack":
            acks += 1
            ack = dec.make_ack(0)
            label = f"ACK{acks}"
            if label in lost:
                events.append(f"{label}({ack.cumulative_seq}) lost")
                continue
            enc.on_ack(ack)
            head = next(iter(enc.window), None)
            events.append(f"{label}({ack.cumulative_seq}) received, window from "
                          f"P{head if head is not None else enc.next_seq}")
        else:
            raise ValueError(f"unknown step {step!r}")
    return events
