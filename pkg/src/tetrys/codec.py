"""Tetrys elastic-window encoder and on-the-fly decoder.

The sender keeps every sent-but-unacknowledged source packet in its encoding
window and, after every ``k`` sources, emits one repair packet combining the
whole window with pseudorandom nonzero GF(256) coefficients. The receiver
collects repairs into an incrementally reduced linear system over the lost
packets and solves all of them at once as soon as the system has full rank.

Payloads of different lengths are combined in length-prefixed form: two
big-endian length bytes followed by the payload, zero padded to the longest
packet of the window.

Both ends also run in *symbolic* mode (``payload=None``), where only the
coefficient algebra is carried out. Rank decisions are identical; the
simulator uses this mode to avoid moving bytes it never inspects.
"""

import functools
import logging
import random
from collections import OrderedDict

import numpy as np

from . import gf256
from .packets import AckPacket, RepairPacket, SourcePacket

log = logging.getLogger(__name__)


def _splitmix64(x):
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@functools.lru_cache(maxsize=4096)
def repair_coefficients(seed, first_seq, last_seq):
    """Coefficients of ``R(first..last)``, one per source, uniform on [1, 255].

    Both ends derive them from ``(seed, first_seq, last_seq)`` alone. The
    returned array is cached and read-only.
    """
    out = _coefficients(seed, first_seq, last_seq)
    out.setflags(write=False)
    return out


def _coefficients(seed, first_seq, last_seq):
    with np.errstate(over="ignore"):
        base = _splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
                           ^ (np.uint64(first_seq) << np.uint64(32))
                           ^ np.uint64(last_seq))
        idx = np.arange(last_seq - first_seq + 1, dtype=np.uint64)
        h = _splitmix64(base + idx * np.uint64(0xD1B54A32D192ED03))
    return (h % np.uint64(255)).astype(np.uint8) + np.uint8(1)


def pad(payload, length):
    """Length-prefix ``payload`` and zero-pad it to ``length`` bytes."""
    out = np.zeros(length, dtype=np.uint8)
    n = len(payload)
    out[0] = n >> 8
    out[1] = n & 0xFF
    out[2:2 + n] = np.frombuffer(payload, dtype=np.uint8)
    return out


def unpad(buf):
    n = (int(buf[0]) << 8) | int(buf[1])
    if n > len(buf) - 2:
        raise ValueError("corrupt length prefix")
    return bytes(buf[2:2 + n])


class PayloadStore:
    """Length-prefixed payloads in a seq-indexed 2-D array.

    Rows are zero padded to the widest payload stored so far, so a repair
    over a contiguous seq range is one vectorized combination.
    """

    def __init__(self):
        self.base = 1  # seq held by row 0
        self.buf = np.zeros((64, 16), dtype=np.uint8)
        self.lens = np.zeros(64, dtype=np.int64)  # prefixed length, 0 when empty

    def copy(self):
        new = object.__new__(PayloadStore)
        new.base, new.buf, new.lens = self.base, self.buf.copy(), self.lens.copy()
        return new

    def put(self, seq, payload):
        n = len(payload)
        if n > 0xFFFF:
            raise ValueError("payload longer than 65535 bytes")
        row = seq - self.base
        if row < 0:
            return
        cap, width = self.buf.shape
        if row >= cap or n + 2 > width:
            new_cap = max(cap, 1 << (row + 1).bit_length()) if row >= cap else cap
            new_w = max(width, 1 << (n + 2).bit_length()) if n + 2 > width else width
            buf = np.zeros((new_cap, new_w), dtype=np.uint8)
            buf[:cap, :width] = self.buf
            lens = np.zeros(new_cap, dtype=np.int64)
            lens[:cap] = self.lens
            self.buf, self.lens = buf, lens
        r = self.buf[row]
        if self.lens[row]:
            r[:] = 0
        r[:n + 2] = np.frombuffer(bytes((n >> 8, n & 0xFF)) + payload, dtype=np.uint8)
        self.lens[row] = n + 2

    def __contains__(self, seq):
        row = seq - self.base
        return 0 <= row < len(self.lens) and self.lens[row] > 0

    def get(self, seq):
        return bytes(self.buf[seq - self.base, 2:self.lens[seq - self.base]])

    def max_len(self, first, last):
        return int(self.lens[first - self.base:last - self.base + 1].max())

    def combine(self, coeffs, seqs, length):
        """``sum c_s * pad(payload_s)`` over ``seqs`` (an int array), ``length`` bytes."""
        rows = self.buf[seqs - self.base, :length]
        out = gf256.combine(coeffs, rows)
        if out.size < length:
            out = np.concatenate([out, np.zeros(length - out.size, dtype=np.uint8)])
        return out

    def drop_below(self, floor):
        shift = floor - self.base
        if shift <= 0 or shift < len(self.lens) // 2:
            return
        keep = len(self.lens) - shift
        if keep <= 0:
            self.buf[:] = 0
            self.lens[:] = 0
        else:
            self.buf[:keep] = self.buf[shift:]
            self.buf[keep:] = 0
            self.lens[:keep] = self.lens[shift:]
            self.lens[keep:] = 0
        self.base = floor


def build_repair(window, seed, now, applied_id=0, store=None):
    """Combine every packet of ``window`` (a non-empty list of SourcePacket).

    ``store`` optionally holds the window's payloads already in prefixed form.
    """
    if not window:
        raise ValueError("cannot build a repair over an empty window")
    first, last = window[0].seq, window[-1].seq
    if last - first + 1 != len(window):
        raise ValueError("encoding window must be gapless")
    if window[0].payload is None:
        length = max(p.size for p in window) + 2
        return RepairPacket(first, last, seed, now, None, size=length, applied_id=applied_id)
    coeffs = repair_coefficients(seed, first, last)
    if store is None:
        store = PayloadStore()
        store.base = first
        for p in window:
            store.put(p.seq, p.payload)
    length = store.max_len(first, last)
    combined = store.combine(coeffs, np.arange(first, last + 1), length)
    return RepairPacket(first, last, seed, now, combined.tobytes(), applied_id=applied_id)


class TetrysEncoder:
    """Sender side: elastic encoding window plus repair cadence.

    Parameters
    ----------
    k : int
        Source packets between two repairs (redundancy ``1/(k+1)``).
    seed : int
        Seeds the per-repair coefficient seeds.
    window_cap : int
        Maximum window length; the oldest entries are evicted beyond it.
    """

    def __init__(self, k, seed=0, window_cap=1024):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.window_cap = window_cap
        self.window = OrderedDict()
        self.since_last_repair = 0
        self.next_seq = 1
        self.acked = 0
        self.evicted = 0
        self.applied_id = 0
        self._rng = random.Random(seed)
        self._store = PayloadStore()

    def set_k(self, k):
        if k < 1:
            raise ValueError("k must be >= 1")
        if k != self.k:
            self.k = k
            self.since_last_repair = 0

    def on_source_ready(self, payload, now, size=None):
        """Send the next source; returns the emitted packets in order."""
        if payload is None:
            pkt = SourcePacket(self.next_seq, now, None, size=size or 0)
        else:
            pkt = SourcePacket(self.next_seq, now, bytes(payload))
            self._store.put(pkt.seq, pkt.payload)
        self.next_seq += 1
        self.window[pkt.seq] = pkt
        while len(self.window) > self.window_cap:
            self.window.popitem(last=False)
            self.evicted += 1
        out = [pkt]
        self.since_last_repair += 1
        if self.since_last_repair >= self.k:
            self.since_last_repair = 0
            out.append(self.build_repair(now))
        return out

    def build_repair(self, now):
        seed = self._rng.getrandbits(64)
        window = list(self.window.values())
        if window and window[0].payload is not None:
            self._store.drop_below(window[0].seq)
            return build_repair(window, seed, now, self.applied_id, self._store)
        return build_repair(window, seed, now, self.applied_id)

    def on_ack(self, ack):
        cum = ack.cumulative_seq
        if cum <= self.acked:
            return
        self.acked = cum
        while self.window:
            seq = next(iter(self.window))
            if seq > cum:
                break
            del self.window[seq]


class _Row:
    __slots__ = ("coeffs", "payload")

    def __init__(self, coeffs, payload):
        self.coeffs = coeffs  # {seq: nonzero coefficient}, unknown seqs only
        self.payload = payload


class TetrysDecoder:
    """Receiver side state: delivered packets, pending losses, reduced system.

    ``receiver_on_packet`` returns ``(seq, payload, delivery_ts)`` tuples for
    every source that became available, either received directly or decoded.
    """

    def __init__(self):
        self.highest_seen = 0
        self.cumulative = 0
        self.lost_pending = []  # ascending
        self.rows = {}  # pivot seq -> _Row, each row's min seq is its pivot
        self.known = PayloadStore()  # delivered payloads, pruned below the window
        self.arrivals = {}  # seq -> arrival ts of directly received sources
        self._above_cum = set()
        self._window_floor = 1
        self.repairs_received = 0
        self.dependent_discards = 0
        self.useless_repairs = 0
        self.abandoned = 0
        self.decode_events = 0

    # Table-I counters
    @property
    def y(self):
        return len(self.lost_pending)

    @property
    def z(self):
        return len(self.rows)

    @property
    def Z(self):
        return len(self.lost_pending) - len(self.rows)

    @property
    def first_gap_seq(self):
        return self.lost_pending[0] if self.lost_pending else None

    def last_received_before(self, seq):
        """``(j, arrival)`` for the latest directly received source ``j < seq``."""
        for j in range(seq - 1, max(seq - 1 - 4096, 0), -1):
            ts = self.arrivals.get(j)
            if ts is not None:
                return j, ts
        return None

    def copy(self):
        """Independent snapshot of the decoder state (stored rows are never mutated)."""
        new = object.__new__(TetrysDecoder)
        new.__dict__.update(self.__dict__)
        new.lost_pending = list(self.lost_pending)
        new.rows = dict(self.rows)
        new.known = self.known.copy()
        new.arrivals = dict(self.arrivals)
        new._above_cum = set(self._above_cum)
        return new

    def receiver_on_packet(self, pkt, now):
        if isinstance(pkt, SourcePacket):
            return self._on_source(pkt, now)
        if isinstance(pkt, RepairPacket):
            return self._on_repair(pkt, now)
        raise TypeError(f"decoder cannot consume {type(pkt).__name__}")

    def make_ack(self, now, feedback=None):
        return AckPacket(self.cumulative, now, feedback)

    def _mark_lost_through(self, seq):
        if seq > self.highest_seen:
            self.lost_pending.extend(range(self.highest_seen + 1, seq + 1))
            self.highest_seen = seq

    def _on_source(self, pkt, now):
        s = pkt.seq
        if s <= self.cumulative or s in self._above_cum:
            return []
        out = []
        if s > self.highest_seen:
            self._mark_lost_through(s - 1)
            self.highest_seen = s
        elif s in self.lost_pending:
            # late arrival of a packet already counted as lost
            self.lost_pending.remove(s)
            self._substitute(s, pkt.payload)
        self.arrivals[s] = now
        self._deliver(s, pkt.payload)
        out.append((s, pkt.payload, now))
        out.extend(self._try_solve(now))
        return out

    def _on_repair(self, pkt, now):
        self.repairs_received += 1
        i, j = pkt.first_seq, pkt.last_seq
        self._mark_lost_through(j)
        out = []
        if i > self._window_floor:
            self._window_floor = i
            self._prune()
        if self.lost_pending and self.lost_pending[0] < i:
            self._abandon_below(i)
            out.extend(self._try_solve(now))
        lost = [s for s in self.lost_pending if s <= j]
        if not lost:
            self.useless_repairs += 1
            return out
        coeffs = repair_coefficients(pkt.coeff_seed, i, j)
        row_coeffs = {s: int(coeffs[s - i]) for s in lost}
        payload = None
        if pkt.combined_payload is not None:
            payload = np.frombuffer(pkt.combined_payload, dtype=np.uint8).copy()
            idx = np.arange(i, j + 1)
            mask = np.ones(idx.size, dtype=bool)
            mask[np.asarray(lost) - i] = False
            if mask.any():
                payload ^= self.known.combine(coeffs[mask], idx[mask], payload.size)
        if not self._insert(row_coeffs, payload):
            self.dependent_discards += 1
            return out
        out.extend(self._try_solve(now))
        return out

    def _insert(self, coeffs, payload):
        mul, inv = gf256.mul, gf256.INV
        for p in sorted(self.rows):
            c = coeffs.get(p)
            if not c:
                continue
            row = self.rows[p]
            for s, v in row.coeffs.items():
                nv = coeffs.get(s, 0) ^ mul(c, v)
                if nv:
                    coeffs[s] = nv
                else:
                    coeffs.pop(s, None)
            if payload is not None:
                payload = self._axpy_grow(c, row.payload, payload)
        if not coeffs:
            return False
        pivot = min(coeffs)
        f = inv[coeffs[pivot]]
        if f != 1:
            coeffs = {s: mul(f, v) for s, v in coeffs.items()}
            if payload is not None:
                payload = gf256.scale(f, payload)
        self.rows[pivot] = _Row(coeffs, payload)
        return True

    @staticmethod
    def _axpy_grow(c, x, y):
        if len(x) > len(y):
            y = np.concatenate([y, np.zeros(len(x) - len(y), dtype=np.uint8)])
        elif len(x) < len(y):
            x = np.concatenate([x, np.zeros(len(y) - len(x), dtype=np.uint8)])
        return gf256.axpy(c, x, y)

    def _try_solve(self, now):
        if not self.lost_pending or len(self.rows) < len(self.lost_pending):
            return []
        solved = {}
        symbolic = any(r.payload is None for r in self.rows.values())
        for p in sorted(self.rows, reverse=True):
            row = self.rows[p]
            if symbolic:
                solved[p] = None
                continue
            val = row.payload.copy()
            for s, c in row.coeffs.items():
                if s != p:
                    val = self._axpy_grow(c, solved[s], val)
            solved[p] = val
        self.rows.clear()
        self.lost_pending = []
        self.decode_events += 1
        out = []
        for s in sorted(solved):
            payload = None if symbolic else unpad(solved[s])
            self._deliver(s, payload)
            out.append((s, payload, now))
        return out

    def _substitute(self, seq, payload):
        """Remove a now-known ``seq`` from every row (late source arrival)."""
        rows = list(self.rows.values())
        self.rows.clear()
        for row in rows:
            coeffs = dict(row.coeffs)
            c = coeffs.pop(seq, 0)
            pl = None if row.payload is None else row.payload.copy()
            if c and pl is not None:
                pl = self._axpy_grow(c, pad(payload, max(len(pl), len(payload) + 2)), pl)
            if coeffs and not self._insert(coeffs, pl):
                self.dependent_discards += 1

    def _abandon_below(self, floor):
        gone = [s for s in self.lost_pending if s < floor]
        self.lost_pending = [s for s in self.lost_pending if s >= floor]
        gone_set = set(gone)
        self.rows = {p: r for p, r in self.rows.items() if not gone_set & r.coeffs.keys()}
        self.abandoned += len(gone)
        for s in gone:
            self._deliver(s, None, record=False)
        log.debug("abandoned %d packets evicted from the coding window", len(gone))

    def _deliver(self, seq, payload, record=True):
        if record and payload is not None:
            self.known.put(seq, payload)
        self._above_cum.add(seq)
        while self.cumulative + 1 in self._above_cum:
            self.cumulative += 1
            self._above_cum.discard(self.cumulative)

    def _prune(self):
        floor = self._window_floor
        self.known.drop_below(floor)
        if len(self.arrivals) > 8192:
            keep = self.cumulative - 4096
            for s in [s for s in self.arrivals if s < keep]:
                del self.arrivals[s]
