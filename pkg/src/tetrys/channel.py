"""Loss and delay models for the forward and feedback paths."""

import bisect
import random
from dataclasses import dataclass

GOOD, BAD = 0, 1


class GilbertElliott:
    """Two-state Gilbert channel parameterized by mean loss rate and burst size.

    The BAD state always loses and the GOOD state never does, so
    ``p_bg = 1/b`` and ``p_gb = p / (b (1 - p))`` give a stationary loss
    probability of exactly ``p`` with geometric bursts of mean ``b``.
    """

    def __init__(self, p, b, seed=0):
        if not 0 <= p < 1:
            raise ValueError(f"loss rate must be in [0, 1), got {p}")
        if b < 1:
            raise ValueError(f"mean burst size must be >= 1, got {b}")
        self.p = p
        self.b = b
        self.p_bg = 1.0 / b
        self.p_gb = p / (b * (1.0 - p))
        if self.p_gb > 1:
            raise ValueError(f"(p={p}, b={b}) has no two-state realization")
        self.current = GOOD
        self.rng_seed = seed
        self._rng = random.Random(seed)

    def step(self):
        """Advance one packet; True when that packet is lost."""
        r = self._rng.random()
        if self.current == GOOD:
            if r < self.p_gb:
                self.current = BAD
        elif r < self.p_bg:
            self.current = GOOD
        return self.current == BAD


def ge_step(state):
    return state.step()


class Bernoulli:
    def __init__(self, p, seed=0):
        if not 0 <= p <= 1:
            raise ValueError(f"loss probability must be in [0, 1], got {p}")
        self.p = p
        self._rng = random.Random(seed)

    def step(self):
        return self._rng.random() < self.p


def bernoulli_step(p, rng):
    return rng.random() < p


class Lossless:
    p = 0.0

    def step(self):
        return False


class Scripted:
    """Loses exactly the packets whose 1-based transmission index is listed."""

    def __init__(self, lost_indices):
        self.lost = set(lost_indices)
        self.count = 0

    def step(self):
        self.count += 1
        return self.count in self.lost


@dataclass(frozen=True)
class LossSegment:
    start_s: float
    model: str  # "none" | "bernoulli" | "ge"
    p: float = 0.0
    b: float = 1.0

    def build(self, seed):
        if self.model == "none":
            return Lossless()
        if self.model == "bernoulli":
            return Bernoulli(self.p, seed)
        if self.model == "ge":
            return GilbertElliott(self.p, self.b, seed)
        raise ValueError(f"unknown loss model {self.model!r}")


class LossSchedule:
    """Piecewise loss process; each segment owns an independently seeded model."""

    def __init__(self, segments, seed=0):
        segments = sorted(segments, key=lambda s: s.start_s)
        if not segments or segments[0].start_s > 0:
            segments.insert(0, LossSegment(0.0, "none"))
        starts = [s.start_s for s in segments]
        if len(set(starts)) != len(starts):
            raise ValueError("loss segment start times must be distinct")
        self.segments = segments
        self._starts_ms = [s.start_s * 1000.0 for s in segments]
        self._models = [seg.build(seed * 1009 + i) for i, seg in enumerate(segments)]

    def segment_index(self, t_ms):
        return bisect.bisect_right(self._starts_ms, t_ms) - 1

    def lost(self, t_ms):
        return self._models[self.segment_index(t_ms)].step()


class DelaySchedule:
    """Piecewise-constant one-way delay; changes apply to packets sent later."""

    def __init__(self, segments):
        segments = sorted(segments)
        if not segments or segments[0][0] > 0:
            raise ValueError("delay schedule must start at t = 0")
        starts = [s for s, _ in segments]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("delay segment start times must be strictly increasing")
        self.segments = [(float(s), float(d)) for s, d in segments]
        self._starts_ms = [s * 1000.0 for s in starts]

    def delay_ms(self, t_ms):
        return self.segments[bisect.bisect_right(self._starts_ms, t_ms) - 1][1]

    @property
    def max_delay_ms(self):
        return max(d for _, d in self.segments)


def transit(pkt, schedule, now):
    """Arrival time (ms) of ``pkt`` sent at ``now`` (ms)."""
    return now + schedule.delay_ms(now)


class Link:
    """One direction of a path: loss process plus FIFO propagation delay.

    Times are integer microseconds, as used by the simulator clock.
    """

    def __init__(self, loss, delay):
        self.loss = loss
        self.delay = delay
        self._last_arrival = 0

    def send(self, now_us):
        """Return the arrival time, or None when the packet is dropped."""
        t_ms = now_us / 1000.0
        if self.loss.lost(t_ms) if isinstance(self.loss, LossSchedule) else self.loss.step():
            return None
        arrival = now_us + int(round(self.delay.delay_ms(t_ms) * 1000))
        if arrival < self._last_arrival:
            arrival = self._last_arrival
        self._last_arrival = arrival
        return arrival
