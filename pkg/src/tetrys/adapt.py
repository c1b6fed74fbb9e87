"""Redundancy adaptation: decision rules, feedback lifecycle and the ladder.

The Tetrys receiver asks for more redundancy when a pending loss is unlikely
to be recovered before its deadline and for less when nothing is pending and
recovery within the deadline is near certain. Requests ride on every ACK
until a repair header confirms the sender applied them.
"""

from dataclasses import dataclass, field

from .packets import Direction, RedundancyFeedback
from .recovery import ModelInapplicable, params_for, weibull_cdf

DEFAULT_LADDER = (0.10, 0.20, 1.0 / 3.0, 0.50)

INCREASE, DECREASE, HOLD = Direction.INCREASE, Direction.DECREASE, Direction.HOLD


@dataclass
class ControllerConfig:
    f: float = 2.0
    min_th: float = 0.9
    max_th: float = 0.99
    d_max: float = 150.0  # ms
    ack_period: float = 10.0  # ms
    ladder: tuple = DEFAULT_LADDER
    use_cond1: bool = True
    use_cond2: bool = True
    min_fec: float = 0.2
    max_fec: float = 0.25

    def __post_init__(self):
        if self.f <= 1:
            raise ValueError("proactivity coefficient f must exceed 1")
        if not self.min_th < self.max_th:
            raise ValueError("min_th must be lower than max_th")
        if not self.min_fec < self.max_fec:
            raise ValueError("min_fec must be lower than max_fec")
        if any(b <= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ValueError("ladder must be strictly increasing")
        self.ladder = tuple(self.ladder)


def ladder_n(ratio):
    """Code length ``n`` of a redundancy ratio ``1/n``."""
    return int(round(1.0 / ratio))


@dataclass(frozen=True)
class LadderPosition:
    index: int = 0

    @property
    def qp_offset(self):
        return self.index

    def ratio(self, cfg):
        return cfg.ladder[self.index]

    def n(self, cfg):
        return ladder_n(cfg.ladder[self.index])

    def k(self, cfg):
        return self.n(cfg) - 1


class RecoveryModel:
    """Calibrated delay model bound to a table, rescaled to the live packet spacing."""

    def __init__(self, table):
        self.table = table

    def params(self, delta_r, p, b, n, t_ms=None):
        entry = self.table.lookup(p, b, n)
        prm = params_for(delta_r, entry)
        if t_ms and self.table.t_ms:
            prm = type(prm)(prm.lam * t_ms / self.table.t_ms, prm.kappa)
        return prm

    def prob_within(self, x, delta_r, p, b, n, t_ms=None):
        return weibull_cdf(x, self.params(delta_r, p, b, n, t_ms))


def compute_t_i(first_gap, last_good, T, d_max, now):
    """Remaining time (ms) to recover the first pending loss before its deadline.

    ``last_good`` is ``(seq, arrival_ms)`` of the last in-order source
    received before the gap; the lost packet's loss-free arrival is
    extrapolated from it with spacing ``T``.
    """
    j, arrival = last_good
    est_arrival = arrival + (first_gap - j) * T
    return est_arrival + d_max - now


def decide(Z, t_i, p_hat, b_hat, pos, cfg, model, T):
    """One decision of the Tetrys controller; INCREASE wins over DECREASE."""
    ratio = pos.ratio(cfg)
    n = ladder_n(ratio)
    interval = n * T  # (k + 1) * T
    delta_r = ratio - p_hat
    if Z > 0:
        if cfg.use_cond1 and not Z * interval * cfg.f < t_i:
            return INCREASE
        if cfg.use_cond2 and model is not None:
            if delta_r <= 0:
                return INCREASE
            if t_i <= 0 or model.prob_within(t_i, delta_r, p_hat, b_hat, n, T) < cfg.min_th:
                return INCREASE
        return HOLD
    if delta_r <= 0:
        return INCREASE if cfg.use_cond2 and model is not None else HOLD
    if model is None:
        return HOLD
    try:
        p_ok = model.prob_within(cfg.d_max, delta_r, p_hat, b_hat, n, T)
    except ModelInapplicable:
        return HOLD
    return DECREASE if p_ok >= cfg.max_th else HOLD


def fec_decide(r_fec, p_hat, min_fec, max_fec):
    if not min_fec < max_fec:
        raise ValueError("min_fec must be lower than max_fec")
    if r_fec < p_hat + min_fec:
        return INCREASE
    if r_fec > p_hat + max_fec:
        return DECREASE
    return HOLD


def step_position(pos, direction, cfg):
    top = len(cfg.ladder) - 1
    if direction == INCREASE:
        return LadderPosition(min(pos.index + 1, top))
    if direction == DECREASE:
        return LadderPosition(max(pos.index - 1, 0))
    return pos


def apply_feedback(fb, pos, cfg, applied=None):
    """Sender-side application of one request; returns (pos, k, qp_offset).

    ``applied`` is the set of request ids already honoured; a repeated id
    leaves the position untouched.
    """
    if applied is not None:
        if fb.request_id in applied:
            return pos, pos.k(cfg), pos.qp_offset
        applied.add(fb.request_id)
    new = step_position(pos, fb.direction, cfg)
    return new, new.k(cfg), new.qp_offset


@dataclass
class SenderLadder:
    cfg: ControllerConfig
    pos: LadderPosition = field(default_factory=LadderPosition)
    applied: set = field(default_factory=set)
    last_applied_id: int = 0

    def apply(self, fb):
        """Apply ``fb`` once; returns True when the position changed."""
        if fb is None or fb.request_id in self.applied:
            return False
        old = self.pos
        self.pos, _, _ = apply_feedback(fb, self.pos, self.cfg, self.applied)
        self.last_applied_id = max(self.last_applied_id, fb.request_id)
        return self.pos != old


class LossEstimator:
    """Online loss-rate and burst-size estimate from gaps in a packet counter.

    Fed with the forward transmission counter, the estimate tracks the
    channel's own loss runs rather than the source-level view, which splits
    a burst wherever a lost repair sits inside it.

    Each observed burst updates exponentially weighted means of the burst
    length and of the preceding run of received packets; ``p`` is the loss
    fraction those two means imply. A good run longer than the current mean
    already counts tentatively, so the estimate decays during loss-free spells.
    """

    def __init__(self, alpha=0.05):
        self.alpha = alpha
        self.burst = None
        self.good = None
        self.run = 0
        self.last_seq = 0

    def observe(self, seq):
        """Record the arrival of packet number ``seq``; stale numbers are ignored."""
        gap = seq - self.last_seq - 1
        if seq <= self.last_seq:
            return
        self.last_seq = seq
        if gap > 0:
            if self.burst is None:
                self.burst, self.good = float(gap), float(max(self.run, 1))
            else:
                a = self.alpha
                self.burst += a * (gap - self.burst)
                self.good += a * (self.run - self.good)
            self.run = 1
        else:
            self.run += 1

    @property
    def b(self):
        return 1.0 if self.burst is None else self.burst

    @property
    def p(self):
        if self.burst is None:
            return 0.0
        good = self.good
        if self.run > good:
            good += self.alpha * (self.run - good)
        return self.burst / (self.burst + good)


class ReceiverController:
    """Receiver-side request lifecycle around a decision function.

    At most one request is outstanding; it is echoed in every ACK until a
    repair header reports its id as applied. After each confirmed change the
    controller waits ``cooldown`` (one RTT estimate) before issuing another.
    """

    def __init__(self, cfg, index=0):
        self.cfg = cfg
        self.pos = LadderPosition(index)
        self.outstanding = None
        self.next_id = 1
        self.cooldown_until = float("-inf")
        self.log = []  # (t_ms, event, request_id, direction, rung index)

    def offer(self, direction, now):
        """Turn a decision into a request when allowed; returns the request or None."""
        if direction == HOLD or self.outstanding is not None or now < self.cooldown_until:
            return None
        if step_position(self.pos, direction, self.cfg) == self.pos:
            return None  # already saturated
        fb = RedundancyFeedback(self.next_id, direction)
        self.next_id += 1
        self.outstanding = fb
        self.log.append((now, "request", fb.request_id, direction.name, self.pos.index))
        return fb

    def on_applied(self, applied_id, now, rtt):
        fb = self.outstanding
        if fb is None or applied_id < fb.request_id:
            return False
        self.pos = step_position(self.pos, fb.direction, self.cfg)
        self.outstanding = None
        self.cooldown_until = now + rtt
        self.log.append((now, "applied", fb.request_id, fb.direction.name, self.pos.index))
        return True

    @property
    def feedback(self):
        return self.outstanding
