import csv

import numpy as np
import pytest

from tetrys import config, sim
from tetrys.channel import LossSchedule, LossSegment, Scripted
from tetrys.packets import REPAIR_HEADER, SOURCE_HEADER


def scenario(scheme="tetrys", mode="fixed", redundancy=0.1, packets=3000, loss=None, seed=1,
             payloads=False):
    cfg = config.preset("cbr")
    cfg.run.seed = seed
    cfg.run.payloads = payloads
    cfg.traffic.packets = packets
    cfg.codec.scheme = scheme
    cfg.codec.mode = mode
    cfg.codec.redundancy = redundancy
    cfg.channel.loss = loss or [LossSegment(0.0, "none")]
    return cfg.validate()


GE53 = [LossSegment(0.0, "ge", 0.05, 3.0)]


@pytest.mark.parametrize("scheme,mode", [("tetrys", "fixed"), ("tetrys", "adaptive"),
                                         ("fec", "fixed"), ("fec", "adaptive"),
                                         ("none", "fixed")])
def test_lossless_channel_has_no_information_loss(scheme, mode):
    lg = sim.run(scenario(scheme, mode))
    assert lg.emitted == 3000
    assert sim.ilr(lg) == 0.0
    assert all(lg.on_time(i) for i in range(lg.emitted))
    assert sim.recovery_delay_samples(lg) == []


def test_determinism():
    a = sim.run(scenario(mode="adaptive", loss=GE53))
    b = sim.run(scenario(mode="adaptive", loss=GE53))
    c = sim.run(scenario(mode="adaptive", loss=GE53, seed=2))
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()


@pytest.mark.parametrize("scheme", ["tetrys", "fec", "none"])
def test_conservation(scheme):
    lg = sim.run(scenario(scheme, "adaptive" if scheme != "none" else "fixed", loss=GE53))
    on_time, late, never = sim.outcome_counts(lg)
    assert on_time + late + never == lg.emitted == 3000
    assert sim.ilr(lg) == pytest.approx((late + never) / lg.emitted)


@pytest.mark.parametrize("scheme,mode", [("tetrys", "fixed"), ("tetrys", "adaptive"),
                                         ("fec", "adaptive")])
def test_payload_mode_is_bit_exact(scheme, mode):
    lg = sim.run(scenario(scheme, mode, redundancy=0.2, loss=GE53, payloads=True))
    assert lg.counters["corrupt"] == 0
    assert sum(lg.decoded) > 0


def test_payload_mode_matches_symbolic_timing():
    a = sim.run(scenario(redundancy=0.2, loss=GE53, payloads=True))
    b = sim.run(scenario(redundancy=0.2, loss=GE53))
    assert a.delivery_us == b.delivery_us


def test_underprovisioned_fixed_code_loses():
    assert sim.ilr(sim.run(scenario(loss=GE53, packets=10000))) > 0


def test_more_redundancy_recovers_faster():
    loss = [LossSegment(0.0, "ge", 0.02, 2.0)]
    slow = sim.recovery_delay_samples(sim.run(scenario(redundancy=0.1, loss=loss, packets=20000)))
    fast = sim.recovery_delay_samples(sim.run(scenario(redundancy=1 / 3, loss=loss,
                                                       packets=20000)))
    assert np.median(fast) < np.median(slow)
    assert np.percentile(fast, 90) < np.percentile(slow, 90)


def test_recovery_sample_of_single_loss_is_repair_lag():
    # k = 2: P1, P2, R(1..2) go out together; losing P2 (transmission 2) makes
    # R(1..2) recover it with zero lag over P2's own loss-free arrival
    cfg = scenario(redundancy=1 / 3, packets=10)
    s = sim.Simulation(cfg)
    s.fwd.loss = Scripted([2])
    lg = s.run()
    assert lg.decoded[1]
    assert sim.recovery_delay_samples(lg) == [0.0]


def test_drain_horizon():
    cfg = scenario(packets=100)
    lg = sim.run(cfg)
    t_us = lg.end_of_traffic_us / 99
    expect = lg.end_of_traffic_us + 150_000 + 50_000 + int(10 * 10 * t_us)
    assert lg.end_us <= expect
    assert lg.delivery_us[-1] is not None


def test_ilr_definition():
    lg = sim.MetricsLog(150_000)
    lg.send_us = [0] * 50000
    lg.delivery_us = [1000] * 49500 + [None] * 300 + [200_000] * 200
    assert sim.ilr(lg) == pytest.approx(0.01)
    assert sim.degraded_intervals(lg) == 1


def test_bandwidth_arithmetic():
    lg = sim.run(scenario(redundancy=0.1, packets=9000))
    n_src, n_rep = 9000, 1000
    expect = (n_src * (500 + SOURCE_HEADER) + n_rep * (502 + REPAIR_HEADER)) * 8
    period_ms = 9000 * 500 * 8 / 1900
    assert sim.traffic_period_us(lg) / 1000 == pytest.approx(period_ms, rel=1e-6)
    assert sim.mean_bandwidth(lg) == pytest.approx(expect / period_ms, rel=1e-6)
    h = SOURCE_HEADER / 500
    assert sim.mean_bandwidth(lg) == pytest.approx(1900 * 10 / 9 * (1 + h), rel=0.01)
    assert sim.mean_redundancy(lg) == pytest.approx(0.1)


def test_empty_bandwidth_timeline():
    assert sim.bandwidth_timeline(sim.MetricsLog(150_000)) == []


def test_adaptive_run_logs_rung_changes():
    lg = sim.run(scenario(mode="adaptive", loss=GE53, packets=10000))
    kinds = {e[1] for e in lg.events}
    assert {"request", "applied", "confirmed"} <= kinds
    assert all(0 <= idx <= 3 for _, idx, _ in lg.rung)
    assert 0.1 <= sim.mean_redundancy(lg) <= 0.5


def test_csv_output(tmp_path):
    lg = sim.run(scenario(mode="adaptive", loss=GE53, packets=2000))
    sim.write_csvs(lg, tmp_path, 100.0)
    with open(tmp_path / "packets.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["seq", "send_ts_ms", "delivery_ts_ms", "on_time"]
    assert len(rows) == 2001
    lost = [r for r in rows[1:] if r[2] == "LOST"]
    assert all(r[3] == "0" for r in lost)
    with open(tmp_path / "timeline.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t_s", "rung", "redundancy", "kbps"]
    assert len(rows) - 1 == len(sim.bandwidth_timeline(lg, 100.0))
    with open(tmp_path / "events.csv") as fh:
        assert next(csv.reader(fh)) == ["t_ms", "event", "request_id", "direction", "rung"]


def test_schedule_change_is_logged():
    lg = sim.run(config.preset("table2"))
    segs = [e for e in lg.events if e[1].startswith("segment:")]
    assert [(e[0], e[1]) for e in segs] == [(10_000_000, "segment:ge"),
                                             (30_000_000, "segment:bernoulli")]
    assert sim.ilr(lg, 0, 10) == 0.0


def test_loss_schedule_segments_are_independent_of_earlier_traffic():
    a = LossSchedule([LossSegment(0, "none"), LossSegment(1, "ge", 0.1, 2)], seed=4)
    b = LossSchedule([LossSegment(0, "none"), LossSegment(1, "ge", 0.1, 2)], seed=4)
    for t in range(500):
        a.lost(t)
    assert [a.lost(1000 + t) for t in range(300)] == [b.lost(1000 + t) for t in range(300)]
