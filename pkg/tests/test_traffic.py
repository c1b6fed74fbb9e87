import random

import pytest

from tetrys.adapt import DEFAULT_LADDER
from tetrys.config import CodecSpec
from tetrys.traffic import (FOREMAN_TABLE, CbrSource, VideoRateModel, VideoSource,
                            frame_budget, next_cbr_packet, split_frame,
                            video_packets_for_frame, video_rate)


def test_cbr_interval():
    assert CbrSource(1900, 500).interval_ms == pytest.approx(4000 / 1900)
    assert CbrSource(400, 500).interval_ms == pytest.approx(10.0)
    assert next_cbr_packet(CbrSource(400, 500), 3) == (pytest.approx(30.0), 500)


def test_cbr_count_and_rate():
    sched = list(CbrSource(1900, 500, 50000).schedule())
    assert len(sched) == 50000
    span_s = (sched[-1][0] + CbrSource().interval_ms) / 1000
    assert sum(s for _, s in sched) * 8 / 1000 / span_s == pytest.approx(1900)


def test_video_rate_examples():
    model = VideoRateModel(base_qp=20, table=FOREMAN_TABLE)
    assert video_rate(model, 0) == 1357.2
    assert video_rate(model, 1) == 1143.2
    assert 1 - 1143.2 / 1357.2 == pytest.approx(0.158, abs=5e-4)
    plain = VideoRateModel(base_rate=774.1)
    assert video_rate(plain, 0) == 774.1
    assert video_rate(plain, 2) == pytest.approx(774.1 * 0.7225)


def test_table_offsets_are_clamped(caplog):
    model = VideoRateModel(base_qp=20, table=FOREMAN_TABLE)
    assert video_rate(model, 5) == 1143.2
    assert "outside rate table" in caplog.text


def test_mean_frame_size():
    model = VideoRateModel(base_rate=774.0, jitter=0.0, gop_weight=1.0)
    assert frame_budget(model, 0, 3, random.Random(0)) == pytest.approx(3225.0)


def test_frame_split():
    assert split_frame(3000, 1500) == [1500, 1500]
    assert split_frame(3001, 1500) == [1001, 1000, 1000]
    model = VideoRateModel(base_rate=720.0, jitter=0.0, gop_weight=1.0)
    assert video_packets_for_frame(model, 0, 1, random.Random(0)) == [1500, 1500]


def test_qp_change_shrinks_later_frames():
    qp = [0]
    model = VideoRateModel(jitter=0.0, gop_weight=1.0)
    src = VideoSource(model, 2.0, qp=lambda: qp[0]).schedule()
    before = [next(src)[1] for _ in range(3)]  # all of frame 0
    qp[0] = 1
    after = sum(s for t, s in src if t >= 1000)
    frames_after = 30
    assert after / frames_after == pytest.approx(sum(before) * 0.85, abs=1)


@pytest.mark.parametrize("gain", [0.10, 0.15, 0.20])
def test_long_run_bitrate(gain):
    model = VideoRateModel(gain_per_step=gain)
    seconds = 20.0
    total = sum(s for _, s in VideoSource(model, seconds, seed=3).schedule())
    assert total * 8 / 1000 / seconds == pytest.approx(774.1, rel=0.01)


@pytest.mark.parametrize("gain", [0.10, 0.15, 0.20])
@pytest.mark.parametrize("rung", range(4))
def test_bandwidth_neutrality(gain, rung):
    # the simulator encodes rung r at QP offset qp_shift + r
    model = VideoRateModel(gain_per_step=gain)
    offset = CodecSpec().qp_shift + rung
    total = video_rate(model, offset) / (1 - DEFAULT_LADDER[rung])
    assert total <= model.base_rate * 1.02


def test_video_source_is_deterministic():
    model = VideoRateModel()
    a = list(VideoSource(model, 3.0, seed=9).schedule())
    assert a == list(VideoSource(model, 3.0, seed=9).schedule())
    assert a != list(VideoSource(model, 3.0, seed=10).schedule())
    assert all(s <= model.mtu for _, s in a)


def test_model_validation():
    with pytest.raises(ValueError):
        VideoRateModel(gain_per_step=0.0)
    with pytest.raises(ValueError):
        VideoRateModel(base_rate=0.0)
