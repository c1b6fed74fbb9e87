import pytest
from hypothesis import given, strategies as st

from tetrys import config
from tetrys.channel import LossSegment
from tetrys.config import ConfigError


@pytest.mark.parametrize("name", config.PRESETS)
def test_presets_validate_and_round_trip(name):
    cfg = config.preset(name)
    text = config.dumps(cfg)
    assert config.loads(text) == cfg
    assert config.dumps(config.loads(text)) == text


def test_table_presets_encode_schedules():
    t2 = config.preset("table2").channel.loss
    assert t2 == [LossSegment(0.0, "none"), LossSegment(10.0, "ge", 0.02, 2.0),
                  LossSegment(30.0, "bernoulli", 0.02)]
    t4 = config.preset("table4").channel.loss
    assert [(s.start_s, s.model, s.p, s.b) for s in t4] == [
        (0.0, "none", 0.0, 1.0), (10.0, "ge", 0.02, 2.0), (20.0, "ge", 0.02, 3.0),
        (30.0, "ge", 0.03, 2.0), (40.0, "ge", 0.03, 3.0)]
    rtt = config.preset("varied-rtt").channel
    assert rtt.loss == [LossSegment(0.0, "ge", 0.02, 2.0)]
    assert rtt.delay == [(0.0, 50.0), (20.0, 70.0)]


def test_unknown_preset():
    with pytest.raises(KeyError):
        config.preset("nope")


def test_parse_multiline_schedules():
    cfg = config.loads("""
[run]
seed = 9
[channel]
loss =
    0 none
    10 ge 0.02 2
delay =
    0 50
    20 70
feedback_loss = 0.1
""")
    assert cfg.run.seed == 9
    assert cfg.channel.loss[1] == LossSegment(10.0, "ge", 0.02, 2.0)
    assert cfg.channel.delay == [(0.0, 50.0), (20.0, 70.0)]
    assert cfg.channel.feedback_loss == 0.1


@pytest.mark.parametrize("text,line", [
    ("[run]\nseed = 1\n[bogus]\nx = 1\n", 3),
    ("[run]\nseed = 1\ncolour = red\n", 3),
    ("[run]\n\nseed = many\n", 3),
    ("[codec]\nscheme = tetrys\nredundancy = 1.5\n", 3),
    ("[channel]\nloss =\n    0 ge 1.5 2\n", 2),
    ("[controller]\nmin_th = 0.99\nmax_th = 0.9\n", 3),
])
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as exc:
        config.loads(text)
    assert exc.value.line == line
    assert str(exc.value).startswith(f"line {line}:")


def test_set_value_and_unknown_keys():
    cfg = config.preset("cbr")
    config.set_value(cfg, "controller.f", "3")
    config.set_value(cfg, "channel.loss", "0 ge 0.1 3")
    assert cfg.controller.f == 3.0
    assert cfg.channel.loss == [LossSegment(0.0, "ge", 0.1, 3.0)]
    with pytest.raises(ConfigError):
        config.set_value(cfg, "controller.nope", "1")
    with pytest.raises(ConfigError):
        config.set_value(cfg, "nope", "1")


def test_missing_calibration_file_is_rejected(tmp_path):
    cfg = config.preset("cbr")
    cfg.controller.calibration = str(tmp_path / "missing.txt")
    with pytest.raises(ConfigError):
        cfg.validate()


def test_ladder_and_qp_table_parsing():
    assert config.parse_ladder("0.1 0.2 0.5") == (0.1, 0.2, 0.5)
    assert config.parse_qp_table("20:1357.2, 21:1143.2") == {20: 1357.2, 21: 1143.2}
    assert config.parse_qp_table("") == {}


probability = st.floats(0.0, 0.3)


@given(st.integers(0, 2**31), st.floats(1.01, 10), probability,
       st.lists(st.tuples(st.floats(0.01, 100), st.sampled_from(["none", "bernoulli", "ge"]),
                          probability, st.floats(1, 4)), max_size=4))
def test_round_trip_property(seed, f, fb_loss, segs):
    cfg = config.preset("cbr")
    cfg.run.seed = seed
    cfg.controller.f = f
    cfg.channel.feedback_loss = fb_loss
    starts = sorted({round(s[0], 3) for s in segs})
    cfg.channel.loss = [LossSegment(0.0, "none")] + [
        LossSegment(t, m, p if m != "none" else 0.0, b if m == "ge" else 1.0)
        for t, (_, m, p, b) in zip(starts, segs)]
    cfg.validate()
    assert config.loads(config.dumps(cfg)) == cfg
