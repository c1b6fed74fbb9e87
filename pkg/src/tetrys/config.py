"""Scenario configuration: INI-style sections, validation and named presets.

Grammar: ``[section]`` headers followed by ``key = value`` lines; ``#`` starts
a comment line. Schedules are multi-line values, one segment per indented
line::

    [channel]
    loss =
        0 none
        10 ge 0.02 2
        30 bernoulli 0.02
    delay =
        0 50
        20 70

Loss segment lines are ``start_s model [p [b]]``; delay lines are
``start_s one_way_ms``.
"""

import configparser
import dataclasses
import io
import os
import re
from dataclasses import dataclass, field

from .adapt import DEFAULT_LADDER, ControllerConfig
from .channel import LossSegment


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass
class RunSpec:
    name: str = "scenario"
    seed: int = 1
    d_max_ms: float = 150.0
    ack_period_ms: float = 10.0
    payloads: bool = False
    bin_ms: float = 1000.0


@dataclass
class TrafficSpec:
    type: str = "cbr"  # cbr | video
    rate_kbps: float = 1900.0  # cbr rate, or video rate at base_qp
    packet_size: int = 500
    packets: int = 50000
    duration_s: float = 50.0
    fps: float = 30.0
    gain: float = 0.15
    base_qp: int = 27
    gop: int = 30
    gop_weight: float = 4.0
    jitter: float = 0.2
    mtu: int = 1500
    qp_table: str = ""  # "20:1357.2, 21:1143.2"


@dataclass
class CodecSpec:
    scheme: str = "tetrys"  # tetrys | fec | none
    mode: str = "adaptive"  # fixed | adaptive
    redundancy: float = 0.1  # fixed ratio, or the initial rung when adaptive
    fec_k: int = 0  # explicit fixed FEC(k, n); 0 selects from the ladder
    fec_n: int = 0
    window_cap: int = 1024
    qp_coupling: bool = True
    qp_shift: int = 1  # QP steps between unprotected video and the lowest rung


@dataclass
class ControllerSpec:
    f: float = 2.0
    min_th: float = 0.9
    max_th: float = 0.99
    cond1: bool = True
    cond2: bool = True
    min_fec: float = 0.2
    max_fec: float = 0.25
    ladder: str = "0.1 0.2 0.3333333333333333 0.5"
    calibration: str = ""  # path; empty uses the packaged default table


@dataclass
class ChannelSpec:
    loss: list = field(default_factory=lambda: [LossSegment(0.0, "none")])
    delay: list = field(default_factory=lambda: [(0.0, 50.0)])
    feedback_loss: float = 0.0


SECTIONS = (("run", RunSpec), ("traffic", TrafficSpec), ("codec", CodecSpec),
            ("controller", ControllerSpec), ("channel", ChannelSpec))


@dataclass
class ScenarioConfig:
    run: RunSpec = field(default_factory=RunSpec)
    traffic: TrafficSpec = field(default_factory=TrafficSpec)
    codec: CodecSpec = field(default_factory=CodecSpec)
    controller: ControllerSpec = field(default_factory=ControllerSpec)
    channel: ChannelSpec = field(default_factory=ChannelSpec)

    def controller_config(self):
        c = self.controller
        return ControllerConfig(f=c.f, min_th=c.min_th, max_th=c.max_th,
                                d_max=self.run.d_max_ms, ack_period=self.run.ack_period_ms,
                                ladder=parse_ladder(c.ladder), use_cond1=c.cond1,
                                use_cond2=c.cond2, min_fec=c.min_fec, max_fec=c.max_fec)

    def replace(self, **overrides):
        """Copy with ``section.key`` overrides, e.g. ``{"controller.f": 3}``."""
        new = copy_config(self)
        for dotted, value in overrides.items():
            set_value(new, dotted, value)
        return new

    def validate(self):
        validate(self)
        return self


def copy_config(cfg):
    return loads(dumps(cfg))


def parse_ladder(text):
    ladder = tuple(float(x) for x in text.replace(",", " ").split())
    return ladder or DEFAULT_LADDER


def parse_qp_table(text):
    table = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        qp, rate = item.split(":")
        table[int(qp)] = float(rate)
    return table


def _parse_bool(text):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_loss(text):
    segs = []
    for line in filter(None, (s.strip() for s in text.splitlines())):
        parts = line.split()
        start, model = float(parts[0]), parts[1].lower()
        nums = [float(x) for x in parts[2:]]
        if model == "none":
            segs.append(LossSegment(start, "none"))
        elif model == "bernoulli":
            segs.append(LossSegment(start, "bernoulli", nums[0]))
        elif model == "ge":
            segs.append(LossSegment(start, "ge", nums[0], nums[1] if len(nums) > 1 else 1.0))
        else:
            raise ValueError(f"unknown loss model {model!r}")
    return segs


def _parse_delay(text):
    out = []
    for line in filter(None, (s.strip() for s in text.splitlines())):
        s, d = line.split()
        out.append((float(s), float(d)))
    return out


def _convert(spec_cls, name, text):
    ftype = {f.name: f.type for f in dataclasses.fields(spec_cls)}[name]
    if spec_cls is ChannelSpec and name == "loss":
        return _parse_loss(text)
    if spec_cls is ChannelSpec and name == "delay":
        return _parse_delay(text)
    if ftype in (bool, "bool"):
        return _parse_bool(text)
    if ftype in (int, "int"):
        return int(text)
    if ftype in (float, "float"):
        return float(text)
    return text.strip()


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list) and value and isinstance(value[0], LossSegment):
        lines = []
        for s in value:
            tail = {"none": "", "bernoulli": f" {s.p!r}", "ge": f" {s.p!r} {s.b!r}"}[s.model]
            lines.append(f"{s.start_s!r} {s.model}{tail}")
        return "\n" + "\n".join("    " + x for x in lines)
    if isinstance(value, list):
        return "\n" + "\n".join(f"    {s!r} {d!r}" for s, d in value)
    return str(value)


def set_value(cfg, dotted, value):
    try:
        section, key = dotted.split(".", 1)
        spec = getattr(cfg, section)
    except (ValueError, AttributeError):
        raise ConfigError(f"unknown setting {dotted!r}") from None
    if key not in {f.name for f in dataclasses.fields(spec)}:
        raise ConfigError(f"unknown setting {dotted!r}")
    if isinstance(value, str):
        value = _convert(type(spec), key, value)
    setattr(spec, key, value)


def _line_of(text, section, key=None):
    sec_re = re.compile(r"^\s*\[\s*" + re.escape(section) + r"\s*\]")
    in_sec = False
    for n, line in enumerate(text.splitlines(), 1):
        if line.lstrip().startswith("["):
            in_sec = bool(sec_re.match(line))
            if in_sec and key is None:
                return n
            continue
        if in_sec and key and re.match(r"^\s*" + re.escape(key) + r"\s*[=:]", line):
            return n
    if key is not None:
        return _line_of(text, section)
    return None


def loads(text):
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(str(exc).splitlines()[0], line) from None
    cfg = ScenarioConfig()
    known = dict(SECTIONS)
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"unknown section [{section}]", _line_of(text, section))
        spec = getattr(cfg, section)
        names = {f.name for f in dataclasses.fields(spec)}
        for key, raw in parser.items(section):
            line = _line_of(text, section, key)
            if key not in names:
                raise ConfigError(f"unknown key {key!r} in [{section}]", line)
            try:
                setattr(spec, key, _convert(known[section], key, raw))
            except (ValueError, IndexError) as exc:
                raise ConfigError(f"{section}.{key}: {exc}", line) from None
    try:
        validate(cfg)
    except ConfigError as exc:
        if exc.line is None and getattr(exc, "where", None):
            raise ConfigError(str(exc), _line_of(text, *exc.where)) from None
        raise
    return cfg


def load(path):
    with open(path) as fh:
        return loads(fh.read())


def dumps(cfg):
    out = io.StringIO()
    for section, _ in SECTIONS:
        spec = getattr(cfg, section)
        out.write(f"[{section}]\n")
        for f in dataclasses.fields(spec):
            out.write(f"{f.name} = {_fmt(getattr(spec, f.name))}\n")
        out.write("\n")
    return out.getvalue()


def _fail(message, section, key):
    err = ConfigError(message)
    err.where = (section, key)
    raise err


def validate(cfg):
    t, c, k, ch, r = cfg.traffic, cfg.codec, cfg.controller, cfg.channel, cfg.run
    if t.type not in ("cbr", "video"):
        _fail(f"traffic type must be cbr or video, got {t.type!r}", "traffic", "type")
    if t.rate_kbps <= 0:
        _fail("rate_kbps must be positive", "traffic", "rate_kbps")
    if t.type == "cbr" and (t.packets < 1 or t.packet_size < 1):
        _fail("cbr traffic needs packets >= 1 and packet_size >= 1", "traffic", "packets")
    if t.type == "video" and t.duration_s <= 0:
        _fail("video duration must be positive", "traffic", "duration_s")
    if not 0 < t.gain < 1:
        _fail("gain must lie in (0, 1)", "traffic", "gain")
    if c.scheme not in ("tetrys", "fec", "none"):
        _fail(f"unknown scheme {c.scheme!r}", "codec", "scheme")
    if c.mode not in ("fixed", "adaptive"):
        _fail(f"unknown mode {c.mode!r}", "codec", "mode")
    if not 0 < c.redundancy < 1:
        _fail("redundancy must lie in (0, 1)", "codec", "redundancy")
    if (c.fec_k or c.fec_n) and not 1 <= c.fec_k < c.fec_n <= 255:
        _fail("explicit FEC needs 1 <= fec_k < fec_n <= 255", "codec", "fec_k")
    if c.window_cap < 1:
        _fail("window_cap must be >= 1", "codec", "window_cap")
    for name in ("min_th", "max_th", "min_fec", "max_fec"):
        if not 0 <= getattr(k, name) <= 1:
            _fail(f"{name} must be a probability", "controller", name)
    try:
        cfg.controller_config()
    except ValueError as exc:
        msg = str(exc)
        key = next((name for name in ("max_th", "max_fec", "ladder") if name in msg), "f")
        _fail(msg, "controller", key)
    starts = [s.start_s for s in ch.loss]
    if any(b <= a for a, b in zip(starts, starts[1:])):
        _fail("loss segments must be ordered by start time", "channel", "loss")
    for s in ch.loss:
        if s.model not in ("none", "bernoulli", "ge"):
            _fail(f"unknown loss model {s.model!r}", "channel", "loss")
        if not 0 <= s.p <= 1 or (s.model == "ge" and (s.p >= 1 or s.b < 1)):
            _fail("loss probabilities must lie in [0, 1] and burst sizes be >= 1",
                  "channel", "loss")
    dstarts = [s for s, _ in ch.delay]
    if not ch.delay or dstarts[0] != 0 or any(b <= a for a, b in zip(dstarts, dstarts[1:])):
        _fail("delay schedule must start at 0 with increasing times", "channel", "delay")
    if any(d < 0 for _, d in ch.delay):
        _fail("delays must be non-negative", "channel", "delay")
    if not 0 <= ch.feedback_loss <= 1:
        _fail("feedback_loss must be a probability", "channel", "feedback_loss")
    if r.ack_period_ms <= 0 or r.d_max_ms <= 0:
        _fail("ack period and deadline must be positive", "run", "ack_period_ms")
    if c.scheme == "tetrys" and c.mode == "adaptive" and k.calibration:
        if not os.path.exists(k.calibration):
            _fail(f"calibration table {k.calibration!r} not found", "controller", "calibration")


# ---------------------------------------------------------------- presets

def _cbr_base():
    cfg = ScenarioConfig()
    cfg.run.name = "cbr"
    return cfg


def _video_base(name, loss, delay=((0.0, 50.0),)):
    cfg = ScenarioConfig()
    cfg.run.name = name
    cfg.traffic = TrafficSpec(type="video", rate_kbps=774.1, duration_s=50.0)
    cfg.controller.f = 4.0
    cfg.channel = ChannelSpec(loss=list(loss), delay=list(delay))
    return cfg


def preset(name):
    """Named scenario; returns a fresh, validated ScenarioConfig."""
    seg = LossSegment
    if name == "cbr":
        cfg = _cbr_base()
        cfg.channel.loss = [seg(0.0, "ge", 0.05, 3.0)]
    elif name == "table2":
        cfg = _video_base("table2", [seg(0.0, "none"), seg(10.0, "ge", 0.02, 2.0),
                                     seg(30.0, "bernoulli", 0.02)])
    elif name == "table4":
        cfg = _video_base("table4", [seg(0.0, "none"), seg(10.0, "ge", 0.02, 2.0),
                                     seg(20.0, "ge", 0.02, 3.0), seg(30.0, "ge", 0.03, 2.0),
                                     seg(40.0, "ge", 0.03, 3.0)])
    elif name == "varied-rtt":
        cfg = _video_base("varied-rtt", [seg(0.0, "ge", 0.02, 2.0)],
                          delay=[(0.0, 50.0), (20.0, 70.0)])
    elif name == "fig1":
        cfg = _cbr_base()
        cfg.run.name = "fig1"
        cfg.traffic.packets = 10
        cfg.codec.mode = "fixed"
        cfg.codec.redundancy = 1 / 3
    else:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    validate(cfg)
    return cfg


PRESETS = ("cbr", "table2", "table4", "varied-rtt", "fig1")
