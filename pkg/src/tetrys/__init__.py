"""Tetrys on-the-fly erasure coding with delay-aware redundancy adaptation,
a block FEC baseline and a deterministic packet-level simulator."""

from .codec import TetrysDecoder, TetrysEncoder
from .config import ScenarioConfig, preset
from .fec import FecBlockConfig, FecDecoder
from .sim import MetricsLog, ilr, run

__version__ = "0.1.0"

__all__ = ["TetrysEncoder", "TetrysDecoder", "FecBlockConfig", "FecDecoder", "ScenarioConfig",
           "preset", "MetricsLog", "ilr", "run"]
