"""Offline calibration of the recovery-delay model from fixed-ratio runs.

For each code length ``n`` the CBR scenario is simulated at ratio ``1/n``
over several loss rates around the target, so the margin ``R - p`` spans a
range. Each run yields recovery-delay samples; a Weibull fit per margin
feeds the margin-curve regression that produces one table entry.

Zero delays (a repair sent back to back with the lost packet) cannot enter
a Weibull likelihood; the fit uses the positive samples while the reported
KS distance is taken against all samples.
"""

import functools
import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import LossSegment
from .config import ScenarioConfig
from .recovery import CalibrationTable, CoefficientEntry, MarginCurveRegressor, WeibullFitter
from .sim import recovery_delay_samples, run

log = logging.getLogger(__name__)

DEFAULT_P = (0.01, 0.02, 0.03, 0.05, 0.10)
DEFAULT_B = (1.0, 2.0, 3.0)
DEFAULT_N = (10, 5, 3, 2)
MIN_SAMPLES = 100
MULTIPLIERS = (0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0)


@dataclass
class PointFit:
    p: float  # simulated loss rate
    b: float
    n: int
    delta_r: float
    samples: int
    zero_fraction: float
    lam: float = float("nan")
    kappa: float = float("nan")
    ks: float = float("nan")
    skipped: str = ""


@dataclass
class CalibrationReport:
    table: CalibrationTable
    points: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def margin_grid(p, n):
    """Loss rates to simulate for target ``p`` at ratio ``1/n``; all keep ``R - p' > 0``."""
    r = 1.0 / n
    top = r - max(0.01, 0.1 * r)
    rates = {round(p * m, 6) for m in MULTIPLIERS if 0.002 <= p * m <= top}
    # a mid-margin anchor keeps the margin span wide when p << R
    rates.add(round(r / 2, 6))
    if len(rates) < 3:
        rates |= {round(r * f, 6) for f in (0.25, 0.75)}
    return sorted(rates)


def base_scenario(sim_budget, seed):
    cfg = ScenarioConfig()
    cfg.run.name = "calibration"
    cfg.run.seed = seed
    cfg.traffic.packets = sim_budget
    cfg.codec.mode = "fixed"
    return cfg


def fit_point(samples, p, b, n):
    s = np.asarray(samples, dtype=float)
    r = 1.0 / n
    pos = s[s > 0]
    pt = PointFit(p, b, n, r - p, int(s.size), float(1 - pos.size / s.size) if s.size else 0.0)
    if pos.size < MIN_SAMPLES:
        pt.skipped = f"{pos.size} positive recovery-delay samples (< {MIN_SAMPLES})"
        return pt
    fitter = WeibullFitter().fit(pos)
    pt.lam, pt.kappa = fitter.scale_, fitter.shape_
    pt.ks = fitter.ks_distance(s)
    return pt


@functools.lru_cache(maxsize=256)
def simulate_point(p, b, n, sim_budget, seed):
    # grids of neighbouring targets overlap, so runs are memoized
    cfg = base_scenario(sim_budget, seed)
    cfg.codec.redundancy = 1.0 / n
    cfg.channel.loss = [LossSegment(0.0, "ge", p, b)]
    return tuple(recovery_delay_samples(run(cfg)))


def calibrate(p, b, n_values=DEFAULT_N, sim_budget=30000, seed=1):
    """Entries and per-point fits for one ``(p, b)`` across ``n_values``."""
    entries, points, warnings = [], [], []
    for n in n_values:
        fits = []
        for p_sim in margin_grid(p, n):
            pt = fit_point(simulate_point(p_sim, b, n, sim_budget, seed), p_sim, b, n)
            points.append(pt)
            if pt.skipped:
                msg = f"p={p_sim:g} b={b:g} n={n}: skipped, {pt.skipped}"
                log.warning(msg)
                warnings.append(msg)
            else:
                fits.append(pt)
        if not fits:
            msg = f"no usable grid point for p={p:g} b={b:g} n={n}; entry omitted"
            log.warning(msg)
            warnings.append(msg)
            continue
        X = np.array([[f.delta_r] for f in fits])
        y = np.array([[f.lam, f.kappa] for f in fits])
        reg = MarginCurveRegressor().fit(X, y)
        entries.append(CoefficientEntry(p, b, n, reg.a_lambda_, reg.b_lambda_,
                                        reg.a_kappa_, reg.b_kappa_))
    return entries, points, warnings


def calibrate_grid(p_values=DEFAULT_P, b_values=DEFAULT_B, n_values=DEFAULT_N,
                   sim_budget=30000, seed=1, progress=None):
    """Full table over the grid; returns a CalibrationReport."""
    t_ms = base_scenario(sim_budget, seed).traffic
    t_ms = t_ms.packet_size * 8.0 / t_ms.rate_kbps
    entries, points, warnings = [], [], []
    for p in p_values:
        for b in b_values:
            e, pts, w = calibrate(p, b, n_values, sim_budget, seed)
            entries += e
            points += pts
            warnings += w
            if progress:
                progress(p, b, e, pts)
    return CalibrationReport(CalibrationTable(entries, t_ms), points, warnings)
