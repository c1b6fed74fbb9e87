"""Command-line experiment runner.

Subcommands: ``run``, ``sweep``, ``calibrate``, ``compare`` and ``presets``.
Scenarios come from ``--config PATH`` or ``--preset NAME`` and can be
adjusted with repeated ``--override section.key=value``.
"""

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import config as config_mod
from . import sim
from .config import ConfigError

log = logging.getLogger("tetrys")

SWEEP_AXES = {"f": "controller.f", "min_th": "controller.min_th",
              "max_th": "controller.max_th", "feedback_loss": "channel.feedback_loss"}


def _parse_override(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"override must be key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def _add_scenario_args(p, multiple=False):
    if multiple:
        p.add_argument("--config", action="append", default=[], metavar="PATH",
                       help="scenario file (repeat for each scheme)")
        p.add_argument("--preset", action="append", default=[], metavar="NAME")
    else:
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", metavar="PATH", help="scenario file")
        src.add_argument("--preset", metavar="NAME", help="named scenario")
    p.add_argument("--override", action="append", default=[], type=_parse_override,
                   metavar="KEY=VALUE", help="e.g. controller.f=3 (repeatable)")
    p.add_argument("--seed", type=int, help="base random seed")


def _load(path=None, preset=None, overrides=(), seed=None):
    cfg = config_mod.load(path) if path else config_mod.preset(preset)
    for key, value in overrides:
        config_mod.set_value(cfg, key, value)
    if seed is not None:
        cfg.run.seed = seed
    return cfg.validate()


def summary_line(cfg, log_):
    s = sim.summary(log_)
    return (f"{cfg.run.name}: ILR={s['ilr']:.5f} mean_redundancy={s['mean_redundancy']:.4f} "
            f"mean_kbps={s['mean_kbps']:.1f} on_time={s['on_time_rate']:.5f} "
            f"degraded_intervals={s['degraded_intervals']}")


def cmd_run(args):
    cfg = _load(args.config, args.preset, args.override, args.seed)
    log_ = sim.run(cfg)
    if args.out_dir:
        sim.write_csvs(log_, args.out_dir, cfg.run.bin_ms)
        with open(os.path.join(args.out_dir, "scenario.ini"), "w") as fh:
            fh.write(config_mod.dumps(cfg))
    print(summary_line(cfg, log_))
    return 0


def _sweep_one(job):
    text, key, value, seed = job
    cfg = config_mod.loads(text)
    config_mod.set_value(cfg, key, value)
    cfg.run.seed = seed
    log_ = sim.run(cfg.validate())
    return value, seed, sim.ilr(log_), sim.mean_redundancy(log_)


def sweep(cfg, axis, values, seeds, jobs=1):
    """Rows ``(value, seed, ilr, mean_redundancy)`` of one sweep."""
    if not values:
        raise ValueError("sweep needs at least one value")
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
    if axis != "feedback_loss" and not (cfg.codec.scheme == "tetrys"
                                        and cfg.codec.mode == "adaptive"):
        raise ValueError(f"axis {axis!r} needs an adaptive tetrys scenario")
    text = config_mod.dumps(cfg)
    work = [(text, SWEEP_AXES[axis], float(v), s) for v in values for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            return list(ex.map(_sweep_one, work))
    return [_sweep_one(w) for w in work]


def cmd_sweep(args):
    cfg = _load(args.config, args.preset, args.override, args.seed)
    base = cfg.run.seed
    seeds = [base + i for i in range(args.seeds)]
    rows = sweep(cfg, args.axis, args.values, seeds, args.jobs)
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["value", "seed", "ilr", "mean_redundancy"])
        for v, s, i, r in rows:
            w.writerow([v, s, f"{i:.6f}", f"{r:.6f}"])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_calibrate(args):
    from .calibration import calibrate_grid

    def progress(p, b, entries, points):
        for pt in points:
            if pt.skipped:
                print(f"p={pt.p:g} b={pt.b:g} n={pt.n} dR={pt.delta_r:.4f} "
                      f"samples={pt.samples} SKIPPED ({pt.skipped})")
            else:
                print(f"p={pt.p:g} b={pt.b:g} n={pt.n} dR={pt.delta_r:.4f} "
                      f"samples={pt.samples} lambda={pt.lam:.3f} kappa={pt.kappa:.3f} "
                      f"KS={pt.ks:.4f}")

    report = calibrate_grid(args.p, args.b, args.n, args.budget,
                            args.seed if args.seed is not None else 1, progress)
    report.table.save(args.output)
    print(f"wrote {len(report.table)} entries to {args.output}")
    if report.warnings:
        print(f"{len(report.warnings)} warnings:")
        for w in report.warnings:
            print("  " + w)
    return 0


def _segments(cfg, log_):
    starts = sorted({s.start_s for s in cfg.channel.loss} | {0.0})
    end = log_.end_of_traffic_us / 1e6
    bounds = [s for s in starts if s < end] + [end]
    return list(zip(bounds, bounds[1:]))


def compare(cfgs, labels=None):
    """Per-segment rows across schemes sharing traffic, channel and seed."""
    if len(cfgs) < 2:
        raise ValueError("compare needs at least two scenarios")
    ref = cfgs[0]
    for c in cfgs[1:]:
        if (c.traffic != ref.traffic or c.channel != ref.channel
                or c.run.seed != ref.run.seed):
            raise ValueError("scenarios differ in traffic, channel or seed; refusing to compare")
    labels = labels or [f"{c.run.name}:{c.codec.scheme}-{c.codec.mode}" for c in cfgs]
    rows = []
    for label, cfg in zip(labels, cfgs):
        log_ = sim.run(cfg)
        for i, (a, b) in enumerate(_segments(cfg, log_)):
            rows.append([label, i + 1, a, b, sim.ilr(log_, a, b),
                         sim.mean_redundancy(log_, a, b), sim.mean_bandwidth(log_, a, b)])
        rows.append([label, "all", 0.0, log_.end_of_traffic_us / 1e6, sim.ilr(log_),
                     sim.mean_redundancy(log_), sim.mean_bandwidth(log_)])
    return rows


def cmd_compare(args):
    cfgs = [_load(path=p, overrides=args.override, seed=args.seed) for p in args.config]
    cfgs += [_load(preset=p, overrides=args.override, seed=args.seed) for p in args.preset]
    rows = compare(cfgs)
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["scenario", "segment", "start_s", "end_s", "ilr", "mean_redundancy",
                    "mean_kbps"])
        for r in rows:
            w.writerow(r[:4] + [f"{r[4]:.6f}", f"{r[5]:.6f}", f"{r[6]:.3f}"])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_presets(args):
    if args.name:
        sys.stdout.write(config_mod.dumps(config_mod.preset(args.name)))
    else:
        for name in config_mod.PRESETS:
            print(name)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="tetrys", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute one scenario")
    _add_scenario_args(p)
    p.add_argument("--out-dir", help="write packets.csv, timeline.csv, events.csv here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="vary one controller or channel parameter")
    _add_scenario_args(p)
    p.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    p.add_argument("--values", required=True, type=float, nargs="+")
    p.add_argument("--seeds", type=int, default=1, help="seeds per value")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--output", "-o", help="summary CSV (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="regenerate the recovery-model table")
    p.add_argument("--p", type=float, nargs="+", default=[0.01, 0.02, 0.03, 0.05, 0.10])
    p.add_argument("--b", type=float, nargs="+", default=[1.0, 2.0, 3.0])
    p.add_argument("--n", type=int, nargs="+", default=[10, 5, 3, 2])
    p.add_argument("--budget", type=int, default=30000, help="source packets per grid point")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("compare", help="per-segment comparison of schemes")
    _add_scenario_args(p, multiple=True)
    p.add_argument("--output", "-o", help="comparison CSV (default stdout)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("presets", help="list presets or print one")
    p.add_argument("name", nargs="?", choices=config_mod.PRESETS)
    p.set_defaults(func=cmd_presets)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"tetrys: config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as exc:
        print(f"tetrys: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
