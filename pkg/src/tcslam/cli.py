"""Command-line entry point: ``tcslam run``, ``tcslam buildings``, ``tcslam default-config``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import config as config_mod
from .experiment import run_building_sweep, run_experiment, sweep_table

log = logging.getLogger("tcslam")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tcslam", description="Cooperative multipath SLAM simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "vehicle-density experiment"), ("buildings", "building-gap sweep")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("-c", "--config", type=Path, help="YAML config file (defaults apply when omitted)")
        s.add_argument("--seed", type=int, action="append", help="seed override, repeatable")
        s.add_argument("--density", type=int, action="append", help="density override, repeatable")
        s.add_argument("-o", "--out", type=Path, help="output directory")
        s.add_argument("--slots", type=int, help="slot-count override")
        s.add_argument("-j", "--jobs", type=int, help="parallel worker processes")
        s.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("default-config", help="print the default config as YAML")
    return p


def _load(args) -> config_mod.RunConfig:
    cfg = config_mod.load(args.config) if args.config else config_mod.RunConfig()
    kw = {}
    if args.seed:
        kw["seeds"] = tuple(args.seed)
    if args.density:
        kw["densities" if args.command == "run" else "sweep_densities"] = tuple(args.density)
    if args.slots is not None:
        kw["slots"] = args.slots
    if args.jobs is not None:
        kw["jobs"] = args.jobs
    if args.out is not None:
        kw["output"] = str(args.out)
    return cfg.replace(**kw) if kw else cfg


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "default-config":
        sys.stdout.write(config_mod.dump(config_mod.RunConfig()))
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _load(args)
    except (config_mod.ConfigError, ValueError, OSError) as exc:
        print(f"tcslam: invalid config: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "run":
            results = run_experiment(cfg)
            for r in results:
                log.info("%s  MAE %.3f m  VTs/slot %.2f", r.run_id, r.mae, r.mean_vt_count)
        else:
            results = run_building_sweep(cfg)
            for row in sweep_table(results):
                log.info("gap %s density %d  MAE %.3f m  VTs/slot %.2f", row[0], row[1], row[3], row[4])
    except OSError as exc:
        print(f"tcslam: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(results)} cells to {cfg.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
