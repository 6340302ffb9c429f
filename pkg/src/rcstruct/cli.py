"""Command line entry point: ``rcstruct simulate ...``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

import numpy as np

from .errors import InvalidConfigError, RcStructError
from .harness import ADAPT_MODES, DESK_CONFIG, DETECTORS, SimConfig, run_ber_sweep, write_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("rcstruct")


def _ebn0_list(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad Eb/N0 list {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("empty Eb/N0 list")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rcstruct", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a BER sweep and write CSV")
    sim.add_argument("--config", help="JSON config file (desk defaults when omitted)")
    sim.add_argument("--ebn0", type=_ebn0_list, help='comma separated list, e.g. "0,5,10"')
    sim.add_argument("--detector", choices=DETECTORS, help="run a single detector")
    sim.add_argument("--adapt", choices=ADAPT_MODES)
    pa = sim.add_mutually_exclusive_group()
    pa.add_argument("--pa-ibo", type=float, metavar="DB", help="enable the PA at this back-off")
    pa.add_argument("--pa-off", action="store_true", help="disable the PA")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--subframes", type=int, help="subframes per Eb/N0 point")
    sim.add_argument("--workers", type=int, help="worker processes")
    sim.add_argument("--timing", action="store_true",
                     help="fill the seconds column (output is then not reproducible)")
    sim.add_argument("--out", help="CSV path (stdout when omitted)")
    return parser


def resolve_config(args) -> SimConfig:
    cfg = SimConfig.from_json(args.config) if args.config else DESK_CONFIG
    changes = {}
    if args.ebn0 is not None:
        changes["ebn0_db"] = args.ebn0
    if args.detector is not None:
        changes["detectors"] = (args.detector,)
    if args.adapt is not None:
        changes["adapt"] = args.adapt
    if args.pa_off:
        changes["pa"] = dataclasses.replace(cfg.pa, enabled=False)
    elif args.pa_ibo is not None:
        changes["pa"] = dataclasses.replace(cfg.pa, enabled=True, ibo_db=args.pa_ibo)
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.subframes is not None:
        changes["subframes_per_point"] = args.subframes
    if args.workers is not None:
        changes["workers"] = args.workers
    cfg = dataclasses.replace(cfg, **changes)
    cfg.validate()
    return cfg


def simulate(args) -> int:
    try:
        cfg = resolve_config(args)
    except (InvalidConfigError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        write_csv([], fh, header=True)
        fh.flush()

        def flush(rows):
            write_csv(rows, fh, timing=args.timing, header=False)
            fh.flush()

        try:
            with np.errstate(invalid="raise", divide="raise", over="raise"):
                run_ber_sweep(cfg, on_point=flush, progress=log.info)
        except InvalidConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except (np.linalg.LinAlgError, FloatingPointError, RcStructError, ArithmeticError) as exc:
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s", stream=sys.stderr)
    if args.command == "simulate":
        return simulate(args)
    parser.error(f"unknown command {args.command}")
    return EXIT_CONFIG
