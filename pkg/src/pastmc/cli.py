"""Command line entry point.

    pastmc run CONFIG [--set key.path=value ...] [--emit-plotdata] [--plot]
    pastmc compare DIR [DIR ...] [--bandwidth L] [--out DIR]
    pastmc schedule-preview B2 ALPHA B COUNT [--rho RHO]
    pastmc check-weights CONFIG [--set ...] [-n N]

Exit codes: 0 success, 1 sampler failure at run time, 2 invalid
configuration or usage, 3 importance weights look unbounded.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from .experiment import (
    ConfigError,
    compare_report,
    load_config,
    load_run,
    run_experiment,
    table_text,
    weight_report,
    write_table,
)
from .resampling import ResampleSchedule, divergence_delta

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_WEIGHTS = 0, 1, 2, 3


def _cmd_run(args) -> int:
    cfg = load_config(args.config, args.set)
    out = run_experiment(cfg, emit_plotdata=args.emit_plotdata, plot=args.plot)
    txt = out / "comparison.txt"
    if txt.exists():
        sys.stdout.write(txt.read_text())
    print(f"outputs written to {out}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    traces = []
    for d in args.dirs:
        traces.extend(load_run(d))
    try:
        rows = compare_report(traces, None, args.bandwidth)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    out = Path(args.out or args.dirs[0])
    out.mkdir(parents=True, exist_ok=True)
    write_table(rows, out / "comparison.csv", out / "comparison.txt")
    sys.stdout.write(table_text(rows))
    return EXIT_OK


def _cmd_schedule(args) -> int:
    try:
        s = ResampleSchedule(args.B, args.b2, args.alpha)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    print("k,time" + (",delta" if args.rho is not None else ""))
    for k in range(1, args.count + 1):
        line = f"{k},{s.time(k)}"
        if args.rho is not None:
            line += f",{divergence_delta(s, args.rho, k):.6g}"
        print(line)
    return EXIT_OK


def _cmd_check_weights(args) -> int:
    cfg = load_config(args.config, args.set)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = weight_report(cfg, args.n)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(json.dumps(report, indent=2))
    return EXIT_OK if report["bounded"] else EXIT_WEIGHTS


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pastmc", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key by dotted path (value parsed as JSON)")
    r.add_argument("--emit-plotdata", action="store_true", help="write tidy CSVs for trace tails, histograms, ACFs")
    r.add_argument("--plot", action="store_true", help="render PNG figures next to the outputs")
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("compare", help="inefficiency table across finished runs")
    c.add_argument("dirs", nargs="+")
    c.add_argument("--bandwidth", type=int, default=5000)
    c.add_argument("--out", default=None)
    c.set_defaults(func=_cmd_compare)

    s = sub.add_parser("schedule-preview", help="print resampling times B + ceil(b2 k^alpha)")
    s.add_argument("b2", type=float)
    s.add_argument("alpha", type=float)
    s.add_argument("B", type=int)
    s.add_argument("count", type=int)
    s.add_argument("--rho", type=float, default=None, help="also print the divergence delta_k for this rate")
    s.set_defaults(func=_cmd_schedule)

    w = sub.add_parser("check-weights", help="probe importance weights on an auxiliary pre-run")
    w.add_argument("config")
    w.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    w.add_argument("-n", type=int, default=10_000)
    w.set_defaults(func=_cmd_check_weights)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError, TypeError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG if getattr(args, "command", "") != "run" else EXIT_RUNTIME
    except (RuntimeError, ArithmeticError, MemoryError) as e:
        print(f"error: sampler failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
