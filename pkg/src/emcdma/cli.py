"""``simulate`` command line entry point."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .scenarios import PAPER_TRIALS, ConfigError, builtin_scenarios, get_scenario, parse_config_text, parse_grid
from .simulate import ResultWriter, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulate", description="Monte Carlo BER and throughput of the "
                                "pilot-free iterative DS-CDMA receiver.")
    p.add_argument("--scenario", required=True,
                   help=f"preset ({', '.join(sorted(builtin_scenarios()))}) or a key=value config file")
    p.add_argument("--ebno", help="Eb/N0 grid in dB, a:b:step or a comma list")
    p.add_argument("--trials", type=int, help="frames per Eb/N0 point")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", default="-", help="output file (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--trace", action="store_true", help="write per-frame diagnostics as JSON lines")
    p.add_argument("--paper-scale", action="store_true", help=f"use {PAPER_TRIALS} trials per point")
    p.add_argument("--no-early-exit", action="store_true", help="always run all receiver iterations")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    return p


def load_scenarios(arg: str):
    path = Path(arg)
    if path.is_file():
        try:
            text = path.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read {arg}: {e}") from None
        return parse_config_text(text)
    return get_scenario(arg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        curves = load_scenarios(args.scenario)
        over = {}
        if args.ebno:
            over["ebno_db"] = parse_grid(args.ebno)
        if args.paper_scale:
            over["trials"] = PAPER_TRIALS
        if args.trials is not None:
            over["trials"] = args.trials
        if args.seed is not None:
            over["seed"] = args.seed
        if args.no_early_exit:
            over["early_exit"] = False
        curves = [c.with_(**over) for c in curves]
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
    except (ConfigError, ValueError) as e:
        print(f"simulate: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    trace_fh = None
    try:
        writer = ResultWriter(None if args.out == "-" else args.out, args.format, stream=sys.stdout)
        if args.trace:
            tpath = "trace.jsonl" if args.out == "-" else args.out + ".trace.jsonl"
            trace_fh = open(tpath, "w")
    except OSError as e:
        print(f"simulate: cannot open output: {e}", file=sys.stderr)
        return EXIT_IO

    def sink(rec):
        trace_fh.write(json.dumps(rec) + "\n")

    try:
        for cfg in curves:
            print(f"# {cfg.name} {cfg.label} case={cfg.case} rate={cfg.code_rate} trials={cfg.trials}",
                  file=sys.stderr)
            run_scenario(cfg, jobs=args.jobs, on_row=writer.write, trace_sink=sink if trace_fh else None)
    except OSError as e:
        print(f"simulate: write failed: {e}", file=sys.stderr)
        return EXIT_IO
    except KeyboardInterrupt:
        print("simulate: interrupted; finished points were written", file=sys.stderr)
        return 130
    finally:
        writer.close()
        if trace_fh:
            trace_fh.close()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
