"""Command-line front end.

Every subcommand loads the configuration, runs one pipeline target and
writes its CSV, JSON summary and seed under ``--out``; the summary is also
printed to stdout.  Exit codes: 0 success, 1 a target failed, 2 bad
configuration or usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, emit_config, parse_config, provenance
from .pipeline import fit_measured, reproduce_all, run_targets, target_seed, write_target

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2

# (command, action) -> pipeline target
COMMANDS = {
    ("blockade", None): "blockade",
    ("ensemble", None): "ensemble",
    ("prep", "scan"): "prep_scan",
    ("prep", "evolve"): "prep_evolve",
    ("detect", "histogram"): "detection_histograms",
    ("detect", "trace"): "detection_traces",
    ("detect", "joint"): "detection_joint",
    ("readout", "fit"): "histogram_fit",
    ("readout", "table"): "repeated_table",
    ("readout", "gain"): "readout_gain",
    ("readout", "sweep"): "fidelity_sweep",
    ("qubit", "rabi"): "rabi",
    ("qubit", "ramsey"): "ramsey",
    ("qubit", "washout"): "washout",
}

HELP = {
    "blockade": "blockade radii and pair potentials",
    "ensemble": "cloud pair distances, optical depth and density",
    "prep": "three-photon preparation",
    "detect": "photon-count statistics of the detection window",
    "readout": "classification, fits, repeated measurement and gain",
    "qubit": "Rabi, Ramsey and two-excitation dephasing",
}


def _global_options(parser: argparse.ArgumentParser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=default, help="YAML configuration file")
    parser.add_argument("--seed", type=int, default=default, help="master seed (overrides the config)")
    parser.add_argument("--out", type=Path, default=default, help="output directory (overrides the config)")
    parser.add_argument("--jobs", type=int, default=argparse.SUPPRESS if suppress else 1,
                        help="worker processes for reproduce-all (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rydqubit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    actions: dict[str, list[str]] = {}
    for cmd, action in COMMANDS:
        actions.setdefault(cmd, [])
        if action:
            actions[cmd].append(action)
    for cmd, acts in actions.items():
        p = sub.add_parser(cmd, help=HELP[cmd])
        if acts:
            p.add_argument("action", choices=acts)
        if cmd == "readout":
            p.add_argument("--data", nargs="+", type=Path, metavar="CSV",
                           help="fit measured histograms (columns count,occurrences; JSON sidecar "
                                "with t_start, t_len, prepared) instead of synthetic ones")
        _global_options(p, suppress=True)
    p = sub.add_parser("reproduce-all", help="regenerate every figure and table analog")
    _global_options(p, suppress=True)
    p = sub.add_parser("config", help="print the default configuration or the provenance of a config")
    p.add_argument("what", choices=["defaults", "provenance"])
    _global_options(p, suppress=True)
    return parser


def _fit_files(cfg, paths) -> int:
    name = "histogram_fit"
    seed = target_seed(cfg, name)
    try:
        result = fit_measured(cfg, seed, paths)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot fit {', '.join(map(str, paths))}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    d = write_target(cfg, cfg.output_dir, name, result, seed)
    print((d / "summary.json").read_text(), end="")
    print(f"outputs in {cfg.output_dir}", file=sys.stderr)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(args.config).with_overrides(seed=args.seed, out=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "config":
        if args.what == "defaults":
            sys.stdout.write(emit_config(cfg))
        else:
            print(json.dumps(provenance(cfg), indent=2))
        return EXIT_OK

    if args.command == "reproduce-all":
        report = reproduce_all(cfg, jobs=args.jobs)
    elif getattr(args, "data", None):
        if args.action != "fit":
            print("error: --data only applies to 'readout fit'", file=sys.stderr)
            return EXIT_CONFIG
        return _fit_files(cfg, args.data)
    else:
        target = COMMANDS[(args.command, getattr(args, "action", None))]
        report = run_targets(cfg, [target], out_dir=cfg.output_dir)
        status = report.statuses[0]
        if status.ok:
            summary = json.loads((cfg.output_dir / target / "summary.json").read_text())
            print(json.dumps(summary, indent=2))

    for s in report.statuses:
        line = f"{s.name}: ok" if s.ok else f"{s.name}: FAILED ({s.error})"
        print(line, file=sys.stderr)
    print(f"outputs in {report.out_dir}", file=sys.stderr)
    return EXIT_OK if report.exit_code == 0 else EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
