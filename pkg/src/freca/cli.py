"""Command-line entry point: ``freca run | report | validate``.

Exit codes: 0 success, 1 configuration error, 2 runtime error. The output
directory defaults to ``$FRECA_OUT_DIR`` and then ``./freca-out``.
"""
from __future__ import annotations

import argparse
import datetime as dt
import os
import sys
from pathlib import Path

from .config import ConfigError, dump_config, parse_config
from .orchestrator import run_experiment
from .report import emit_csv, emit_json, emit_manifest, emit_svg_chart, load_json

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _write_outputs(report, out: Path) -> None:
    emit_csv(report, out)
    if report.config.metrics:
        emit_svg_chart(report, out / "chart.svg")


def cmd_run(args) -> int:
    cfg = parse_config(args.config, {"master_seed": args.seed, "rounds": args.rounds, "case": args.case})
    out = Path(args.out or os.environ.get("FRECA_OUT_DIR") or "freca-out")
    started = _now()
    report = run_experiment(cfg)
    finished = _now()
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.yaml")
    emit_json(report, out / "report.json")
    emit_manifest(report, out / "run_manifest.json", started, finished)
    _write_outputs(report, out)
    print(f"{cfg.case}: {cfg.rounds} rounds, results in {out}")
    for cid, vals in report.averages.items():
        shown = "  ".join(f"{k}={vals[k]:.4f}" for k in ("aw", "net", "sv_minmax", "loo_minmax") if vals[k] is not None)
        print(f"  client {cid}: {shown}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.dir)
    report = load_json(out / "report.json")
    _write_outputs(report, out)
    print(f"re-emitted tables and chart in {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = parse_config(args.config)
    sys.stdout.write(dump_config(cfg))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="freca", description="FL client contribution assessment experiments")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a YAML config")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (default: $FRECA_OUT_DIR or ./freca-out)")
    run.add_argument("--seed", type=int, help="override master_seed")
    run.add_argument("--rounds", type=int, help="override the number of rounds")
    run.add_argument("--case", help="override the case preset")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="re-emit CSV and chart from a stored report.json")
    rep.add_argument("dir")
    rep.set_defaults(func=cmd_report)

    val = sub.add_parser("validate", help="check a config and print its resolved form")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime error
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
