"""Command-line entry point.

Output directory precedence: ``--out`` flag, then the file's ``outputs`` key
(sweeps only), then ``$BTCNETSIM_OUT``, then ``./runs``.  ``--seed`` overrides
the seed in the file.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import yaml

from .config import ConfigError, ScenarioConfig, load_data, validate
from .engine import DeadNetworkError, run
from .metrics import MetricsReport, emit
from .sweep import PRESET_NAMES, SweepSpec, preset, run_sweep, validate_sweep

log = logging.getLogger("btcnetsim")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2
EXIT_PARTIAL = 3

OUT_ENV = "BTCNETSIM_OUT"


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV) or "runs")


def _is_sweep(data) -> bool:
    return isinstance(data, dict) and "base" in data and "axis" in data


def cmd_validate(args) -> int:
    data = load_data(args.file)
    if _is_sweep(data):
        errors = validate_sweep(SweepSpec.from_dict(data))
        warnings: List[str] = []
    else:
        checked = validate(ScenarioConfig.from_dict(data))
        errors, warnings = checked.errors, checked.warnings
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    if errors:
        return EXIT_INVALID
    print(f"{args.file}: ok")
    return EXIT_OK


def cmd_run(args) -> int:
    config = ScenarioConfig.from_dict(load_data(args.file))
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    checked = validate(config)
    if not checked.ok:
        raise ConfigError(checked.errors)
    report = run(config)
    out = Path(args.out) if args.out else default_out()
    run_dir = out / config.name / str(config.seed)
    for fmt in ("json", "csv", "plot"):
        emit(report, fmt, run_dir)
    g = report.global_
    print(f"{config.name} seed={config.seed}: height={g.main_chain_height} blocks={g.total_blocks} "
          f"stale={g.stale_blocks} block_time={g.mean_block_time} -> {run_dir}")
    return EXIT_OK


def _run_spec(spec: SweepSpec, args) -> int:
    if getattr(args, "seed", None) is not None:
        spec = replace(spec, base=replace(spec.base, seed=args.seed))
    out = Path(args.out) if args.out else (Path(spec.outputs) if spec.outputs else default_out() / spec.base.name)
    total = len(spec.points) * spec.repetitions
    log.info("%s: %d runs (%d points x %d repetitions) -> %s",
             spec.base.name, total, len(spec.points), spec.repetitions, out)
    result = run_sweep(spec, workers=args.workers, outputs=out)
    for p in result.points:
        s = p.summary
        if s is None:
            print(f"point {p.index} value={p.value}: all runs failed")
            continue
        print(f"point {p.index} value={p.value}: committed={s['committed']['mean']:.1f}"
              f"+-{s['committed']['std']:.1f} forks={s['forks']['mean']:.1f}+-{s['forks']['std']:.1f} "
              f"block_time={s['block_time']['mean']:.4g}")
    if result.failures:
        for f in result.failures:
            print(f"failed: {f}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_sweep(args) -> int:
    return _run_spec(SweepSpec.from_dict(load_data(args.file)), args)


def cmd_preset(args) -> int:
    spec = preset(args.name)
    if args.print:
        sys.stdout.write(yaml.safe_dump(spec.to_dict(), sort_keys=False))
        return EXIT_OK
    return _run_spec(spec, args)


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    source = run_dir / "report.json"
    if not source.is_file():
        raise FileNotFoundError(f"{source} not found")
    report = MetricsReport.from_dict(json.loads(source.read_text(encoding="utf-8")))
    for path in emit(report, args.format, run_dir):
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="btcnetsim", description="Deterministic PoW network simulator.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a scenario or sweep file")
    v.add_argument("file")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="run a single scenario")
    r.add_argument("file")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./runs)")
    r.set_defaults(func=cmd_run)

    def sweep_flags(sp):
        sp.add_argument("--out", help="sweep output directory")
        sp.add_argument("--workers", type=int, help="parallel runs (default: all cores)")
        sp.add_argument("--seed", type=int, help="master seed")

    s = sub.add_parser("sweep", help="run a sweep file")
    s.add_argument("file")
    sweep_flags(s)
    s.set_defaults(func=cmd_sweep)

    pr = sub.add_parser("preset", help="run one of the built-in experiment sweeps")
    pr.add_argument("name", choices=PRESET_NAMES)
    sweep_flags(pr)
    pr.add_argument("--print", action="store_true", help="print the sweep file instead of running it")
    pr.set_defaults(func=cmd_preset)

    rp = sub.add_parser("report", help="re-emit a finished run in another format")
    rp.add_argument("run_dir")
    rp.add_argument("--format", choices=("json", "csv", "plot"), default="json")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        print(f"error: cannot parse file: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DeadNetworkError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
