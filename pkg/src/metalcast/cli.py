"""Command-line front end.

Exit codes: 0 success, 1 validation error (bad config or arguments),
2 data error (unreadable or inconsistent input files).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import months
from .backtest import BacktestReport, _load_context, evaluate, origin_dates, run_backtest, run_nowcast_race
from .config import load_config
from .errors import ConfigError, MetalcastError
from .report import emit_report, load_forecasts, write_nowcast_race
from .synth import SynthSpec, write_config, write_ip_fixture, write_panel

log = logging.getLogger("metalcast")

EXIT_OK, EXIT_VALIDATION, EXIT_DATA = 0, 1, 2


def _overrides(args) -> dict:
    return {"seed": args.seed, "workers": args.workers, "out": args.out}


def cmd_synthgen(args) -> int:
    spec = SynthSpec(seed=args.data_seed)
    if args.end:
        spec = replace(spec, end=months.parse(args.end))
    manifest = write_panel(args.out, spec)
    cfg = write_config(args.out, seed=args.seed if args.seed is not None else 0)
    log.info("wrote %s and %s", manifest, cfg)
    return EXIT_OK


def cmd_fixtures(args) -> int:
    path = write_ip_fixture(args.out)
    log.info("wrote %s", path)
    return EXIT_OK


def cmd_nowcast_race(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    ctx = _load_context(cfg)
    origins = origin_dates(cfg, ctx.panel)
    race = run_nowcast_race(ctx, origins)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_nowcast_race(cfg.out / "nowcast_horse_race.csv", race)
    race.to_json(cfg.out / "nowcast_horse_race.json")
    return EXIT_OK


def cmd_backtest(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    report = run_backtest(cfg, race=not args.no_race)
    files = emit_report(report, cfg.out)
    log.info("%d forecasts, %d error cells, %d files in %s", len(report.forecasts), len(report.errors), len(files), cfg.out)
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    records = [r for r in load_forecasts(args.forecasts) if not r.model.startswith("pool_")]
    origins = tuple(sorted({r.origin for r in records}))
    models = cfg.with_models()
    report = BacktestReport(cfg, origins, tuple(m.name for m in models), records, [])
    emit_report(evaluate(report), cfg.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="metalcast", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("--out", type=Path, default=None)

    sp = sub.add_parser("synthgen", help="write the synthetic panel and a backtest config")
    common(sp, config=False)
    sp.add_argument("--data-seed", type=int, default=SynthSpec.seed)
    sp.add_argument("--end", default=None, help="last data month, YYYY-MM")
    sp.set_defaults(func=cmd_synthgen)

    sp = sub.add_parser("fixtures", help="write the Industrial Production vintage fixture")
    common(sp, config=False)
    sp.set_defaults(func=cmd_fixtures)

    sp = sub.add_parser("nowcast-race", help="nowcasting horse race on the configured panel")
    common(sp)
    sp.set_defaults(func=cmd_nowcast_race)

    sp = sub.add_parser("backtest", help="full rolling-origin backtest")
    common(sp)
    sp.add_argument("--no-race", action="store_true", help="skip the nowcasting horse race")
    sp.set_defaults(func=cmd_backtest)

    sp = sub.add_parser("report", help="re-evaluate a saved forecast table")
    common(sp)
    sp.add_argument("--forecasts", required=True, type=Path)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command in ("synthgen", "fixtures") and args.out is None:
        parser.error("--out is required")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (MetalcastError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
