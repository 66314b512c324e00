"""Write backtest results to disk: CSV tables, JSON MCS results, run manifest."""

from __future__ import annotations

import csv
import json
import math
import platform
from pathlib import Path

import numba
import numpy as np
import scipy

from . import __version__, months
from .backtest import FUTURES_ID, SURVEY_ID, BacktestReport
from .errors import ParseError
from .evaluation import RatioEntry
from .models import ForecastRecord
from .nowcast import LABELS, NowcastReport
from .pooling import TABLE_HORIZONS, write_pooling_table

FORECAST_HEADER = ["metal", "model", "origin", "horizon", "growth", "level", "realized"]


def _num(x: float | None) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_forecasts(path: Path, report: BacktestReport) -> None:
    with path.open("w", newline="") as fh:
        w = _writer(fh)
        w.writerow(FORECAST_HEADER)
        for r in report.forecasts:
            w.writerow([r.metal, r.model, months.fmt(r.origin), r.horizon, _num(r.growth), _num(r.level), _num(r.realized)])


def _row_models(report: BacktestReport, metal: str) -> list[str]:
    seen = {m for (mt, _), t in report.ratio_tables.items() if mt == metal for m in (e.model for e in t.entries.values())}
    return [m for m in report.model_ids + (FUTURES_ID, SURVEY_ID) if m in seen]


def write_ratio_tables(out: Path, report: BacktestReport, metal: str) -> None:
    horizons = report.config.horizons
    models = _row_models(report, metal)
    cells: dict[tuple[str, int], RatioEntry] = {}
    for h in horizons:
        t = report.ratio_tables.get((metal, h))
        if t is None:
            continue
        for e in t.entries.values():
            cells[(e.model, h)] = e
    with (out / f"ratio_table_{metal}.csv").open("w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["model"] + [f"h{h}" for h in horizons])
        for m in models:
            w.writerow([m] + [cells[(m, h)].formatted() if (m, h) in cells else "-" for h in horizons])
    with (out / f"ratio_table_{metal}_numeric.csv").open("w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["model", "horizon", "is_benchmark", "value", "rmspe", "n", "dm_statistic", "dm_pvalue", "stars"])
        for m in models:
            for h in horizons:
                e = cells.get((m, h))
                if e is None:
                    continue
                dm = e.dm
                w.writerow([m, h, int(e.is_benchmark), _num(e.value), _num(e.rmse), e.n,
                            _num(dm.statistic) if dm else "", _num(dm.pvalue) if dm else "", e.stars])


def write_mcs(out: Path, report: BacktestReport, metal: str) -> None:
    doc = {str(h): report.mcs[(metal, h)].to_dict() for h in report.config.horizons if (metal, h) in report.mcs}
    (out / f"mcs_{metal}.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_cumpaths(out: Path, report: BacktestReport, metal: str) -> None:
    for h in report.config.evaluation.cumpath_horizons:
        if h not in report.config.horizons:
            continue
        paths = report.cumpaths.get((metal, h), {})
        with (out / f"cumpath_{metal}_h{h}.csv").open("w", newline="") as fh:
            w = _writer(fh)
            w.writerow(["model", "date", "ratio"])
            for m in _row_models(report, metal):
                if m not in paths:
                    continue
                dates, vals = paths[m]
                for d, v in zip(dates, vals):
                    w.writerow([m, months.fmt(d), _num(float(v))])


def write_nowcast_race(path: Path, race: NowcastReport | None, models: tuple[str, ...] = ()) -> None:
    if race is not None:
        race.to_csv(path)
        return
    with path.open("w", newline="") as fh:
        _writer(fh).writerow(["variable", "h"] + [LABELS[m] for m in models])


def run_manifest(report: BacktestReport) -> dict:
    cfg = report.config
    return {
        "config": cfg.echo(),
        "seed": cfg.seed,
        "origins": [months.fmt(report.origins[0]), months.fmt(report.origins[-1])] if report.origins else [],
        "n_forecasts": len(report.forecasts),
        "n_errors": len(report.errors),
        "versions": {
            "metalcast": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
        },
    }


def emit_report(report: BacktestReport, out_dir: str | Path) -> list[Path]:
    """Write every output file; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = report.config
    write_forecasts(out / "forecasts.csv", report)
    write_nowcast_race(out / "nowcast_horse_race.csv", report.nowcast_race, cfg.race_models)
    for metal in cfg.metals:
        write_ratio_tables(out, report, metal)
        write_mcs(out, report, metal)
        rows = report.pool_tables.get(metal, {p.label: {} for p in cfg.pooling})
        write_pooling_table(out / f"pooling_{metal}.csv", metal, rows,
                            [h for h in TABLE_HORIZONS if h in cfg.horizons])
        write_cumpaths(out, report, metal)
    with (out / "errors.log").open("w") as fh:
        fh.write("metal\tmodel\torigin\thorizons\terror\n")
        for e in report.errors:
            fh.write(e.line() + "\n")
    (out / "run_manifest.json").write_text(json.dumps(run_manifest(report), indent=2, sort_keys=True) + "\n")
    return sorted(p for p in out.iterdir() if p.is_file())


def load_forecasts(path: str | Path) -> list[ForecastRecord]:
    """Read a forecasts.csv written by :func:`write_forecasts`."""
    out = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FORECAST_HEADER:
            raise ParseError("unexpected forecast table header", line=1, path=str(path))
        for i, row in enumerate(reader, start=2):
            try:
                metal, model, origin, h, g, lv, y = row
                out.append(ForecastRecord(metal, model, months.parse(origin), int(h),
                                          float(g) if g else math.nan, float(lv), float(y) if y else None))
            except ValueError as exc:
                raise ParseError(f"bad forecast row: {exc}", line=i, path=str(path)) from None
    return out
