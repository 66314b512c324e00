"""Rolling-origin backtest: nowcast-fill, forecast, evaluate, pool.

Each forecast origin is an independent task (it only reads the immutable panel)
so the fan-out can use a process pool; results are sorted before evaluation,
which makes the output independent of the worker count.
"""

from __future__ import annotations

import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import months
from .config import BacktestConfig
from .errors import ConfigError, MetalcastError
from .evaluation import LossMatrix, MCSResult, RatioEntry, RatioTable, cumulative_ratio_path, mcs_procedure, ratio_table
from .model_free import (
    FUTURES_MATURITIES,
    SURVEY_HORIZONS,
    FixedEventSurvey,
    FuturesQuote,
    cpi_index_projection,
    fixed_event_to_fixed_horizon,
    futures_implied_real_price,
    read_futures_csv,
    read_survey_csv,
)
from .models import ForecastRecord, ModelSpec, WindowSnapshot, forecast_growth, level_fan
from .nowcast import NowcastModelSpec, NowcastReport, Snapshot, fill_missing_tail, nowcast_horse_race
from .pooling import PooledForecast, PoolingSpec, pool_mcs
from .vintages import Manifest, RealTimePanel, load_manifest, transform_array

FUTURES_ID = "Futures"
SURVEY_ID = "Consensus"


@dataclass(frozen=True)
class ErrorEntry:
    metal: str
    model: str
    origin: int
    horizons: str
    message: str

    def line(self) -> str:
        return f"{self.metal}\t{self.model}\t{months.fmt(self.origin)}\t{self.horizons}\t{self.message}"


@dataclass
class BacktestReport:
    config: BacktestConfig
    origins: tuple[int, ...]
    model_ids: tuple[str, ...]
    forecasts: list[ForecastRecord]
    errors: list[ErrorEntry]
    ratio_tables: dict[tuple[str, int], RatioTable] = field(default_factory=dict)
    mcs: dict[tuple[str, int], MCSResult] = field(default_factory=dict)
    pooled: dict[tuple[str, int, str], list[PooledForecast]] = field(default_factory=dict)
    pool_tables: dict[str, dict[str, dict[int, RatioEntry]]] = field(default_factory=dict)
    cumpaths: dict[tuple[str, int], dict] = field(default_factory=dict)
    nowcast_race: NowcastReport | None = None

    def records(self, metal: str | None = None, model: str | None = None, horizon: int | None = None):
        return [r for r in self.forecasts
                if (metal is None or r.metal == metal) and (model is None or r.model == model)
                and (horizon is None or r.horizon == horizon)]


# ---------------------------------------------------------------------------
# Data context


@dataclass(frozen=True)
class _Context:
    config: BacktestConfig
    manifest: Manifest
    panel: RealTimePanel
    futures: dict[tuple[str, int, int], FuturesQuote]
    surveys: dict[tuple[str, int], FixedEventSurvey]


def _load_context(cfg: BacktestConfig) -> _Context:
    man = load_manifest(cfg.manifest)
    if man.cpi is None or man.cpi not in man.series:
        raise ConfigError("manifest must declare the CPI series")
    for m in cfg.metals:
        if m not in man.metals:
            raise ConfigError(f"manifest has no entry for metal {m!r}")
    panel = man.load_panel()
    futures = {}
    if cfg.futures and man.futures is not None:
        for q in read_futures_csv(man.futures):
            futures[(q.metal, q.quote_date, q.maturity)] = q
    surveys = {}
    if cfg.surveys:
        for m, path in man.surveys.items():
            for s in read_survey_csv(path):
                surveys[(m, s.survey_date)] = s
    return _Context(cfg, man, panel, futures, surveys)


def origin_dates(cfg: BacktestConfig, panel: RealTimePanel) -> list[int]:
    last = cfg.last_origin if cfg.last_origin is not None else panel.span[1]
    if cfg.first_origin < panel.span[0] or last > panel.span[1]:
        raise ConfigError(
            f"origins {months.fmt(cfg.first_origin)}..{months.fmt(last)} outside panel span "
            f"{months.fmt(panel.span[0])}..{months.fmt(panel.span[1])}")
    return months.span(cfg.first_origin, last)


def _aligned(start: int, values: np.ndarray, first: int, last: int) -> np.ndarray:
    """Values on span(first, last); NaN where the series has no entry."""
    n = months.diff(last, first) + 1
    out = np.full(n, np.nan)
    off = months.diff(first, start)
    lo = max(0, -off)
    hi = min(n, len(values) - off)
    if hi > lo:
        out[lo:hi] = values[off + lo: off + hi]
    return out


def _real_price(ctx: _Context, snap: Snapshot, metal: str, cpi_base: float) -> tuple[int, np.ndarray]:
    pid = ctx.manifest.metals[metal][0]
    cpi_id = ctx.manifest.cpi
    start = snap.start[pid]
    nominal = snap.values[pid]
    cpi = _aligned(snap.start[cpi_id], snap.values[cpi_id], start, snap.as_of)
    return start, nominal * cpi_base / cpi


def build_window(ctx: _Context, snap: Snapshot, metal: str, transformed: dict[str, tuple[int, np.ndarray]],
                 cpi_base: float) -> WindowSnapshot:
    cfg = ctx.config
    T = snap.as_of
    first = months.add(T, -cfg.window + 1)
    pid, inv = ctx.manifest.metals[metal]
    pstart, real = _real_price(ctx, snap, metal, cpi_base)
    if months.diff(first, pstart) < 0:
        raise MetalcastError(f"{metal}: price history starts after the window")
    target = _aligned(pstart, transform_array(real, "DLog"), first, T)
    preds = {v: _aligned(s, x, first, T) for v, (s, x) in transformed.items() if v != pid}
    groups = {v: ctx.panel.meta[v].group for v in preds}
    roles = {"inventory": inv}
    if ctx.manifest.demand:
        roles["demand"] = ctx.manifest.demand
    return WindowSnapshot(tuple(months.span(first, T)), target, preds, groups, float(real[-1]), pid, roles)


def _model_free(ctx: _Context, metal: str, T: int, cpi_win: np.ndarray, cpi_base: float,
                horizons: Sequence[int]) -> list[tuple[str, int, float]]:
    out = []
    cfg = ctx.config
    for h in FUTURES_MATURITIES:
        q = ctx.futures.get((metal, T, h))
        if q is None or h not in horizons:
            continue
        proj = cpi_index_projection(cpi_win, h)
        out.append((FUTURES_ID, h, futures_implied_real_price(q, proj, cpi_base)))
    survey = ctx.surveys.get((metal, T))
    if survey is not None:
        for h in SURVEY_HORIZONS:
            if h not in horizons:
                continue
            y = fixed_event_to_fixed_horizon(survey, h)
            if cfg.survey_nominal:
                y = y / (cpi_index_projection(cpi_win, h).projected / cpi_base)
            out.append((SURVEY_ID, h, y))
    return out


def _span_text(horizons: Sequence[int]) -> str:
    return f"{horizons[0]}-{horizons[-1]}" if len(horizons) > 1 else str(horizons[0])


def run_origin(ctx: _Context, T: int) -> tuple[list[ForecastRecord], list[ErrorEntry]]:
    """All models and metals at one forecast origin."""
    cfg = ctx.config
    models = cfg.with_models()
    horizons = cfg.horizons
    hmax = max(horizons)
    records: list[ForecastRecord] = []
    errors: list[ErrorEntry] = []
    span_txt = _span_text(horizons)
    try:
        snap = fill_missing_tail(ctx.panel, T, cfg.nowcast, window=cfg.nowcast_window, seed=cfg.seed)
        cpi_id = ctx.manifest.cpi
        cpi_full = snap.values[cpi_id]
        base_pos = months.diff(cfg.base_month, snap.start[cpi_id])
        if not 0 <= base_pos < len(cpi_full):
            raise MetalcastError(f"CPI vintage at {months.fmt(T)} does not cover base month")
        cpi_base = float(cpi_full[base_pos])
        cpi_win = cpi_full[-cfg.window:]
        transformed = {v: (snap.start[v], transform_array(snap.values[v], ctx.panel.meta[v].transform))
                       for v in ctx.panel.variables}
    except MetalcastError as exc:
        for metal in cfg.metals:
            for spec in models:
                errors.append(ErrorEntry(metal, spec.name, T, span_txt, f"data: {exc}"))
        return records, errors

    for metal in cfg.metals:
        try:
            window = build_window(ctx, snap, metal, transformed, cpi_base)
        except MetalcastError as exc:
            for spec in models:
                errors.append(ErrorEntry(metal, spec.name, T, span_txt, f"data: {exc}"))
            continue
        for spec in models:
            try:
                g = forecast_growth(window, spec, range(1, hmax + 1))
                lv = level_fan(window.price_level, g)
                if not np.all(np.isfinite(lv)) or np.any(lv <= 0):
                    raise MetalcastError("non-finite level forecast")
            except (MetalcastError, ValueError, np.linalg.LinAlgError) as exc:
                errors.append(ErrorEntry(metal, spec.name, T, span_txt, f"{type(exc).__name__}: {exc}"))
                continue
            for h in horizons:
                records.append(ForecastRecord(metal, spec.name, T, h, float(g[h - 1]), float(lv[h - 1])))
        try:
            for mid, h, level in _model_free(ctx, metal, T, cpi_win, cpi_base, horizons):
                records.append(ForecastRecord(metal, mid, T, h, math.nan, float(level)))
        except MetalcastError as exc:
            errors.append(ErrorEntry(metal, "model-free", T, span_txt, f"{type(exc).__name__}: {exc}"))
    return records, errors


_WORKER_CTX: _Context | None = None


def _init_worker(ctx: _Context) -> None:
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _run_in_worker(T: int):
    return run_origin(_WORKER_CTX, T)


# ---------------------------------------------------------------------------
# Realizations and evaluation


def realized_levels(ctx: _Context, metal: str) -> dict[int, float]:
    """Real price path from final data: nominal deflated with the last CPI vintage."""
    pid = ctx.manifest.metals[metal][0]
    cpi = ctx.panel.first_release(ctx.manifest.cpi)
    if ctx.config.base_month not in cpi:
        raise ConfigError("final CPI does not cover the base month")
    base = cpi[ctx.config.base_month]
    return {d: p * base / cpi[d] for d, p in ctx.panel.first_release(pid).items() if d in cpi}


def attach_realized(records: list[ForecastRecord], truth: dict[str, dict[int, float]]) -> list[ForecastRecord]:
    out = []
    for r in records:
        y = truth.get(r.metal, {}).get(months.add(r.origin, r.horizon))
        out.append(ForecastRecord(r.metal, r.model, r.origin, r.horizon, r.growth, r.level, y))
    return out


def _sort_key(model_order: dict[str, int]):
    return lambda r: (r.metal, r.horizon, model_order.get(r.model, len(model_order)), r.model, r.origin)


def _stream(records: list[ForecastRecord], origins: Sequence[int]) -> tuple[dict[str, np.ndarray], np.ndarray]:
    pos = {T: i for i, T in enumerate(origins)}
    fc: dict[str, np.ndarray] = {}
    y = np.full(len(origins), np.nan)
    for r in records:
        arr = fc.setdefault(r.model, np.full(len(origins), np.nan))
        arr[pos[r.origin]] = r.level
        if r.realized is not None:
            y[pos[r.origin]] = r.realized
    return fc, y


def _loss_matrix(fc: dict[str, np.ndarray], y: np.ndarray, origins: Sequence[int], ids: Sequence[str], h: int) -> LossMatrix:
    keep = ~np.isnan(y)
    dates = tuple(T for T, k in zip(origins, keep) if k)
    E = np.column_stack([fc[m][keep] - y[keep] for m in ids]) if ids else np.empty((len(dates), 0))
    return LossMatrix.from_errors(dates, ids, E, h)


def evaluate(report: BacktestReport) -> BacktestReport:
    """Ratio tables, MCS, pooling and cumulative paths for every (metal, horizon)."""
    cfg = report.config
    ev = cfg.evaluation
    origins = report.origins
    bench = ev.benchmark
    pooled_records: list[ForecastRecord] = []
    for metal in cfg.metals:
        table_rows: dict[str, dict[int, RatioEntry]] = {p.label: {} for p in cfg.pooling}
        for h in cfg.horizons:
            recs = [r for r in report.forecasts if r.metal == metal and r.horizon == h and not r.model.startswith("pool_")]
            fc, y = _stream(recs, origins)
            ids = [m for m in report.model_ids if m in fc] + [m for m in (FUTURES_ID, SURVEY_ID) if m in fc]
            if bench not in fc or not np.any(~np.isnan(y)):
                continue
            lm = _loss_matrix(fc, y, origins, ids, h)
            if len(lm.dates) == 0:
                continue
            report.ratio_tables[(metal, h)] = ratio_table(lm, bench, ev.dm_variance)
            complete = lm.complete()
            if len(complete.dates) >= 2 * ev.mcs_block:
                report.mcs[(metal, h)] = mcs_procedure(complete, B=ev.mcs_B, block=ev.mcs_block, alphas=ev.mcs_alphas,
                                                       seed=cfg.seed, statistic=ev.mcs_statistic, workers=1)
            if h in ev.cumpath_horizons:
                report.cumpaths[(metal, h)] = cumulative_ratio_path(lm, bench, ev.cumpath_skip)

            members = {m: fc[m] for m in ids}
            cache: dict = {}
            pool_cols = {}
            for spec in cfg.pooling:
                stream = pool_mcs(origins, members, y, h, spec, cache)
                report.pooled[(metal, h, spec.model_id)] = stream
                col = np.full(len(origins), np.nan)
                pos = {T: i for i, T in enumerate(origins)}
                for p in stream:
                    col[pos[p.origin]] = p.level
                    realized = None if math.isnan(y[pos[p.origin]]) else float(y[pos[p.origin]])
                    pooled_records.append(ForecastRecord(metal, spec.model_id, p.origin, h, math.nan, p.level, realized))
                pool_cols[spec.model_id] = col
            pool_lm = _loss_matrix({**pool_cols, bench: fc[bench]}, y, origins, [bench] + list(pool_cols), h)
            pt = ratio_table(pool_lm, bench, ev.dm_variance)
            for spec in cfg.pooling:
                if spec.model_id in pt.entries:
                    table_rows[spec.label][h] = pt.entries[spec.model_id]
        report.pool_tables[metal] = table_rows
    order = {m: i for i, m in enumerate(report.model_ids + (FUTURES_ID, SURVEY_ID) + tuple(p.model_id for p in cfg.pooling))}
    report.forecasts = sorted([r for r in report.forecasts if not r.model.startswith("pool_")] + pooled_records,
                              key=_sort_key(order))
    return report


def run_nowcast_race(ctx: _Context, origins: Sequence[int]) -> NowcastReport:
    cfg = ctx.config
    specs = [NowcastModelSpec(f, draws=cfg.race_draws, burn_in=cfg.race_burn_in, seed=cfg.seed)
             if f.startswith("BAR") else NowcastModelSpec(f) for f in cfg.race_models]
    return nowcast_horse_race(ctx.panel, specs, window=cfg.race_window, first=origins[0], last=origins[-1],
                              seed=cfg.seed, min_vintages=min(24, len(origins) // 2), workers=cfg.workers)


def run_backtest(cfg: BacktestConfig, race: bool = True) -> BacktestReport:
    """Forecast every (metal, model, origin, horizon) cell, then evaluate."""
    ctx = _load_context(cfg)
    origins = origin_dates(cfg, ctx.panel)
    models = cfg.with_models()
    if cfg.workers > 1 and len(origins) > 1:
        try:
            mpctx = mp.get_context("fork")
        except ValueError:
            mpctx = None
        with ProcessPoolExecutor(max_workers=cfg.workers, mp_context=mpctx,
                                 initializer=_init_worker, initargs=(ctx,)) as pool:
            results = list(pool.map(_run_in_worker, origins, chunksize=max(1, len(origins) // (4 * cfg.workers))))
    else:
        results = [run_origin(ctx, T) for T in origins]
    records = [r for res, _ in results for r in res]
    errors = sorted((e for _, errs in results for e in errs), key=lambda e: (e.metal, e.model, e.origin))
    truth = {m: realized_levels(ctx, m) for m in cfg.metals}
    records = attach_realized(records, truth)
    report = BacktestReport(cfg, tuple(origins), tuple(m.name for m in models), records, errors)
    if race and cfg.race_models:
        report.nowcast_race = run_nowcast_race(ctx, origins)
    return evaluate(report)
