"""Ragged-edge nowcasting: univariate models and the six-model horse race.

Models operate on the level of each series in original units and iterate
their one-step recursion for horizons 1..3.
"""

from __future__ import annotations

import csv
import json
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import months
from ._gibbs import KSC_MEAN, KSC_PROB, KSC_VAR, ar1_gibbs
from .errors import (
    ConfigError,
    DegenerateTestError,
    InsufficientDataError,
    MetalcastError,
    ModelError,
    SamplerError,
)
from .evaluation import DMResult, dm_test, rmsfe
from .regression import lag_matrix, ols, require_obs
from .vintages import RealTimePanel

FAMILIES = ("RWD", "AR", "ARAIC", "BAR", "BARSV", "BARSVO")
LABELS = {
    "RWD": "RW-D",
    "AR": "AR(1)",
    "ARAIC": "AR(AIC)",
    "BAR": "BAR(1)",
    "BARSV": "BAR(1) - SV",
    "BARSVO": "BAR(1) - SVo",
}
MAX_NOWCAST_HORIZON = 3

# hyperparameters of the volatility block (standardised data)
SV_PRIOR = {"a_om": 5.0, "b_om": 0.2, "h0_mean": 0.0, "h0_var": 10.0, "offset": 1e-4}


@dataclass(frozen=True)
class NowcastModelSpec:
    family: str = "RWD"
    max_lag: int = 6
    draws: int = 2000
    burn_in: int = 1000
    seed: int | None = None
    prior_coef_var: float = 10.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown nowcast family {self.family!r}")
        if self.max_lag < 1:
            raise ConfigError("max_lag must be >= 1")
        if self.bayesian:
            if not self.draws > self.burn_in >= 0:
                raise ConfigError("need draws > burn_in >= 0")
            if self.seed is None:
                raise ConfigError(f"{self.family} requires a seed")
        if not self.prior_coef_var > 0:
            raise ConfigError("prior_coef_var must be positive")

    @property
    def bayesian(self) -> bool:
        return self.family.startswith("BAR")

    @property
    def label(self) -> str:
        return LABELS[self.family]


def stream_seed(seed: int, *keys) -> np.random.SeedSequence:
    """RNG stream keyed by task identity (strings hashed with CRC32)."""
    entropy = [int(seed)]
    for k in keys:
        entropy.append(zlib.crc32(k.encode()) if isinstance(k, str) else int(k))
    return np.random.SeedSequence(entropy)


# ---------------------------------------------------------------------------
# Frequentist models


def rwd_forecast(history, h: int) -> float:
    """Random walk with drift: y_T + h * mean first difference."""
    y = np.asarray(history, dtype=float)
    if y.size < 2:
        raise InsufficientDataError("random walk with drift needs at least 2 observations")
    drift = (y[-1] - y[0]) / (y.size - 1)
    return float(y[-1] + h * drift)


@dataclass(frozen=True)
class ARFit:
    intercept: float
    coefs: np.ndarray
    sigma2: float
    nobs: int

    @property
    def p(self) -> int:
        return len(self.coefs)

    def forecast(self, history, horizon: int) -> np.ndarray:
        """Iterate the fitted recursion from the end of ``history``."""
        state = list(np.asarray(history, dtype=float)[-self.p:][::-1])
        out = np.empty(horizon)
        for j in range(horizon):
            nxt = self.intercept + float(np.dot(self.coefs, state))
            out[j] = nxt
            state = [nxt] + state[:-1]
        return out


def _ar_design(y: np.ndarray, p: int, skip: int) -> tuple[np.ndarray, np.ndarray]:
    rows = np.arange(skip, len(y))
    X = np.column_stack([np.ones(len(rows)), lag_matrix(y, p, rows - 1)])
    return X, y[rows]


def ar_ols_fit(history, p: int) -> ARFit:
    y = np.asarray(history, dtype=float)
    if p < 1:
        raise ValueError("AR order must be >= 1")
    require_obs(len(y), p, f"AR({p})")
    X, target = _ar_design(y, p, p)
    coef, resid = ols(X, target)
    return ARFit(float(coef[0]), coef[1:], float(resid @ resid / len(resid)), len(resid))


def select_lag_aic(history, p_max: int) -> int:
    """Lag in 1..p_max minimising T*ln(s2) + 2(p+1) on a common sample."""
    y = np.asarray(history, dtype=float)
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    require_obs(len(y), p_max, "AR lag selection")
    best_p, best_aic = 1, math.inf
    for p in range(1, p_max + 1):
        X, target = _ar_design(y, p, p_max)
        _, resid = ols(X, target)
        n = len(resid)
        s2 = resid @ resid / n
        aic = n * math.log(s2) + 2 * (p + 1) if s2 > 0 else -math.inf
        if aic < best_aic:
            best_p, best_aic = p, aic
    return best_p


# ---------------------------------------------------------------------------
# Bayesian AR(1) family


@dataclass(frozen=True)
class BayesianNowcast:
    """Posterior summaries; ``log_vol`` and ``outlier_prob`` are indexed like the
    history (entry 0 is NaN because the first observation has no residual)."""

    forecasts: np.ndarray
    forecast_sd: np.ndarray
    coef_mean: np.ndarray
    coef_sd: np.ndarray
    log_vol: np.ndarray
    outlier_prob: np.ndarray | None
    draws: int


def _bayes_ar1(history, spec: NowcastModelSpec, sv: bool, outliers: bool, horizon: int,
               rng: np.random.Generator | None) -> BayesianNowcast:
    y = np.asarray(history, dtype=float)
    if y.size < 12:
        raise InsufficientDataError(f"{spec.family} needs at least 12 observations")
    loc = float(y.mean())
    scale = float(y.std())
    n = y.size - 1
    if scale == 0.0:
        const = np.full(horizon, y[-1])
        pad = np.concatenate(([np.nan], np.zeros(n)))
        return BayesianNowcast(const, np.zeros(horizon), np.array([y[-1], 0.0]), np.zeros(2),
                               np.concatenate(([np.nan], np.full(n, -np.inf))), pad if outliers else None, spec.draws)
    z = (y - loc) / scale
    dz = np.diff(z)
    a0 = 3.0
    b0 = 2.0 * max(float(dz.var()), 1e-8)
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    iters = spec.burn_in + spec.draws
    nrm_beta = rng.standard_normal((iters, 2))
    if sv:
        gam_sig = np.ones(iters)
        u_mix = rng.random((iters, n))
        nrm_h = rng.standard_normal((iters, n))
        nrm_h0 = rng.standard_normal(iters)
        gam_om = rng.standard_gamma(SV_PRIOR["a_om"] + 0.5 * n, iters)
        u_out = rng.random((iters, n)) if outliers else np.zeros((1, 1))
    else:
        gam_sig = rng.standard_gamma(a0 + 0.5 * n, iters)
        u_mix = nrm_h = u_out = np.zeros((1, 1))
        nrm_h0 = gam_om = np.zeros(1)
    try:
        fc_sum, fc_sq, b_sum, b_sq, h_sum, out_sum = ar1_gibbs(
            z, spec.prior_coef_var, a0, b0, sv, outliers, spec.burn_in, spec.draws, horizon,
            nrm_beta, gam_sig, u_mix, nrm_h, nrm_h0, gam_om, u_out,
            SV_PRIOR["a_om"], SV_PRIOR["b_om"], SV_PRIOR["h0_mean"], SV_PRIOR["h0_var"], SV_PRIOR["offset"],
            loc, scale, KSC_PROB, KSC_MEAN, KSC_VAR,
        )
    except (ValueError, ZeroDivisionError) as exc:
        raise SamplerError(str(exc)) from None
    d = spec.draws
    mean = fc_sum / d
    coef = b_sum / d
    if not np.all(np.isfinite(mean)):
        raise SamplerError("non-finite posterior forecast")
    return BayesianNowcast(
        forecasts=mean,
        forecast_sd=np.sqrt(np.maximum(fc_sq / d - mean**2, 0.0)),
        coef_mean=coef,
        coef_sd=np.sqrt(np.maximum(b_sq / d - coef**2, 0.0)),
        log_vol=np.concatenate(([np.nan], h_sum / d)),
        outlier_prob=np.concatenate(([np.nan], out_sum / d)) if outliers else None,
        draws=d,
    )


def bar_posterior(history, spec: NowcastModelSpec, horizon: int = MAX_NOWCAST_HORIZON,
                  rng: np.random.Generator | None = None) -> BayesianNowcast:
    if spec.family != "BAR":
        raise ConfigError(f"bar_posterior called with family {spec.family}")
    return _bayes_ar1(history, spec, False, False, horizon, rng)


def bar_sv_posterior(history, spec: NowcastModelSpec, horizon: int = MAX_NOWCAST_HORIZON,
                     rng: np.random.Generator | None = None) -> BayesianNowcast:
    if spec.family != "BARSV":
        raise ConfigError(f"bar_sv_posterior called with family {spec.family}")
    return _bayes_ar1(history, spec, True, False, horizon, rng)


def bar_svo_posterior(history, spec: NowcastModelSpec, horizon: int = MAX_NOWCAST_HORIZON,
                      rng: np.random.Generator | None = None) -> BayesianNowcast:
    if spec.family != "BARSVO":
        raise ConfigError(f"bar_svo_posterior called with family {spec.family}")
    return _bayes_ar1(history, spec, True, True, horizon, rng)


def nowcast_forecast(history, spec: NowcastModelSpec, horizon: int,
                     rng: np.random.Generator | None = None) -> np.ndarray:
    """Forecasts for steps 1..horizon past the end of ``history``."""
    y = np.asarray(history, dtype=float)
    fam = spec.family
    if fam == "RWD":
        return np.array([rwd_forecast(y, h) for h in range(1, horizon + 1)])
    if fam == "AR":
        return ar_ols_fit(y, 1).forecast(y, horizon)
    if fam == "ARAIC":
        return ar_ols_fit(y, select_lag_aic(y, spec.max_lag)).forecast(y, horizon)
    sv = fam in ("BARSV", "BARSVO")
    return _bayes_ar1(y, spec, sv, fam == "BARSVO", horizon, rng).forecasts


# ---------------------------------------------------------------------------
# Gap filling


@dataclass(frozen=True)
class Snapshot:
    """Every variable observed (or nowcast) through ``as_of``."""

    as_of: int
    start: dict[str, int]
    values: dict[str, np.ndarray]
    filled: dict[str, int]

    def series(self, var: str) -> dict[int, float]:
        v = self.values[var]
        return dict(zip(months.span(self.start[var], self.as_of), v.tolist()))


def fill_missing_tail(panel: RealTimePanel, as_of: int, model: NowcastModelSpec | None = None,
                      window: int | None = None, seed: int | None = None,
                      variables: Iterable[str] | None = None) -> Snapshot:
    """Replace each variable's missing trailing months by model nowcasts."""
    model = model or NowcastModelSpec("RWD")
    seed = model.seed if seed is None else seed
    starts, values, filled = {}, {}, {}
    for var in (variables if variables is not None else panel.variables):
        start, hist = panel.history(var, as_of)
        missing = months.diff(as_of, panel.last_observed(var, as_of))
        if missing:
            hw = hist[-window:] if window else hist
            rng = np.random.default_rng(stream_seed(seed, var, as_of)) if model.bayesian else None
            try:
                fc = nowcast_forecast(hw, model, missing, rng)
            except MetalcastError as exc:
                raise ModelError(var, exc) from exc
            full = np.concatenate([hist, fc])
        else:
            full = hist.copy()
        full.flags.writeable = False
        starts[var], values[var], filled[var] = start, full, missing
    return Snapshot(as_of, starts, values, filled)


# ---------------------------------------------------------------------------
# Horse race


@dataclass(frozen=True)
class NowcastCell:
    variable: str
    horizon: int
    model: str
    rmsfe: float
    value: float
    is_ratio: bool
    n: int
    dm: DMResult | None = None

    @property
    def stars(self) -> str:
        return self.dm.stars if self.dm is not None else ""

    def formatted(self) -> str:
        return f"{self.value:.2f}{self.stars}" if self.is_ratio else f"{self.value:.2f}"


@dataclass
class NowcastReport:
    models: tuple[str, ...]
    variables: tuple[str, ...]
    cells: dict[tuple[str, int, str], NowcastCell] = field(default_factory=dict)
    max_horizon: int = MAX_NOWCAST_HORIZON

    def horizons(self, var: str) -> list[int]:
        return sorted({h for (v, h, _) in self.cells if v == var})

    def header(self) -> list[str]:
        return ["ID", "Horizon"] + [LABELS[m] for m in self.models]

    def rows(self) -> list[list[str]]:
        out = []
        for var in self.variables:
            for h in range(1, self.max_horizon + 1):
                row = [var, str(h)]
                for m in self.models:
                    cell = self.cells.get((var, h, m))
                    row.append(cell.formatted() if cell else "-")
                out.append(row)
        return out

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            w.writerows(self.rows())

    def to_dict(self) -> dict:
        cells = []
        for (var, h, m), c in sorted(self.cells.items(), key=lambda kv: (self.variables.index(kv[0][0]), kv[0][1], self.models.index(kv[0][2]))):
            cells.append({
                "variable": var, "horizon": h, "model": LABELS[m], "rmsfe": c.rmsfe,
                "value": c.value, "is_ratio": c.is_ratio, "stars": c.stars, "n": c.n,
                "dm_statistic": None if c.dm is None else c.dm.statistic,
            })
        return {"models": [LABELS[m] for m in self.models], "variables": list(self.variables), "cells": cells}

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _race_variable(panel: RealTimePanel, var: str, models: Sequence[NowcastModelSpec], window: int | None,
                   first: int, last: int, seed: int, min_vintages: int) -> dict:
    rel = panel.releases[var]
    lag = panel.meta[var].publication_lag
    lo = max(first, rel.first_vintage)
    hi = min(last, rel.last_vintage)
    errors: dict[tuple[int, str], list[float]] = {}
    n_eval = 0
    for as_of in (months.span(lo, hi) if lo <= hi else []):
        _, hist = panel.history(var, as_of)
        if window and len(hist) < window:
            continue
        hw = hist[-window:] if window else hist
        truth_idx = len(hist) + np.arange(lag)
        available = truth_idx < len(rel.values)
        if not available[0]:
            continue
        n_eval += 1
        for spec in models:
            rng = np.random.default_rng(stream_seed(seed, var, as_of, spec.family)) if spec.bayesian else None
            try:
                fc = nowcast_forecast(hw, spec, lag, rng)
            except MetalcastError as exc:
                raise ModelError(f"{var}/{spec.family}@{months.fmt(as_of)}", exc) from exc
            for h in range(1, lag + 1):
                if available[h - 1]:
                    errors.setdefault((h, spec.family), []).append(fc[h - 1] - rel.values[truth_idx[h - 1]])
    if n_eval < min_vintages:
        raise InsufficientDataError(f"{var}: {n_eval} evaluation vintages, need {min_vintages}")
    return {k: np.array(v) for k, v in errors.items()}


def nowcast_horse_race(panel: RealTimePanel, models: Sequence[NowcastModelSpec], window: int | None = 120,
                       variables: Iterable[str] | None = None, first: int | None = None, last: int | None = None,
                       seed: int = 0, min_vintages: int = 24, workers: int = 1) -> NowcastReport:
    """RMSFE of each model's nowcasts against later first-release values.

    RW-D is always the benchmark: its cells hold RMSFE, others the ratio to it.
    """
    families = [m.family for m in models]
    if len(set(families)) != len(families):
        raise ConfigError("duplicated nowcast model family")
    if "RWD" not in families:
        models = [NowcastModelSpec("RWD")] + list(models)
    models = sorted(models, key=lambda m: FAMILIES.index(m.family))
    if variables is None:
        variables = [v for v in panel.variables if panel.meta[v].publication_lag > 0]
    variables = tuple(variables)
    first = panel.span[0] if first is None else first
    last = panel.span[1] if last is None else last
    args = [(panel, v, models, window, first, last, seed, min_vintages) for v in variables]
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_race_variable, *zip(*args)))
    else:
        results = [_race_variable(*a) for a in args]

    report = NowcastReport(tuple(m.family for m in models), variables)
    for var, errs in zip(variables, results):
        for h in sorted({h for h, _ in errs}):
            bench = errs[(h, "RWD")]
            base = rmsfe(bench)
            for spec in models:
                e = errs[(h, spec.family)]
                r = rmsfe(e)
                if spec.family == "RWD":
                    report.cells[(var, h, "RWD")] = NowcastCell(var, h, "RWD", r, r, False, len(e))
                    continue
                try:
                    dm = dm_test(e * e, bench * bench, h)
                except (DegenerateTestError, InsufficientDataError):
                    dm = None
                ratio = r / base if base > 0 else (1.0 if r == 0 else math.inf)
                report.cells[(var, h, spec.family)] = NowcastCell(var, h, spec.family, r, ratio, True, len(e), dm)
    return report
