"""Forecast combination: equal weights, MCS-screened averages and top-2 averages."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import months
from .errors import ConfigError, EmptySampleError
from .evaluation import LossMatrix, RatioEntry, mcs_procedure

VARIANTS = ("All", "SSM", "Top2")
TABLE_HORIZONS = (1, 3, 6, 9, 12, 15, 18, 21, 24)


@dataclass(frozen=True)
class PoolingSpec:
    warmup: int = 12
    screen_window: int = 12
    alpha: float = 0.25
    variant: str = "SSM"
    B: int = 1000
    block: int = 6
    seed: int = 0
    statistic: str = "Tmax"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown pooling variant {self.variant!r}")
        if not 0 < self.alpha < 1:
            raise ConfigError("pooling alpha must lie in (0, 1)")
        if self.screen_window < 2 or self.warmup < self.screen_window:
            raise ConfigError("pooling needs warmup >= screen_window >= 2")
        if self.screen_window < 2 * self.block:
            raise ConfigError("screen window must hold at least two bootstrap blocks")

    @property
    def model_id(self) -> str:
        if self.variant == "All":
            return "pool_all"
        if self.variant == "Top2":
            return "pool_top2"
        return f"pool_ssm{round(self.alpha * 100):d}"

    @property
    def label(self) -> str:
        if self.variant == "All":
            return "All"
        if self.variant == "Top2":
            return "Top 2"
        return f"SSM{round(self.alpha * 100):d}"


@dataclass(frozen=True)
class PooledForecast:
    origin: int
    horizon: int
    model: str
    level: float
    members: tuple[str, ...]
    fallback: str | None = None


def pool_average(forecasts: Sequence[float] | Mapping[str, float]) -> float:
    """Arithmetic mean, clipped to the member range against rounding drift."""
    vals = list(forecasts.values()) if isinstance(forecasts, Mapping) else list(forecasts)
    if not vals:
        raise EmptySampleError("nothing to pool")
    arr = np.asarray(vals, dtype=float)
    m = math.fsum(arr) / arr.size
    return float(min(max(m, arr.min()), arr.max()))


def _rank_top2(names: Sequence[str], pvalues: Mapping[str, float], rmspe: Mapping[str, float]) -> list[str]:
    return sorted(names, key=lambda m: (-pvalues[m], rmspe[m], m))[:2]


def pool_mcs(origins: Sequence[int], forecasts: Mapping[str, np.ndarray], realized: np.ndarray,
             horizon: int, spec: PoolingSpec, cache: dict | None = None) -> list[PooledForecast]:
    """Pooled forecasts for one (metal, horizon) stream, origin by origin.

    ``forecasts`` maps model ids to level forecasts aligned with ``origins``
    (NaN where a model failed); ``realized`` holds the realized level for each
    origin. At origin T only origins <= T - h enter the screen, since later
    realizations are not yet observed. ``cache`` lets variants that share a
    screen (SSM and Top2) reuse the MCS run.
    """
    origins = list(origins)
    names = sorted(forecasts)
    F = np.column_stack([np.asarray(forecasts[m], dtype=float) for m in names]) if names else np.empty((len(origins), 0))
    y = np.asarray(realized, dtype=float)
    out: list[PooledForecast] = []
    for i, T in enumerate(origins):
        have = [j for j in range(len(names)) if not math.isnan(F[i, j])]
        if not have:
            continue
        every = {names[j]: F[i, j] for j in have}
        if spec.variant == "All" or i < spec.warmup:
            out.append(PooledForecast(T, horizon, spec.model_id, pool_average(every), tuple(every)))
            continue
        past = [k for k in range(i) if origins[k] <= months.add(T, -horizon) and not math.isnan(y[k])]
        rows = past[-spec.screen_window:]
        cand = [j for j in have if len(rows) and not np.isnan(F[rows, j]).any()]
        if len(rows) < spec.screen_window or not cand:
            out.append(PooledForecast(T, horizon, spec.model_id, pool_average(every), tuple(every), "short-screen"))
            continue
        err = F[np.ix_(rows, cand)] - y[rows, None]
        lm = LossMatrix(tuple(origins[k] for k in rows), tuple(names[j] for j in cand), err * err, horizon)
        key = (tuple(rows), lm.models, spec.B, spec.block, spec.seed, spec.statistic)
        res = cache.get(key) if cache is not None else None
        if res is None:
            res = mcs_procedure(lm, B=spec.B, block=spec.block, alphas=(spec.alpha,), seed=spec.seed,
                                statistic=spec.statistic)
            if cache is not None:
                cache[key] = res
        ssm = list(res.ssm(spec.alpha))
        fallback = None
        members = ssm
        if spec.variant == "Top2":
            if len(ssm) >= 2:
                rmspe = {names[j]: float(np.sqrt(np.mean(err[:, c] ** 2))) for c, j in enumerate(cand)}
                members = _rank_top2(ssm, res.pvalues, rmspe)
            else:
                fallback = "top2-ssm"
        level = pool_average([every[m] for m in members])
        out.append(PooledForecast(T, horizon, spec.model_id, level, tuple(members), fallback))
    return out


def write_pooling_table(path: str | Path, metal: str, rows: Mapping[str, Mapping[int, RatioEntry]],
                        horizons: Sequence[int] = TABLE_HORIZONS) -> None:
    """Ratio-to-benchmark table with one row per pooling variant."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metal", "pool"] + [f"h{h}" for h in horizons])
        for label, cells in rows.items():
            w.writerow([metal, label] + [cells[h].formatted() if h in cells else "-" for h in horizons])
