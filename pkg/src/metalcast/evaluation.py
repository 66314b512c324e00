"""Forecast evaluation: RMSFE, ratio tables, Diebold-Mariano, Model Confidence Set.

Loss matrices hold squared prediction errors in level units. Missing cells
(model without a forecast at that date) are NaN.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import (
    DegenerateTestError,
    DimensionError,
    EmptySampleError,
    InsufficientDataError,
    MetalcastError,
)

NORMAL_CRITICAL = ((2.576, "***", 0.01), (1.960, "**", 0.05), (1.645, "*", 0.10))
BOOT_CHUNK = 250


def rmsfe(errors) -> float:
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise EmptySampleError("RMSFE of an empty sample")
    return float(np.sqrt(np.mean(e * e)))


def _rmse_from_losses(losses: np.ndarray) -> float:
    return float(np.sqrt(np.sum(losses) / losses.size))


@dataclass(frozen=True)
class LossMatrix:
    dates: tuple[int, ...]
    models: tuple[str, ...]
    losses: np.ndarray
    horizon: int = 1

    def __post_init__(self):
        arr = np.asarray(self.losses, dtype=float)
        if arr.ndim != 2 or arr.shape != (len(self.dates), len(self.models)):
            raise DimensionError(f"loss matrix shape {arr.shape} does not match {len(self.dates)} dates x {len(self.models)} models")
        if np.any(arr[~np.isnan(arr)] < 0):
            raise ValueError("squared losses must be non-negative")
        if len(set(self.models)) != len(self.models):
            raise ValueError("duplicated model ids")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "losses", arr)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "models", tuple(self.models))

    @classmethod
    def from_errors(cls, dates, models, errors, horizon: int = 1) -> "LossMatrix":
        e = np.asarray(errors, dtype=float)
        return cls(tuple(dates), tuple(models), e * e, horizon)

    def column(self, model: str) -> np.ndarray:
        return self.losses[:, self.models.index(model)]

    def subset(self, models: Sequence[str]) -> "LossMatrix":
        idx = [self.models.index(m) for m in models]
        return LossMatrix(self.dates, tuple(models), self.losses[:, idx], self.horizon)

    def complete(self) -> "LossMatrix":
        """Rows where every model has a loss."""
        keep = ~np.isnan(self.losses).any(axis=1)
        return LossMatrix(tuple(d for d, k in zip(self.dates, keep) if k), self.models, self.losses[keep], self.horizon)

    def scaled(self, factor: float) -> "LossMatrix":
        return LossMatrix(self.dates, self.models, self.losses * factor, self.horizon)


# ---------------------------------------------------------------------------
# Diebold-Mariano


@dataclass(frozen=True)
class DMResult:
    statistic: float
    pvalue: float
    stars: str
    level: float | None
    n: int
    lag: int
    naive_variance: bool = False

    @property
    def significant(self) -> bool:
        return self.level is not None


def long_run_variance(d: np.ndarray, lag: int) -> float:
    """Bartlett-weighted autocovariance sum of a demeaned series."""
    u = d - d.mean()
    n = u.size
    lrv = float(u @ u) / n
    for k in range(1, lag + 1):
        lrv += 2.0 * (1.0 - k / (lag + 1)) * float(u[k:] @ u[:-k]) / n
    return lrv


def _stars(stat: float, dof: int | None) -> tuple[str, float | None]:
    a = abs(stat)
    for cv, star, level in NORMAL_CRITICAL:
        if dof is not None:
            cv = float(stats.t.ppf(1 - level / 2, dof))
        if a >= cv:
            return star, level
    return "", None


def dm_test(loss_a, loss_b, h: int = 1, variance: str = "hac") -> DMResult:
    """Test equal accuracy; positive statistic means ``loss_a`` is larger on average.

    ``variance="hln"`` applies the Harvey-Leybourne-Newbold small-sample factor
    and Student-t critical values.
    """
    a = np.asarray(loss_a, dtype=float)
    b = np.asarray(loss_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError("loss series must be aligned 1-d arrays")
    if h < 1:
        raise ValueError("horizon must be >= 1")
    d = a - b
    n = d.size
    if n < 8:
        raise InsufficientDataError(f"DM test needs at least 8 observations, got {n}")
    if np.all(d == d[0]):
        raise DegenerateTestError("loss differential is constant")
    lag = h - 1
    lrv = long_run_variance(d, lag)
    naive = False
    if not lrv > 0:
        u = d - d.mean()
        lrv = float(u @ u) / n
        naive = True
    stat = float(d.mean() / math.sqrt(lrv / n))
    if variance == "hac":
        pvalue = float(2 * stats.norm.sf(abs(stat)))
        stars, level = _stars(stat, None)
    elif variance == "hln":
        stat *= math.sqrt((n + 1 - 2 * h + h * (h - 1) / n) / n)
        pvalue = float(2 * stats.t.sf(abs(stat), n - 1))
        stars, level = _stars(stat, n - 1)
    else:
        raise ValueError(f"unknown DM variance {variance!r}")
    return DMResult(stat, pvalue, stars, level, n, lag, naive)


# ---------------------------------------------------------------------------
# Ratio tables


@dataclass(frozen=True)
class RatioEntry:
    model: str
    value: float
    rmse: float
    n: int
    is_benchmark: bool
    dm: DMResult | None = None

    @property
    def stars(self) -> str:
        return self.dm.stars if self.dm is not None else ""

    def formatted(self, ratio_digits: int = 3, level_digits: int = 2) -> str:
        if self.is_benchmark:
            return f"{self.value:.{level_digits}f}"
        return f"{self.value:.{ratio_digits}f}{self.stars}"


@dataclass(frozen=True)
class RatioTable:
    horizon: int
    benchmark: str
    entries: dict[str, RatioEntry]

    def ratio(self, model: str) -> float:
        return self.entries[model].value


def ratio_table(losses: LossMatrix, benchmark: str, dm_variance: str = "hac",
                include_benchmark_ratio: bool = False) -> RatioTable:
    """Benchmark gets its raw RMSPE; every other model its RMSPE ratio and DM stars."""
    if benchmark not in losses.models:
        raise KeyError(f"benchmark {benchmark!r} not in loss matrix")
    bench = losses.column(benchmark)
    entries: dict[str, RatioEntry] = {}
    bmask = ~np.isnan(bench)
    if not bmask.any():
        raise EmptySampleError(f"benchmark {benchmark!r} has no losses")
    entries[benchmark] = RatioEntry(benchmark, _rmse_from_losses(bench[bmask]), _rmse_from_losses(bench[bmask]),
                                    int(bmask.sum()), True)
    for model in losses.models:
        if model == benchmark and not include_benchmark_ratio:
            continue
        col = losses.column(model)
        mask = bmask & ~np.isnan(col)
        if not mask.any():
            continue
        rm = _rmse_from_losses(col[mask])
        rb = _rmse_from_losses(bench[mask])
        try:
            dm = dm_test(col[mask], bench[mask], losses.horizon, dm_variance)
        except (DegenerateTestError, InsufficientDataError):
            dm = None
        key = model if model != benchmark else f"{model}/self"
        entries[key] = RatioEntry(model, rm / rb, rm, int(mask.sum()), False, dm)
    return RatioTable(losses.horizon, benchmark, entries)


def cumulative_ratio_path(losses: LossMatrix, benchmark: str, skip: int = 12) -> dict[str, tuple[tuple[int, ...], np.ndarray]]:
    """Ratio of cumulative RMSPEs for every model, reported after ``skip`` periods."""
    bench = losses.column(benchmark)
    out = {}
    for model in losses.models:
        if model == benchmark:
            continue
        col = losses.column(model)
        mask = ~np.isnan(col) & ~np.isnan(bench)
        n = int(mask.sum())
        if skip >= n:
            continue
        m = col[mask]
        b = bench[mask]
        k = np.arange(1, n + 1)
        path = np.sqrt(np.cumsum(m) / k) / np.sqrt(np.cumsum(b) / k)
        # anchor the last point to the same reduction used by ratio_table
        path[-1] = _rmse_from_losses(m) / _rmse_from_losses(b)
        dates = tuple(d for d, keep in zip(losses.dates, mask) if keep)
        out[model] = (dates[skip:], path[skip:])
    return out


# ---------------------------------------------------------------------------
# Model Confidence Set


def _chunk_indices(T: int, block: int, seed: int, B: int, chunk: int) -> np.ndarray:
    lo = chunk * BOOT_CHUNK
    nb = min(BOOT_CHUNK, B - lo)
    rng = np.random.default_rng(np.random.SeedSequence([seed, T, B, block, chunk]))
    n_blocks = -(-T // block)
    starts = rng.integers(0, T - block + 1, size=(nb, n_blocks))
    idx = (starts[:, :, None] + np.arange(block)).reshape(nb, -1)[:, :T]
    return idx.astype(np.intp)


@lru_cache(maxsize=64)
def bootstrap_indices(T: int, B: int, block: int, seed: int) -> np.ndarray:
    """Moving-block bootstrap resample indices, shape (B, T).

    Depends only on (T, B, block, seed); chunk k always comes from the stream
    keyed by (seed, T, B, block, k) so any worker partition yields the same array.
    """
    if block < 1 or block > T:
        raise ValueError(f"block length {block} invalid for T={T}")
    n_chunks = -(-B // BOOT_CHUNK)
    idx = np.concatenate([_chunk_indices(T, block, seed, B, c) for c in range(n_chunks)])
    idx.flags.writeable = False
    return idx


def bootstrap_means(L: np.ndarray, idx: np.ndarray, workers: int = 1) -> np.ndarray:
    """Per-replication column means of ``L`` resampled by ``idx`` (B x m)."""
    B = idx.shape[0]
    bounds = [(lo, min(lo + BOOT_CHUNK, B)) for lo in range(0, B, BOOT_CHUNK)]

    def run(bound):
        lo, hi = bound
        return L[idx[lo:hi]].mean(axis=1)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    return np.concatenate(parts)


@dataclass(frozen=True)
class MCSResult:
    models: tuple[str, ...]
    pvalues: dict[str, float]
    elimination_order: tuple[str, ...]
    alphas: tuple[float, ...]
    B: int
    block: int
    seed: int
    statistic: str = "Tmax"
    surviving: dict[float, tuple[str, ...]] = field(default_factory=dict)

    def ssm(self, alpha: float) -> tuple[str, ...]:
        return tuple(m for m in self.models if self.pvalues[m] >= alpha)

    def to_dict(self) -> dict:
        return {
            "models": list(self.models),
            "pvalues": {m: self.pvalues[m] for m in self.models},
            "elimination_order": list(self.elimination_order),
            "ssm": {f"{a:g}": list(self.ssm(a)) for a in self.alphas},
            "bootstrap": {"B": self.B, "block": self.block, "seed": self.seed, "statistic": self.statistic},
        }


def _safe_t(num: np.ndarray, var: np.ndarray, tiny: float) -> np.ndarray:
    sd = np.sqrt(np.maximum(var, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / sd
        degenerate = var <= tiny
        t = np.where(degenerate, np.where(np.abs(num) <= math.sqrt(tiny), 0.0, np.sign(num) * np.inf), t)
    return t


def mcs_procedure(
    losses: LossMatrix,
    B: int = 10_000,
    block: int = 6,
    alphas: Sequence[float] = (0.10, 0.25),
    seed: int = 0,
    statistic: str = "Tmax",
    workers: int = 1,
) -> MCSResult:
    """Iterative elimination with moving-block bootstrap p-values."""
    if statistic not in ("Tmax", "TR"):
        raise ValueError(f"unknown MCS statistic {statistic!r}")
    lm = losses.complete()
    models = lm.models
    if len(models) == 0:
        raise EmptySampleError("MCS needs at least one model")
    alphas = tuple(alphas)
    if len(models) == 1:
        pv = {models[0]: 1.0}
        res = MCSResult(models, pv, models, alphas, B, block, seed, statistic)
        object.__setattr__(res, "surviving", {a: res.ssm(a) for a in alphas})
        return res
    T = len(lm.dates)
    if T < 2 * block:
        raise InsufficientDataError(f"MCS needs T >= 2*block ({2 * block}), got {T}")

    # canonical model order makes results independent of input ordering
    order = sorted(range(len(models)), key=lambda i: models[i])
    names = [models[i] for i in order]
    L = np.ascontiguousarray(lm.losses[:, order])
    idx = bootstrap_indices(T, B, block, seed)
    boot = bootstrap_means(L, idx, workers)
    lbar = L.mean(axis=0)
    scale = max(float(np.mean(np.abs(L))), 1e-300)
    tiny = (1e-12 * scale) ** 2

    alive = list(range(len(names)))
    pvals: dict[str, float] = {}
    eliminated: list[str] = []
    running = 0.0
    while len(alive) > 1:
        S = np.array(alive)
        if statistic == "Tmax":
            d = lbar[S] - lbar[S].mean()
            z = (boot[:, S] - boot[:, S].mean(axis=1, keepdims=True)) - d
            var = np.mean(z * z, axis=0)
            if np.all(var <= tiny) and np.all(np.abs(d) <= math.sqrt(tiny)):
                break
            t = _safe_t(d, var, tiny)
            t_obs = float(np.max(t))
            with np.errstate(divide="ignore", invalid="ignore"):
                zt = np.where(var > tiny, z / np.sqrt(np.maximum(var, tiny)), 0.0)
            t_boot = zt.max(axis=1)
            worst = int(np.argmax(t))
        else:
            dij = lbar[S][:, None] - lbar[S][None, :]
            bij = boot[:, S][:, :, None] - boot[:, S][:, None, :]
            z = bij - dij
            var = np.mean(z * z, axis=0)
            if np.all(var <= tiny) and np.all(np.abs(dij) <= math.sqrt(tiny)):
                break
            t = _safe_t(dij, var, tiny)
            t_obs = float(np.max(np.abs(t)))
            with np.errstate(divide="ignore", invalid="ignore"):
                zt = np.where(var > tiny, np.abs(z) / np.sqrt(np.maximum(var, tiny)), 0.0)
            t_boot = zt.reshape(zt.shape[0], -1).max(axis=1)
            worst = int(np.argmax(t.max(axis=1)))
        p = float(np.mean(t_boot >= t_obs))
        running = max(running, p)
        name = names[alive[worst]]
        pvals[name] = running
        eliminated.append(name)
        del alive[worst]
    for i in alive:
        pvals[names[i]] = 1.0
        eliminated.append(names[i])
    res = MCSResult(models, {m: pvals[m] for m in models}, tuple(eliminated), alphas, B, block, seed, statistic)
    object.__setattr__(res, "surviving", {a: res.ssm(a) for a in alphas})
    return res
