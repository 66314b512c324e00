"""Market benchmarks: futures-implied real prices and survey forecasts."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import months
from .errors import ConfigError, CoverageError, InsufficientDataError, ParseError

FUTURES_MATURITIES = (3, 15)
SURVEY_HORIZONS = tuple(range(6, 19))
EVENT_SPACING = 3


@dataclass(frozen=True)
class FuturesQuote:
    metal: str
    quote_date: int
    maturity: int
    price: float

    def __post_init__(self):
        if self.maturity not in FUTURES_MATURITIES:
            raise ConfigError(f"futures maturity {self.maturity} not in {FUTURES_MATURITIES}")
        if not self.price > 0:
            raise ConfigError("futures price must be positive")


@dataclass(frozen=True)
class CpiProjection:
    current: float
    horizon: int
    growth: float
    projected: float


@dataclass(frozen=True)
class FixedEventSurvey:
    """Mean forecasts from one survey round keyed by event month (Mar/Jun/Sep/Dec)."""

    survey_date: int
    events: dict[int, float]
    spacing: int = EVENT_SPACING

    def __post_init__(self):
        for e in self.events:
            if (e % 100) % 3 != 0:
                raise ConfigError(f"event date {e} is not a quarter-end month")

    def horizons(self) -> dict[int, float]:
        return {months.diff(e, self.survey_date): v for e, v in self.events.items()}


def cpi_index_projection(cpi, h: int) -> CpiProjection:
    """Project the index h months ahead with the mean h-period growth over the history."""
    p = np.asarray(cpi, dtype=float)
    if h < 1:
        raise ValueError("horizon must be >= 1")
    if p.size < h + 1:
        raise InsufficientDataError(f"CPI history of {p.size} months is too short for h={h}")
    g = float(np.mean(p[h:] / p[:-h] - 1.0))
    proj = p[-1] * (1.0 + g)
    if not proj > 0:
        raise InsufficientDataError("projected CPI is not positive")
    return CpiProjection(float(p[-1]), h, g, float(proj))


def futures_implied_real_price(quote: FuturesQuote, proj: CpiProjection, base_index: float = 1.0) -> float:
    """F / (p_hat / base): the futures price in base-month real dollars."""
    if proj.horizon != quote.maturity:
        raise ConfigError(f"CPI projection horizon {proj.horizon} != futures maturity {quote.maturity}")
    return quote.price / (proj.projected / base_index)


def fixed_event_to_fixed_horizon(survey: FixedEventSurvey, h: int) -> float:
    """Linear interpolation between the two events bracketing horizon h."""
    d = survey.spacing
    by_h = survey.horizons()
    for h1 in sorted(by_h):
        h2 = h1 + d
        if h == h1:
            return by_h[h1]
        if h1 < h <= h2 and h2 in by_h:
            if h == h2:
                return by_h[h2]
            # integer weights, one division: keeps exact cases exact
            return ((d - abs(h - h1)) * by_h[h1] + (d - abs(h - h2)) * by_h[h2]) / d
    raise CoverageError(f"survey of {survey.survey_date} has no events bracketing h={h}")


def read_futures_csv(path: str | Path) -> list[FuturesQuote]:
    out = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return out
        if [c.strip() for c in header] != ["metal", "quote_date", "maturity_months", "price"]:
            raise ParseError("bad futures header", line=1, path=str(path))
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                out.append(FuturesQuote(row[0].strip().lower(), months.parse(row[1]), int(row[2]), float(row[3])))
            except (ValueError, IndexError) as exc:
                raise ParseError(f"bad futures row: {exc}", line=i, path=str(path)) from None
    return out


def read_survey_csv(path: str | Path) -> list[FixedEventSurvey]:
    rounds: dict[int, dict[int, float]] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if [c.strip() for c in header] != ["survey_date", "event_date", "mean_forecast"]:
            raise ParseError("bad survey header", line=1, path=str(path))
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                s, e, v = months.parse(row[0]), months.parse(row[1]), float(row[2])
            except (ValueError, IndexError) as exc:
                raise ParseError(f"bad survey row: {exc}", line=i, path=str(path)) from None
            if not math.isfinite(v) or v <= 0:
                raise ParseError("survey forecast must be positive", line=i, path=str(path))
            rounds.setdefault(s, {})[e] = v
    return [FixedEventSurvey(s, ev) for s, ev in sorted(rounds.items())]


def write_futures_csv(path: str | Path, quotes: list[FuturesQuote]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metal", "quote_date", "maturity_months", "price"])
        for q in quotes:
            w.writerow([q.metal, months.fmt(q.quote_date), q.maturity, f"{q.price:.2f}"])


def write_survey_csv(path: str | Path, surveys: list[FixedEventSurvey]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["survey_date", "event_date", "mean_forecast"])
        for s in surveys:
            for e, v in sorted(s.events.items()):
                w.writerow([months.fmt(s.survey_date), months.fmt(e), f"{v:.2f}"])
