"""First-release vintage storage, merging, rebasing, transforms and deflation.

Dates are YYYYMM integers throughout. A vintage is the snapshot of one
variable as published at ``as_of``; missing trailing observations are simply
absent.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import months
from .errors import (
    ConfigError,
    CoverageError,
    DomainError,
    FirstReleaseError,
    IntegrityError,
    MissingVintageError,
    ParseError,
)

TRANSFORMS = ("Log", "DLog", "D2Log", "None")
GROUPS = ("Prices", "EcAct", "CU", "ET", "ExRates", "Inventories", "Target")
FREQUENCIES = ("Monthly", "DailyAveraged")
METALS = ("aluminum", "copper", "nickel", "zinc")
DEFAULT_BASE_MONTH = 201502


@dataclass(frozen=True)
class SeriesMeta:
    id: str
    group: str
    transform: str
    publication_lag: int = 0
    source_frequency: str = "Monthly"

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ConfigError(f"{self.id}: unknown transform code {self.transform!r}")
        if self.group not in GROUPS:
            raise ConfigError(f"{self.id}: unknown group {self.group!r}")
        if self.publication_lag < 0:
            raise ConfigError(f"{self.id}: publication lag must be >= 0")
        if self.source_frequency not in FREQUENCIES:
            raise ConfigError(f"{self.id}: unknown source frequency {self.source_frequency!r}")


@dataclass(frozen=True)
class Vintage:
    """One publication of a series: ``values`` maps observation month to level."""

    as_of: int
    values: Mapping[int, float]

    def __post_init__(self):
        dates = list(self.values)
        for prev, cur in zip(dates, dates[1:]):
            step = months.diff(cur, prev)
            if step <= 0:
                raise IntegrityError(f"vintage {months.fmt(self.as_of)}: observation dates not increasing")
            if step != 1:
                raise IntegrityError(
                    f"vintage {months.fmt(self.as_of)}: interior gap after {months.fmt(prev)}"
                )

    @property
    def first(self) -> int | None:
        return next(iter(self.values), None)

    @property
    def last(self) -> int | None:
        return next(reversed(list(self.values)), None) if self.values else None

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class RealPriceSeries:
    metal: str
    values: dict[int, float]

    def __post_init__(self):
        if self.metal not in METALS:
            raise ConfigError(f"unknown metal {self.metal!r}")
        if any(not v > 0 for v in self.values.values()):
            raise DomainError(f"{self.metal}: real prices must be strictly positive")


# ---------------------------------------------------------------------------
# CSV ingestion


def ingest_vintage_csv(path: str | Path, meta: SeriesMeta | None = None) -> list[Vintage]:
    """Read a vintage matrix file (``obs_date,<as_of_1>,...``)."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        return []
    header = rows[0]
    if not header or header[0].strip() != "obs_date":
        raise ParseError("header must start with 'obs_date'", line=1, path=str(path))
    try:
        as_ofs = [months.parse(c) for c in header[1:]]
    except ValueError as exc:
        raise ParseError(str(exc), line=1, path=str(path)) from None
    if len(set(as_ofs)) != len(as_ofs):
        raise IntegrityError(f"{path}: duplicated as_of column")
    if any(months.diff(b, a) <= 0 for a, b in zip(as_ofs, as_ofs[1:])):
        raise IntegrityError(f"{path}: as_of columns not increasing")

    columns: list[dict[int, float]] = [{} for _ in as_ofs]
    prev_obs = None
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) > len(header):
            raise ParseError(f"expected at most {len(header)} cells, got {len(row)}", line=lineno, path=str(path))
        try:
            obs = months.parse(row[0])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno, path=str(path)) from None
        if prev_obs is not None and months.diff(obs, prev_obs) <= 0:
            raise IntegrityError(f"{path}:{lineno}: observation dates not increasing")
        prev_obs = obs
        for j, cell in enumerate(row[1:]):
            cell = cell.strip()
            if not cell:
                continue
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(f"not a number: {cell!r}", line=lineno, path=str(path)) from None
            if not math.isfinite(value):
                raise ParseError(f"non-finite value: {cell!r}", line=lineno, path=str(path))
            columns[j][obs] = value

    out = []
    for as_of, values in zip(as_ofs, columns):
        vintage = Vintage(as_of, values)
        if meta is not None and vintage.values:
            expected = months.add(as_of, -meta.publication_lag)
            if vintage.last != expected:
                raise IntegrityError(
                    f"{meta.id} vintage {months.fmt(as_of)}: last observation "
                    f"{months.fmt(vintage.last)} but publication lag implies {months.fmt(expected)}"
                )
        out.append(vintage)
    return out


def ingest_series_csv(path: str | Path, meta: SeriesMeta) -> dict[int, float]:
    """Read an unrevised series (``date,value``), averaging daily rows to calendar months."""
    path = Path(path)
    sums: dict[int, float] = defaultdict(float)
    counts: dict[int, int] = defaultdict(int)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return {}
        if [h.strip() for h in header[:2]] != ["date", "value"]:
            raise ParseError("header must be 'date,value'", line=1, path=str(path))
        for lineno, row in enumerate(reader, start=2):
            if not any(c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError("expected 2 cells", line=lineno, path=str(path))
            try:
                date = months.parse(row[0])
                value = float(row[1])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=str(path)) from None
            if meta.source_frequency == "Monthly" and counts[date]:
                raise IntegrityError(f"{path}:{lineno}: duplicated month {months.fmt(date)}")
            sums[date] += value
            counts[date] += 1
    dates = sorted(sums)
    series = {d: sums[d] / counts[d] for d in dates}
    Vintage(dates[-1] if dates else 0, series)  # contiguity check
    return series


def write_vintage_csv(path: str | Path, vintages: list[Vintage], decimals: int | None = None) -> None:
    obs = sorted({d for v in vintages for d in v.values})
    if obs:
        obs = months.span(obs[0], obs[-1])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["obs_date"] + [months.fmt(v.as_of) for v in vintages])
        for d in obs:
            cells = []
            for v in vintages:
                x = v.values.get(d)
                if x is None:
                    cells.append("")
                else:
                    cells.append(f"{x:.{decimals}f}" if decimals is not None else repr(float(x)))
            w.writerow([months.fmt(d)] + cells)


def write_series_csv(path: str | Path, series: Mapping[int, float]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "value"])
        for d, x in series.items():
            w.writerow([months.fmt(d), repr(float(x))])


# ---------------------------------------------------------------------------
# First release, rebasing, transforms


def merge_first_release(vintages: Iterable[Vintage]) -> dict[int, float]:
    """Keep, for every observation date, the value of the earliest vintage containing it."""
    merged: dict[int, float] = {}
    for v in sorted(vintages, key=lambda v: v.as_of):
        for date, value in v.values.items():
            seen = merged.get(date)
            if seen is None:
                merged[date] = value
            elif seen != value:
                raise FirstReleaseError(
                    f"observation {months.fmt(date)} differs across vintages "
                    f"({seen!r} vs {value!r} in {months.fmt(v.as_of)})"
                )
    return {d: merged[d] for d in sorted(merged)}


def rebase_index(vintages: list[Vintage]) -> list[Vintage]:
    """Put every vintage on a common base (first observation = 100) preserving log growth."""
    firsts = {v.first for v in vintages if v.values}
    if len(firsts) > 1:
        raise IntegrityError("vintages do not share the same first observation date")
    out = []
    for v in vintages:
        x = np.fromiter(v.values.values(), dtype=float, count=len(v.values))
        if np.any(x <= 0):
            raise DomainError(f"vintage {months.fmt(v.as_of)}: non-positive value in index")
        if x.size == 0:
            out.append(Vintage(v.as_of, {}))
            continue
        growth = np.diff(np.log(x))
        level = 100.0 * np.exp(np.concatenate(([0.0], np.cumsum(growth))))
        out.append(Vintage(v.as_of, dict(zip(v.values, level.tolist()))))
    return out


def transform_array(x: np.ndarray, code: str) -> np.ndarray:
    """Array version of :func:`apply_transform`; leading undefined entries become NaN."""
    x = np.asarray(x, dtype=float)
    if code == "None":
        return x.copy()
    if code not in TRANSFORMS:
        raise ConfigError(f"unknown transform code {code!r}")
    if np.any(x <= 0):
        raise DomainError(f"log transform of non-positive value")
    lx = np.log(x)
    out = np.full_like(lx, np.nan)
    if code == "Log":
        out[:] = lx
    elif code == "DLog":
        out[1:] = np.diff(lx)
    else:
        out[2:] = np.diff(lx, n=2)
    return out


def apply_transform(series: Mapping[int, float], code: str) -> dict[int, float]:
    """Log / first log-difference / second log-difference / identity."""
    dates = list(series)
    x = np.fromiter(series.values(), dtype=float, count=len(dates))
    y = transform_array(x, code)
    drop = {"Log": 0, "None": 0, "DLog": 1, "D2Log": 2}[code]
    return dict(zip(dates[drop:], y[drop:].tolist()))


def deflate_nominal(
    nominal: Mapping[int, float],
    cpi: Vintage | Mapping[int, float],
    base_month: int = DEFAULT_BASE_MONTH,
    metal: str = "copper",
) -> RealPriceSeries:
    """real_t = nominal_t * CPI(base) / CPI(t)."""
    cpi_values = cpi.values if isinstance(cpi, Vintage) else cpi
    if base_month not in cpi_values:
        raise CoverageError(f"CPI missing at base month {months.fmt(base_month)}")
    base = cpi_values[base_month]
    real = {}
    for date, price in nominal.items():
        level = cpi_values.get(date)
        if level is None:
            raise CoverageError(f"CPI missing at {months.fmt(date)}; was the ragged edge filled?")
        if level <= 0 or base <= 0:
            raise DomainError("CPI must be positive")
        real[date] = price * base / level
    return RealPriceSeries(metal, real)


# ---------------------------------------------------------------------------
# Panel


@dataclass(frozen=True)
class Release:
    """First-release path of one variable and the vintage dates it was observed at."""

    start: int
    values: np.ndarray
    first_vintage: int
    last_vintage: int

    @property
    def end(self) -> int:
        return months.add(self.start, len(self.values) - 1)


@dataclass(frozen=True)
class RealTimePanel:
    meta: dict[str, SeriesMeta]
    releases: dict[str, Release]
    span: tuple[int, int] = field(default=(0, 0))

    def __post_init__(self):
        if set(self.meta) != set(self.releases):
            raise IntegrityError("meta and releases cover different variables")
        for r in self.releases.values():
            r.values.flags.writeable = False
        if self.releases and self.span == (0, 0):
            first = max(r.first_vintage for r in self.releases.values())
            last = min(r.last_vintage for r in self.releases.values())
            object.__setattr__(self, "span", (first, last))

    @classmethod
    def from_vintages(cls, meta: Mapping[str, SeriesMeta], vintages: Mapping[str, list[Vintage]]) -> "RealTimePanel":
        releases = {}
        for var, vs in vintages.items():
            vs = sorted((v for v in vs if v.values), key=lambda v: v.as_of)
            if not vs:
                raise IntegrityError(f"{var}: no non-empty vintages")
            lag = meta[var].publication_lag
            for prev, cur in zip(vs, vs[1:]):
                if months.diff(cur.as_of, prev.as_of) != 1:
                    raise IntegrityError(f"{var}: vintages {months.fmt(prev.as_of)} and {months.fmt(cur.as_of)} not consecutive")
                if len(cur) != len(prev) + 1 or cur.first != prev.first:
                    raise IntegrityError(f"{var}: vintage {months.fmt(cur.as_of)} does not extend the previous one by one observation")
            for v in vs:
                if v.last != months.add(v.as_of, -lag):
                    raise IntegrityError(f"{var}: vintage {months.fmt(v.as_of)} inconsistent with publication lag {lag}")
            merged = merge_first_release(vs)
            releases[var] = Release(
                start=next(iter(merged)),
                values=np.array(list(merged.values()), dtype=float),
                first_vintage=vs[0].as_of,
                last_vintage=vs[-1].as_of,
            )
        return cls(dict(meta), releases)

    @classmethod
    def from_series(cls, meta: Mapping[str, SeriesMeta], series: Mapping[str, Mapping[int, float]],
                    first_vintage: Mapping[str, int] | None = None) -> "RealTimePanel":
        """Build from final (unrevised) paths; vintages are truncations by publication lag."""
        releases = {}
        for var, s in series.items():
            dates = list(s)
            if not dates:
                raise IntegrityError(f"{var}: empty series")
            Vintage(dates[-1], s)
            lag = meta[var].publication_lag
            fv = months.add(dates[0], lag)
            if first_vintage and var in first_vintage:
                fv = max(fv, first_vintage[var])
            releases[var] = Release(dates[0], np.array(list(s.values()), dtype=float), fv, months.add(dates[-1], lag))
        return cls(dict(meta), releases)

    @property
    def variables(self) -> list[str]:
        return list(self.meta)

    def _check(self, var: str, as_of: int) -> Release:
        if var not in self.releases:
            raise MissingVintageError(f"unknown variable {var!r}")
        r = self.releases[var]
        if not r.first_vintage <= as_of <= r.last_vintage:
            raise MissingVintageError(f"{var}: no vintage at {months.fmt(as_of)}")
        return r

    def last_observed(self, var: str, as_of: int) -> int:
        self._check(var, as_of)
        return months.add(as_of, -self.meta[var].publication_lag)

    def history(self, var: str, as_of: int) -> tuple[int, np.ndarray]:
        """(start date, values) of the vintage published at ``as_of`` (read-only view)."""
        r = self._check(var, as_of)
        n = months.diff(self.last_observed(var, as_of), r.start) + 1
        return r.start, r.values[:n]

    def vintage(self, var: str, as_of: int) -> Vintage:
        start, values = self.history(var, as_of)
        dates = months.span(start, months.add(start, len(values) - 1))
        return Vintage(as_of, dict(zip(dates, values.tolist())))

    def first_release(self, var: str) -> dict[int, float]:
        r = self.releases[var]
        return dict(zip(months.span(r.start, r.end), r.values.tolist()))


def ragged_edge_profile(panel: RealTimePanel, as_of: int) -> dict[str, int]:
    """Number of trailing months each variable is missing at ``as_of``."""
    return {var: months.diff(as_of, panel.last_observed(var, as_of)) for var in panel.variables}


# ---------------------------------------------------------------------------
# Manifest


@dataclass
class Manifest:
    """Binds variable ids to files and roles.

    File format: ``key = value`` lines, ``#`` comments. Keys::

        series.<ID> = <file>, <transform>, <group>, <lag>[, <frequency>]
        cpi = <ID>
        demand = <ID>
        metal.<name> = <price ID>, <inventory ID>
        futures = <file>
        survey.<name> = <file>
    """

    root: Path
    series: dict[str, tuple[Path, SeriesMeta]] = field(default_factory=dict)
    cpi: str | None = None
    demand: str | None = None
    metals: dict[str, tuple[str, str]] = field(default_factory=dict)
    futures: Path | None = None
    surveys: dict[str, Path] = field(default_factory=dict)

    def load_panel(self) -> RealTimePanel:
        meta = {k: m for k, (_, m) in self.series.items()}
        vintaged: dict[str, list[Vintage]] = {}
        final: dict[str, dict[int, float]] = {}
        for var, (path, m) in self.series.items():
            with path.open() as fh:
                head = fh.readline().strip()
            if head.startswith("obs_date"):
                vintaged[var] = ingest_vintage_csv(path, m)
            else:
                final[var] = ingest_series_csv(path, m)
        panel_v = RealTimePanel.from_vintages({k: meta[k] for k in vintaged}, vintaged) if vintaged else None
        panel_f = RealTimePanel.from_series({k: meta[k] for k in final}, final) if final else None
        releases = {}
        for p in (panel_v, panel_f):
            if p is not None:
                releases.update(p.releases)
        return RealTimePanel(meta, {k: releases[k] for k in meta})


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    man = Manifest(root=path.parent)
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected key = value", line=lineno, path=str(path))
        key, value = (s.strip() for s in line.split("=", 1))
        parts = [p.strip() for p in value.split(",")]
        try:
            if key.startswith("series."):
                var = key[len("series."):]
                if len(parts) not in (4, 5):
                    raise ParseError("series entry needs file, transform, group, lag[, frequency]", line=lineno, path=str(path))
                meta = SeriesMeta(var, parts[2], parts[1], int(parts[3]), parts[4] if len(parts) == 5 else "Monthly")
                man.series[var] = (man.root / parts[0], meta)
            elif key == "cpi":
                man.cpi = value
            elif key == "demand":
                man.demand = value
            elif key.startswith("metal."):
                if len(parts) != 2:
                    raise ParseError("metal entry needs price id, inventory id", line=lineno, path=str(path))
                man.metals[key[len("metal."):].lower()] = (parts[0], parts[1])
            elif key == "futures":
                man.futures = man.root / value
            elif key.startswith("survey."):
                man.surveys[key[len("survey."):].lower()] = man.root / value
            else:
                raise ParseError(f"unknown key {key!r}", line=lineno, path=str(path))
        except (ValueError, ConfigError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(str(exc), line=lineno, path=str(path)) from None
    for name, (price, inv) in man.metals.items():
        if name not in METALS:
            raise ConfigError(f"unknown metal {name!r}")
        for var in (price, inv):
            if var not in man.series:
                raise ConfigError(f"metal {name}: variable {var!r} not declared")
    return man
