"""Year-month arithmetic on YYYYMM integers."""

from __future__ import annotations

import re

_YM_RE = re.compile(r"^\s*(\d{4})-(\d{1,2})(?:-\d{1,2})?\s*$")


def ym(year: int, month: int) -> int:
    if not 1 <= month <= 12:
        raise ValueError(f"month out of range: {month}")
    return year * 100 + month


def to_index(date: int) -> int:
    """Months since year 0; differences of indices are month counts."""
    year, month = divmod(date, 100)
    if not 1 <= month <= 12:
        raise ValueError(f"not a YYYYMM date: {date}")
    return year * 12 + (month - 1)


def from_index(index: int) -> int:
    year, m0 = divmod(index, 12)
    return year * 100 + m0 + 1


def add(date: int, months: int) -> int:
    return from_index(to_index(date) + months)


def diff(a: int, b: int) -> int:
    """Number of months from ``b`` to ``a``."""
    return to_index(a) - to_index(b)


def span(start: int, end: int) -> list[int]:
    """Inclusive monthly range."""
    i0, i1 = to_index(start), to_index(end)
    return [from_index(i) for i in range(i0, i1 + 1)]


def parse(text: str) -> int:
    """Parse ``YYYY-MM`` (a trailing ``-DD`` is accepted and dropped)."""
    m = _YM_RE.match(text)
    if not m:
        raise ValueError(f"not a YYYY-MM date: {text!r}")
    return ym(int(m.group(1)), int(m.group(2)))


def fmt(date: int) -> str:
    year, month = divmod(date, 100)
    return f"{year:04d}-{month:02d}"
