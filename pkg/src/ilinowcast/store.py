"""CSV-backed, append-only store of daily term frequencies.

Layout: ``<data_dir>/<region>/<source>/<YYYY-MM>.csv`` with header
``date,term,frequency``. A day is present iff it has at least one row;
absent days between the first and latest stored date are missing.
Every write goes to a temporary file that is fsynced and renamed over the
target, so readers see either the old or the new month file.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .domain import FrequencySeries, Region, SourceKind, date_range, parse_date
from .errors import (
    AppendOrderError,
    ConflictError,
    DuplicateDayError,
    InvalidArgument,
    NoSuchStore,
    ParseError,
)
from .text import DailyFrequencyRecord

logger = logging.getLogger(__name__)

HEADER = ("date", "term", "frequency")
DATA_DIR_ENV = "ILINOWCAST_DATA_DIR"


def format_frequency(value: float) -> str:
    """Fixed 10-significant-digit text form used on disk."""
    return f"{float(value):.10g}"


def canonical(value: float) -> float:
    """The float a value reads back as after a store roundtrip."""
    return float(format_frequency(value))


@dataclass(frozen=True)
class StoreKey:
    region: Region
    source: SourceKind

    def __post_init__(self):
        object.__setattr__(self, "region", Region.parse(self.region))
        object.__setattr__(self, "source", SourceKind.parse(self.source))

    def __str__(self) -> str:
        return f"{self.region.value}/{self.source.value}"


def _parse_row(row: list[str], lineno: int, path) -> tuple[dt.date, str, str]:
    if len(row) != 3:
        raise ParseError(f"expected 3 fields, got {len(row)}", line=lineno, path=path)
    day_text, term, value_text = row
    try:
        day = parse_date(day_text)
    except InvalidArgument as exc:
        raise ParseError(str(exc), line=lineno, path=path) from None
    if not term:
        raise ParseError("empty term", line=lineno, path=path)
    try:
        value = float(value_text)
    except ValueError:
        raise ParseError(f"frequency {value_text!r} is not a number", line=lineno, path=path) from None
    if not math.isfinite(value) or not 0.0 <= value <= 1.0:
        raise ParseError(f"frequency {value_text!r} outside [0, 1]", line=lineno, path=path)
    return day, term, format_frequency(value)


def _read_long_csv(path: Path) -> dict[dt.date, dict[str, str]]:
    days: dict[dt.date, dict[str, str]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != HEADER:
            raise ParseError(f"expected header {','.join(HEADER)}", line=1, path=path)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            day, term, text = _parse_row(row, lineno, path)
            terms = days.setdefault(day, {})
            if term in terms:
                raise ParseError(f"duplicate ({day}, {term!r}) row", line=lineno, path=path)
            terms[term] = text
    return days


def _write_rows(path: Path, days: dict[dt.date, dict[str, str]]) -> int:
    """Atomically (re)write a long-format CSV with the given day rows."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    n = 0
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(HEADER)
            for day in sorted(days):
                for term in sorted(days[day]):
                    writer.writerow([day.isoformat(), term, days[day][term]])
                    n += 1
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return n


@dataclass(frozen=True)
class StoreSnapshot:
    """Immutable view of one key's series as of its latest stored day."""

    key: StoreKey
    series: FrequencySeries | None
    as_of: dt.date | None

    @property
    def terms(self) -> tuple[str, ...]:
        return self.series.terms if self.series is not None else ()

    def get_range(self, terms: Sequence[str], start: dt.date, end: dt.date) -> FrequencySeries:
        """Frequencies for ``terms`` over exactly [start, end].

        Days outside the stored span or absent from it are flagged missing.
        Terms the store never saw come back as zero columns and are listed
        in ``unstored_terms``.
        """
        start, end = parse_date(start), parse_date(end)
        if start > end:
            raise InvalidArgument(f"start {start} is after end {end}")
        terms = tuple(terms)
        n = (end - start).days + 1
        values = np.full((n, len(terms)), np.nan)
        missing = np.ones(n, dtype=bool)
        unstored = tuple(t for t in terms if t not in set(self.terms))
        s = self.series
        if s is not None:
            lo = max(0, s.index_of(start))
            hi = min(s.n_days - 1, s.index_of(end))
            if lo <= hi:
                src = slice(lo, hi + 1)
                dst = slice(lo - s.index_of(start), hi - s.index_of(start) + 1)
                present = ~s.missing[src]
                missing[dst] = ~present
                col_index = {t: k for k, t in enumerate(s.terms)}
                for j, term in enumerate(terms):
                    k = col_index.get(term)
                    block = s.values[src, k] if k is not None else np.zeros(hi - lo + 1)
                    values[dst, j] = np.where(present, block, np.nan)
        if unstored:
            logger.warning("terms never stored for %s: %s", self.key, ", ".join(unstored))
        return FrequencySeries(terms, start, values, missing, unstored)


class FeatureStore:
    """Durable per-(region, source) daily frequency series.

    One writer per key at a time; any number of readers working on
    snapshots.
    """

    def __init__(self, data_dir: str | Path | None = None):
        if data_dir is None:
            data_dir = os.environ.get(DATA_DIR_ENV)
        if data_dir is None:
            raise InvalidArgument(f"no data directory given and {DATA_DIR_ENV} unset")
        self.data_dir = Path(data_dir)

    def key_dir(self, key: StoreKey) -> Path:
        return self.data_dir / key.region.value / key.source.value

    def keys(self) -> list[StoreKey]:
        out = []
        for region in Region:
            for source in SourceKind:
                key = StoreKey(region, source)
                if self.key_dir(key).is_dir():
                    out.append(key)
        return out

    def _month_files(self, key: StoreKey) -> list[Path]:
        d = self.key_dir(key)
        if not d.is_dir():
            return []
        return sorted(p for p in d.glob("[0-9][0-9][0-9][0-9]-[0-9][0-9].csv"))

    def _month_path(self, key: StoreKey, day: dt.date) -> Path:
        return self.key_dir(key) / f"{day.year:04d}-{day.month:02d}.csv"

    def _load(self, key: StoreKey) -> dict[dt.date, dict[str, str]]:
        days: dict[dt.date, dict[str, str]] = {}
        for path in self._month_files(key):
            days.update(_read_long_csv(path))
        return days

    def latest_date(self, key: StoreKey) -> dt.date | None:
        for path in reversed(self._month_files(key)):
            days = _read_long_csv(path)
            if days:
                return max(days)
        return None

    def append_day(self, key: StoreKey, record: DailyFrequencyRecord) -> dt.date:
        """Persist one day's record after the current latest day."""
        if (record.region, record.source) != (key.region, key.source):
            raise InvalidArgument(
                f"record for {record.region}/{record.source} appended to store {key}"
            )
        if not record.frequencies:
            raise InvalidArgument("record has no terms; an empty day is a missing day")
        latest = self.latest_date(key)
        if latest is not None:
            if record.date == latest:
                raise DuplicateDayError(f"{record.date} already stored for {key}")
            if record.date < latest:
                raise AppendOrderError(f"{record.date} precedes latest stored day {latest} for {key}")
        path = self._month_path(key, record.date)
        month = _read_long_csv(path) if path.exists() else {}
        month[record.date] = {t: format_frequency(v) for t, v in record.frequencies.items()}
        _write_rows(path, month)
        return record.date

    def snapshot(self, key: StoreKey) -> StoreSnapshot:
        if not self.key_dir(key).is_dir():
            raise NoSuchStore(f"no store for {key} under {self.data_dir}")
        days = self._load(key)
        if not days:
            return StoreSnapshot(key, None, None)
        terms = tuple(sorted({t for row in days.values() for t in row}))
        col = {t: j for j, t in enumerate(terms)}
        first, last = min(days), max(days)
        n = (last - first).days + 1
        values = np.full((n, len(terms)), np.nan)
        missing = np.ones(n, dtype=bool)
        for day, row in days.items():
            i = (day - first).days
            missing[i] = False
            values[i, :] = 0.0
            for term, text in row.items():
                values[i, col[term]] = float(text)
        return StoreSnapshot(key, FrequencySeries(terms, first, values, missing), last)

    def get_range(self, key: StoreKey, terms: Sequence[str], start: dt.date,
                  end: dt.date) -> FrequencySeries:
        return self.snapshot(key).get_range(terms, start, end)

    def export_csv(self, key: StoreKey, path: str | Path) -> int:
        if not self.key_dir(key).is_dir():
            raise NoSuchStore(f"no store for {key} under {self.data_dir}")
        return _write_rows(Path(path), self._load(key))

    def import_csv(self, key: StoreKey, path: str | Path) -> int:
        """Load a long-format CSV; returns the number of rows imported.

        Imports into a non-empty store must lie strictly after its latest day.
        """
        rows = _read_long_csv(Path(path))
        if not rows:
            return 0
        latest = self.latest_date(key)
        if latest is not None and min(rows) <= latest:
            raise ConflictError(
                f"import range {min(rows)}..{max(rows)} overlaps stored data up to {latest} for {key}"
            )
        self.key_dir(key).mkdir(parents=True, exist_ok=True)
        by_month: dict[Path, dict[dt.date, dict[str, str]]] = {}
        for day, row in rows.items():
            by_month.setdefault(self._month_path(key, day), {})[day] = row
        n = 0
        for mpath in sorted(by_month):
            month = _read_long_csv(mpath) if mpath.exists() else {}
            month.update(by_month[mpath])
            _write_rows(mpath, month)
            n += sum(len(r) for r in by_month[mpath].values())
        return n


def write_records(path: str | Path, records: Iterable[DailyFrequencyRecord]) -> int:
    """Write records in the store's import format (used by the simulator)."""
    days = {r.date: {t: format_frequency(v) for t, v in r.frequencies.items()} for r in records}
    return _write_rows(Path(path), days)


def covered_days(series: FrequencySeries) -> list[dt.date]:
    return [d for d, m in zip(date_range(series.start, series.end), series.missing) if not m]
