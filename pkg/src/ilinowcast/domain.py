"""Dates, regions, sources, rates and the series types shared by all modules."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgument, ParseError

WINDOW_DAYS = 7
SUNDAY = 6  # datetime.date.weekday()

WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")


class Region(str, enum.Enum):
    ENGLAND = "england"
    LONDON = "london"
    NORTH_ENGLAND = "north_england"
    SOUTH_ENGLAND = "south_england"
    MIDLANDS_EAST_ENGLAND = "midlands_east_england"

    @classmethod
    def parse(cls, label: str | Region) -> Region:
        if isinstance(label, cls):
            return label
        try:
            return cls(label)
        except ValueError:
            raise InvalidArgument(
                f"unknown region {label!r}; expected one of {[r.value for r in cls]}"
            ) from None

    def __str__(self) -> str:
        return self.value


class SourceKind(str, enum.Enum):
    TWITTER = "twitter"
    SEARCH = "search"

    @classmethod
    def parse(cls, label: str | SourceKind) -> SourceKind:
        if isinstance(label, cls):
            return label
        try:
            return cls(label)
        except ValueError:
            raise InvalidArgument(
                f"unknown source {label!r}; expected one of {[s.value for s in cls]}"
            ) from None

    def __str__(self) -> str:
        return self.value


def parse_date(text: str | dt.date) -> dt.date:
    """Parse an ISO-8601 ``YYYY-MM-DD`` label."""
    if isinstance(text, dt.date):
        return text
    try:
        if len(text) != 10:
            raise ValueError
        return dt.date.fromisoformat(text)
    except (TypeError, ValueError):
        raise InvalidArgument(f"malformed date {text!r}; expected YYYY-MM-DD") from None


def date_range(start: dt.date, end: dt.date) -> list[dt.date]:
    """Inclusive list of days from start to end."""
    n = (end - start).days + 1
    return [start + dt.timedelta(days=k) for k in range(max(n, 0))]


def window_dates(i: dt.date) -> list[dt.date]:
    """The week-long observation window for date ``i``, newest first."""
    return [i - dt.timedelta(days=k) for k in range(WINDOW_DAYS)]


def parse_weekday(label: str | int) -> int:
    if isinstance(label, int):
        if 0 <= label <= 6:
            return label
        raise InvalidArgument(f"weekday index {label} out of range 0..6")
    try:
        return WEEKDAYS.index(label.strip().lower())
    except ValueError:
        raise InvalidArgument(f"unknown weekday {label!r}") from None


def check_rate(value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise InvalidArgument(f"ILI rate must be finite and non-negative, got {value!r}")
    return value


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FrequencySeries:
    """Daily per-term frequencies over a contiguous range of days.

    ``values`` has one row per day and one column per term. Rows of missing
    days hold NaN and are flagged in ``missing``. ``unstored_terms`` lists
    requested terms that the source never recorded (served as zero columns).
    """

    terms: tuple[str, ...]
    start: dt.date
    values: np.ndarray
    missing: np.ndarray
    unstored_terms: tuple[str, ...] = ()

    def __post_init__(self):
        terms = tuple(self.terms)
        values = np.asarray(self.values, dtype=float)
        missing = np.asarray(self.missing, dtype=bool)
        if len(set(terms)) != len(terms):
            raise InvalidArgument("duplicate terms in frequency series")
        if values.ndim != 2 or values.shape[1] != len(terms):
            raise InvalidArgument(
                f"values shape {values.shape} does not match {len(terms)} terms"
            )
        if missing.shape != (values.shape[0],):
            raise InvalidArgument("missing-day mask length differs from number of days")
        present = values[~missing]
        if present.size and (
            not np.all(np.isfinite(present)) or present.min() < 0 or present.max() > 1
        ):
            raise InvalidArgument("frequencies must be finite and within [0, 1]")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "start", parse_date(self.start))
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "missing", _frozen(missing))
        object.__setattr__(self, "unstored_terms", tuple(self.unstored_terms))

    @property
    def n_days(self) -> int:
        return self.values.shape[0]

    @property
    def end(self) -> dt.date:
        return self.start + dt.timedelta(days=self.n_days - 1)

    @property
    def dates(self) -> list[dt.date]:
        return date_range(self.start, self.end)

    def index_of(self, day: dt.date) -> int:
        """Row index of ``day``; may be out of bounds (negative or >= n_days)."""
        return (day - self.start).days

    def column(self, term: str) -> np.ndarray:
        return self.values[:, self.terms.index(term)]


@dataclass(frozen=True)
class TruthEntry:
    week_ending: dt.date
    region: Region
    rate: float


@dataclass(frozen=True)
class GroundTruthSeries:
    """Weekly syndromic ILI rates per 100,000, keyed by (region, week ending)."""

    entries: tuple[TruthEntry, ...] = field(default_factory=tuple)

    def __post_init__(self):
        entries = tuple(self.entries)
        last: dict[Region, dt.date] = {}
        for e in entries:
            check_rate(e.rate)
            prev = last.get(e.region)
            if prev is not None and e.week_ending <= prev:
                raise InvalidArgument(
                    f"week-ending dates for {e.region} must be strictly increasing "
                    f"({e.week_ending} after {prev})"
                )
            last[e.region] = e.week_ending
        object.__setattr__(self, "entries", entries)

    def for_region(self, region: Region, start: dt.date | None = None,
                   end: dt.date | None = None) -> list[TruthEntry]:
        return [
            e for e in self.entries
            if e.region == region
            and (start is None or e.week_ending >= start)
            and (end is None or e.week_ending <= end)
        ]

    def as_dict(self, region: Region) -> dict[dt.date, float]:
        return {e.week_ending: e.rate for e in self.entries if e.region == region}


TRUTH_HEADER = ("week_ending", "region", "ili_rate")


def read_ground_truth(path: str | Path, week_ending_weekday: int = SUNDAY) -> GroundTruthSeries:
    path = Path(path)
    entries = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRUTH_HEADER:
            raise ParseError(f"expected header {','.join(TRUTH_HEADER)}", line=1, path=path)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError("expected 3 fields", line=lineno, path=path)
            try:
                day = parse_date(row[0])
                region = Region.parse(row[1])
                rate = check_rate(float(row[2]))
            except (InvalidArgument, ValueError) as exc:
                raise ParseError(str(exc), line=lineno, path=path) from None
            if day.weekday() != week_ending_weekday:
                raise ParseError(
                    f"{day} is a {WEEKDAYS[day.weekday()]}, expected week ending on "
                    f"{WEEKDAYS[week_ending_weekday]}",
                    line=lineno, path=path,
                )
            entries.append(TruthEntry(day, region, rate))
    entries.sort(key=lambda e: (e.region.value, e.week_ending))
    try:
        return GroundTruthSeries(tuple(entries))
    except InvalidArgument as exc:
        raise ParseError(str(exc), path=path) from None


def write_ground_truth(path: str | Path, entries: Iterable[TruthEntry]) -> int:
    n = 0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRUTH_HEADER)
        for e in entries:
            writer.writerow([e.week_ending.isoformat(), e.region.value, repr(float(e.rate))])
            n += 1
    return n


def weekly_dates(start: dt.date, end: dt.date, weekday: int = SUNDAY) -> list[dt.date]:
    """All dates in [start, end] falling on ``weekday``."""
    first = start + dt.timedelta(days=(weekday - start.weekday()) % 7)
    out = []
    day = first
    while day <= end:
        out.append(day)
        day += dt.timedelta(days=7)
    return out


def as_dates(values: Sequence[str | dt.date]) -> list[dt.date]:
    return [parse_date(v) for v in values]
