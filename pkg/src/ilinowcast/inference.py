"""Daily and weekly ILI estimates from week-long observation windows."""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .domain import (
    SUNDAY,
    WEEKDAYS,
    WINDOW_DAYS,
    FrequencySeries,
    Region,
    SourceKind,
    date_range,
    parse_date,
)
from .errors import IncompleteWindow, InvalidArgument, OutOfRange
from .model import ModelArtifact, predict
from .store import StoreSnapshot

DEFAULT_SMOOTHING_WINDOW = 7


class MissingDayPolicy(str, enum.Enum):
    STRICT = "strict"
    CARRY_FORWARD = "carry_forward"

    @classmethod
    def parse(cls, label) -> MissingDayPolicy:
        try:
            return cls(label)
        except ValueError:
            raise InvalidArgument(f"unknown missing-day policy {label!r}") from None


@dataclass(frozen=True)
class IliEstimate:
    date: dt.date
    region: Region
    source: SourceKind
    value: float
    model_id: str
    window_complete: bool = True
    smoothed_value: float | None = None

    def __post_init__(self):
        if not self.value >= 0:
            raise InvalidArgument(f"estimate must be non-negative, got {self.value!r}")
        if self.smoothed_value is not None and not self.smoothed_value >= 0:
            raise InvalidArgument("smoothed estimate must be non-negative")


@dataclass(frozen=True)
class EstimateGap:
    """A day for which no estimate could be produced under the active policy."""

    date: dt.date
    region: Region
    source: SourceKind
    model_id: str
    reason: str


@dataclass(frozen=True)
class WindowFeatures:
    values: np.ndarray
    complete: bool


def aggregate_window(series: FrequencySeries, i: dt.date,
                     policy: MissingDayPolicy = MissingDayPolicy.STRICT) -> WindowFeatures:
    """Per-term mean frequency over the seven days ending on ``i``."""
    i = parse_date(i)
    hi = series.index_of(i)
    lo = hi - (WINDOW_DAYS - 1)
    if lo < 0 or hi >= series.n_days:
        raise OutOfRange(
            f"window {i - dt.timedelta(days=WINDOW_DAYS - 1)}..{i} not covered by "
            f"series {series.start}..{series.end}"
        )
    missing = series.missing[lo:hi + 1]
    if not missing.any():
        rows = series.values[lo:hi + 1]
        return WindowFeatures(rows.sum(axis=0) / WINDOW_DAYS, True)
    if policy == MissingDayPolicy.STRICT:
        gone = [d.isoformat() for d, m in zip(date_range(series.start + dt.timedelta(lo), i), missing) if m]
        raise IncompleteWindow(f"missing days in window ending {i}: {', '.join(gone)}")
    present = np.flatnonzero(~series.missing[:hi + 1])
    rows = []
    for k in range(lo, hi + 1):
        earlier = present[present <= k]
        if earlier.size == 0:
            raise IncompleteWindow(f"no earlier observed day to carry forward into {series.start + dt.timedelta(k)}")
        rows.append(series.values[earlier[-1]])
    return WindowFeatures(np.sum(rows, axis=0) / WINDOW_DAYS, False)


def _check_key(model: ModelArtifact, snapshot: StoreSnapshot) -> None:
    if (model.region, model.source) != (snapshot.key.region, snapshot.key.source):
        raise InvalidArgument(
            f"model for {model.region}/{model.source} applied to store {snapshot.key}"
        )


def _estimate_from_series(model: ModelArtifact, model_id: str, series: FrequencySeries,
                          i: dt.date, policy: MissingDayPolicy) -> IliEstimate:
    feats = aggregate_window(series, i, policy)
    raw = predict(model, feats.values)
    return IliEstimate(i, model.region, model.source, max(0.0, raw), model_id, feats.complete)


def _read(model: ModelArtifact, snapshot: StoreSnapshot, start: dt.date,
          end: dt.date) -> tuple[FrequencySeries, dt.date | None]:
    # one read covering every window, plus earlier history for carry-forward
    first = snapshot.series.start if snapshot.series is not None else None
    lead = start - dt.timedelta(days=WINDOW_DAYS - 1)
    read_from = min(lead, first) if first is not None else lead
    return snapshot.get_range(model.terms, read_from, end), first


def _window_starts_before(day: dt.date, first: dt.date | None) -> bool:
    return first is None or day - dt.timedelta(days=WINDOW_DAYS - 1) < first


def estimate_date(model: ModelArtifact, snapshot: StoreSnapshot, i: dt.date,
                  policy: MissingDayPolicy = MissingDayPolicy.STRICT) -> IliEstimate:
    _check_key(model, snapshot)
    i = parse_date(i)
    series, first = _read(model, snapshot, i, i)
    if _window_starts_before(i, first):
        raise OutOfRange(f"window for {i} starts before stored data ({first})")
    return _estimate_from_series(model, model.model_id, series, i, policy)


def estimate_range(model: ModelArtifact, snapshot: StoreSnapshot, start: dt.date, end: dt.date,
                   policy: MissingDayPolicy = MissingDayPolicy.STRICT) -> list[IliEstimate | EstimateGap]:
    """One entry per day in [start, end]; days that fail become ``EstimateGap``."""
    _check_key(model, snapshot)
    start, end = parse_date(start), parse_date(end)
    if start > end:
        raise InvalidArgument(f"start {start} is after end {end}")
    model_id = model.model_id
    series, first = _read(model, snapshot, start, end)
    out: list[IliEstimate | EstimateGap] = []
    for day in date_range(start, end):
        if _window_starts_before(day, first):
            out.append(EstimateGap(day, model.region, model.source, model_id, "out-of-range"))
            continue
        try:
            out.append(_estimate_from_series(model, model_id, series, day, policy))
        except IncompleteWindow:
            out.append(EstimateGap(day, model.region, model.source, model_id, "incomplete-window"))
    return out


def weekly_estimate(model: ModelArtifact, snapshot: StoreSnapshot, week_ending: dt.date,
                    policy: MissingDayPolicy = MissingDayPolicy.STRICT,
                    week_ending_weekday: int = SUNDAY) -> IliEstimate:
    week_ending = parse_date(week_ending)
    if week_ending.weekday() != week_ending_weekday:
        raise InvalidArgument(
            f"{week_ending} is a {WEEKDAYS[week_ending.weekday()]}; weeks end on "
            f"{WEEKDAYS[week_ending_weekday]}"
        )
    return estimate_date(model, snapshot, week_ending, policy)


def smooth(estimates: Sequence[IliEstimate | EstimateGap],
           window: int = DEFAULT_SMOOTHING_WINDOW) -> list[IliEstimate | EstimateGap]:
    """Centred moving average over contiguous runs of estimates.

    Gaps and date jumps split the series into segments smoothed
    independently; near segment edges the window shrinks symmetrically.
    """
    if window < 3 or window % 2 == 0:
        raise InvalidArgument(f"smoothing window must be odd and >= 3, got {window}")
    half = window // 2
    segments: list[list[int]] = []
    prev = None
    for k, est in enumerate(estimates):
        if isinstance(est, EstimateGap):
            prev = None
            continue
        if prev is None or est.date != prev.date + dt.timedelta(days=1):
            segments.append([])
        segments[-1].append(k)
        prev = est
    out = list(estimates)
    for seg in segments:
        vals = np.array([estimates[k].value for k in seg])
        m = len(seg)
        for pos, k in enumerate(seg):
            h = min(half, pos, m - 1 - pos)
            s = vals[pos - h:pos + h + 1].sum() / (2 * h + 1)
            out[k] = replace(estimates[k], smoothed_value=max(0.0, float(s)))
    return out


ESTIMATE_FIELDS = ("date", "region", "source", "model_id", "value", "smoothed_value",
                   "window_complete")


def estimate_record(est: IliEstimate | EstimateGap) -> dict:
    """Wire form shared by the CSV export and the HTTP API."""
    if isinstance(est, EstimateGap):
        return {"date": est.date.isoformat(), "region": est.region.value,
                "source": est.source.value, "model_id": est.model_id, "value": None,
                "smoothed_value": None, "window_complete": False}
    return {"date": est.date.isoformat(), "region": est.region.value,
            "source": est.source.value, "model_id": est.model_id, "value": est.value,
            "smoothed_value": est.smoothed_value, "window_complete": est.window_complete}


def format_record_csv(rec: dict) -> list[str]:
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return repr(float(v))
        return str(v)
    return [cell(rec[f]) for f in ESTIMATE_FIELDS]
