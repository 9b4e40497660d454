"""Scoring estimate series against weekly ground truth."""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .domain import GroundTruthSeries, Region, SourceKind, parse_date
from .errors import InsufficientOverlap, InvalidArgument, UndefinedCorrelation

MIN_MATCHED_WEEKS = 3


def _pair(estimates, truth) -> tuple[np.ndarray, np.ndarray]:
    e = np.asarray(estimates, dtype=float)
    t = np.asarray(truth, dtype=float)
    if e.ndim != 1 or e.shape != t.shape:
        raise InvalidArgument(f"length mismatch: {e.shape} vs {t.shape}")
    return e, t


def mae(estimates: Sequence[float], truth: Sequence[float]) -> float:
    e, t = _pair(estimates, truth)
    if e.size == 0:
        raise InvalidArgument("mae needs at least one pair")
    return float(np.mean(np.abs(e - t)))


def pearson(estimates: Sequence[float], truth: Sequence[float]) -> float:
    """Sample Pearson correlation; raises on zero variance rather than returning 0."""
    e, t = _pair(estimates, truth)
    if e.size < 3:
        raise InvalidArgument("pearson needs at least 3 pairs")
    if np.ptp(e) == 0 or np.ptp(t) == 0:
        raise UndefinedCorrelation("correlation undefined for a constant vector")
    de, dt_ = e - e.mean(), t - t.mean()
    r = float(de @ dt_ / math.sqrt(float(de @ de) * float(dt_ @ dt_)))
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True)
class Season:
    label: str
    start: dt.date
    end: dt.date

    @classmethod
    def parse(cls, text: str) -> Season:
        """``LABEL:START:END``, e.g. ``2015/16:2015-09-07:2016-09-04``."""
        parts = text.split(":")
        if len(parts) != 3:
            raise InvalidArgument(f"season {text!r} is not LABEL:START:END")
        start, end = parse_date(parts[1]), parse_date(parts[2])
        if start > end:
            raise InvalidArgument(f"season {parts[0]} starts after it ends")
        return cls(parts[0], start, end)


@dataclass
class EvaluationReport:
    region: Region
    source: SourceKind
    season: str
    start: dt.date
    end: dt.date
    n_weeks: int
    mae: float
    pearson_r: float
    pairs: list[tuple[dt.date, float, float]] = field(default_factory=list)
    unmatched_weeks: list[dt.date] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "region": self.region.value,
            "source": self.source.value,
            "season": self.season,
            "start": self.start.isoformat(),
            "end": self.end.isoformat(),
            "n_weeks": self.n_weeks,
            "mae": self.mae,
            "pearson_r": self.pearson_r,
            "pairs": [{"week_ending": d.isoformat(), "estimate": e, "truth": t}
                      for d, e, t in self.pairs],
            "unmatched_weeks": [d.isoformat() for d in self.unmatched_weeks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def season_report(estimates: Mapping[dt.date, float], truth: GroundTruthSeries, season: Season,
                  region: Region, source: SourceKind) -> EvaluationReport:
    """Pair weekly estimates with truth on exact week-ending dates.

    ``estimates`` maps dates to values; truth weeks in the season without an
    estimate (or whose estimate is missing) are listed as unmatched.
    """
    pairs = []
    unmatched = []
    for entry in truth.for_region(region, season.start, season.end):
        value = estimates.get(entry.week_ending)
        if value is None:
            unmatched.append(entry.week_ending)
        else:
            pairs.append((entry.week_ending, float(value), entry.rate))
    if len(pairs) < MIN_MATCHED_WEEKS:
        raise InsufficientOverlap(
            f"season {season.label}: {len(pairs)} matched weeks, need {MIN_MATCHED_WEEKS}"
        )
    e = [p[1] for p in pairs]
    t = [p[2] for p in pairs]
    return EvaluationReport(region, source, season.label, season.start, season.end,
                            len(pairs), mae(e, t), pearson(e, t), pairs, unmatched)


def summarize(reports: Sequence[EvaluationReport]) -> dict:
    """Average metrics across seasons, both per season and pooled per week."""
    if not reports:
        raise InvalidArgument("no reports to summarise")
    e = [p[1] for r in reports for p in r.pairs]
    t = [p[2] for r in reports for p in r.pairs]
    return {
        "seasons": [r.to_dict() for r in reports],
        "mean_over_seasons": {
            "mae": float(np.mean([r.mae for r in reports])),
            "pearson_r": float(np.mean([r.pearson_r for r in reports])),
        },
        "pooled_weeks": {"n_weeks": len(e), "mae": mae(e, t), "pearson_r": pearson(e, t)},
    }
