"""Seeded synthetic epidemics and term-frequency streams.

This is an invented test harness: a known ILI curve drives a set of
"signal" terms linearly, "noise" terms carry no seasonal information, and
the two sampling regimes (a thin tweet sample, a larger uniform sample of
search sessions) add realistic sampling noise.

Random numbers come from numpy's Philox counter-based generator keyed by
``SeedSequence([seed, stream, index])``. Every (stream, day) pair has its own
independent generator, so output does not depend on generation order.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .domain import (
    SUNDAY,
    WINDOW_DAYS,
    Region,
    SourceKind,
    TruthEntry,
    check_rate,
    date_range,
    parse_date,
    weekly_dates,
)
from .errors import InvalidArgument
from .text import DailyFrequencyRecord, DailyTermCounts, estimate_query_probability

PER_100K = 100_000.0

# stream identifiers for the keyed generators
_CURVE, _COEFS, _NOISE, _TWITTER, _SEARCH, _DOCS = range(1, 7)


def keyed_rng(seed: int | Sequence[int], *key: int) -> np.random.Generator:
    entropy = [int(seed)] if np.isscalar(seed) else [int(s) for s in seed]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy + list(key))))


@dataclass(frozen=True)
class SyntheticScenario:
    seed: int = 20160313
    n_days: int = 364
    peak_rate: float = 30.0
    n_terms: int = 40
    n_signal_terms: int = 10
    noise_std: float = 0.05
    twitter_daily_volume: int = 350_000
    twitter_sample_rate: float = 0.015
    search_sample_rate: float = 0.125
    region: Region = Region.ENGLAND
    baseline_rate: float = 2.0
    n_seasons: int = 1
    start_date: dt.date = dt.date(2012, 9, 3)
    daily_sessions: int = 1_000_000
    noise_term_std: float = 0.1

    def __post_init__(self):
        problems = []
        if self.n_days < 60:
            problems.append(f"n_days must be >= 60, got {self.n_days}")
        if self.n_seasons < 1 or self.n_days // max(self.n_seasons, 1) < 60:
            problems.append("each season needs at least 60 days")
        if not 0 <= self.n_signal_terms <= self.n_terms:
            problems.append("need 0 <= n_signal_terms <= n_terms")
        if self.noise_std < 0 or self.noise_term_std < 0:
            problems.append("noise levels must be non-negative")
        for name in ("twitter_sample_rate", "search_sample_rate"):
            if not 0 < getattr(self, name) <= 1:
                problems.append(f"{name} must be in (0, 1]")
        if self.peak_rate <= self.baseline_rate or self.baseline_rate < 0:
            problems.append("need 0 <= baseline_rate < peak_rate")
        if self.twitter_daily_volume < 1 or self.daily_sessions < 1:
            problems.append("daily volumes must be positive")
        if problems:
            raise InvalidArgument("; ".join(problems))
        object.__setattr__(self, "region", Region.parse(self.region))
        object.__setattr__(self, "start_date", parse_date(self.start_date))

    @property
    def dates(self) -> list[dt.date]:
        return date_range(self.start_date, self.start_date + dt.timedelta(days=self.n_days - 1))

    def season_bounds(self) -> list[tuple[int, int]]:
        """Half-open day-index ranges; the last season absorbs any remainder."""
        length = self.n_days // self.n_seasons
        bounds = [(k * length, (k + 1) * length) for k in range(self.n_seasons)]
        bounds[-1] = (bounds[-1][0], self.n_days)
        return bounds

    def to_dict(self) -> dict:
        d = asdict(self)
        d["region"] = self.region.value
        d["start_date"] = self.start_date.isoformat()
        return d


@dataclass(frozen=True)
class EpidemicCurve:
    dates: tuple[dt.date, ...]
    rates: np.ndarray
    peaks: tuple[tuple[float, float], ...]  # per season: (centre day index, width in days)
    baseline: float
    peak_rate: float

    def weekly_truth(self, region: Region, weekday: int = SUNDAY) -> list[TruthEntry]:
        """Weekly rates: the mean daily rate over each complete week in range."""
        out = []
        for day in weekly_dates(self.dates[0] + dt.timedelta(days=WINDOW_DAYS - 1), self.dates[-1], weekday):
            out.append(TruthEntry(day, region, self.window_mean(day)))
        return out

    def window_mean(self, day: dt.date) -> float:
        hi = (day - self.dates[0]).days
        if hi - (WINDOW_DAYS - 1) < 0 or hi >= len(self.dates):
            raise InvalidArgument(f"window ending {day} outside the curve")
        return float(self.rates[hi - WINDOW_DAYS + 1:hi + 1].sum() / WINDOW_DAYS)


def bump(days: np.ndarray, baseline: float, peak: float, centre: float, width: float) -> np.ndarray:
    return baseline + (peak - baseline) * np.exp(-0.5 * ((days - centre) / width) ** 2)


def generate_epidemic_curve(scenario: SyntheticScenario) -> EpidemicCurve:
    """Baseline plus one Gaussian seasonal peak per season.

    Peak position and width get seeded jitter; peak height is fixed so the
    curve's maximum sits at ``peak_rate``.
    """
    rates = np.empty(scenario.n_days)
    peaks = []
    for s, (lo, hi) in enumerate(scenario.season_bounds()):
        rng = keyed_rng(scenario.seed, _CURVE, s)
        length = hi - lo
        centre = length * (0.4 + rng.uniform(-0.08, 0.08))
        width = length * (0.05 + rng.uniform(0.0, 0.03))
        days = np.arange(length, dtype=float)
        rates[lo:hi] = bump(days, scenario.baseline_rate, scenario.peak_rate, centre, width)
        peaks.append((lo + centre, width))
    rates.setflags(write=False)
    return EpidemicCurve(tuple(scenario.dates), rates, tuple(peaks),
                         scenario.baseline_rate, scenario.peak_rate)


@dataclass(frozen=True)
class PlantedTerms:
    terms: tuple[str, ...]
    signal_terms: tuple[str, ...]
    slope: dict[str, float]      # frequency per (rate / 100,000); signal terms only
    intercept: dict[str, float]  # base frequency for every term

    def to_dict(self) -> dict:
        return {"terms": list(self.terms), "signal_terms": list(self.signal_terms),
                "slope": self.slope, "intercept": self.intercept}


def term_names(n_terms: int) -> list[str]:
    return [f"w{k:03d}" for k in range(n_terms)]


def plant_terms(scenario: SyntheticScenario) -> PlantedTerms:
    rng = keyed_rng(scenario.seed, _COEFS)
    terms = term_names(scenario.n_terms)
    order = rng.permutation(scenario.n_terms)
    signal = tuple(sorted(terms[k] for k in order[:scenario.n_signal_terms]))
    base = rng.uniform(2e-4, 2e-3, size=scenario.n_terms)
    slopes = rng.uniform(0.5, 3.0, size=scenario.n_terms)
    return PlantedTerms(
        tuple(terms), signal,
        {t: float(slopes[k]) for k, t in enumerate(terms) if t in signal},
        {t: float(base[k]) for k, t in enumerate(terms)},
    )


@dataclass(frozen=True)
class PopulationFrequencies:
    planted: PlantedTerms
    dates: tuple[dt.date, ...]
    values: np.ndarray  # days x terms

    def records(self, source: SourceKind, region: Region) -> list[DailyFrequencyRecord]:
        terms = self.planted.terms
        return [DailyFrequencyRecord(d, region, source, dict(zip(terms, row.tolist())))
                for d, row in zip(self.dates, self.values)]


def generate_term_frequencies(curve: EpidemicCurve, scenario: SyntheticScenario) -> PopulationFrequencies:
    """Population-level daily frequencies for every term.

    Signal terms follow ``slope * rate / 100000 + intercept`` plus Gaussian
    noise with standard deviation ``noise_std * intercept``; noise terms
    fluctuate around their intercept with relative std ``noise_term_std``.
    Everything is clipped to [0, 1].
    """
    planted = plant_terms(scenario)
    terms = planted.terms
    is_signal = np.array([t in planted.slope for t in terms])
    slope = np.array([planted.slope.get(t, 0.0) for t in terms])
    base = np.array([planted.intercept[t] for t in terms])
    rel_sd = np.where(is_signal, scenario.noise_std, scenario.noise_term_std)
    values = np.empty((len(curve.rates), len(terms)))
    for k, rate in enumerate(curve.rates):
        eps = keyed_rng(scenario.seed, _NOISE, k).standard_normal(len(terms))
        values[k] = slope * (rate / PER_100K) + base + eps * rel_sd * base
    np.clip(values, 0.0, 1.0, out=values)
    values.setflags(write=False)
    return PopulationFrequencies(planted, curve.dates, values)


def thin_twitter_sample(population_counts: DailyTermCounts, rate: float,
                        seed: int | Sequence[int]) -> DailyTermCounts:
    """Keep each document independently with probability ``rate``.

    The kept total is binomial; each term's kept count is hypergeometric
    given that total, so it can never exceed it.
    """
    if not 0 < rate <= 1:
        raise InvalidArgument(f"sample rate must be in (0, 1], got {rate!r}")
    if rate == 1:
        return population_counts
    rng = keyed_rng(seed, _TWITTER)
    total = population_counts.total_documents
    kept = int(rng.binomial(total, rate))
    terms = sorted(population_counts.counts)
    good = np.array([population_counts.counts[t] for t in terms], dtype=np.int64)
    if kept == 0 or not terms:
        counts = {}
    else:
        thinned = rng.hypergeometric(good, total - good, kept)
        counts = {t: int(c) for t, c in zip(terms, thinned)}
    return DailyTermCounts(population_counts.date, population_counts.region,
                           population_counts.source, counts, kept)


def sample_search_sessions(population_probabilities: Mapping[str, float], daily_sessions: int,
                           rate: float, seed: int | Sequence[int]) -> dict[str, tuple[int, int]]:
    """Draw a uniform session sample and count sessions containing each term.

    Returns ``term -> (sessions_with_term, sampled_sessions)``.
    """
    if not 0 < rate <= 1:
        raise InvalidArgument(f"sample rate must be in (0, 1], got {rate!r}")
    if daily_sessions <= 0:
        raise InvalidArgument("daily_sessions must be positive")
    rng = keyed_rng(seed, _SEARCH)
    sampled = daily_sessions if rate == 1 else int(rng.binomial(daily_sessions, rate))
    terms = sorted(population_probabilities)
    p = np.array([population_probabilities[t] for t in terms], dtype=float)
    hits = rng.binomial(sampled, p) if terms else []
    return {t: (int(h), sampled) for t, h in zip(terms, hits)}


def twitter_records(pop: PopulationFrequencies, scenario: SyntheticScenario) -> list[DailyFrequencyRecord]:
    """Tweet-regime frequencies: population counts thinned to the collected sample."""
    from .text import to_frequency

    terms = pop.planted.terms
    volume = scenario.twitter_daily_volume
    out = []
    for k, (day, row) in enumerate(zip(pop.dates, pop.values)):
        counts = np.clip(np.rint(row * volume), 0, volume).astype(int)
        full = DailyTermCounts(day, scenario.region, SourceKind.TWITTER,
                               dict(zip(terms, counts.tolist())), volume)
        kept = thin_twitter_sample(full, scenario.twitter_sample_rate, (scenario.seed, k))
        if kept.total_documents == 0:
            continue  # an empty day is a missing day
        out.append(to_frequency(kept, terms))
    return out


def search_records(pop: PopulationFrequencies, scenario: SyntheticScenario) -> list[DailyFrequencyRecord]:
    """Search-regime frequencies: per-term session probabilities from a uniform sample."""
    terms = pop.planted.terms
    out = []
    for k, (day, row) in enumerate(zip(pop.dates, pop.values)):
        draws = sample_search_sessions(dict(zip(terms, row.tolist())), scenario.daily_sessions,
                                       scenario.search_sample_rate, (scenario.seed, k))
        freqs = {t: estimate_query_probability(*draws[t]) for t in terms}
        out.append(DailyFrequencyRecord(day, scenario.region, SourceKind.SEARCH, freqs))
    return out


def synthetic_documents(records: Sequence[DailyFrequencyRecord], docs_per_day: int,
                        seed: int) -> list[tuple[dt.date, Region, str]]:
    """Filler documents whose per-term document fractions approximate ``records``.

    Each term appears in ``round(freq * docs_per_day)`` randomly chosen
    documents; every document also carries a filler token so none is empty.
    """
    out = []
    for k, rec in enumerate(records):
        rng = keyed_rng(seed, _DOCS, k)
        bags: list[list[str]] = [["zz"] for _ in range(docs_per_day)]
        for term in sorted(rec.frequencies):
            c = int(round(rec.frequencies[term] * docs_per_day))
            for j in rng.choice(docs_per_day, size=min(c, docs_per_day), replace=False):
                bags[j].append(term)
        for bag in bags:
            out.append((rec.date, rec.region, " ".join(bag)))
    return out


def planted_json(scenario: SyntheticScenario, curve: EpidemicCurve, planted: PlantedTerms) -> str:
    doc = {
        "scenario": scenario.to_dict(),
        "curve": {"baseline": curve.baseline, "peak_rate": curve.peak_rate,
                  "peaks": [{"centre_day": c, "width_days": w} for c, w in curve.peaks]},
        "terms": planted.to_dict(),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
