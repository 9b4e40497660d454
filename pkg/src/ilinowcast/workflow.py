"""End-to-end steps shared by the command line and the HTTP service."""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import synthetic
from .domain import (
    SUNDAY,
    WINDOW_DAYS,
    GroundTruthSeries,
    SourceKind,
    date_range,
    weekly_dates,
    write_ground_truth,
)
from .errors import IncompleteWindow, InsufficientData, InvalidArgument, OutOfRange
from .evaluation import EvaluationReport, Season, season_report
from .inference import (
    ESTIMATE_FIELDS,
    EstimateGap,
    IliEstimate,
    MissingDayPolicy,
    aggregate_window,
    estimate_range,
    estimate_record,
    format_record_csv,
    smooth,
)
from .model import (
    CVResult,
    Hyperparams,
    ModelArtifact,
    TrainingSet,
    bolasso_select,
    cv_select,
    fit_elastic_net,
)
from .store import FeatureStore, StoreKey, StoreSnapshot, write_records
from .text import batches, count_daily, to_frequency

logger = logging.getLogger(__name__)


# -- simulation ---------------------------------------------------------------

SIM_FILES = ("truth.csv", "curve.csv", "planted.json", "population.csv", "search.csv",
             "twitter.csv")


def simulate_to_dir(scenario: synthetic.SyntheticScenario, out_dir: str | Path, *,
                    force: bool = False, docs_per_day: int = 0) -> dict[str, int]:
    """Write a full synthetic scenario; returns rows written per file."""
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise FileExistsError(f"{out} is not empty (use force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    curve = synthetic.generate_epidemic_curve(scenario)
    pop = synthetic.generate_term_frequencies(curve, scenario)
    written: dict[str, int] = {}
    written["truth.csv"] = write_ground_truth(out / "truth.csv", curve.weekly_truth(scenario.region))
    with (out / "curve.csv").open("w", encoding="utf-8") as fh:
        fh.write("date,ili_rate\n")
        for day, rate in zip(curve.dates, curve.rates):
            fh.write(f"{day.isoformat()},{float(rate)!r}\n")
    written["curve.csv"] = len(curve.dates)
    text = synthetic.planted_json(scenario, curve, pop.planted)
    (out / "planted.json").write_text(text, encoding="utf-8")
    written["planted.json"] = 1
    written["population.csv"] = write_records(
        out / "population.csv", pop.records(synthetic.SourceKind.SEARCH, scenario.region))
    search = synthetic.search_records(pop, scenario)
    written["search.csv"] = write_records(out / "search.csv", search)
    twitter = synthetic.twitter_records(pop, scenario)
    written["twitter.csv"] = write_records(out / "twitter.csv", twitter)
    if docs_per_day:
        docs = synthetic.synthetic_documents(pop.records(synthetic.SourceKind.TWITTER, scenario.region),
                                             docs_per_day, scenario.seed)
        with (out / "documents.tsv").open("w", encoding="utf-8") as fh:
            for day, region, body in docs:
                fh.write(f"{day.isoformat()}\t{region.value}\t{body}\n")
        written["documents.tsv"] = len(docs)
    return written


def read_curve(path: str | Path) -> dict[dt.date, float]:
    rows = Path(path).read_text(encoding="utf-8").splitlines()[1:]
    return {dt.date.fromisoformat(d): float(v) for d, v in (r.split(",") for r in rows if r)}


# -- ingestion ----------------------------------------------------------------

def ingest_documents(store, source, documents, vocabulary: Sequence[str], n_max: int = 2) -> int:
    """Count, normalise and append document batches; returns days appended."""
    n = 0
    for (day, region), docs in batches(documents):
        counts = count_daily(docs, vocabulary, n_max, source=source)
        store.append_day(StoreKey(region, source), to_frequency(counts, vocabulary))
        n += 1
    return n


# -- training -----------------------------------------------------------------

@dataclass
class CoverageReport:
    requested_weeks: int
    usable: list[dt.date] = field(default_factory=list)
    skipped: dict[str, str] = field(default_factory=dict)

    def summary(self) -> str:
        lines = [f"{len(self.usable)} of {self.requested_weeks} truth weeks have complete windows"]
        lines += [f"  {d}: {why}" for d, why in list(self.skipped.items())[:20]]
        if len(self.skipped) > 20:
            lines.append(f"  ... {len(self.skipped) - 20} more")
        return "\n".join(lines)


def build_training_set(snapshot: StoreSnapshot, truth: GroundTruthSeries, terms: Sequence[str] | None = None,
                       start: dt.date | None = None, end: dt.date | None = None,
                       policy: MissingDayPolicy = MissingDayPolicy.STRICT) -> tuple[TrainingSet, CoverageReport]:
    """Window-aggregate the store at every truth week-ending date."""
    region = snapshot.key.region
    entries = truth.for_region(region, start, end)
    terms = tuple(terms) if terms is not None else snapshot.terms
    report = CoverageReport(len(entries))
    if not entries or snapshot.series is None or not terms:
        raise InsufficientData(f"no overlap between truth and store {snapshot.key}\n" + report.summary())
    first = entries[0].week_ending - dt.timedelta(days=WINDOW_DAYS - 1)
    series = snapshot.get_range(terms, min(first, snapshot.series.start), entries[-1].week_ending)
    rows, ys, dates = [], [], []
    for e in entries:
        try:
            feats = aggregate_window(series, e.week_ending, policy)
        except (IncompleteWindow, OutOfRange) as exc:
            report.skipped[e.week_ending.isoformat()] = str(exc)
            continue
        if e.week_ending - dt.timedelta(days=WINDOW_DAYS - 1) < snapshot.series.start:
            report.skipped[e.week_ending.isoformat()] = "window starts before stored data"
            continue
        rows.append(feats.values)
        ys.append(e.rate)
        dates.append(e.week_ending)
        report.usable.append(e.week_ending)
    try:
        ts = TrainingSet(np.array(rows).reshape(len(rows), len(terms)), np.array(ys), tuple(dates), terms)
    except InsufficientData as exc:
        raise InsufficientData(f"{exc}\n{report.summary()}") from None
    return ts, report


@dataclass
class TrainResult:
    model: ModelArtifact
    coverage: CoverageReport
    cv: CVResult | None = None


def train_model(snapshot: StoreSnapshot, truth: GroundTruthSeries, *, start=None, end=None,
                alpha: float = 0.9, lam: float | None = None, grid_size: int = 100, folds: int = 5,
                max_sweeps: int = 1000, tolerance: float = 1e-6, bolasso: bool = False,
                n_bootstrap: int = 100, pi: float = 0.9, seed: int = 0) -> TrainResult:
    """Build the training set, pick lambda (unless given), optionally bolasso, fit."""
    ts, coverage = build_training_set(snapshot, truth, start=start, end=end)
    key = snapshot.key

    def choose(train: TrainingSet) -> tuple[Hyperparams, CVResult | None]:
        if lam is not None:
            return Hyperparams(lam, alpha, max_sweeps, tolerance), None
        cv = cv_select(train, alpha, grid_size, folds, max_sweeps=max_sweeps, tolerance=tolerance)
        return cv.best, cv

    hp, cv = choose(ts)
    selected = freqs = None
    if bolasso:
        sel = bolasso_select(ts, n_bootstrap, pi, hp, seed=seed)
        if not sel.selected:
            raise InsufficientData("bolasso selected no terms")
        selected, freqs = sel.selected, sel.frequencies
        ts = ts.restrict(selected)
        hp, cv = choose(ts)
    model = fit_elastic_net(ts, hp, region=key.region, source=key.source)
    if selected is not None:
        model = replace(model, selected_terms=selected, selection_frequencies=freqs)
    if not model.converged:
        logger.warning("model did not converge in %d sweeps", model.sweeps)
    return TrainResult(model, coverage, cv)


# -- inference ----------------------------------------------------------------

def produce_estimates(model: ModelArtifact, snapshot: StoreSnapshot, start: dt.date, end: dt.date, *,
                      policy: MissingDayPolicy = MissingDayPolicy.STRICT, smooth_window: int | None = None,
                      weekly: bool = False, week_ending_weekday: int = SUNDAY) -> list[IliEstimate | EstimateGap]:
    """The single inference path behind both the CLI and the HTTP API.

    Daily estimates over [start, end], smoothed over that same range when a
    window is given, then optionally restricted to week-ending dates.
    """
    if start > end:
        raise InvalidArgument(f"start {start} is after end {end}")
    out = estimate_range(model, snapshot, start, end, policy)
    if smooth_window:
        out = smooth(out, smooth_window)
    if weekly:
        keep = set(weekly_dates(start, end, week_ending_weekday))
        out = [e for e in out if e.date in keep]
    return out


def evaluate_model(model: ModelArtifact, snapshot: StoreSnapshot, truth: GroundTruthSeries,
                   season: Season, *, policy: MissingDayPolicy = MissingDayPolicy.STRICT,
                   smooth_window: int | None = None, use_smoothed: bool = False,
                   week_ending_weekday: int = SUNDAY) -> EvaluationReport:
    ests = produce_estimates(model, snapshot, season.start, season.end, policy=policy,
                             smooth_window=smooth_window, weekly=True,
                             week_ending_weekday=week_ending_weekday)
    values = {}
    for e in ests:
        if isinstance(e, IliEstimate):
            values[e.date] = e.smoothed_value if use_smoothed else e.value
    return season_report(values, truth, season, model.region, model.source)


# -- serving ------------------------------------------------------------------

def _smooth_window(cfg, smooth: bool | None, source: SourceKind) -> int | None:
    if smooth is None:
        smooth = source == SourceKind.TWITTER
    return cfg.smoothing_window if smooth else None


def run_inference(cfg, model_id: str, start, end, *, weekly=False, smooth=None,
                  policy=None) -> list[dict]:
    """Estimate records for a registered model; shared with the HTTP API."""
    from .registry import ModelRegistry

    model = ModelRegistry(cfg.registry_path).load(model_id)
    snapshot = FeatureStore(cfg.data_dir).snapshot(StoreKey(model.region, model.source))
    ests = produce_estimates(
        model, snapshot, start, end, policy=policy or cfg.policy,
        smooth_window=_smooth_window(cfg, smooth, model.source), weekly=weekly,
        week_ending_weekday=cfg.week_ending_weekday)
    return [estimate_record(e) for e in ests]


def records_to_csv(records: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ESTIMATE_FIELDS)
    for rec in records:
        writer.writerow(format_record_csv(rec))
    return buf.getvalue()
