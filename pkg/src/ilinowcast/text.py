"""Tokenisation, n-gram extraction and daily term-frequency aggregation."""

from __future__ import annotations

import datetime as dt
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .domain import Region, SourceKind, parse_date
from .errors import Aborted, EmptyDayError, InvalidArgument, InvalidBatch

logger = logging.getLogger(__name__)

DEFAULT_N_MAX = 2
MAX_BAD_LINE_FRACTION = 0.01

_URL = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION = re.compile(r"@\w+")
# runs of Unicode letters/digits; underscore counts as a boundary
_TOKEN = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class Document:
    text: str
    date: dt.date
    region: Region

    def __post_init__(self):
        if not self.text.strip():
            raise InvalidArgument("document text is empty")
        object.__setattr__(self, "date", parse_date(self.date))
        object.__setattr__(self, "region", Region.parse(self.region))


@dataclass(frozen=True)
class DailyTermCounts:
    date: dt.date
    region: Region
    source: SourceKind
    counts: Mapping[str, int]
    total_documents: int

    def __post_init__(self):
        if self.total_documents < 0:
            raise InvalidArgument("total_documents must be non-negative")
        counts = dict(self.counts)
        for term, c in counts.items():
            if c < 0 or c > self.total_documents:
                raise InvalidArgument(
                    f"count for {term!r} ({c}) outside [0, {self.total_documents}]"
                )
        if self.total_documents == 0 and counts:
            raise InvalidArgument("a day without documents cannot carry counts")
        object.__setattr__(self, "counts", counts)


@dataclass(frozen=True)
class DailyFrequencyRecord:
    date: dt.date
    region: Region
    source: SourceKind
    frequencies: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        freqs = {t: float(v) for t, v in self.frequencies.items()}
        for term, v in freqs.items():
            if not 0.0 <= v <= 1.0:
                raise InvalidArgument(f"frequency for {term!r} is {v!r}, outside [0, 1]")
        object.__setattr__(self, "date", parse_date(self.date))
        object.__setattr__(self, "frequencies", freqs)


def tokenize(text: str) -> list[str]:
    text = _MENTION.sub(" ", _URL.sub(" ", text.casefold()))
    return [tok for tok in _TOKEN.findall(text) if len(tok) >= 2]


def extract_ngrams(tokens: Sequence[str], n_max: int = DEFAULT_N_MAX) -> list[str]:
    """All contiguous 1..n_max-grams, grouped by order, duplicates kept."""
    if n_max not in (1, 2, 3):
        raise InvalidArgument(f"n_max must be 1, 2 or 3, got {n_max!r}")
    grams = []
    for n in range(1, n_max + 1):
        for k in range(len(tokens) - n + 1):
            grams.append(" ".join(tokens[k:k + n]))
    return grams


def count_daily(documents: Sequence[Document], vocabulary: Iterable[str],
                n_max: int = DEFAULT_N_MAX, *, source: SourceKind = SourceKind.TWITTER,
                date: dt.date | None = None, region: Region | None = None) -> DailyTermCounts:
    """Count, per vocabulary term, the documents that contain it at least once.

    ``date``/``region`` label an empty batch; for a non-empty batch they
    default to those of the first document.
    """
    vocab = set(vocabulary)
    if documents:
        date = date or documents[0].date
        region = region or documents[0].region
    if date is None or region is None:
        raise InvalidBatch("an empty batch needs an explicit date and region")
    counts: Counter[str] = Counter()
    for doc in documents:
        if doc.date != date or doc.region != region:
            raise InvalidBatch(
                f"document for ({doc.date}, {doc.region}) in batch for ({date}, {region})"
            )
        present = set(extract_ngrams(tokenize(doc.text), n_max)) & vocab
        counts.update(present)
    return DailyTermCounts(date, Region.parse(region), SourceKind.parse(source),
                           dict(sorted(counts.items())), len(documents))


def to_frequency(counts: DailyTermCounts, vocabulary: Iterable[str] | None = None) -> DailyFrequencyRecord:
    """Normalise counts by the day's document total.

    Every term in ``vocabulary`` (default: the counted terms) gets an entry,
    zero when absent.
    """
    if counts.total_documents == 0:
        raise EmptyDayError(f"no documents for {counts.date} ({counts.region})")
    terms = sorted(set(vocabulary) if vocabulary is not None else set(counts.counts))
    total = counts.total_documents
    freqs = {t: counts.counts.get(t, 0) / total for t in terms}
    return DailyFrequencyRecord(counts.date, counts.region, counts.source, freqs)


def estimate_query_probability(sessions_with_term: int, sampled_sessions: int) -> float:
    if sampled_sessions == 0:
        raise EmptyDayError("no sampled sessions")
    if sampled_sessions < 0 or not 0 <= sessions_with_term <= sampled_sessions:
        raise InvalidArgument(
            f"need 0 <= sessions_with_term ({sessions_with_term}) <= "
            f"sampled_sessions ({sampled_sessions})"
        )
    return sessions_with_term / sampled_sessions


@dataclass
class ReplayStats:
    lines: int = 0
    bad_lines: int = 0
    bad_examples: list[str] = field(default_factory=list)


def read_documents(path: str | Path, stats: ReplayStats | None = None) -> list[Document]:
    """Parse a ``date<TAB>region<TAB>text`` replay file.

    Malformed lines are counted in ``stats`` and skipped; more than 1% bad
    lines aborts the whole file.
    """
    stats = stats if stats is not None else ReplayStats()
    docs = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            stats.lines += 1
            parts = line.split("\t", 2)
            try:
                if len(parts) != 3:
                    raise InvalidArgument("expected 3 tab-separated fields")
                docs.append(Document(parts[2], parse_date(parts[0]), Region.parse(parts[1])))
            except InvalidArgument as exc:
                stats.bad_lines += 1
                if len(stats.bad_examples) < 5:
                    stats.bad_examples.append(f"line {lineno}: {exc}")
    if stats.lines and stats.bad_lines / stats.lines > MAX_BAD_LINE_FRACTION:
        raise Aborted(
            f"{stats.bad_lines} of {stats.lines} lines failed to parse "
            f"(> {MAX_BAD_LINE_FRACTION:.0%}); first: {stats.bad_examples}"
        )
    if stats.bad_lines:
        logger.warning("skipped %d malformed lines in %s", stats.bad_lines, path)
    return docs


def batches(documents: Iterable[Document]) -> Iterator[tuple[tuple[dt.date, Region], list[Document]]]:
    """Group documents into (date, region) batches, ordered by date then region."""
    groups: dict[tuple[dt.date, Region], list[Document]] = {}
    for doc in documents:
        groups.setdefault((doc.date, doc.region), []).append(doc)
    for key in sorted(groups, key=lambda k: (k[0], k[1].value)):
        yield key, groups[key]
