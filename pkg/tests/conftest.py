import datetime as dt
import os

import numpy as np
import pytest

# every coordinate-descent sweep asserts the objective did not increase
os.environ["ILINOWCAST_CHECK_DESCENT"] = "1"

from ilinowcast.domain import Region, SourceKind  # noqa: E402
from ilinowcast.store import FeatureStore, StoreKey  # noqa: E402
from ilinowcast.text import DailyFrequencyRecord  # noqa: E402


def day(text: str) -> dt.date:
    return dt.date.fromisoformat(text)


@pytest.fixture
def store(tmp_path):
    return FeatureStore(tmp_path / "data")


@pytest.fixture
def key():
    return StoreKey(Region.ENGLAND, SourceKind.SEARCH)


def record(date, freqs, region=Region.ENGLAND, source=SourceKind.SEARCH):
    return DailyFrequencyRecord(day(date) if isinstance(date, str) else date, region, source, freqs)


def random_design(seed, n=40, p=8, noise=1.0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = X @ rng.normal(size=p) + noise * rng.normal(size=n)
    return X, y


def daily_dates(n, start="2016-01-04"):
    s = day(start)
    return tuple(s + dt.timedelta(days=7 * k) for k in range(n))


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
