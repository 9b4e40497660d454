import datetime as dt

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ilinowcast.domain import (
    FrequencySeries,
    GroundTruthSeries,
    Region,
    SourceKind,
    TruthEntry,
    parse_date,
    read_ground_truth,
    weekly_dates,
    window_dates,
    write_ground_truth,
)
from ilinowcast.errors import InvalidArgument, ParseError

from conftest import day


def test_window_dates_descending_week():
    got = window_dates(day("2016-03-13"))
    assert got == [day(f"2016-03-{d:02d}") for d in range(13, 6, -1)]


def test_window_crosses_year_boundary():
    assert day("2015-12-26") in window_dates(day("2016-01-01"))


def test_window_handles_leap_february():
    w = window_dates(day("2016-03-01"))
    assert day("2016-02-29") in w
    assert day("2016-02-24") in w


@given(st.dates(min_value=dt.date(1, 1, 7)))
def test_window_shape(i):
    w = window_dates(i)
    assert len(w) == 7 and i in w
    assert (max(w) - min(w)).days == 6


@pytest.mark.parametrize("region", list(Region))
def test_region_roundtrip(region):
    assert Region.parse(str(region)) is region


@pytest.mark.parametrize("source", list(SourceKind))
def test_source_roundtrip(source):
    assert SourceKind.parse(source.value) is source


def test_unknown_region_rejected():
    with pytest.raises(InvalidArgument):
        Region.parse("wales")


def test_region_wire_labels():
    assert [r.value for r in Region] == [
        "england", "london", "north_england", "south_england", "midlands_east_england"]


@pytest.mark.parametrize("bad", ["2016-3-1", "2016-02-30", "20160301", "", "yesterday"])
def test_parse_date_rejects(bad):
    with pytest.raises(InvalidArgument):
        parse_date(bad)


def test_frequency_series_validates():
    ok = FrequencySeries(("a", "b"), day("2016-01-01"), np.full((3, 2), 0.5), np.zeros(3, bool))
    assert ok.end == day("2016-01-03")
    assert not ok.values.flags.writeable
    with pytest.raises(InvalidArgument):
        FrequencySeries(("a",), day("2016-01-01"), np.full((3, 2), 0.5), np.zeros(3, bool))
    with pytest.raises(InvalidArgument):
        FrequencySeries(("a",), day("2016-01-01"), np.array([[1.5]]), np.zeros(1, bool))
    with pytest.raises(InvalidArgument):
        FrequencySeries(("a",), day("2016-01-01"), np.array([[np.inf]]), np.zeros(1, bool))
    with pytest.raises(InvalidArgument):
        FrequencySeries(("a", "a"), day("2016-01-01"), np.zeros((1, 2)), np.zeros(1, bool))
    # missing rows are not validated
    FrequencySeries(("a",), day("2016-01-01"), np.array([[np.nan]]), np.ones(1, bool))


def test_ground_truth_ordering():
    e = lambda d, r=1.0: TruthEntry(day(d), Region.ENGLAND, r)
    GroundTruthSeries((e("2016-01-03"), e("2016-01-10")))
    with pytest.raises(InvalidArgument):
        GroundTruthSeries((e("2016-01-10"), e("2016-01-03")))
    with pytest.raises(InvalidArgument):
        GroundTruthSeries((e("2016-01-03"), e("2016-01-03")))
    with pytest.raises(InvalidArgument):
        GroundTruthSeries((e("2016-01-03", -1.0),))


def test_ground_truth_csv_roundtrip(tmp_path):
    entries = [TruthEntry(day("2016-01-03"), Region.LONDON, 12.25),
               TruthEntry(day("2016-01-10"), Region.LONDON, 0.1 + 0.2)]
    path = tmp_path / "truth.csv"
    write_ground_truth(path, entries)
    assert path.read_text().splitlines()[0] == "week_ending,region,ili_rate"
    assert list(read_ground_truth(path).entries) == entries


def test_ground_truth_rejects_non_sunday(tmp_path):
    path = tmp_path / "truth.csv"
    path.write_text("week_ending,region,ili_rate\n2016-01-06,england,3.0\n")
    with pytest.raises(ParseError, match=":2"):
        read_ground_truth(path)


def test_weekly_dates_are_sundays():
    got = weekly_dates(day("2016-03-01"), day("2016-03-31"))
    assert got == [day("2016-03-06"), day("2016-03-13"), day("2016-03-20"), day("2016-03-27")]
