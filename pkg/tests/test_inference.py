import datetime as dt

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ilinowcast import synthetic
from ilinowcast.domain import FrequencySeries, Region, SourceKind, date_range
from ilinowcast.errors import IncompleteWindow, InvalidArgument, OutOfRange
from ilinowcast.inference import (
    EstimateGap,
    IliEstimate,
    MissingDayPolicy,
    aggregate_window,
    estimate_date,
    estimate_range,
    smooth,
    weekly_estimate,
)
from ilinowcast.model import Hyperparams, ModelArtifact
from ilinowcast.store import StoreKey
from ilinowcast.workflow import build_training_set, train_model

from conftest import day, record

START = day("2016-02-01")  # a Monday


def series_from(values, missing=None, terms=("a",)):
    values = np.asarray(values, dtype=float).reshape(len(values), len(terms))
    if missing is None:
        missing = np.zeros(len(values), dtype=bool)
    values = np.where(np.asarray(missing)[:, None], np.nan, values)
    return FrequencySeries(tuple(terms), START, values, np.asarray(missing))


def linear_model(weight, bias, terms=("a",), source=SourceKind.SEARCH):
    """Prediction = bias + weight * x, expressed through a unit standardisation."""
    p = len(terms)
    return ModelArtifact(terms, np.full(p, weight), bias, np.zeros(p), np.ones(p), np.ones(p, bool),
                         Hyperparams(), True, 1, (START, START), Region.ENGLAND, source)


def fill_store(store, values, source=SourceKind.SEARCH, skip=()):
    for k, v in enumerate(values):
        d = START + dt.timedelta(days=k)
        if d in skip:
            continue
        store.append_day(StoreKey(Region.ENGLAND, source), record(d, {"a": v}, source=source))
    return store.snapshot(StoreKey(Region.ENGLAND, source))


# -- aggregation ---------------------------------------------------------------

def test_constant_window():
    s = series_from([0.001] * 7)
    feats = aggregate_window(s, START + dt.timedelta(days=6))
    assert feats.values[0] == pytest.approx(0.001, abs=1e-15) and feats.complete


def test_window_mean_example():
    s = series_from(np.array([1, 2, 3, 4, 5, 6, 8]) * 1e-5)
    feats = aggregate_window(s, START + dt.timedelta(days=6))
    assert feats.values[0] == pytest.approx(4.142857e-5, abs=1e-11)


def test_strict_missing_day():
    s = series_from([0.1] * 7, missing=[0, 0, 1, 0, 0, 0, 0])
    with pytest.raises(IncompleteWindow, match="2016-02-03"):
        aggregate_window(s, START + dt.timedelta(days=6))


def test_carry_forward_uses_previous_day():
    vals = [0.1, 0.2, 0.0, 0.4, 0.5, 0.6, 0.7]
    s = series_from(vals, missing=[0, 0, 1, 0, 0, 0, 0])
    feats = aggregate_window(s, START + dt.timedelta(days=6), MissingDayPolicy.CARRY_FORWARD)
    assert feats.values[0] == pytest.approx((0.1 + 0.2 + 0.2 + 0.4 + 0.5 + 0.6 + 0.7) / 7, abs=1e-15)
    assert not feats.complete


def test_carry_forward_nothing_earlier():
    s = series_from([0.1] * 7, missing=[1, 0, 0, 0, 0, 0, 0])
    with pytest.raises(IncompleteWindow):
        aggregate_window(s, START + dt.timedelta(days=6), MissingDayPolicy.CARRY_FORWARD)


def test_window_out_of_range():
    with pytest.raises(OutOfRange):
        aggregate_window(series_from([0.1] * 7), START + dt.timedelta(days=5))


@given(st.lists(st.floats(0, 1), min_size=7, max_size=7))
def test_window_mean_is_bounded(vals):
    m = aggregate_window(series_from(vals), START + dt.timedelta(days=6)).values[0]
    assert min(vals) - 1e-15 <= m <= max(vals) + 1e-15


# -- point estimates -----------------------------------------------------------

def test_negative_prediction_clamped(store):
    snap = fill_store(store, [0.1] * 7)
    est = estimate_date(linear_model(-8.0, 0.1), snap, START + dt.timedelta(days=6))
    assert est.value == 0.0  # raw prediction -0.7


def test_positive_prediction_passes_through(store):
    snap = fill_store(store, [0.1] * 7)
    est = estimate_date(linear_model(200.0, 1.3), snap, START + dt.timedelta(days=6))
    assert est.value == pytest.approx(21.3, abs=1e-12)


def test_estimate_before_store_is_out_of_range(store):
    snap = fill_store(store, [0.1] * 10)
    with pytest.raises(OutOfRange):
        estimate_date(linear_model(1.0, 0.0), snap, START + dt.timedelta(days=3))


def test_model_store_mismatch(store):
    snap = fill_store(store, [0.1] * 10)
    with pytest.raises(InvalidArgument):
        estimate_date(linear_model(1.0, 0.0, source=SourceKind.TWITTER), snap, START + dt.timedelta(days=8))


def test_range_gaps(store):
    missing_day = START + dt.timedelta(days=10)
    snap = fill_store(store, [0.01 * (k + 1) for k in range(20)], skip={missing_day})
    out = estimate_range(linear_model(1.0, 0.0), snap, START, START + dt.timedelta(days=19))
    assert len(out) == 20
    reasons = {e.date: e.reason for e in out if isinstance(e, EstimateGap)}
    for k in range(6):
        assert reasons[START + dt.timedelta(days=k)] == "out-of-range"
    for k in range(10, 17):
        assert reasons[START + dt.timedelta(days=k)] == "incomplete-window"
    assert len(reasons) == 13

    carried = estimate_range(linear_model(1.0, 0.0), snap, START + dt.timedelta(days=6),
                             START + dt.timedelta(days=19), MissingDayPolicy.CARRY_FORWARD)
    assert all(isinstance(e, IliEstimate) for e in carried)
    assert [e.window_complete for e in carried].count(False) == 7


def test_range_matches_point_estimates(store):
    rng = np.random.default_rng(0)
    snap = fill_store(store, rng.uniform(0, 0.01, size=30))
    m = linear_model(900.0, 0.5)
    out = estimate_range(m, snap, START + dt.timedelta(days=6), START + dt.timedelta(days=29))
    for e in out:
        assert e == estimate_date(m, snap, e.date)


# -- weekly --------------------------------------------------------------------

def test_weekly_sunday(store):
    snap = fill_store(store, np.linspace(0.001, 0.01, 21))
    m = linear_model(1000.0, 0.0)
    sunday = START + dt.timedelta(days=13)
    assert sunday.weekday() == 6
    w = weekly_estimate(m, snap, sunday)
    mon = sunday - dt.timedelta(days=6)
    expected = np.linspace(0.001, 0.01, 21)[(mon - START).days:(sunday - START).days + 1].mean() * 1000
    assert w.value == pytest.approx(expected, rel=1e-12)
    assert w == estimate_date(m, snap, sunday)


def test_weekly_rejects_non_sunday(store):
    snap = fill_store(store, [0.1] * 21)
    with pytest.raises(InvalidArgument, match="wednesday"):
        weekly_estimate(linear_model(1.0, 0.0), snap, START + dt.timedelta(days=9))


# -- smoothing -----------------------------------------------------------------

def estimates(vals, start=START):
    return [IliEstimate(start + dt.timedelta(days=k), Region.ENGLAND, SourceKind.TWITTER, float(v), "m")
            for k, v in enumerate(vals)]


def test_smooth_spike():
    out = smooth(estimates([0, 0, 9, 0, 0]), 3)
    assert [e.smoothed_value for e in out] == [0, 3, 3, 3, 0]
    assert [e.value for e in out] == [0, 0, 9, 0, 0]


def test_smooth_constant():
    out = smooth(estimates([2.5] * 12), 7)
    assert all(e.smoothed_value == pytest.approx(2.5, abs=1e-15) for e in out)


def test_smooth_singleton():
    assert smooth(estimates([4.0]))[0].smoothed_value == 4.0


@pytest.mark.parametrize("w", [2, 4, 1, 0])
def test_smooth_bad_window(w):
    with pytest.raises(InvalidArgument):
        smooth(estimates([1.0] * 5), w)


def test_smooth_splits_on_gaps():
    ests = estimates([1, 1, 1, 10, 10, 10])
    gap = EstimateGap(ests[2].date, Region.ENGLAND, SourceKind.TWITTER, "m", "incomplete-window")
    out = smooth(ests[:2] + [gap] + ests[3:], 3)
    assert [e.smoothed_value for e in out if isinstance(e, IliEstimate)] == [1, 1, 10, 10, 10]


@given(st.lists(st.floats(0, 100), min_size=1, max_size=40), st.sampled_from([3, 5, 7, 9]))
def test_smooth_bounded(vals, w):
    out = smooth(estimates(vals), w)
    for e in out:
        assert min(vals) - 1e-9 <= e.smoothed_value <= max(vals) + 1e-9


# -- end to end on noiseless synthetic data ------------------------------------

def test_noiseless_synthetic_recovery(store):
    sc = synthetic.SyntheticScenario(seed=5, n_days=364, noise_std=0.0, noise_term_std=0.0, n_terms=12,
                                     n_signal_terms=4)
    curve = synthetic.generate_epidemic_curve(sc)
    pop = synthetic.generate_term_frequencies(curve, sc)
    k = StoreKey(Region.ENGLAND, SourceKind.SEARCH)
    for rec in pop.records(SourceKind.SEARCH, Region.ENGLAND):
        store.append_day(k, rec)
    snap = store.snapshot(k)
    from ilinowcast.domain import GroundTruthSeries
    truth = GroundTruthSeries(curve.weekly_truth(Region.ENGLAND))
    model = train_model(snap, truth, lam=1e-7, alpha=0.9, tolerance=1e-10, max_sweeps=100000).model
    days = curve.dates[6:]
    out = estimate_range(model, snap, days[0], days[-1])
    err = max(abs(e.value - curve.window_mean(e.date)) for e in out)
    assert err < 1e-3
