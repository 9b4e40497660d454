import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ilinowcast.errors import Aborted, InsufficientData, InvalidArgument
from ilinowcast.model import (
    Hyperparams,
    ModelArtifact,
    TrainingSet,
    bolasso_select,
    coordinate_descent,
    cv_select,
    fit_elastic_net,
    forward_chain_folds,
    lambda_max,
    objective,
    predict,
    soft_threshold,
    standardize,
)

from conftest import daily_dates, random_design


def training_set(X, y):
    n, p = np.shape(X)
    return TrainingSet(X, y, daily_dates(n), tuple(f"t{j}" for j in range(p)))


def ols_oracle(X, y):
    """Least squares on the standardised design via the normal equations."""
    Z = (X - X.mean(axis=0)) / X.std(axis=0)
    return np.linalg.solve(Z.T @ Z, Z.T @ (y - y.mean()))


# -- soft threshold ------------------------------------------------------------

@pytest.mark.parametrize("z, gamma, out", [(3.0, 1.0, 2.0), (-0.5, 1.0, 0.0), (0.0, 5.0, 0.0),
                                           (-3.0, 1.0, -2.0), (1.0, 1.0, 0.0)])
def test_soft_threshold_values(z, gamma, out):
    assert soft_threshold(z, gamma) == out


reals = st.floats(-1e6, 1e6, allow_nan=False)


@given(reals, st.floats(0, 1e6))
def test_soft_threshold_properties(z, gamma):
    out = soft_threshold(z, gamma)
    assert abs(out) <= abs(z)
    assert (out == 0) == (abs(z) <= gamma)
    assert soft_threshold(-z, gamma) == -out


def test_soft_threshold_negative_gamma():
    with pytest.raises(InvalidArgument):
        soft_threshold(1.0, -0.1)


# -- standardize ---------------------------------------------------------------

def test_standardize_column():
    Z, st_ = standardize(np.array([[1.0], [2.0], [3.0]]))
    assert st_.mean[0] == 2.0
    assert st_.std[0] == pytest.approx(math.sqrt(2 / 3), rel=1e-15)
    assert abs(Z.sum()) < 1e-15


def test_standardize_constant_column_flagged():
    Z, st_ = standardize(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]]))
    assert st_.retained.tolist() == [False, True]
    assert (Z[:, 0] == 0).all()


def test_standardize_idempotent():
    X, _ = random_design(3)
    Z, _ = standardize(X)
    Z2, _ = standardize(Z)
    np.testing.assert_allclose(Z2, Z, atol=1e-12, rtol=0)


# -- fit -----------------------------------------------------------------------

def test_noiseless_single_feature():
    rng = np.random.default_rng(11)
    x = rng.normal(size=30)
    x = (x - x.mean()) / x.std()
    m = fit_elastic_net(training_set(x[:, None], 2 * x), Hyperparams(lam=1e-8, alpha=0.9))
    assert m.weights[0] == pytest.approx(2.0, abs=1e-4)
    assert m.converged


@pytest.mark.parametrize("seed", range(5))
def test_matches_ols_oracle(seed):
    X, y = random_design(100 + seed, n=20, p=5)
    m = fit_elastic_net(training_set(X, y), Hyperparams(lam=1e-10, alpha=1.0))
    np.testing.assert_allclose(m.weights, ols_oracle(X, y), atol=1e-6, rtol=0)


def _all_zero(X, y, lam):
    return not fit_elastic_net(training_set(X, y), Hyperparams(lam=lam, alpha=1.0)).weights.any()


@pytest.mark.parametrize("seed", range(3))
def test_lambda_max_matches_bisection_over_fits(seed):
    X, y = random_design(200 + seed, n=30, p=6)
    # brute force: bracket the zero/nonzero boundary by fitting, never using the formula
    lo, hi = 1e-6, 1.0
    while not _all_zero(X, y, hi):
        hi *= 2
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if _all_zero(X, y, mid) else (mid, hi)
    assert lambda_max(X, y) == pytest.approx(hi, rel=1e-9)
    assert _all_zero(X, y, lambda_max(X, y))


def test_lambda_max_elastic_net_scaling():
    X, y = random_design(7)
    assert lambda_max(X, y, alpha=0.5) == pytest.approx(2 * lambda_max(X, y, alpha=1.0), rel=1e-15)
    m = fit_elastic_net(training_set(X, y), Hyperparams(lam=1.001 * lambda_max(X, y, 0.5), alpha=0.5))
    assert not m.weights.any()


def test_objective_monotone_trace():
    X, y = random_design(5, n=50, p=10)
    X[:, 1] = X[:, 0] + 0.01 * X[:, 1]  # strongly correlated pair: many sweeps
    m = fit_elastic_net(training_set(X, y), Hyperparams(lam=1e-3, alpha=0.5), trace=True)
    trace = np.array(m.objective_trace)
    assert len(trace) > 3
    assert np.all(np.diff(trace) <= 1e-12 * np.abs(trace[:-1]))


def test_non_convergence_flagged():
    X, y = random_design(5, n=50, p=10)
    X[:, 1] = X[:, 0] + 1e-3 * X[:, 1]
    m = fit_elastic_net(training_set(X, y), Hyperparams(lam=1e-9, alpha=1.0, max_sweeps=3))
    assert not m.converged and m.sweeps == 3


def test_degenerate_feature_excluded():
    X, y = random_design(9, n=20, p=3)
    X[:, 1] = 0.25
    m = fit_elastic_net(training_set(X, y), Hyperparams(lam=1e-6))
    assert m.weights[1] == 0.0 and not m.retained[1]
    # the dead column is ignored at prediction time too
    x = X[0].copy()
    x2 = x.copy()
    x2[1] = 0.9
    assert predict(m, x) == predict(m, x2)


def test_training_set_invariants():
    X, y = random_design(1, n=10, p=2)
    with pytest.raises(InsufficientData):
        training_set(X[:7], y[:7])
    bad = X.copy()
    bad[0, 0] = np.nan
    with pytest.raises(InvalidArgument):
        training_set(bad, y)
    with pytest.raises(InvalidArgument):
        TrainingSet(X, y, daily_dates(10)[::-1], ("a", "b"))


@pytest.mark.parametrize("kw", [{"lam": 0.0}, {"alpha": 0.0}, {"alpha": 1.5}, {"tolerance": 0},
                                {"max_sweeps": 0}])
def test_hyperparams_validated(kw):
    with pytest.raises(InvalidArgument):
        Hyperparams(**kw)


# -- predict -------------------------------------------------------------------

def test_predict_mean_vector_returns_bias():
    X, y = random_design(4)
    m = fit_elastic_net(training_set(X, y), Hyperparams(lam=0.01))
    assert predict(m, X.mean(axis=0)) == pytest.approx(m.bias, abs=1e-12)


def test_predict_null_model():
    X, y = random_design(4)
    m = fit_elastic_net(training_set(X, y), Hyperparams(lam=10 * lambda_max(X, y, 0.9)))
    assert not m.weights.any()
    for row in X[:5]:
        assert predict(m, row) == m.bias == pytest.approx(y.mean())


def test_predict_recovers_line():
    x = np.linspace(0.001, 0.01, 20)
    m = fit_elastic_net(training_set(x[:, None], 2 * x), Hyperparams(lam=1e-10, alpha=1.0))
    assert predict(m, [0.0123]) == pytest.approx(0.0246, abs=1e-4)


def test_predict_dimension_mismatch():
    X, y = random_design(4)
    m = fit_elastic_net(training_set(X, y), Hyperparams())
    with pytest.raises(InvalidArgument):
        predict(m, X[0, :3])


@settings(max_examples=50)
@given(st.lists(st.floats(-10, 10), min_size=16, max_size=16))
def test_predict_affine(vals):
    X, y = random_design(12)
    m = fit_elastic_net(training_set(X, y), Hyperparams(lam=0.01))
    x1, x2 = np.array(vals[:8]), np.array(vals[8:])
    mid = predict(m, (x1 + x2) / 2)
    assert mid == pytest.approx((predict(m, x1) + predict(m, x2)) / 2, abs=1e-10)


# -- artifact serialisation ----------------------------------------------------

def test_artifact_json_roundtrip(tmp_path):
    X, y = random_design(21)
    m = fit_elastic_net(training_set(X, y), Hyperparams(lam=0.003))
    path = tmp_path / "m.json"
    m.save(path)
    back = ModelArtifact.load(path)
    np.testing.assert_array_equal(back.weights, m.weights)
    np.testing.assert_array_equal(back.mean, m.mean)
    np.testing.assert_array_equal(back.std, m.std)
    assert back.bias == m.bias and back.model_id == m.model_id
    for row in X:
        assert predict(back, row) == predict(m, row)


# -- cross-validation ----------------------------------------------------------

def test_forward_chain_folds_n8():
    folds = forward_chain_folds(8, 2)
    assert [tr.tolist() for tr, _ in folds] == [[0, 1, 2, 3], [0, 1, 2, 3, 4, 5]]
    assert [va.tolist() for _, va in folds] == [[4, 5], [6, 7]]


@given(st.integers(8, 400), st.integers(2, 10))
def test_forward_chain_never_trains_on_future(n, k):
    for tr, va in forward_chain_folds(n, k):
        assert tr.max() < va.min()
        assert tr.tolist() == list(range(va.min()))


def test_cv_noiseless_picks_small_lambda():
    rng = np.random.default_rng(31)
    X = rng.normal(size=(60, 5))
    y = X @ np.array([1.0, -2.0, 0.5, 0.0, 3.0]) + 4.0
    cv = cv_select(training_set(X, y), alpha=0.9, grid_size=30, folds=5)
    assert cv.best.lam in cv.lambdas[-2:]
    for tr, va in cv.folds:
        assert tr.max() < va.min()


def test_cv_pure_noise_selects_null_model():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(60, 5))
    y = rng.normal(size=60) + 10
    ts = training_set(X, y)
    cv = cv_select(ts, alpha=0.9, grid_size=30, folds=5)
    m = fit_elastic_net(ts, cv.best)
    assert not m.weights.any()


def test_cv_ties_prefer_larger_lambda():
    # a constant target makes every lambda score the same
    X, _ = random_design(2, n=40, p=3)
    cv = cv_select(training_set(X, np.full(40, 5.0)), grid_size=10, folds=4)
    assert cv.best.lam == cv.lambdas[0]


def test_cv_insufficient_data():
    X, y = random_design(3, n=8, p=2)
    with pytest.raises(InsufficientData):
        cv_select(training_set(X, y), folds=2)


def test_cv_grid_is_logarithmic():
    X, y = random_design(3, n=60, p=4)
    cv = cv_select(training_set(X, y), alpha=1.0, grid_size=25, folds=3)
    assert cv.lambdas[0] == pytest.approx(lambda_max(X, y, 1.0), rel=1e-15)
    assert cv.lambdas[-1] == pytest.approx(1e-4 * cv.lambdas[0], rel=1e-12)
    ratios = cv.lambdas[1:] / cv.lambdas[:-1]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-10)


# -- bolasso -------------------------------------------------------------------

def high_snr_instance(seed=0, n=120, p=12, k=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    beta = np.zeros(p)
    beta[:k] = [2.0, -1.5, 1.0, 2.5][:k]
    y = X @ beta + 0.3 * rng.normal(size=n)
    return training_set(X, y), [f"t{j}" for j in range(k)]


def test_bolasso_strong_signal_always_selected():
    ts, signal = high_snr_instance()
    res = bolasso_select(ts, B=50, pi=0.9, hp=Hyperparams(lam=0.1), seed=3)
    for t in signal:
        assert res.frequencies[t] == 1.0


def test_bolasso_noise_below_threshold():
    ts, signal = high_snr_instance(seed=1)
    res = bolasso_select(ts, B=100, pi=0.9, hp=Hyperparams(lam=0.1), seed=4)
    noise = [t for t in ts.terms if t not in signal]
    assert max(res.frequencies[t] for t in noise) < 0.9
    assert set(res.selected) == set(signal)


def test_bolasso_threshold_semantics():
    ts, _ = high_snr_instance(seed=2)
    res = bolasso_select(ts, B=10, pi=1.0, hp=Hyperparams(lam=0.05), seed=5)
    assert set(res.selected) == {t for t, f in res.frequencies.items() if f == 1.0}


def test_bolasso_reproducible():
    ts, _ = high_snr_instance(seed=2)
    a = bolasso_select(ts, B=20, pi=0.9, hp=Hyperparams(lam=0.05), seed=9)
    b = bolasso_select(ts, B=20, pi=0.9, hp=Hyperparams(lam=0.05), seed=9)
    assert a == b


def test_bolasso_arguments():
    ts, _ = high_snr_instance()
    with pytest.raises(InvalidArgument):
        bolasso_select(ts, B=9)
    with pytest.raises(InvalidArgument):
        bolasso_select(ts, pi=0.5)


def test_bolasso_aborts_on_many_failures(monkeypatch):
    from ilinowcast import model as model_mod
    from ilinowcast.errors import NumericalFailure

    ts, _ = high_snr_instance()
    real = model_mod._fit_arrays
    calls = {"n": 0}

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] % 5 == 0:
            raise NumericalFailure("synthetic failure")
        return real(*a, **k)

    monkeypatch.setattr(model_mod, "_fit_arrays", flaky)
    with pytest.raises(Aborted):
        bolasso_select(ts, B=20, hp=Hyperparams(lam=0.1))
