"""Regularised linear nowcasting models.

Elastic net fitted by cyclic coordinate descent on standardised features,
penalty strength chosen by forward-chaining cross-validation, optional
bootstrap-lasso (bolasso) feature selection.

The objective minimised is::

    (1/2n) ||y - b - Z w||^2 + lambda * (alpha ||w||_1 + (1 - alpha)/2 ||w||^2)

where ``Z`` is the standardised design. Targets are used on their own
scale, so ``b`` is simply the mean of ``y``.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .domain import Region, SourceKind, parse_date
from .errors import Aborted, InsufficientData, InvalidArgument, NumericalFailure

MIN_SAMPLES = 8
MIN_FOLD_SAMPLES = 4
# test suites set this to assert monotone descent of the objective per sweep
CHECK_DESCENT_ENV = "ILINOWCAST_CHECK_DESCENT"


@dataclass(frozen=True)
class Hyperparams:
    lam: float = 1e-3
    alpha: float = 0.9
    max_sweeps: int = 1000
    tolerance: float = 1e-6

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise InvalidArgument(f"lambda must be > 0, got {self.lam!r}")
        if not 0 < self.alpha <= 1:
            raise InvalidArgument(f"alpha must be in (0, 1], got {self.alpha!r}")
        if self.max_sweeps < 1:
            raise InvalidArgument("max_sweeps must be >= 1")
        if not self.tolerance > 0:
            raise InvalidArgument("tolerance must be > 0")

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "alpha": self.alpha,
                "max_sweeps": self.max_sweeps, "tolerance": self.tolerance}

    @classmethod
    def from_dict(cls, d: dict) -> Hyperparams:
        return cls(lam=float(d["lambda"]), alpha=float(d["alpha"]),
                   max_sweeps=int(d["max_sweeps"]), tolerance=float(d["tolerance"]))


@dataclass(frozen=True)
class TrainingSet:
    X: np.ndarray
    y: np.ndarray
    sample_dates: tuple[dt.date, ...]
    terms: tuple[str, ...]

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float)
        if X.ndim != 2:
            raise InvalidArgument("X must be a matrix")
        n, p = X.shape
        if n < MIN_SAMPLES:
            raise InsufficientData(f"need at least {MIN_SAMPLES} samples, got {n}")
        if p < 1:
            raise InvalidArgument("need at least one term")
        if y.shape != (n,) or len(self.sample_dates) != n or len(self.terms) != p:
            raise InvalidArgument("X, y, sample_dates and terms disagree in size")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidArgument("training data contains missing or non-finite entries")
        dates = tuple(parse_date(d) for d in self.sample_dates)
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise InvalidArgument("sample dates must be strictly increasing")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sample_dates", dates)
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def subset(self, rows) -> TrainingSet:
        rows = np.asarray(rows)
        return TrainingSet(self.X[rows], self.y[rows],
                           tuple(self.sample_dates[i] for i in rows), self.terms)

    def restrict(self, terms: Sequence[str]) -> TrainingSet:
        idx = [self.terms.index(t) for t in terms]
        return TrainingSet(self.X[:, idx], self.y, self.sample_dates, tuple(terms))


def soft_threshold(z: float, gamma: float) -> float:
    if gamma < 0:
        raise InvalidArgument("gamma must be non-negative")
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


@dataclass(frozen=True)
class Standardization:
    mean: np.ndarray
    std: np.ndarray
    retained: np.ndarray  # False for zero-variance columns


def standardize(X: np.ndarray) -> tuple[np.ndarray, Standardization]:
    """Centre columns and scale them to unit population standard deviation.

    Constant columns are flagged as not retained and come back as zeros.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise InvalidArgument("standardisation needs at least 2 rows")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    retained = np.ptp(X, axis=0) > 0
    std = np.where(retained, std, 0.0)
    Z = np.zeros_like(X)
    Z[:, retained] = (X[:, retained] - mean[retained]) / std[retained]
    return Z, Standardization(mean, std, retained)


def objective(Z: np.ndarray, yc: np.ndarray, w: np.ndarray, lam: float, alpha: float) -> float:
    """Penalised loss with the bias already profiled out (``yc`` is centred)."""
    r = yc - Z @ w
    n = Z.shape[0]
    return float(r @ r / (2 * n) + lam * (alpha * np.abs(w).sum() + 0.5 * (1 - alpha) * w @ w))


@njit(cache=True)
def _column_correlations(Zt, r):
    # same summation order as the solver's first sweep, so lambda_max is exact
    out = np.empty(Zt.shape[0])
    for j in range(Zt.shape[0]):
        acc = 0.0
        for i in range(r.shape[0]):
            acc += Zt[j, i] * r[i]
        out[j] = acc + 0.0
    return out


def lambda_max(X: np.ndarray, y: np.ndarray, alpha: float = 1.0) -> float:
    """Smallest penalty at which every weight is exactly zero."""
    Z, st = standardize(X)
    yc = np.asarray(y, dtype=float) - np.mean(y)
    Zt = np.ascontiguousarray(Z.T)
    return float(np.max(np.abs(_column_correlations(Zt, yc))) / Z.shape[0] / alpha)


# Thresholding slack: a lambda computed with a different summation order than
# the sweep's can sit a few ulps below |z|; keep such coordinates exactly zero.
_ZERO_MARGIN = 1.0 + 1e-12


@njit(cache=True)
def _sweep(Zt, sq, r, w, todo, n, gamma, ridge):
    """One cyclic pass over the coordinates in ``todo``; updates w and r in place."""
    max_delta = 0.0
    m = r.shape[0]
    for j in todo:
        old = w[j]
        rho = 0.0
        for i in range(m):
            rho += Zt[j, i] * r[i]
        z = (rho + sq[j] * old) / n
        if abs(z) <= gamma * _ZERO_MARGIN:
            new = 0.0
        elif z > 0:
            new = (z - gamma) / (sq[j] / n + ridge)
        else:
            new = (z + gamma) / (sq[j] / n + ridge)
        if new != old:
            d = new - old
            for i in range(m):
                r[i] -= d * Zt[j, i]
            w[j] = new
            if abs(d) > max_delta:
                max_delta = abs(d)
    return max_delta


@dataclass
class DescentResult:
    w: np.ndarray
    sweeps: int
    converged: bool
    objective: float
    trace: list[float] = field(default_factory=list)


def coordinate_descent(Z: np.ndarray, yc: np.ndarray, lam: float, alpha: float, *,
                       max_sweeps: int = 1000, tolerance: float = 1e-6,
                       w0: np.ndarray | None = None, active: np.ndarray | None = None,
                       trace: bool = False) -> DescentResult:
    """Cyclic coordinate descent on a standardised design and centred target."""
    n, p = Z.shape
    Zt = np.ascontiguousarray(Z.T)
    sq = np.einsum("ij,ij->i", Zt, Zt)
    active = np.ones(p, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    w = np.zeros(p) if w0 is None else np.array(w0, dtype=float)
    w[~active] = 0.0
    r = yc - Z @ w if w.any() else np.array(yc, dtype=float)
    gamma = lam * alpha
    ridge = lam * (1 - alpha)
    check = trace or os.environ.get(CHECK_DESCENT_ENV) == "1"
    history = [objective(Z, yc, w, lam, alpha)] if check else []
    cols = np.array([j for j in range(p) if active[j] and sq[j] > 0], dtype=np.int64)
    converged = False
    sweeps = 0
    full = True  # alternate full sweeps with sweeps over the nonzero set only
    while sweeps < max_sweeps:
        sweeps += 1
        todo = cols if full else cols[w[cols] != 0.0]
        max_delta = _sweep(Zt, sq, r, w, todo, float(n), float(gamma), float(ridge))
        if not np.all(np.isfinite(w)):
            raise NumericalFailure(f"non-finite weights after sweep {sweeps}")
        if check:
            obj = objective(Z, yc, w, lam, alpha)
            if not math.isfinite(obj):
                raise NumericalFailure(f"non-finite objective after sweep {sweeps}")
            prev = history[-1]
            assert obj <= prev + 1e-12 * max(1.0, abs(prev)), (
                f"objective increased at sweep {sweeps}: {prev!r} -> {obj!r}")
            history.append(obj)
        if max_delta < tolerance:
            if full:
                converged = True
                break
            full = True
        else:
            full = False
    final = history[-1] if check else objective(Z, yc, w, lam, alpha)
    if not math.isfinite(final):
        raise NumericalFailure("non-finite objective")
    return DescentResult(w, sweeps, converged, final, history)


@dataclass(frozen=True)
class ModelArtifact:
    terms: tuple[str, ...]
    weights: np.ndarray
    bias: float
    mean: np.ndarray
    std: np.ndarray
    retained: np.ndarray
    hyperparams: Hyperparams
    converged: bool
    sweeps: int
    trained_on: tuple[dt.date, dt.date]
    region: Region = Region.ENGLAND
    source: SourceKind = SourceKind.SEARCH
    selected_terms: tuple[str, ...] | None = None
    selection_frequencies: dict[str, float] | None = None
    n_samples: int = 0
    objective_trace: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        p = len(self.terms)
        for name in ("weights", "mean", "std", "retained"):
            a = np.array(getattr(self, name), dtype=bool if name == "retained" else float)
            if a.shape != (p,):
                raise InvalidArgument(f"{name} has shape {a.shape}, expected ({p},)")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if np.any(self.std[self.retained] <= 0):
            raise InvalidArgument("retained terms need a positive std")
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "region", Region.parse(self.region))
        object.__setattr__(self, "source", SourceKind.parse(self.source))

    def to_dict(self) -> dict:
        sig = lambda v: float(f"{float(v):.17g}")
        return {
            "format": "ilinowcast-model/1",
            "region": self.region.value,
            "source": self.source.value,
            "trained_on": [self.trained_on[0].isoformat(), self.trained_on[1].isoformat()],
            "n_samples": self.n_samples,
            "hyperparams": self.hyperparams.to_dict(),
            "converged": self.converged,
            "sweeps": self.sweeps,
            "terms": list(self.terms),
            "weights": [sig(v) for v in self.weights],
            "bias": sig(self.bias),
            "standardization": {
                "mean": [sig(v) for v in self.mean],
                "std": [sig(v) for v in self.std],
                "retained": [bool(v) for v in self.retained],
            },
            "selected_terms": list(self.selected_terms) if self.selected_terms is not None else None,
            "selection_frequencies": self.selection_frequencies,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @property
    def model_id(self) -> str:
        digest = hashlib.sha256(self.to_json().encode()).hexdigest()[:12]
        return f"{self.region.value}-{self.source.value}-{digest}"

    @classmethod
    def from_dict(cls, d: dict) -> ModelArtifact:
        st = d["standardization"]
        sel = d.get("selected_terms")
        return cls(
            terms=tuple(d["terms"]),
            weights=np.array(d["weights"], dtype=float),
            bias=float(d["bias"]),
            mean=np.array(st["mean"], dtype=float),
            std=np.array(st["std"], dtype=float),
            retained=np.array(st["retained"], dtype=bool),
            hyperparams=Hyperparams.from_dict(d["hyperparams"]),
            converged=bool(d["converged"]),
            sweeps=int(d["sweeps"]),
            trained_on=(parse_date(d["trained_on"][0]), parse_date(d["trained_on"][1])),
            region=d["region"],
            source=d["source"],
            selected_terms=tuple(sel) if sel is not None else None,
            selection_frequencies=d.get("selection_frequencies"),
            n_samples=int(d.get("n_samples", 0)),
        )

    @classmethod
    def load(cls, path: str | Path) -> ModelArtifact:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def _fit_arrays(X: np.ndarray, y: np.ndarray, hp: Hyperparams, w0=None, trace=False):
    Z, st = standardize(X)
    y = np.asarray(y, dtype=float)
    b = float(y.mean())
    res = coordinate_descent(Z, y - b, hp.lam, hp.alpha, max_sweeps=hp.max_sweeps,
                             tolerance=hp.tolerance, w0=w0, active=st.retained, trace=trace)
    return res, b, st


def fit_elastic_net(train: TrainingSet, hp: Hyperparams, *, region=Region.ENGLAND,
                    source=SourceKind.SEARCH, trace: bool = False) -> ModelArtifact:
    res, b, st = _fit_arrays(train.X, train.y, hp, trace=trace)
    return ModelArtifact(
        terms=train.terms, weights=res.w, bias=b, mean=st.mean, std=st.std,
        retained=st.retained, hyperparams=hp, converged=res.converged, sweeps=res.sweeps,
        trained_on=(train.sample_dates[0], train.sample_dates[-1]),
        region=region, source=source, n_samples=train.n, objective_trace=tuple(res.trace),
    )


def _standardized_input(model: ModelArtifact, x: np.ndarray) -> np.ndarray:
    z = np.zeros_like(x)
    keep = model.retained
    z[..., keep] = (x[..., keep] - model.mean[keep]) / model.std[keep]
    return z


def predict(model: ModelArtifact, x: Sequence[float] | np.ndarray) -> float | np.ndarray:
    """Raw linear prediction for one feature vector (or a matrix of rows)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != len(model.terms) or x.ndim not in (1, 2):
        raise InvalidArgument(f"expected {len(model.terms)} features, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgument("features must be finite")
    out = model.bias + _standardized_input(model, x) @ model.weights
    return float(out) if x.ndim == 1 else out


def forward_chain_folds(n: int, folds: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Time-ordered (train, validation) index pairs.

    The first half of the samples is always training data; the rest is cut
    into ``folds`` contiguous validation blocks, each trained on everything
    before it.
    """
    if folds < 2:
        raise InvalidArgument("need at least 2 folds")
    head = n // 2
    blocks = np.array_split(np.arange(head, n), folds)
    return [(np.arange(block[0]), block) for block in blocks if len(block)]


@dataclass
class CVResult:
    best: Hyperparams
    lambdas: np.ndarray
    mean_mae: np.ndarray
    fold_mae: np.ndarray  # (grid_size, folds)
    folds: list[tuple[np.ndarray, np.ndarray]]

    def diagnostics(self) -> list[dict]:
        return [{"lambda": float(l), "mean_mae": float(m), "fold_mae": [float(v) for v in f]}
                for l, m, f in zip(self.lambdas, self.mean_mae, self.fold_mae)]


def lambda_grid(lmax: float, grid_size: int, ratio: float = 1e-4) -> np.ndarray:
    if grid_size < 1:
        raise InvalidArgument("grid_size must be >= 1")
    if grid_size == 1:
        return np.array([lmax])
    return np.geomspace(lmax, lmax * ratio, grid_size)


def cv_select(train: TrainingSet, alpha: float = 0.9, grid_size: int = 100, folds: int = 5, *,
              max_sweeps: int = 1000, tolerance: float = 1e-6) -> CVResult:
    """Pick lambda by forward-chaining CV on validation MAE.

    Ties go to the larger lambda.
    """
    splits = forward_chain_folds(train.n, folds)
    if len(splits) < folds or min(len(v) for _, v in splits) < MIN_FOLD_SAMPLES:
        raise InsufficientData(
            f"{train.n} samples cannot give {folds} validation blocks of >= {MIN_FOLD_SAMPLES}"
        )
    lmax = lambda_max(train.X, train.y, alpha)
    if lmax == 0:
        lmax = 1.0  # y is constant or every feature is; any lambda gives w = 0
    grid = lambda_grid(lmax, grid_size)
    fold_mae = np.empty((len(grid), len(splits)))
    for k, (tr, va) in enumerate(splits):
        Xtr, ytr = train.X[tr], train.y[tr]
        Z, st = standardize(Xtr)
        b = float(ytr.mean())
        Zva = np.zeros_like(train.X[va])
        keep = st.retained
        Zva[:, keep] = (train.X[va][:, keep] - st.mean[keep]) / st.std[keep]
        w = None
        for g, lam in enumerate(grid):
            res = coordinate_descent(Z, ytr - b, lam, alpha, max_sweeps=max_sweeps,
                                     tolerance=tolerance, w0=w, active=keep)
            w = res.w
            fold_mae[g, k] = np.mean(np.abs(b + Zva @ w - train.y[va]))
    mean_mae = fold_mae.mean(axis=1)
    # grid is descending, so the first minimiser is the largest lambda
    best = int(np.argmin(mean_mae))
    hp = Hyperparams(lam=float(grid[best]), alpha=alpha, max_sweeps=max_sweeps, tolerance=tolerance)
    return CVResult(hp, grid, mean_mae, fold_mae, splits)


@dataclass
class BolassoResult:
    selected: tuple[str, ...]
    frequencies: dict[str, float]
    failures: int


def bolasso_select(train: TrainingSet, B: int = 100, pi: float = 0.9,
                   hp: Hyperparams | None = None, seed: int = 0) -> BolassoResult:
    """Bootstrap-lasso selection: keep terms nonzero in at least ``pi * B`` refits."""
    if B < 10:
        raise InvalidArgument("B must be >= 10")
    if not 0.5 < pi <= 1:
        raise InvalidArgument("pi must be in (0.5, 1]")
    hp = replace(hp or Hyperparams(), alpha=1.0)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0xB01A550])))
    draws = rng.integers(0, train.n, size=(B, train.n))
    hits = np.zeros(len(train.terms), dtype=int)
    failures = 0
    for rows in draws:
        try:
            res, _, _ = _fit_arrays(train.X[rows], train.y[rows], hp)
        except NumericalFailure:
            failures += 1
            continue
        hits += res.w != 0
    if failures > 0.1 * B:
        raise Aborted(f"{failures} of {B} bootstrap fits failed")
    fits = B - failures
    freq = {t: hits[j] / fits for j, t in enumerate(train.terms)}
    selected = tuple(t for j, t in enumerate(train.terms) if hits[j] >= pi * fits)
    return BolassoResult(selected, freq, failures)
