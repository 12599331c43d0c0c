"""Error metrics, the naive benchmark, chronological splits and grid search."""
from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .daytypes import Calendars, DayType
from .errors import ConfigError, MissingHistory
from .features import FeatureMatrix, is_curve_feature
from .market import AuctionHour
from .models import fit, predict, select_features
from .models.config import ModelConfig
from .partition import lower_median

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    mae: float
    mdape: float
    n: int
    n_excluded_mdape: int = 0


def compute_metrics(predictions, truths) -> MetricReport:
    """RMSE, MAE and MdAPE; rows with a zero true value are left out of MdAPE.

    MdAPE is NaN when every true value is zero.
    """
    p = np.asarray(predictions, dtype=np.float64).ravel()
    y = np.asarray(truths, dtype=np.float64).ravel()
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.size} predictions for {y.size} truths")
    if p.size == 0:
        raise ValueError("cannot score an empty sample")
    err = p - y
    rmse = math.sqrt(float(np.mean(err * err)))
    mae = float(np.mean(np.abs(err)))
    nz = y != 0
    mdape = lower_median(np.abs(err[nz]) / np.abs(y[nz])) if nz.any() else math.nan
    return MetricReport(rmse, mae, mdape, int(p.size), int(p.size - nz.sum()))


# naive benchmark -----------------------------------------------------------

def naive_source_date(d: dt.date, calendars: Calendars) -> dt.date:
    """Day whose price the naive benchmark copies for day ``d``.

    Tuesday to Friday workdays copy the previous day. Every other day copies
    the same type of day in the previous week: d - 7 when it has d's type,
    otherwise the latest day of d's type among d - 7 ... d - 1 (a holiday
    therefore copies the last Sunday or holiday). If the week holds no such
    day, d - 7 is used.
    """
    kind = calendars.day_type(d)
    if kind == DayType.WORKDAY and 1 <= d.weekday() <= 4:
        return d - dt.timedelta(days=1)
    week_ago = d - dt.timedelta(days=7)
    if calendars.day_type(week_ago) == kind:
        return week_ago
    for lag in range(1, 7):
        e = d - dt.timedelta(days=lag)
        if calendars.day_type(e) == kind:
            return e
    return week_ago


def naive_forecast(t: AuctionHour, history: Mapping[AuctionHour, float], calendars: Calendars) -> float:
    src = AuctionHour(naive_source_date(t.date, calendars), t.hour)
    try:
        return float(history[src])
    except KeyError:
        raise MissingHistory(f"naive forecast for {t} needs the price of {src}") from None


def naive_predictions(hours: Sequence[AuctionHour], history, calendars) -> np.ndarray:
    """Naive forecasts, NaN where the source hour is missing."""
    out = np.full(len(hours), np.nan)
    for i, t in enumerate(hours):
        try:
            out[i] = naive_forecast(t, history, calendars)
        except MissingHistory:
            pass
    return out


# splitting and cross-validation --------------------------------------------

def split_point(n: int, test_fraction: float = 0.2) -> int:
    """Number of training rows; the last ceil(fraction * n) rows are the test set."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test fraction must be in (0, 1), got {test_fraction}")
    n_test = math.ceil(test_fraction * n - 1e-9)
    if n_test < 1 or n_test >= n:
        raise ValueError(f"a split of {n} rows at fraction {test_fraction} leaves an empty side")
    return n - n_test


def chronological_split(data: FeatureMatrix, test_fraction: float = 0.2):
    order = sorted(range(len(data)), key=lambda i: data.hours[i])
    cut = split_point(len(data), test_fraction)
    return data.subset(order[:cut]), data.subset(order[cut:])


@dataclass(frozen=True)
class CvPlan:
    """k contiguous blocks of row indices; sizes differ by at most one."""

    n: int
    k: int = 5
    folds: tuple = field(init=False)

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("cross-validation needs k >= 2")
        if self.n < 2 * self.k:
            raise ValueError(f"{self.n} rows are too few for {self.k}-fold cross-validation")
        base, extra = divmod(self.n, self.k)
        bounds, lo = [], 0
        for i in range(self.k):
            hi = lo + base + (1 if i < extra else 0)
            bounds.append((lo, hi))
            lo = hi
        object.__setattr__(self, "folds", tuple(bounds))

    def split(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.folds[i]
        idx = np.arange(self.n)
        return np.concatenate([idx[:lo], idx[hi:]]), idx[lo:hi]


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def fold_rmse(X, y, config: ModelConfig, k: int = 5, seed: int = 0, names=None) -> tuple[float, ...]:
    """Validation RMSE of each fold: train on the other k - 1 blocks, score on this one."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    plan = CvPlan(len(y), k)
    out = []
    for i in range(k):
        tr, va = plan.split(i)
        model = fit(config, X[tr], y[tr], fold_seed(seed, i), names)
        out.append(compute_metrics(predict(model, X[va]), y[va]).rmse)
    return tuple(out)


def cross_validate(X, y, config: ModelConfig, k: int = 5, seed: int = 0, names=None) -> float:
    """Mean validation RMSE over k contiguous folds."""
    return float(np.mean(fold_rmse(X, y, config, k, seed, names)))


def resolve_columns(config: ModelConfig, names: Sequence[str], importance=None) -> np.ndarray:
    """Column indices a config trains on."""
    if config.features == "all":
        return np.arange(len(names))
    if config.features == "no_curve":
        return np.array([i for i, n in enumerate(names) if not is_curve_feature(n)])
    if importance is None:
        raise ConfigError(f"{config.name}: {config.features} needs random forest importances")
    chosen = set(select_features(importance, config.top_n))
    return np.array([i for i, n in enumerate(names) if n in chosen])


@dataclass(frozen=True)
class CvRow:
    config_id: str
    config: ModelConfig
    fold_rmse: tuple
    mean_rmse: float
    status: str = "ok"
    error: str = ""


def _cv_cell(args):
    cid, config, X, y, k, seed, names = args
    try:
        folds = fold_rmse(X, y, config, k, seed, names)
        mean = float(np.mean(folds))
        if not math.isfinite(mean):
            raise ValueError("non-finite validation error")
        return CvRow(cid, config, folds, mean)
    except Exception as exc:  # a failed cell must not abort the search
        return CvRow(cid, config, (), math.nan, "failed", f"{type(exc).__name__}: {exc}")


@dataclass(frozen=True)
class GridResult:
    rows: tuple
    best: int  # index into rows, -1 when every cell failed

    @property
    def best_config(self) -> ModelConfig:
        if self.best < 0:
            raise RuntimeError("every grid cell failed")
        return self.rows[self.best].config


def grid_search(X, y, grid: Sequence[ModelConfig], k: int = 5, seed: int = 0, names=None,
                importance=None, workers: int = 1, ids=None) -> GridResult:
    """Cross-validate every config; the lowest mean RMSE wins, ties go to the earliest."""
    if not grid:
        raise ValueError("empty hyperparameter grid")
    X = np.asarray(X, dtype=np.float64)
    names = list(names) if names is not None else [f"x{i}" for i in range(X.shape[1])]
    ids = list(ids) if ids is not None else [f"c{i:03d}" for i in range(len(grid))]
    tasks = []
    for cid, cfg in zip(ids, grid):
        cols = resolve_columns(cfg, names, importance)
        tasks.append((cid, cfg, X[:, cols], y, k, seed, [names[c] for c in cols]))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_cv_cell, tasks))
    else:
        rows = [_cv_cell(t) for t in tasks]
    best = -1
    for i, r in enumerate(rows):
        if r.status != "ok":
            log.warning("grid cell %s failed: %s", r.config_id, r.error)
        elif best < 0 or r.mean_rmse < rows[best].mean_rmse:
            best = i
    return GridResult(tuple(rows), best)


def cv_table_csv(rows: Sequence[CvRow], k: int = 5) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config_id", "name", "family", "features"]
               + [f"fold_{i + 1}_rmse" for i in range(k)] + ["mean_rmse", "status", "config"])
    for r in rows:
        folds = [repr(float(v)) for v in r.fold_rmse] + [""] * (k - len(r.fold_rmse))
        mean = "" if r.status != "ok" else repr(r.mean_rmse)
        w.writerow([r.config_id, r.config.name, r.config.family, r.config.features, *folds,
                    mean, r.status if r.status == "ok" else f"failed: {r.error}", r.config.label()])
    return buf.getvalue()


# comparison table ----------------------------------------------------------

NAIVE = "naive"


@dataclass(frozen=True)
class ComparisonRow:
    model: str
    split: str
    metrics: MetricReport


@dataclass(frozen=True)
class SuiteEntry:
    name: str
    model: object  # TrainedModel
    columns: np.ndarray


def evaluate_suite(train: FeatureMatrix, test: FeatureMatrix, entries: Sequence[SuiteEntry],
                   history: Mapping[AuctionHour, float], calendars: Calendars) -> list[ComparisonRow]:
    """In-sample and out-of-sample errors per model, naive benchmark first.

    The naive rows are scored on the hours whose source price is known.
    """
    rows = []
    for split, data in (("in_sample", train), ("out_of_sample", test)):
        naive = naive_predictions(data.hours, history, calendars)
        ok = np.isfinite(naive)
        if not ok.any():
            raise MissingHistory(f"no {split} hour has a naive forecast")
        rows.append(ComparisonRow(NAIVE, split, compute_metrics(naive[ok], data.y[ok])))
    for e in entries:
        for split, data in (("in_sample", train), ("out_of_sample", test)):
            try:
                pred = predict(e.model, data.X[:, e.columns])
                rows.append(ComparisonRow(e.name, split, compute_metrics(pred, data.y)))
            except Exception as exc:
                raise RuntimeError(f"model {e.name!r}: {exc}") from exc
    return rows


def comparison_csv(rows: Sequence[ComparisonRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "split", "rmse", "mae", "mdape", "n", "n_excluded_mdape"])
    for r in rows:
        m = r.metrics
        w.writerow([r.model, r.split, repr(m.rmse), repr(m.mae), repr(m.mdape), m.n, m.n_excluded_mdape])
    return buf.getvalue()


def format_comparison(rows: Sequence[ComparisonRow]) -> str:
    """Human-readable table with one line per model."""
    models = list(dict.fromkeys(r.model for r in rows))
    get = {(r.model, r.split): r.metrics for r in rows}
    width = max(12, *(len(m) for m in models))
    head = (f"{'model':<{width}}  {'RMSE in':>8} {'MAE in':>8} {'MdAPE in':>8}"
            f"  {'RMSE out':>8} {'MAE out':>8} {'MdAPE out':>9}")
    lines = [head, "-" * len(head)]
    for m in models:
        a, b = get.get((m, "in_sample")), get.get((m, "out_of_sample"))
        cell = lambda r, w: (f"{r.rmse:8.3f} {r.mae:8.3f} {r.mdape:{w}.3f}" if r
                             else " " * (17 + w + 1))
        lines.append(f"{m:<{width}}  {cell(a, 8)}  {cell(b, 9)}")
    return "\n".join(lines)
