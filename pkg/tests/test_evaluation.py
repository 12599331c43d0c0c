import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from orderbook_epf.daytypes import Calendars
from orderbook_epf.errors import ConfigError, MissingHistory
from orderbook_epf.evaluation import (
    NAIVE, CvPlan, SuiteEntry, chronological_split, compute_metrics, comparison_csv, cross_validate,
    cv_table_csv, evaluate_suite, fold_rmse, format_comparison, grid_search, naive_forecast,
    naive_source_date, resolve_columns, split_point,
)
from orderbook_epf.features import FeatureMatrix
from orderbook_epf.market import AuctionHour
from orderbook_epf.models import MLPParams, ModelConfig, RFParams, fit

D = dt.date


def reference_metrics(pred, truth):
    """Straight evaluation of the three formulas, no shared code with the package."""
    err = [p - t for p, t in zip(pred, truth)]
    rmse = math.sqrt(sum(e * e for e in err) / len(err))
    mae = sum(abs(e) for e in err) / len(err)
    ape = sorted(abs(e) / abs(t) for e, t in zip(err, truth) if t != 0)
    mdape = ape[(len(ape) - 1) // 2] if ape else math.nan
    return rmse, mae, mdape


class TestMetrics:
    def test_hand_case(self):
        m = compute_metrics([1, 2, 3], [1, 1, 2])
        assert m.mae == pytest.approx(2 / 3, abs=1e-15)
        assert m.rmse == pytest.approx(math.sqrt(2 / 3), abs=1e-15)
        assert m.mdape == 0.5 and m.n == 3

    def test_perfect(self):
        m = compute_metrics([4.0, -2.0], [4.0, -2.0])
        assert (m.rmse, m.mae, m.mdape) == (0, 0, 0)

    def test_zero_truth_excluded(self):
        m = compute_metrics([1.0, 2.0, 3.0], [0.0, 1.0, 3.0])
        assert m.n_excluded_mdape == 1 and m.mdape == 0.0  # lower median of {1.0, 0.0}

    def test_errors(self):
        with pytest.raises(ValueError):
            compute_metrics([1, 2], [1])
        with pytest.raises(ValueError):
            compute_metrics([], [])

    def test_random_vectors_against_reference(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(1, 50))
            p, t = rng.normal(size=n) * 30, rng.normal(size=n) * 30
            m = compute_metrics(p, t)
            r = reference_metrics(p.tolist(), t.tolist())
            assert abs(m.rmse - r[0]) <= 1e-12 and abs(m.mae - r[1]) <= 1e-12
            assert abs(m.mdape - r[2]) <= 1e-12

    @given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=30))
    def test_power_mean_order(self, pairs):
        m = compute_metrics([a for a, _ in pairs], [b for _, b in pairs])
        assert m.rmse >= m.mae - 1e-9 >= -1e-9
        assert math.isnan(m.mdape) or m.mdape >= 0


class TestNaive:
    # Dec 2019: Mon 16 ... Sun 29; the 25th (Wednesday) is a holiday
    cal = Calendars({D(2019, 12, 25)})

    @pytest.mark.parametrize("day,expect", [
        (D(2019, 12, 18), D(2019, 12, 17)),  # Wednesday -> Tuesday
        (D(2019, 12, 23), D(2019, 12, 16)),  # Monday -> previous Monday
        (D(2019, 12, 22), D(2019, 12, 15)),  # Sunday -> previous Sunday
        (D(2019, 12, 21), D(2019, 12, 14)),  # Saturday -> previous Saturday
        (D(2019, 12, 25), D(2019, 12, 22)),  # holiday -> latest Sunday
        (D(2019, 12, 26), D(2019, 12, 25)),  # Thursday copies the previous day, holiday or not
        (D(2019, 12, 29), D(2019, 12, 22)),  # a week back is still a Sunday
        (D(2019, 12, 30), D(2019, 12, 23)),  # Monday after Christmas week
    ])
    def test_source_dates(self, day, expect):
        got = naive_source_date(day, self.cal)
        assert got == expect and got < day

    def test_reads_only_the_past(self):
        class Recording(dict):
            def __init__(self, *a):
                super().__init__(*a)
                self.seen = []

            def __getitem__(self, k):
                self.seen.append(k)
                return super().__getitem__(k)

        start = D(2019, 12, 1)
        hist = Recording({AuctionHour(start + dt.timedelta(days=i), h): float(i * 24 + h)
                          for i in range(31) for h in range(24)})
        for i in range(8, 31):
            d = start + dt.timedelta(days=i)
            for h in (0, 10, 23):
                naive_forecast(AuctionHour(d, h), hist, self.cal)
                assert all(k.date < d for k in hist.seen)
                hist.seen.clear()

    def test_value_and_missing(self):
        hist = {AuctionHour(D(2019, 12, 17), 10): 42.0}
        assert naive_forecast(AuctionHour(D(2019, 12, 18), 10), hist, self.cal) == 42.0
        with pytest.raises(MissingHistory):
            naive_forecast(AuctionHour(D(2019, 12, 18), 11), hist, self.cal)


def fm_of(n, X=None, y=None, start=D(2016, 1, 4)):
    hours = [AuctionHour(start + dt.timedelta(days=i // 24), i % 24) for i in range(n)]
    X = np.arange(n, dtype=float)[:, None] if X is None else X
    y = np.arange(n, dtype=float) if y is None else y
    return FeatureMatrix(hours, X, y, [f"f{j}" for j in range(X.shape[1])])


class TestSplit:
    @pytest.mark.parametrize("n,frac,train", [(100, 0.2, 80), (3, 0.5, 1), (10, 0.25, 7)])
    def test_examples(self, n, frac, train):
        assert split_point(n, frac) == train

    @pytest.mark.parametrize("n,frac", [(1, 0.5), (5, 0.0), (5, 1.0), (5, 0.99)])
    def test_empty_side(self, n, frac):
        with pytest.raises(ValueError):
            split_point(n, frac)

    @given(st.integers(2, 500), st.floats(0.01, 0.99))
    def test_order_and_completeness(self, n, frac):
        fm = fm_of(n)
        try:
            tr, te = chronological_split(fm, frac)
        except ValueError:
            return
        assert len(tr) + len(te) == n
        assert max(tr.hours) < min(te.hours)
        assert tr.y.tolist() + te.y.tolist() == fm.y.tolist()


class TestCrossValidation:
    @given(st.integers(10, 300), st.integers(2, 5))
    def test_folds_partition_rows(self, n, k):
        plan = CvPlan(n, k)
        val_count = np.zeros(n, int)
        train_count = np.zeros(n, int)
        for i in range(k):
            tr, va = plan.split(i)
            assert np.all(np.diff(va) == 1)  # contiguous
            assert set(tr).isdisjoint(va) and len(tr) + len(va) == n
            val_count[va] += 1
            train_count[tr] += 1
        assert np.all(val_count == 1) and np.all(train_count == k - 1)
        sizes = [hi - lo for lo, hi in plan.folds]
        assert max(sizes) - min(sizes) <= 1

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            CvPlan(9, 5)
        with pytest.raises(ValueError):
            CvPlan(100, 1)

    def test_constant_target(self):
        X = np.random.default_rng(0).normal(size=(100, 3))
        for cfg in (ModelConfig("ols"), ModelConfig("random_forest", rf=RFParams(n_trees=5))):
            assert cross_validate(X, np.full(100, 7.0), cfg) == pytest.approx(0, abs=1e-9)

    def test_noiseless_linear(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(200, 4))
        assert cross_validate(X, X @ [1.0, 2.0, -3.0, 0.5] - 4, ModelConfig("ols")) < 1e-6


def planted(seed=0, n=300):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 5))
    y = X @ np.array([3.0, -2.0, 1.0, 0.0, 0.5]) + 0.1 * rng.normal(size=n)
    return X, y


PLANTED_GRID = [
    ModelConfig("random_forest", name="stump", rf=RFParams(n_trees=10, min_node_fraction=1.0)),
    ModelConfig("random_forest", name="rf", rf=RFParams(n_trees=10)),
    ModelConfig("ols"),
    ModelConfig("mlp", mlp=MLPParams(layer_sizes=(4,), epochs=5)),
]


class TestGridSearch:
    def test_planted_config_wins(self):
        X, y = planted()
        res = grid_search(X, y, PLANTED_GRID, seed=3)
        assert res.best_config.family == "ols"
        means = [r.mean_rmse for r in res.rows]
        assert res.rows[res.best].mean_rmse == min(means)

    def test_singleton(self):
        X, y = planted()
        assert grid_search(X, y, [PLANTED_GRID[1]]).best_config == PLANTED_GRID[1]

    def test_ties_go_first(self):
        X = np.random.default_rng(0).normal(size=(50, 2))
        a, b = ModelConfig("ols", name="a"), ModelConfig("ols", name="b")
        assert grid_search(X, np.ones(50), [a, b]).best_config.name == "a"

    def test_failed_cell_is_flagged(self):
        X, y = planted()
        bad = ModelConfig("mlp", name="bad", mlp=MLPParams(
            layer_sizes=(8,), activation="relu", optimizer="sgd", learning_rate=1e6, epochs=10))
        res = grid_search(X, y, [bad, ModelConfig("ols")])
        assert res.rows[0].status == "failed" and "Diverged" in res.rows[0].error
        assert res.best == 1
        table = cv_table_csv(res.rows)
        assert "failed: Diverged" in table and table.count("\n") == 3

    def test_all_failed(self):
        X, y = planted(n=40)
        bad = ModelConfig("mlp", mlp=MLPParams(layer_sizes=(8,), activation="relu", optimizer="sgd",
                                               learning_rate=1e6, epochs=10))
        res = grid_search(X, y, [bad])
        assert res.best == -1
        with pytest.raises(RuntimeError):
            res.best_config

    def test_serial_equals_parallel(self):
        X, y = planted(n=200)
        a = grid_search(X, y, PLANTED_GRID, seed=5, workers=1)
        b = grid_search(X, y, PLANTED_GRID, seed=5, workers=3)
        assert cv_table_csv(a.rows) == cv_table_csv(b.rows) and a.best == b.best

    def test_top_n_needs_importance(self):
        names = ["a", "b", "curve_c0"]
        with pytest.raises(ConfigError):
            resolve_columns(ModelConfig("ols", features="top:2"), names)
        imp = [("b", 0.6), ("curve_c0", 0.3), ("a", 0.1)]
        assert resolve_columns(ModelConfig("ols", features="top:2"), names, imp).tolist() == [1, 2]

    def test_fold_rmse_deterministic(self):
        X, y = planted(n=120)
        cfg = PLANTED_GRID[1]
        assert fold_rmse(X, y, cfg, seed=1) == fold_rmse(X, y, cfg, seed=1)


class TestSuite:
    def test_naive_row_first_and_interpolator_zero(self):
        n = 24 * 28
        rng = np.random.default_rng(0)
        X = rng.normal(size=(n, 2))
        y = X @ [2.0, 1.0] + 10
        fm = fm_of(n, X, y)
        train, test = chronological_split(fm, 0.25)
        model = fit(ModelConfig("ols"), train.X, train.y, feature_names=train.names)
        history = dict(zip(fm.hours, fm.y))
        rows = evaluate_suite(train, test, [SuiteEntry("ols", model, np.arange(2))], history, Calendars())
        assert [r.model for r in rows] == [NAIVE, NAIVE, "ols", "ols"]
        ols_in = rows[2].metrics
        assert ols_in.rmse < 1e-9
        # the first week of train has no naive source
        assert rows[0].metrics.n < len(train)
        csv_text = comparison_csv(rows)
        assert csv_text.splitlines()[0] == "model,split,rmse,mae,mdape,n,n_excluded_mdape"
        assert "naive" in format_comparison(rows)

    def test_model_error_names_model(self):
        fm = fm_of(24 * 14, np.ones((24 * 14, 2)))
        train, test = chronological_split(fm, 0.5)
        m = fit(ModelConfig("ols"), np.random.default_rng(0).normal(size=(20, 3)), np.arange(20.0))
        with pytest.raises(RuntimeError, match="'broken'"):
            evaluate_suite(train, test, [SuiteEntry("broken", m, np.arange(2))],
                           dict(zip(fm.hours, fm.y)), Calendars())
