import datetime as dt

import numpy as np
import pytest

from orderbook_epf.daytypes import Calendars
from orderbook_epf.data_io import (
    DatasetBundle, books_to_csv, feature_matrix_to_csv, fundamentals_to_csv, load_books,
    load_bundle, load_calendars, load_feature_matrix, load_fundamentals, save_bundle,
    save_feature_matrix,
)
from orderbook_epf.errors import MalformedRow, MissingData, OffGridPrice
from orderbook_epf.features import FeatureMatrix
from orderbook_epf.market import AuctionHour, OrderBook, clear_book
from orderbook_epf.synthetic import SyntheticMarketSpec, build_hour_book, generate_synthetic

HEADER = "date,hour,side,price,volume_mwh\n"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestBooks:
    def test_duplicates_summed(self, tmp_path):
        p = write(tmp_path, "b.csv", HEADER + "2016-01-01,0,S,10.0,5\n2016-01-01,0,S,10.0,7\n")
        books = load_books(p)
        assert books[AuctionHour(dt.date(2016, 1, 1), 0)].levels("supply") == {10.0: 12.0}

    def test_empty(self, tmp_path):
        assert load_books(write(tmp_path, "b.csv", "")) == {}
        assert load_books(write(tmp_path, "c.csv", HEADER)) == {}

    @pytest.mark.parametrize("row,line_reason", [
        ("2016-01-01,0,X,1.0,1", "side"),
        ("2016-13-01,0,S,1.0,1", "date"),
        ("2016-01-01,24,S,1.0,1", "hour"),
        ("2016-01-01,0,S,abc,1", "price"),
        ("2016-01-01,0,S,1.0,-1", "volume"),
        ("2016-01-01,0,S,3000.1,1", "outside"),
    ])
    def test_malformed_rows_report_line(self, tmp_path, row, line_reason):
        p = write(tmp_path, "b.csv", HEADER + "2016-01-01,0,S,1.0,1\n" + row + "\n")
        with pytest.raises(MalformedRow) as exc:
            load_books(p)
        assert exc.value.line == 3 and line_reason in str(exc.value)

    def test_off_grid(self, tmp_path):
        p = write(tmp_path, "b.csv", HEADER + "2016-01-01,0,S,1.05,1\n")
        with pytest.raises(OffGridPrice):
            load_books(p)
        snapped = load_books(p, strict=False)
        assert list(snapped.values())[0].levels("supply") in ({1.0: 1.0}, {1.1: 1.0})

    def test_bad_header(self, tmp_path):
        with pytest.raises(MalformedRow):
            load_books(write(tmp_path, "b.csv", "date,hour,price\n2016-01-01,0,1\n"))


class TestFundamentalsAndCalendars:
    def test_negative_rejected(self, tmp_path):
        p = write(tmp_path, "f.csv", "date,hour,solar_mwh,wind_mwh,demand_mwh\n2016-01-01,0,1,-2,3\n")
        with pytest.raises(MalformedRow):
            load_fundamentals(p)

    def test_duplicate_hour_rejected(self, tmp_path):
        row = "2016-01-01,0,1,2,3\n"
        p = write(tmp_path, "f.csv", "date,hour,solar_mwh,wind_mwh,demand_mwh\n" + row + row)
        with pytest.raises(MalformedRow):
            load_fundamentals(p)

    def test_calendar(self, tmp_path):
        p = write(tmp_path, "c.csv", "date,kind\n2016-12-25,holiday\n2016-12-24,bridge\n")
        cal = load_calendars(p)
        assert cal == Calendars({dt.date(2016, 12, 25)}, {dt.date(2016, 12, 24)})
        with pytest.raises(MalformedRow):
            load_calendars(write(tmp_path, "d.csv", "date,kind\n2016-12-25,party\n"))

    def test_missing_fundamentals_detected(self):
        t = AuctionHour(dt.date(2016, 1, 1), 0)
        with pytest.raises(MissingData):
            DatasetBundle({t: OrderBook.from_levels(t)}, {}, Calendars()).validate()


class TestRoundTrip:
    def test_bundle(self, tmp_path, small_bundle):
        save_bundle(small_bundle, tmp_path)
        again = load_bundle(tmp_path)
        assert again.books == small_bundle.books
        assert again.fundamentals == small_bundle.fundamentals
        assert again.calendars == small_bundle.calendars
        assert books_to_csv(again.books) == (tmp_path / "books.csv").read_text()
        assert fundamentals_to_csv(again.fundamentals) == (tmp_path / "fundamentals.csv").read_text()

    def test_feature_matrix(self, tmp_path):
        hours = [AuctionHour(dt.date(2016, 1, 1), h) for h in range(3)]
        rng = np.random.default_rng(0)
        fm = FeatureMatrix(hours, rng.normal(size=(3, 2)) * 1e3, np.array([1.5, -2.0, 0.1]), ["a", "b"])
        save_feature_matrix(fm, tmp_path / "f.csv", {"n_classes": 2})
        back, meta = load_feature_matrix(tmp_path / "f.csv")
        assert meta == {"n_classes": "2"}
        assert back.hours == hours and back.names == ["a", "b"]
        assert np.array_equal(back.X, fm.X) and np.array_equal(back.y, fm.y)
        assert feature_matrix_to_csv(back, meta) == (tmp_path / "f.csv").read_text()

    def test_feature_matrix_bad_value(self, tmp_path):
        p = write(tmp_path, "f.csv", "# orderbook-epf features v1\ndate,hour,a,target\n"
                                     "2016-01-01,0,1.0,2.0\n2016-01-01,1,x,2.0\n")
        with pytest.raises(MalformedRow) as exc:
            load_feature_matrix(p)
        assert exc.value.line == 4


class TestSynthetic:
    def test_deterministic(self):
        spec = SyntheticMarketSpec(start=dt.date(2016, 1, 1), end=dt.date(2016, 1, 10), seed=3)
        a, b = generate_synthetic(spec), generate_synthetic(spec)
        assert books_to_csv(a.books) == books_to_csv(b.books)
        assert fundamentals_to_csv(a.fundamentals) == fundamentals_to_csv(b.fundamentals)
        c = generate_synthetic(SyntheticMarketSpec(start=spec.start, end=spec.end, seed=4))
        assert books_to_csv(c.books) != books_to_csv(a.books)

    def test_static_merit_order(self):
        spec = SyntheticMarketSpec(
            start=dt.date(2016, 1, 1), end=dt.date(2016, 1, 3), units_per_block=1, cost_spread=0,
            fuel_noise=0, demand_noise=0, daily_amplitude=0, seasonal_amplitude=0, daytype_effect=False,
            elastic_share=0, solar_capacity_mwh=0, wind_capacity_mwh=0, forecast_sigma=0,
            base_demand_mwh=20000)
        prices = {clear_book(b).price for b in generate_synthetic(spec).books.values()}
        assert prices == {28.0}  # 8000 + 14000 MWh cover 20000 within the second block

    def test_more_wind_never_raises_price(self):
        spec = SyntheticMarketSpec()
        rng = np.random.default_rng(2)
        t = AuctionHour(dt.date(2016, 1, 1), 12)
        for _ in range(50):
            solar, wind, demand = rng.uniform(0, 8000), rng.uniform(0, 15000), rng.uniform(25000, 50000)
            fuel = rng.uniform(0.9, 1.1, len(spec.stack))
            before = clear_book(build_hour_book(spec, t, solar, wind, demand, fuel)).price
            after = clear_book(build_hour_book(spec, t, solar, 2 * wind, demand, fuel)).price
            assert after <= before

    def test_wind_price_correlation_negative(self, small_bundle):
        by_hour = {}
        for t, book in small_bundle.books.items():
            by_hour.setdefault(t.hour, []).append((small_bundle.fundamentals[t].wind_mwh, clear_book(book).price))
        corr = [np.corrcoef(np.array(v).T)[0, 1] for v in by_hour.values()]
        assert np.mean(corr) < 0 and max(corr) < 0

    def test_bundle_invariants(self, small_bundle):
        small_bundle.validate()
        hours = small_bundle.hours
        assert all(a < b for a, b in zip(hours, hours[1:]))
        assert len(hours) == 91 * 24

    @pytest.mark.parametrize("bad", [
        {"renewable_bid_price": 5.0}, {"stack": [[0, 10]]}, {"end": "2015-01-01"}, {"colour": 1},
        {"start": "yesterday"},
    ])
    def test_invalid_spec(self, bad):
        from orderbook_epf.errors import ConfigError
        raw = {"start": "2016-01-01", "end": "2016-01-31", **bad}
        with pytest.raises(ConfigError):
            SyntheticMarketSpec.from_dict(raw)

    def test_spec_json_round_trip(self):
        spec = SyntheticMarketSpec(seed=99, stack=((100.0, 5.0), (50.0, 10.0)))
        assert SyntheticMarketSpec.from_json(spec.to_json()) == spec
