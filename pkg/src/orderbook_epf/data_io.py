"""CSV ingest/export for order books, fundamentals and calendars.

All files are UTF-8 CSV with a header row and dot decimals. Loaders validate
every row and raise :class:`MalformedRow` with the 1-based file line number;
nothing is silently coerced.
"""
from __future__ import annotations

import datetime as dt
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .daytypes import Calendars
from .errors import MalformedRow, MissingData, OffGridPrice
from .features import FEATURE_SCHEMA_VERSION, FeatureMatrix, FundamentalForecasts
from .market import PRICE_MAX_TICK, PRICE_MIN_TICK, AuctionHour, OrderBook

BOOK_COLUMNS = ["date", "hour", "side", "price", "volume_mwh"]
FUNDAMENTAL_COLUMNS = ["date", "hour", "solar_mwh", "wind_mwh", "demand_mwh"]
CALENDAR_COLUMNS = ["date", "kind"]

BOOKS_FILE = "books.csv"
FUNDAMENTALS_FILE = "fundamentals.csv"
CALENDAR_FILE = "calendar.csv"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class DatasetBundle:
    books: dict = field(default_factory=dict)
    fundamentals: dict = field(default_factory=dict)
    calendars: Calendars = field(default_factory=Calendars)

    def validate(self) -> None:
        for t in self.books:
            if t not in self.fundamentals:
                raise MissingData(f"{t}: order book without fundamentals")

    @property
    def hours(self) -> list:
        return sorted(self.books)


# --- low-level parsing helpers ---------------------------------------------

def _read_frame(path, columns):
    path = Path(path)
    if path.stat().st_size == 0:
        return pd.DataFrame(columns=columns, dtype=str)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True,
                         encoding="utf-8")
    except pd.errors.ParserError as exc:
        raise MalformedRow(path, 0, f"unparseable CSV ({exc})") from exc
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=columns, dtype=str)
    if list(df.columns) != columns:
        raise MalformedRow(path, 1, f"header must be {','.join(columns)}, got {','.join(df.columns)}")
    return df


def _fail_first(path, bad, df, reason):
    bad = np.asarray(bad)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        row = ",".join(str(v) for v in df.iloc[i].tolist())
        raise MalformedRow(path, i + 2, f"{reason}: {row!r}")


def _parse_dates(path, df):
    d = pd.to_datetime(df["date"], format="%Y-%m-%d", errors="coerce")
    _fail_first(path, d.isna().to_numpy(), df, "invalid date")
    return d


def _parse_hours(path, df):
    h = pd.to_numeric(df["hour"], errors="coerce")
    bad = h.isna().to_numpy() | (h.to_numpy() % 1 != 0) | (h.to_numpy() < 0) | (h.to_numpy() > 23)
    _fail_first(path, bad, df, "hour must be an integer in 0..23")
    return h.to_numpy().astype(np.int64)


def _floats(series) -> np.ndarray:
    """Exact (round-trip) string to float; unparseable cells become NaN.
    pandas' fast parser can be off by one ulp."""
    try:
        return np.asarray(series, dtype=str).astype(np.float64)
    except ValueError:
        return np.array([float(v) if _is_float(v) else np.nan for v in series], dtype=np.float64)


def _parse_nonneg(path, df, col):
    v = _floats(df[col])
    bad = ~np.isfinite(v) | (v < 0)
    _fail_first(path, bad, df, f"{col} must be a finite number >= 0")
    return v


def _hour_keys(dates, hours):
    return [AuctionHour(d.date(), int(h)) for d, h in zip(dates, hours)]


# --- order books -----------------------------------------------------------

def load_books(path, strict: bool = True) -> dict:
    """Read the order-book CSV into {AuctionHour: OrderBook}.

    Duplicate (hour, side, price) rows are summed. Off-grid prices raise
    :class:`OffGridPrice` when ``strict``; otherwise they snap to the nearest
    0.1 tick.
    """
    df = _read_frame(path, BOOK_COLUMNS)
    if df.empty:
        return {}
    dates = _parse_dates(path, df)
    hours = _parse_hours(path, df)
    side = df["side"].to_numpy()
    _fail_first(path, ~np.isin(side, ["S", "D"]), df, "side must be S or D")
    price = _floats(df["price"])
    _fail_first(path, ~np.isfinite(price), df, "price must be a number")
    scaled = price * 10.0
    ticks = np.rint(scaled).astype(np.int64)
    _fail_first(path, (ticks < PRICE_MIN_TICK) | (ticks > PRICE_MAX_TICK), df,
                "price outside [-500, 3000]")
    if strict:
        off = np.abs(scaled - ticks) > 1e-6
        if off.any():
            i = int(np.flatnonzero(off)[0])
            raise OffGridPrice(f"{path}:{i + 2}: price {df['price'].iloc[i]!r} is off the 0.1 grid")
    vol = _parse_nonneg(path, df, "volume_mwh")

    day = dates.to_numpy().astype("datetime64[D]").astype(np.int64)
    is_s = side == "S"
    order = np.lexsort((ticks, ~is_s, hours, day))
    day, hours, is_s, ticks, vol = day[order], hours[order], is_s[order], ticks[order], vol[order]
    key = day * 24 + hours
    cut = np.flatnonzero(np.diff(key)) + 1
    books = {}
    for lo, hi in zip(np.r_[0, cut], np.r_[cut, len(key)]):
        d0 = dt.date(1970, 1, 1) + dt.timedelta(days=int(day[lo]))
        t = AuctionHour(d0, int(hours[lo]))
        s = is_s[lo:hi]
        books[t] = OrderBook(t, ticks[lo:hi][s], vol[lo:hi][s], ticks[lo:hi][~s], vol[lo:hi][~s])
    return books


def books_to_csv(books) -> str:
    lines = [",".join(BOOK_COLUMNS)]
    for t in sorted(books):
        b = books[t]
        ds = t.date.isoformat()
        for code, ticks, vols in (("S", b.supply_ticks, b.supply_volumes),
                                  ("D", b.demand_ticks, b.demand_volumes)):
            for k, v in zip(ticks.tolist(), vols.tolist()):
                lines.append(f"{ds},{t.hour},{code},{k / 10:.1f},{v!r}")
    return "\n".join(lines) + "\n"


def save_books(books, path) -> None:
    atomic_write_text(path, books_to_csv(books))


# --- fundamentals ----------------------------------------------------------

def load_fundamentals(path) -> dict:
    df = _read_frame(path, FUNDAMENTAL_COLUMNS)
    if df.empty:
        return {}
    dates = _parse_dates(path, df)
    hours = _parse_hours(path, df)
    cols = [_parse_nonneg(path, df, c) for c in FUNDAMENTAL_COLUMNS[2:]]
    keys = _hour_keys(dates, hours)
    out = {}
    for i, t in enumerate(keys):
        if t in out:
            raise MalformedRow(path, i + 2, f"duplicate fundamentals row for {t}")
        out[t] = FundamentalForecasts(float(cols[0][i]), float(cols[1][i]), float(cols[2][i]))
    return out


def fundamentals_to_csv(fundamentals) -> str:
    lines = [",".join(FUNDAMENTAL_COLUMNS)]
    for t in sorted(fundamentals):
        f = fundamentals[t]
        lines.append(f"{t.date.isoformat()},{t.hour},{f.solar_mwh!r},{f.wind_mwh!r},{f.demand_mwh!r}")
    return "\n".join(lines) + "\n"


def save_fundamentals(fundamentals, path) -> None:
    atomic_write_text(path, fundamentals_to_csv(fundamentals))


# --- calendars -------------------------------------------------------------

def load_calendars(path) -> Calendars:
    df = _read_frame(path, CALENDAR_COLUMNS)
    if df.empty:
        return Calendars()
    dates = _parse_dates(path, df)
    kind = df["kind"].to_numpy()
    _fail_first(path, ~np.isin(kind, ["holiday", "bridge"]), df, "kind must be holiday or bridge")
    days = [d.date() for d in dates]
    hol = {d for d, k in zip(days, kind) if k == "holiday"}
    bridge = {d for d, k in zip(days, kind) if k == "bridge"}
    return Calendars(frozenset(hol), frozenset(bridge))


def calendars_to_csv(cal: Calendars) -> str:
    rows = sorted([(d, "holiday") for d in cal.holidays] + [(d, "bridge") for d in cal.bridge_days])
    return "\n".join(["date,kind"] + [f"{d.isoformat()},{k}" for d, k in rows]) + "\n"


def save_calendars(cal: Calendars, path) -> None:
    atomic_write_text(path, calendars_to_csv(cal))


# --- bundles ---------------------------------------------------------------

def save_bundle(bundle: DatasetBundle, directory) -> None:
    directory = Path(directory)
    save_books(bundle.books, directory / BOOKS_FILE)
    save_fundamentals(bundle.fundamentals, directory / FUNDAMENTALS_FILE)
    save_calendars(bundle.calendars, directory / CALENDAR_FILE)


def load_bundle(directory, strict: bool = True) -> DatasetBundle:
    directory = Path(directory)
    bundle = DatasetBundle(
        load_books(directory / BOOKS_FILE, strict=strict),
        load_fundamentals(directory / FUNDAMENTALS_FILE),
        load_calendars(directory / CALENDAR_FILE),
    )
    bundle.validate()
    return bundle


# --- feature matrices ------------------------------------------------------

FEATURES_MAGIC = "# orderbook-epf features"


def feature_matrix_to_csv(fm: FeatureMatrix, meta: dict | None = None) -> str:
    """First line: a comment with the schema version and ``key=value`` metadata."""
    tags = " ".join(f"{k}={v}" for k, v in sorted((meta or {}).items()))
    lines = [f"{FEATURES_MAGIC} v{FEATURE_SCHEMA_VERSION} {tags}".rstrip(),
             ",".join(["date", "hour", *fm.names, "target"])]
    for t, row, y in zip(fm.hours, fm.X, fm.y):
        vals = ",".join(repr(float(v)) for v in row)
        lines.append(f"{t.date.isoformat()},{t.hour},{vals},{float(y)!r}")
    return "\n".join(lines) + "\n"


def save_feature_matrix(fm: FeatureMatrix, path, meta: dict | None = None) -> None:
    atomic_write_text(path, feature_matrix_to_csv(fm, meta))


def load_feature_matrix(path) -> tuple[FeatureMatrix, dict]:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
    parts = first.split()
    if not first.startswith(FEATURES_MAGIC) or len(parts) < 4:
        raise MalformedRow(path, 1, "missing feature schema comment line")
    if parts[3] != f"v{FEATURE_SCHEMA_VERSION}":
        raise MalformedRow(path, 1, f"unsupported feature schema {parts[3]}")
    meta = dict(p.split("=", 1) for p in parts[4:] if "=" in p)
    df = pd.read_csv(path, skiprows=1, dtype={"date": str}, keep_default_na=False,
                     float_precision="round_trip")
    cols = list(df.columns)
    if cols[:2] != ["date", "hour"] or cols[-1] != "target" or len(cols) < 4:
        raise MalformedRow(path, 2, "header must be date,hour,<features...>,target")
    names = cols[2:-1]
    try:
        values = df[names + ["target"]].to_numpy(dtype=np.float64)
    except (ValueError, TypeError):
        bad = next(i for i in range(len(df))
                   if not all(_is_float(v) for v in df.iloc[i][names + ["target"]]))
        raise MalformedRow(path, bad + 3, "non-numeric feature value") from None
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(values), axis=1))[0])
        raise MalformedRow(path, bad + 3, "non-finite feature value")
    dates = pd.to_datetime(df["date"], format="%Y-%m-%d", errors="coerce")
    hours = pd.to_numeric(df["hour"], errors="coerce").to_numpy(dtype=float)
    bad = dates.isna().to_numpy() | ~np.isin(hours, np.arange(24))
    if bad.any():
        raise MalformedRow(path, int(np.flatnonzero(bad)[0]) + 3, "invalid date or hour")
    keys = _hour_keys(dates, hours)
    if any(a >= b for a, b in zip(keys, keys[1:])):
        raise MalformedRow(path, 3, "rows must be in strictly increasing time order")
    fm = FeatureMatrix(keys, values[:, :-1], values[:, -1], names)
    return fm, meta


def _is_float(v) -> bool:
    try:
        float(v)
        return True
    except (TypeError, ValueError):
        return False
