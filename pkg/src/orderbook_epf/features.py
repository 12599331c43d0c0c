"""Feature vectors for forecasting the price of an auction hour from its reference hour."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .daytypes import Calendars, DayType, is_dst, reference_date
from .errors import MissingData, NoReference
from .market import AuctionHour, OrderBook
from .partition import PriceClassScheme, aggregate_price_curve, clear_from_price_curve

FEATURE_SCHEMA_VERSION = 1
CALENDAR_FIELDS = (
    "year", "dst", "workday", "saturday_or_bridge", "sunday_or_holiday",
    "month_x", "month_y", "hour_x", "hour_y",
)
FUNDAMENTAL_FIELDS = ("solar_mwh", "wind_mwh", "demand_mwh")


def encode_cyclic(value: int, period: int) -> tuple[float, float]:
    if period <= 0:
        raise ValueError("period must be positive")
    angle = 2.0 * math.pi * value / period
    return math.sin(angle), math.cos(angle)


@dataclass(frozen=True)
class FundamentalForecasts:
    solar_mwh: float
    wind_mwh: float
    demand_mwh: float

    def __post_init__(self):
        for name in FUNDAMENTAL_FIELDS:
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.solar_mwh, self.wind_mwh, self.demand_mwh)


@dataclass(frozen=True)
class CalendarInfo:
    year: int
    dst: int
    day_type: DayType
    month_x: float
    month_y: float
    hour_x: float
    hour_y: float

    def as_tuple(self) -> tuple:
        onehot = [0.0, 0.0, 0.0]
        onehot[int(self.day_type)] = 1.0
        return (float(self.year), float(self.dst), *onehot,
                self.month_x, self.month_y, self.hour_x, self.hour_y)


def calendar_info(t: AuctionHour, calendars: Calendars) -> CalendarInfo:
    mx, my = encode_cyclic(t.date.month, 12)
    hx, hy = encode_cyclic(t.hour, 24)
    return CalendarInfo(t.date.year, int(is_dst(t.date)), calendars.day_type(t.date), mx, my, hx, hy)


def feature_names(n_classes: int) -> list[str]:
    """Frozen column order of the feature vector."""
    width = max(3, len(str(n_classes)))
    names = ["ref_inelastic_demand"]
    names += [f"ref_pc_{k:0{width}d}" for k in range(1, n_classes + 1)]
    for suffix in ("t", "ref"):
        names += [f"{f}_{suffix}" for f in FUNDAMENTAL_FIELDS]
    for suffix in ("t", "ref"):
        names += [f"{f}_{suffix}" for f in CALENDAR_FIELDS]
    return names


def is_curve_feature(name: str) -> bool:
    return name.startswith("ref_pc_") or name == "ref_inelastic_demand"


@dataclass(frozen=True, eq=False)
class FeatureVector:
    t: AuctionHour
    ref: AuctionHour
    ref_inelastic_demand: float
    ref_price_curve: np.ndarray
    fundamentals_t: FundamentalForecasts
    fundamentals_ref: FundamentalForecasts
    calendar_t: CalendarInfo
    calendar_ref: CalendarInfo

    @property
    def names(self) -> list[str]:
        return feature_names(len(self.ref_price_curve))

    @property
    def values(self) -> np.ndarray:
        return np.concatenate((
            [self.ref_inelastic_demand],
            self.ref_price_curve,
            self.fundamentals_t.as_tuple(),
            self.fundamentals_ref.as_tuple(),
            self.calendar_t.as_tuple(),
            self.calendar_ref.as_tuple(),
        )).astype(np.float64)


def find_reference(t: AuctionHour, books: Mapping, fundamentals: Mapping,
                   calendars: Calendars, horizon: int = 365) -> AuctionHour:
    def ok(e):
        r = AuctionHour(e, t.hour)
        return r in books and r in fundamentals

    try:
        return AuctionHour(reference_date(t.date, calendars, horizon, available=ok), t.hour)
    except NoReference as exc:
        raise MissingData(f"{t}: no reference hour with order book and fundamentals ({exc})") from exc


def assemble_features(t: AuctionHour, books: Mapping[AuctionHour, OrderBook],
                      scheme: PriceClassScheme, fundamentals: Mapping, calendars: Calendars,
                      _curves: dict | None = None) -> FeatureVector:
    if t not in fundamentals:
        raise MissingData(f"{t}: fundamentals missing for target hour")
    r = find_reference(t, books, fundamentals, calendars)
    if _curves is not None and r in _curves:
        pc = _curves[r]
    else:
        pc = aggregate_price_curve(books[r], scheme)
        if _curves is not None:
            _curves[r] = pc
    return FeatureVector(
        t, r, pc.inelastic_demand, np.asarray(pc.class_volumes),
        fundamentals[t], fundamentals[r],
        calendar_info(t, calendars), calendar_info(r, calendars),
    )


def target_price(t: AuctionHour, books: Mapping[AuctionHour, OrderBook],
                 scheme: PriceClassScheme, _curves: dict | None = None) -> float:
    """Class-implied price of t's own book: the regression target."""
    if t not in books:
        raise MissingData(f"{t}: order book missing for target hour")
    pc = _curves.get(t) if _curves is not None else None
    if pc is None:
        pc = aggregate_price_curve(books[t], scheme)
        if _curves is not None:
            _curves[t] = pc
    return clear_from_price_curve(pc, scheme)


@dataclass(eq=False)
class FeatureMatrix:
    hours: list
    X: np.ndarray
    y: np.ndarray
    names: list

    def __len__(self):
        return len(self.hours)

    def subset(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx)
        return FeatureMatrix([self.hours[i] for i in idx], self.X[idx], self.y[idx], list(self.names))

    def columns(self, names) -> np.ndarray:
        pos = {n: i for i, n in enumerate(self.names)}
        return self.X[:, [pos[n] for n in names]]


def eligible_hours(books: Mapping, fundamentals: Mapping, calendars: Calendars) -> list:
    """Target hours with a book, fundamentals and an available reference hour."""
    out = []
    for t in sorted(books):
        if t not in fundamentals:
            continue
        try:
            find_reference(t, books, fundamentals, calendars)
        except MissingData:
            continue
        out.append(t)
    return out


def build_feature_matrix(books: Mapping, fundamentals: Mapping, calendars: Calendars,
                         scheme: PriceClassScheme, hours=None) -> FeatureMatrix:
    if hours is None:
        hours = eligible_hours(books, fundamentals, calendars)
    curves: dict = {}
    rows, ys = [], []
    for t in hours:
        rows.append(assemble_features(t, books, scheme, fundamentals, calendars, curves).values)
        ys.append(target_price(t, books, scheme, curves))
    n_feat = len(feature_names(scheme.n_classes))
    X = np.vstack(rows) if rows else np.empty((0, n_feat))
    return FeatureMatrix(list(hours), X, np.asarray(ys, dtype=float), feature_names(scheme.n_classes))
