"""Parametric synthetic day-ahead market.

Each hour gets a book built from a merit-order stack (technology blocks split
into units around their marginal cost), renewable infeed bid at a negative
price, and demand that is mostly a price-inelastic block at the price cap plus
a small elastic tail. The fundamentals file receives noisy "forecasts" of the
generating solar, wind and demand values.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .daytypes import Calendars, DayType, default_calendars
from .data_io import DatasetBundle
from .errors import ConfigError
from .features import FundamentalForecasts
from .market import PRICE_MAX_TICK, PRICE_MIN_TICK, AuctionHour, OrderBook

DEFAULT_STACK = (
    (8000.0, 12.0),    # nuclear
    (14000.0, 28.0),   # lignite
    (10000.0, 42.0),   # hard coal
    (9000.0, 58.0),    # combined cycle gas
    (5000.0, 95.0),    # gas turbines
    (3000.0, 160.0),   # oil / reserve
)

# hour-of-day load shape, roughly a two-peak profile scaled to [-1, 1]
_LOAD_SHAPE = np.array([
    -0.85, -0.95, -1.0, -1.0, -0.9, -0.6, -0.1, 0.4, 0.7, 0.8, 0.85, 0.9,
    0.9, 0.8, 0.7, 0.65, 0.7, 0.85, 1.0, 0.95, 0.7, 0.3, -0.2, -0.6,
])
_DAYTYPE_LOAD = {DayType.WORKDAY: 1.0, DayType.SATURDAY_OR_BRIDGE: 0.88,
                 DayType.SUNDAY_OR_HOLIDAY: 0.78}


@dataclass(frozen=True)
class SyntheticMarketSpec:
    start: dt.date = dt.date(2016, 1, 1)
    end: dt.date = dt.date(2017, 12, 31)
    stack: tuple = DEFAULT_STACK
    units_per_block: int = 8
    cost_spread: float = 6.0
    fuel_noise: float = 0.04
    base_demand_mwh: float = 31000.0
    daily_amplitude: float = 0.17
    seasonal_amplitude: float = 0.08
    daytype_effect: bool = True
    demand_noise: float = 0.02
    elastic_share: float = 0.05
    elastic_bids: int = 8
    elastic_price_range: tuple = (0.0, 150.0)
    solar_capacity_mwh: float = 16000.0
    wind_capacity_mwh: float = 26000.0
    wind_seasonal_amplitude: float = 0.35
    wind_persistence: float = 0.75
    wind_noise: float = 0.08
    renewable_bid_price: float = -15.0
    forecast_sigma: float = 0.05
    seed: int = 20150102

    def __post_init__(self):
        if self.end < self.start:
            raise ConfigError("date range is empty")
        if not self.stack:
            raise ConfigError("merit-order stack is empty")
        for cap, cost in self.stack:
            if not cap > 0:
                raise ConfigError(f"technology capacity must be > 0, got {cap!r}")
            if not -500 <= cost <= 3000:
                raise ConfigError(f"marginal cost {cost!r} outside the price grid")
        if not -500.0 <= self.renewable_bid_price <= 0.0:
            raise ConfigError("renewable_bid_price must lie in [-500, 0]")
        if self.units_per_block < 1 or self.elastic_bids < 1:
            raise ConfigError("units_per_block and elastic_bids must be >= 1")
        if not 0.0 <= self.elastic_share < 1.0:
            raise ConfigError("elastic_share must be in [0, 1)")
        for name in ("cost_spread", "fuel_noise", "demand_noise", "wind_noise", "forecast_sigma",
                     "solar_capacity_mwh", "wind_capacity_mwh", "base_demand_mwh"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")

    @property
    def days(self) -> list[dt.date]:
        n = (self.end - self.start).days + 1
        return [self.start + dt.timedelta(days=i) for i in range(n)]

    def to_json(self) -> str:
        d = dataclasses.asdict(self)
        d["start"] = self.start.isoformat()
        d["end"] = self.end.isoformat()
        d["stack"] = [list(b) for b in self.stack]
        d["elastic_price_range"] = list(self.elastic_price_range)
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, raw: dict) -> "SyntheticMarketSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown synthetic spec fields: {sorted(unknown)}")
        kw = dict(raw)
        try:
            for key in ("start", "end"):
                if key in kw:
                    kw[key] = dt.date.fromisoformat(kw[key])
            if "stack" in kw:
                kw["stack"] = tuple((float(c), float(p)) for c, p in kw["stack"])
            if "elastic_price_range" in kw:
                lo, hi = kw["elastic_price_range"]
                kw["elastic_price_range"] = (float(lo), float(hi))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed synthetic spec: {exc}") from exc
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "SyntheticMarketSpec":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"synthetic spec is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("synthetic spec must be a JSON object")
        return cls.from_dict(raw)


def _stream(seed: int, component: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(component,)))


def _ticks(prices) -> np.ndarray:
    return np.clip(np.rint(np.asarray(prices) * 10.0), PRICE_MIN_TICK, PRICE_MAX_TICK).astype(np.int64)


def unit_costs(spec: SyntheticMarketSpec, fuel_factor) -> tuple[np.ndarray, np.ndarray]:
    """Ticks and capacities of every stack unit for one day's fuel factors."""
    n = spec.units_per_block
    offsets = np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1)
    costs, caps = [], []
    for (cap, mc), f in zip(spec.stack, fuel_factor):
        costs.append((mc + spec.cost_spread * offsets) * f)
        caps.append(np.full(n, cap / n))
    return _ticks(np.concatenate(costs)), np.concatenate(caps)


def build_hour_book(spec: SyntheticMarketSpec, t, solar: float, wind: float, demand: float,
                    fuel_factor=None) -> OrderBook:
    if fuel_factor is None:
        fuel_factor = np.ones(len(spec.stack))
    s_ticks, s_vol = unit_costs(spec, fuel_factor)
    ren = solar + wind
    if ren > 0:
        s_ticks = np.append(s_ticks, _ticks(spec.renewable_bid_price))
        s_vol = np.append(s_vol, ren)
    elastic = demand * spec.elastic_share
    lo, hi = spec.elastic_price_range
    d_ticks = [PRICE_MAX_TICK]
    d_vol = [demand - elastic]
    if elastic > 0:
        d_ticks += list(_ticks(np.linspace(hi, lo, spec.elastic_bids)))
        d_vol += [elastic / spec.elastic_bids] * spec.elastic_bids
    return OrderBook(t, s_ticks, s_vol, np.array(d_ticks), np.array(d_vol))


def generate_synthetic(spec: SyntheticMarketSpec, calendars: Calendars | None = None) -> DatasetBundle:
    days = spec.days
    if calendars is None:
        calendars = default_calendars(spec.start, spec.end)
    n_days = len(days)
    hours = np.arange(24)
    doy = np.array([d.timetuple().tm_yday for d in days], dtype=float)
    season = np.cos(2 * math.pi * (doy - 15.0) / 365.25)  # +1 mid-January, -1 mid-July

    # demand
    rng_dem = _stream(spec.seed, 1)
    dtype_factor = np.array([
        _DAYTYPE_LOAD[calendars.day_type(d)] if spec.daytype_effect else 1.0 for d in days
    ])
    demand = (spec.base_demand_mwh
              * (1.0 + spec.daily_amplitude * _LOAD_SHAPE[None, :])
              * (1.0 + spec.seasonal_amplitude * season[:, None])
              * dtype_factor[:, None]
              * np.exp(spec.demand_noise * rng_dem.standard_normal((n_days, 24))))

    # solar: bell between sunrise and sunset, longer and stronger in summer
    rng_sun = _stream(spec.seed, 2)
    daylen = 12.0 - 4.0 * season
    sunrise = 12.5 - daylen / 2
    phase = (hours[None, :] - sunrise[:, None]) / daylen[:, None]
    shape = np.where((phase > 0) & (phase < 1), np.sin(math.pi * np.clip(phase, 0, 1)), 0.0)
    clear_sky = 0.6 - 0.35 * season
    clouds = rng_sun.beta(4.0, 2.0, n_days)
    solar = spec.solar_capacity_mwh * shape * (clear_sky * clouds)[:, None]

    # wind: persistent daily weather regime plus hourly jitter
    rng_wind = _stream(spec.seed, 3)
    x = np.empty(n_days)
    eps = rng_wind.standard_normal(n_days)
    x[0] = eps[0]
    for i in range(1, n_days):
        x[i] = spec.wind_persistence * x[i - 1] + math.sqrt(1 - spec.wind_persistence ** 2) * eps[i]
    level = 1.0 / (1.0 + np.exp(-(1.6 * x - 0.9)))
    amp = 1.0 + spec.wind_seasonal_amplitude * season
    jitter = np.exp(spec.wind_noise * rng_wind.standard_normal((n_days, 24)))
    wind = np.clip(spec.wind_capacity_mwh * (amp * level)[:, None] * jitter, 0.0,
                   spec.wind_capacity_mwh * (1 + spec.wind_seasonal_amplitude))

    # fuel prices drift slowly per technology
    rng_fuel = _stream(spec.seed, 4)
    steps = spec.fuel_noise * rng_fuel.standard_normal((n_days, len(spec.stack))) / 4.0
    fuel = np.exp(np.cumsum(steps, axis=0) - np.cumsum(steps, axis=0).mean(axis=0))
    if spec.fuel_noise == 0:
        fuel = np.ones((n_days, len(spec.stack)))

    rng_fc = _stream(spec.seed, 5)
    noise = np.exp(spec.forecast_sigma * rng_fc.standard_normal((n_days, 24, 3)))

    books, fundamentals = {}, {}
    for i, d in enumerate(days):
        for h in range(24):
            t = AuctionHour(d, h)
            books[t] = build_hour_book(spec, t, solar[i, h], wind[i, h], demand[i, h], fuel[i])
            fundamentals[t] = FundamentalForecasts(
                float(solar[i, h] * noise[i, h, 0]),
                float(wind[i, h] * noise[i, h, 1]),
                float(demand[i, h] * noise[i, h, 2]),
            )
    return DatasetBundle(books, fundamentals, calendars)
