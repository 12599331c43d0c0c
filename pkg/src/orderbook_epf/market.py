"""Order books on the day-ahead tick grid, cumulative step curves and exact clearing.

Prices are held as integer tenths of EUR/MWh ("ticks"), so the grid runs from
-5000 to 30000 and every comparison is exact. Volumes stay float MWh.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import EmptyMarket, NoIntersection, OffGridPrice, OrderBookError

PRICE_MIN_TICK = -5000
PRICE_MAX_TICK = 30000
N_GRID = PRICE_MAX_TICK - PRICE_MIN_TICK + 1  # 35001 prices

SUPPLY = "supply"
DEMAND = "demand"


def to_tick(price: float) -> int:
    """Convert a price in EUR/MWh to integer tenths, rejecting off-grid values."""
    scaled = float(price) * 10.0
    if not math.isfinite(scaled):
        raise OffGridPrice(f"price {price!r} is not finite")
    tick = int(round(scaled))
    if abs(scaled - tick) > 1e-6:
        raise OffGridPrice(f"price {price!r} is not a multiple of 0.1 EUR/MWh")
    if not PRICE_MIN_TICK <= tick <= PRICE_MAX_TICK:
        raise OffGridPrice(f"price {price!r} outside [-500, 3000]")
    return tick


def to_price(tick) -> float:
    return int(tick) / 10.0


def grid_prices() -> np.ndarray:
    """All grid ticks in ascending order."""
    return np.arange(PRICE_MIN_TICK, PRICE_MAX_TICK + 1, dtype=np.int64)


@dataclass(frozen=True, order=True)
class AuctionHour:
    date: dt.date
    hour: int

    def __post_init__(self):
        if not isinstance(self.hour, (int, np.integer)) or not 0 <= self.hour <= 23:
            raise ValueError(f"hour must be in 0..23, got {self.hour!r}")
        object.__setattr__(self, "hour", int(self.hour))

    def __str__(self):
        return f"{self.date.isoformat()} h{self.hour:02d}"


def _side_arrays(levels, name):
    """Normalize one side to sorted unique int ticks and float volumes."""
    if isinstance(levels, Mapping):
        items = list(levels.items())
        ticks = np.array([to_tick(p) for p, _ in items], dtype=np.int64)
        vols = np.array([v for _, v in items], dtype=np.float64)
    else:
        ticks, vols = levels
        ticks = np.array(ticks, dtype=np.int64)
        vols = np.array(vols, dtype=np.float64)
    if ticks.shape != vols.shape or ticks.ndim != 1:
        raise OrderBookError(f"{name}: ticks and volumes must be equal-length 1-d arrays")
    if ticks.size and (ticks.min() < PRICE_MIN_TICK or ticks.max() > PRICE_MAX_TICK):
        raise OffGridPrice(f"{name}: price outside [-500, 3000]")
    if not np.all(np.isfinite(vols)):
        raise OrderBookError(f"{name}: non-finite volume")
    if np.any(vols < 0):
        raise OrderBookError(f"{name}: negative volume")
    if ticks.size == 0:
        return ticks, vols
    order = np.argsort(ticks, kind="stable")
    ticks, vols = ticks[order], vols[order]
    uniq, start = np.unique(ticks, return_index=True)
    if uniq.size != ticks.size:
        vols = np.add.reduceat(vols, start)
        ticks = uniq
    ticks.setflags(write=False)
    vols.setflags(write=False)
    return ticks, vols


@dataclass(frozen=True, eq=False)
class OrderBook:
    """Ask (supply) and bid (demand) volume per grid tick for one auction hour.

    Sides are stored as sorted unique integer ticks with matching volumes.
    Build from price mappings with :meth:`from_levels`; duplicate ticks are
    summed on construction.
    """

    t: AuctionHour | None
    supply_ticks: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    supply_volumes: np.ndarray = field(default_factory=lambda: np.empty(0))
    demand_ticks: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    demand_volumes: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        st, sv = _side_arrays((self.supply_ticks, self.supply_volumes), "supply")
        dk, dv = _side_arrays((self.demand_ticks, self.demand_volumes), "demand")
        object.__setattr__(self, "supply_ticks", st)
        object.__setattr__(self, "supply_volumes", sv)
        object.__setattr__(self, "demand_ticks", dk)
        object.__setattr__(self, "demand_volumes", dv)

    @classmethod
    def from_levels(cls, t=None, supply: Mapping[float, float] | None = None,
                    demand: Mapping[float, float] | None = None) -> "OrderBook":
        st, sv = _side_arrays(supply or {}, "supply")
        dk, dv = _side_arrays(demand or {}, "demand")
        return cls(t, st, sv, dk, dv)

    @property
    def total_supply(self) -> float:
        return float(self.supply_volumes.sum())

    @property
    def total_demand(self) -> float:
        return float(self.demand_volumes.sum())

    def levels(self, side: str) -> dict[float, float]:
        ticks, vols = self.side(side)
        return {to_price(k): float(v) for k, v in zip(ticks, vols)}

    def side(self, side: str):
        if side == SUPPLY:
            return self.supply_ticks, self.supply_volumes
        if side == DEMAND:
            return self.demand_ticks, self.demand_volumes
        raise ValueError(f"unknown side {side!r}")

    def __eq__(self, other):
        if not isinstance(other, OrderBook):
            return NotImplemented
        return (
            self.t == other.t
            and np.array_equal(self.supply_ticks, other.supply_ticks)
            and np.array_equal(self.supply_volumes, other.supply_volumes)
            and np.array_equal(self.demand_ticks, other.demand_ticks)
            and np.array_equal(self.demand_volumes, other.demand_volumes)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class StepCurve:
    """Cumulative step function over the grid.

    ``ticks`` are the grid points where the curve steps and ``values`` the
    cumulative volume there. A supply curve is right-continuous upward:
    S(P) = values[i] for the last tick_i <= P (0 before the first). A demand
    curve counts volume at and above P: D(P) = values[i] for the first
    tick_i >= P (0 after the last).
    """

    kind: str
    ticks: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in (SUPPLY, DEMAND):
            raise ValueError(f"unknown curve kind {self.kind!r}")
        ticks = np.array(self.ticks, dtype=np.int64)
        values = np.array(self.values, dtype=np.float64)
        if ticks.shape != values.shape:
            raise ValueError("ticks and values must align")
        if ticks.size:
            if np.any(np.diff(ticks) <= 0):
                raise ValueError("curve prices must be strictly increasing")
            if ticks[0] < PRICE_MIN_TICK or ticks[-1] > PRICE_MAX_TICK:
                raise OffGridPrice("curve price outside the grid")
            step = np.diff(values)
            if self.kind == SUPPLY and (np.any(step < 0) or values[0] < 0):
                raise ValueError("supply curve must be non-decreasing")
            if self.kind == DEMAND and (np.any(step > 0) or values[-1] < 0):
                raise ValueError("demand curve must be non-increasing")
        ticks.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "ticks", ticks)
        object.__setattr__(self, "values", values)

    @property
    def points(self) -> list[tuple[float, float]]:
        return [(to_price(k), float(v)) for k, v in zip(self.ticks, self.values)]

    @property
    def total(self) -> float:
        """S(3000) for supply, D(-500) for demand."""
        if not self.ticks.size:
            return 0.0
        return float(self.values[-1] if self.kind == SUPPLY else self.values[0])

    def increments(self) -> np.ndarray:
        """Per-tick volume that builds the curve, aligned with ``ticks``."""
        if self.kind == SUPPLY:
            return np.diff(self.values, prepend=0.0)
        return -np.diff(self.values, append=0.0)

    def at_ticks(self, ticks) -> np.ndarray:
        """Vectorized evaluation at integer ticks (no grid validation)."""
        q = np.asarray(ticks, dtype=np.int64)
        if not self.ticks.size:
            return np.zeros(q.shape)
        padded = np.concatenate(([0.0], self.values, [0.0]))
        if self.kind == SUPPLY:
            idx = np.searchsorted(self.ticks, q, side="right")
            return padded[idx]
        idx = np.searchsorted(self.ticks, q, side="left")
        return padded[idx + 1]

    def dense(self) -> np.ndarray:
        """Curve value at every grid tick."""
        return self.at_ticks(grid_prices())


def _cumulative(kind, ticks, vols):
    if kind == SUPPLY:
        return StepCurve(SUPPLY, ticks, np.cumsum(vols))
    return StepCurve(DEMAND, ticks, np.cumsum(vols[::-1])[::-1])


def build_supply_curve(book: OrderBook) -> StepCurve:
    return _cumulative(SUPPLY, book.supply_ticks, book.supply_volumes)


def build_demand_curve(book: OrderBook) -> StepCurve:
    return _cumulative(DEMAND, book.demand_ticks, book.demand_volumes)


def evaluate_curve(curve: StepCurve, price: float) -> float:
    return float(curve.at_ticks(to_tick(price)))


@dataclass(frozen=True)
class ClearingResult:
    tick: int
    volume: float

    @property
    def price(self) -> float:
        return to_price(self.tick)


def clear_auction(supply: StepCurve, demand: StepCurve) -> ClearingResult:
    """Smallest grid price where cumulative supply covers cumulative demand.

    S - D is non-decreasing and only changes at supply ticks and one tick
    above each demand tick, so only those candidates need checking.
    """
    if supply.kind != SUPPLY or demand.kind != DEMAND:
        raise ValueError("clear_auction expects (supply, demand) curves")
    if supply.total == 0.0 and demand.total == 0.0:
        raise EmptyMarket("both sides of the book are empty")
    cand = np.concatenate(([PRICE_MIN_TICK], supply.ticks, demand.ticks + 1))
    cand = np.unique(cand[cand <= PRICE_MAX_TICK])
    s = supply.at_ticks(cand)
    d = demand.at_ticks(cand)
    hit = np.flatnonzero(s >= d)
    if not hit.size:
        raise NoIntersection(
            f"supply {s[-1]:.6g} MWh below demand {d[-1]:.6g} MWh at the price cap"
        )
    i = hit[0]
    return ClearingResult(int(cand[i]), float(min(s[i], d[i])))


def clear_book(book: OrderBook) -> ClearingResult:
    return clear_auction(build_supply_curve(book), build_demand_curve(book))
