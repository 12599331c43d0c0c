"""Volume-equalizing price classes and the merit-order price curve.

Class membership differs by side so that the class-implied price agrees with
exact clearing whenever the exact price is a class boundary:

* supply volume at tick p joins class k with c[k-1] < p <= c[k]
  (the first class also holds c[0] = -500);
* demand volume at tick p joins class k with c[k-1] <= p < c[k]
  (the last class also holds c[M] = 3000).

Each side's classes are then exactly the segments produced by walking its
averaged curve in cumulation direction: upward for supply, downward for
demand.
"""
from __future__ import annotations

import hashlib
import io
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyMarket, NoIntersection
from .market import (
    DEMAND,
    N_GRID,
    PRICE_MAX_TICK,
    PRICE_MIN_TICK,
    SUPPLY,
    AuctionHour,
    OrderBook,
    StepCurve,
    clear_book,
    to_price,
    to_tick,
)

SCHEME_FORMAT = "orderbook-epf price-class scheme v1"
SUM_RTOL = 1e-12


def _check_bounds(bounds, name):
    b = np.asarray(bounds, dtype=np.int64)
    if b.ndim != 1 or b.size < 2:
        raise ValueError(f"{name}: need at least two boundaries")
    if b[0] != PRICE_MIN_TICK or b[-1] != PRICE_MAX_TICK:
        raise ValueError(f"{name}: boundaries must start at -500 and end at 3000")
    if np.any(np.diff(b) <= 0):
        raise ValueError(f"{name}: boundaries must be strictly ascending")
    b = b.copy()
    b.setflags(write=False)
    return b


def merge_boundaries(supply_bounds, demand_bounds) -> np.ndarray:
    """Sorted, de-duplicated union of both sides' boundary ticks."""
    s = _check_bounds(supply_bounds, "supply")
    d = _check_bounds(demand_bounds, "demand")
    return np.union1d(s, d)


@dataclass(frozen=True, eq=False)
class PriceClassScheme:
    supply_bounds: np.ndarray
    demand_bounds: np.ndarray
    target_volume: float
    training_hash: str = ""

    def __post_init__(self):
        object.__setattr__(self, "supply_bounds", _check_bounds(self.supply_bounds, "supply"))
        object.__setattr__(self, "demand_bounds", _check_bounds(self.demand_bounds, "demand"))
        merged = merge_boundaries(self.supply_bounds, self.demand_bounds)
        merged.setflags(write=False)
        object.__setattr__(self, "merged_bounds", merged)

    @property
    def n_classes(self) -> int:
        return len(self.merged_bounds) - 1

    @property
    def merged_prices(self) -> list[float]:
        return [to_price(c) for c in self.merged_bounds]

    def __eq__(self, other):
        if not isinstance(other, PriceClassScheme):
            return NotImplemented
        return (
            np.array_equal(self.supply_bounds, other.supply_bounds)
            and np.array_equal(self.demand_bounds, other.demand_bounds)
            and self.target_volume == other.target_volume
            and self.training_hash == other.training_hash
        )

    __hash__ = None

    @classmethod
    def from_prices(cls, supply, demand, target_volume=float("nan"), training_hash=""):
        return cls(
            np.array([to_tick(p) for p in supply], dtype=np.int64),
            np.array([to_tick(p) for p in demand], dtype=np.int64),
            float(target_volume),
            training_hash,
        )


def supply_class_index(ticks, bounds) -> np.ndarray:
    """0-based class index of supply ticks (classes closed on the right)."""
    k = np.searchsorted(bounds, ticks, side="left")
    return np.maximum(k, 1) - 1


def demand_class_index(ticks, bounds) -> np.ndarray:
    """0-based class index of demand ticks (classes closed on the left)."""
    k = np.searchsorted(bounds, ticks, side="right")
    return np.minimum(k, len(bounds) - 1) - 1


# --- averaging and boundary walk -------------------------------------------

def _dense_volumes(books: Iterable[OrderBook]):
    sup = np.zeros(N_GRID)
    dem = np.zeros(N_GRID)
    n = 0
    for b in books:
        np.add.at(sup, b.supply_ticks - PRICE_MIN_TICK, b.supply_volumes)
        np.add.at(dem, b.demand_ticks - PRICE_MIN_TICK, b.demand_volumes)
        n += 1
    return sup, dem, n


def _curve_from_dense(kind, dense_vol):
    idx = np.flatnonzero(dense_vol)
    ticks = idx + PRICE_MIN_TICK
    vols = dense_vol[idx]
    if kind == SUPPLY:
        return StepCurve(SUPPLY, ticks, np.cumsum(vols))
    return StepCurve(DEMAND, ticks, np.cumsum(vols[::-1])[::-1])


def average_curves(books: Sequence[OrderBook]) -> tuple[StepCurve, StepCurve]:
    """Pointwise mean of the per-hour supply and demand curves.

    Averaging is linear, so the mean curve is the cumulation of the mean
    per-tick volume.
    """
    sup, dem, n = _dense_volumes(books)
    if n == 0:
        raise ValueError("average_curves needs at least one order book")
    return _curve_from_dense(SUPPLY, sup / n), _curve_from_dense(DEMAND, dem / n)


def compute_boundaries(avg: StepCurve, v_star: float) -> np.ndarray:
    """Greedy walk emitting a boundary whenever V_star of averaged volume piles up.

    Supply is walked from -500 upward, demand from 3000 downward; the tick at
    which the running volume reaches ``v_star`` becomes a boundary and the
    running volume restarts. The grid ends are always boundaries, and any
    remainder after the last emitted boundary stays in the outermost class.
    """
    if not v_star > 0:
        raise ValueError(f"V_star must be positive, got {v_star!r}")
    inc = avg.increments()
    if np.any(inc < 0):
        raise ValueError("averaged curve is not monotone")
    ticks = avg.ticks
    order = range(len(ticks)) if avg.kind == SUPPLY else range(len(ticks) - 1, -1, -1)
    emitted = []
    acc = 0.0
    for i in order:
        acc += inc[i]
        if acc >= v_star:
            emitted.append(int(ticks[i]))
            acc = 0.0
    inner = sorted(set(emitted) - {PRICE_MIN_TICK, PRICE_MAX_TICK})
    return np.array([PRICE_MIN_TICK, *inner, PRICE_MAX_TICK], dtype=np.int64)


def walk_segment_volumes(avg: StepCurve, bounds) -> np.ndarray:
    """Averaged volume per class of one side, using that side's membership rule."""
    inc = avg.increments()
    bounds = np.asarray(bounds)
    if avg.kind == SUPPLY:
        k = supply_class_index(avg.ticks, bounds)
    else:
        k = demand_class_index(avg.ticks, bounds)
    return np.bincount(k, weights=inc, minlength=len(bounds) - 1)


def training_hash(books: Sequence[OrderBook]) -> str:
    h = hashlib.sha256()
    for b in books:
        if b.t is not None:
            h.update(str(b.t).encode())
        for arr in (b.supply_ticks, b.supply_volumes, b.demand_ticks, b.demand_volumes):
            h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def fit_scheme(books: Sequence[OrderBook], v_star: float = 1000.0) -> PriceClassScheme:
    avg_s, avg_d = average_curves(books)
    return PriceClassScheme(
        compute_boundaries(avg_s, v_star),
        compute_boundaries(avg_d, v_star),
        float(v_star),
        training_hash(books),
    )


def tick_scheme(books: Iterable[OrderBook]) -> PriceClassScheme:
    """Finest useful scheme: a boundary at every occupied supply tick and one
    tick above every occupied demand tick, i.e. at every price where the
    excess of supply over demand can change."""
    s, d = set(), set()
    for b in books:
        s.update(int(x) for x in b.supply_ticks)
        d.update(int(x) + 1 for x in b.demand_ticks if x < PRICE_MAX_TICK)
    s |= {PRICE_MIN_TICK, PRICE_MAX_TICK}
    d |= {PRICE_MIN_TICK, PRICE_MAX_TICK}
    return PriceClassScheme(np.array(sorted(s)), np.array(sorted(d)), float("nan"))


# --- price curves -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PriceCurve:
    t: AuctionHour | None
    class_volumes: np.ndarray
    inelastic_demand: float


def aggregate_price_curve(book: OrderBook, scheme: PriceClassScheme) -> PriceCurve:
    bounds = scheme.merged_bounds
    m = len(bounds) - 1
    vols = np.bincount(
        supply_class_index(book.supply_ticks, bounds), weights=book.supply_volumes, minlength=m
    ) + np.bincount(
        demand_class_index(book.demand_ticks, bounds), weights=book.demand_volumes, minlength=m
    )
    vols.setflags(write=False)
    return PriceCurve(book.t, vols, book.total_demand)


def class_implied_tick(pc: PriceCurve, scheme: PriceClassScheme) -> int:
    """Smallest boundary c_k whose cumulative class volume covers inelastic demand."""
    cum = np.concatenate(([0.0], np.cumsum(pc.class_volumes)))
    # the two sides of the comparison are summed in different orders
    slack = SUM_RTOL * max(1.0, float(cum[-1]))
    hit = np.flatnonzero(cum >= pc.inelastic_demand - slack)
    if not hit.size:
        raise NoIntersection(
            f"price curve total {cum[-1]:.6g} MWh below inelastic demand "
            f"{pc.inelastic_demand:.6g} MWh"
        )
    return int(scheme.merged_bounds[hit[0]])


def clear_from_price_curve(pc: PriceCurve, scheme: PriceClassScheme) -> float:
    return to_price(class_implied_tick(pc, scheme))


def class_step_curves(book: OrderBook, scheme: PriceClassScheme) -> tuple[StepCurve, StepCurve]:
    """Supply and demand curves after lumping each class onto a boundary.

    Supply of class k sits at c[k]; demand of class k is bid at c[k] - 0.1
    (so it drops out at c[k]), except the last class which stays at 3000.
    At every boundary these agree with the exact curves.
    """
    bounds = scheme.merged_bounds
    m = len(bounds) - 1
    s = np.bincount(supply_class_index(book.supply_ticks, bounds),
                    weights=book.supply_volumes, minlength=m)
    d = np.bincount(demand_class_index(book.demand_ticks, bounds),
                    weights=book.demand_volumes, minlength=m)
    s_ticks = bounds[1:].copy()
    d_ticks = bounds[1:] - 1
    d_ticks[-1] = PRICE_MAX_TICK
    keep_s, keep_d = s > 0, d > 0
    ts, vs = s_ticks[keep_s], s[keep_s]
    td, vd = d_ticks[keep_d], d[keep_d]
    return (
        StepCurve(SUPPLY, ts, np.cumsum(vs)),
        StepCurve(DEMAND, td, np.cumsum(vd[::-1])[::-1]),
    )


@dataclass(frozen=True)
class ApproximationReport:
    mean_abs_error: float
    mdape: float
    n: int
    n_skipped: int


def lower_median(values) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    if not v.size:
        return float("nan")
    return float(v[(v.size - 1) // 2])


def approximation_report(books: Sequence[OrderBook], scheme: PriceClassScheme) -> ApproximationReport:
    """Mean |class-implied - exact| price and MdAPE over books that clear exactly."""
    if not books:
        raise ValueError("approximation_report needs at least one book")
    approx, exact = [], []
    skipped = 0
    for b in books:
        try:
            p = clear_book(b).price
        except (NoIntersection, EmptyMarket):
            skipped += 1
            continue
        exact.append(p)
        approx.append(clear_from_price_curve(aggregate_price_curve(b, scheme), scheme))
    if not exact:
        raise ValueError("no book in the set clears")
    a, e = np.array(approx), np.array(exact)
    err = np.abs(a - e)
    nz = e != 0
    return ApproximationReport(
        float(err.mean()),
        lower_median(err[nz] / np.abs(e[nz])) if nz.any() else float("nan"),
        len(exact),
        skipped,
    )


# --- serialization ----------------------------------------------------------

def dumps_scheme(scheme: PriceClassScheme) -> str:
    out = io.StringIO()
    out.write(f"# {SCHEME_FORMAT}\n")
    out.write(f"# v_star={scheme.target_volume!r}\n")
    out.write(f"# training_hash={scheme.training_hash}\n")
    out.write("side,index,boundary_price\n")
    for side, bounds in (("S", scheme.supply_bounds), ("D", scheme.demand_bounds),
                         ("X", scheme.merged_bounds)):
        for i, c in enumerate(bounds):
            out.write(f"{side},{i},{to_price(c):.1f}\n")
    return out.getvalue()


def loads_scheme(text: str) -> PriceClassScheme:
    meta = {}
    rows = {"S": [], "D": [], "X": []}
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, val = body.split("=", 1)
                meta[key.strip()] = val.strip()
            continue
        if not header_seen:
            if line != "side,index,boundary_price":
                raise ValueError(f"line {lineno}: unexpected scheme header {line!r}")
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 3 or parts[0] not in rows:
            raise ValueError(f"line {lineno}: malformed scheme row {line!r}")
        side, idx, price = parts
        if int(idx) != len(rows[side]):
            raise ValueError(f"line {lineno}: out-of-order index for side {side}")
        rows[side].append(to_tick(float(price)))
    scheme = PriceClassScheme(
        np.array(rows["S"], dtype=np.int64),
        np.array(rows["D"], dtype=np.int64),
        float(meta.get("v_star", "nan")),
        meta.get("training_hash", ""),
    )
    if rows["X"] and not np.array_equal(scheme.merged_bounds, rows["X"]):
        raise ValueError("stored merged boundaries disagree with the side boundaries")
    return scheme


def save_scheme(scheme: PriceClassScheme, path) -> None:
    from .data_io import atomic_write_text

    atomic_write_text(path, dumps_scheme(scheme))


def load_scheme(path) -> PriceClassScheme:
    with open(os.fspath(path), encoding="utf-8") as fh:
        return loads_scheme(fh.read())
