"""Day-ahead electricity price forecasting from auction order books."""

__version__ = "0.1.0"

from .market import (  # noqa: E402
    AuctionHour, ClearingResult, OrderBook, StepCurve, build_demand_curve, build_supply_curve,
    clear_auction, clear_book,
)
from .partition import PriceClassScheme, aggregate_price_curve, fit_scheme, tick_scheme  # noqa: E402

__all__ = [
    "AuctionHour", "ClearingResult", "OrderBook", "PriceClassScheme", "StepCurve", "__version__",
    "aggregate_price_curve", "build_demand_curve", "build_supply_curve", "clear_auction",
    "clear_book", "fit_scheme", "tick_scheme",
]
