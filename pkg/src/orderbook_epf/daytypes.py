"""Day-type calendar: holidays, bridge days, reference dates and DST."""
from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass, field
from functools import lru_cache
from zoneinfo import ZoneInfo

from dateutil.easter import easter

from .errors import NoReference

MARKET_TZ = "Europe/Berlin"


class DayType(enum.IntEnum):
    WORKDAY = 0
    SATURDAY_OR_BRIDGE = 1
    SUNDAY_OR_HOLIDAY = 2


@dataclass(frozen=True)
class Calendars:
    holidays: frozenset = field(default_factory=frozenset)
    bridge_days: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "holidays", frozenset(self.holidays))
        object.__setattr__(self, "bridge_days", frozenset(self.bridge_days))

    def day_type(self, d: dt.date) -> DayType:
        return classify_day(d, self.holidays, self.bridge_days)


def classify_day(d: dt.date, holidays=frozenset(), bridge_days=frozenset()) -> DayType:
    wd = d.weekday()
    if wd == 6 or d in holidays:
        return DayType.SUNDAY_OR_HOLIDAY
    if wd == 5 or d in bridge_days:
        return DayType.SATURDAY_OR_BRIDGE
    return DayType.WORKDAY


def reference_date(d: dt.date, calendars: Calendars, horizon: int = 365, available=None) -> dt.date:
    """Nearest earlier day of the same day type.

    ``available`` optionally filters candidate days (days missing from the
    data are skipped).
    """
    target = calendars.day_type(d)
    for lag in range(1, horizon + 1):
        e = d - dt.timedelta(days=lag)
        if calendars.day_type(e) == target and (available is None or available(e)):
            return e
    raise NoReference(f"no {target.name.lower()} within {horizon} days before {d}")


@lru_cache(maxsize=None)
def is_dst(d: dt.date, tz: str = MARKET_TZ) -> bool:
    """True iff local noon of ``d`` falls in daylight-saving time."""
    noon = dt.datetime(d.year, d.month, d.day, 12, tzinfo=ZoneInfo(tz))
    return bool(noon.dst())


def german_holidays(years) -> set[dt.date]:
    """Nationwide public holidays in Germany."""
    out = set()
    for y in years:
        e = easter(y)
        out |= {
            dt.date(y, 1, 1),
            e - dt.timedelta(days=2),  # Good Friday
            e + dt.timedelta(days=1),  # Easter Monday
            dt.date(y, 5, 1),
            e + dt.timedelta(days=39),  # Ascension
            e + dt.timedelta(days=50),  # Whit Monday
            dt.date(y, 10, 3),
            dt.date(y, 12, 25),
            dt.date(y, 12, 26),
        }
    return out


def default_bridge_days(years, holidays) -> set[dt.date]:
    """Fridays after Thursday holidays, Mondays before Tuesday holidays, and
    Dec 24 / Dec 31 on weekdays."""
    out = set()
    for h in holidays:
        if h.weekday() == 3:
            out.add(h + dt.timedelta(days=1))
        elif h.weekday() == 1:
            out.add(h - dt.timedelta(days=1))
    for y in years:
        for d in (dt.date(y, 12, 24), dt.date(y, 12, 31)):
            if d.weekday() < 5:
                out.add(d)
    return {d for d in out if d not in holidays}


def default_calendars(start: dt.date, end: dt.date) -> Calendars:
    years = range(start.year - 1, end.year + 1)
    hol = german_holidays(years)
    return Calendars(frozenset(hol), frozenset(default_bridge_days(years, hol)))
