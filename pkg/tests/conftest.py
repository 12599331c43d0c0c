import datetime as dt
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from orderbook_epf.market import PRICE_MAX_TICK, PRICE_MIN_TICK, AuctionHour, OrderBook
from orderbook_epf.synthetic import SyntheticMarketSpec, generate_synthetic

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.register_profile("thorough", deadline=None, max_examples=500)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def random_book(rng, n_levels=50, t=None, lo=PRICE_MIN_TICK, hi=PRICE_MAX_TICK, dyadic=False):
    """Random book; dyadic volumes make every partial sum exact in floating point."""
    def side():
        k = int(rng.integers(0, n_levels + 1))
        ticks = rng.integers(lo, hi + 1, size=k)
        if dyadic:
            vols = rng.integers(0, 4096, size=k) / 8.0
        else:
            vols = rng.exponential(100.0, size=k)
        return ticks, vols

    st_, sv = side()
    dt_, dv = side()
    return OrderBook(t, st_, sv, dt_, dv)


@st.composite
def books(draw, max_levels=30, lo=PRICE_MIN_TICK, hi=PRICE_MAX_TICK, dyadic=True):
    """Hypothesis strategy for order books, with clustered ticks so ties and
    shared prices between the sides are common."""
    centre = draw(st.integers(lo, hi))
    tick = st.one_of(st.integers(lo, hi), st.integers(max(lo, centre - 20), min(hi, centre + 20)))
    vol = (st.integers(0, 4000).map(lambda v: v / 8.0) if dyadic
           else st.floats(0, 1e4, allow_nan=False, allow_infinity=False))
    side = st.lists(st.tuples(tick, vol), max_size=max_levels)
    s = draw(side)
    d = draw(side)
    return OrderBook(
        None,
        np.array([p for p, _ in s], dtype=np.int64), np.array([v for _, v in s], dtype=float),
        np.array([p for p, _ in d], dtype=np.int64), np.array([v for _, v in d], dtype=float),
    )


@pytest.fixture(scope="session")
def small_spec():
    return SyntheticMarketSpec(start=dt.date(2016, 1, 1), end=dt.date(2016, 3, 31), seed=11)


@pytest.fixture(scope="session")
def small_bundle(small_spec):
    return generate_synthetic(small_spec)


@pytest.fixture
def hour():
    return AuctionHour(dt.date(2016, 5, 4), 10)


# acceptance criteria: one PASS/FAIL line each in the terminal summary
_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when == "teardown" or (rep.when == "setup" and rep.passed):
        return
    n, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed:
        reason = rep.longrepr.reprcrash.message if hasattr(rep.longrepr, "reprcrash") else str(rep.longrepr)
        detail = (detail + "; " if detail else "") + reason.splitlines()[0][:160]
    _CRITERIA[n] = ("PASS" if rep.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {title}" + (f"  [{detail}]" if detail else ""))
