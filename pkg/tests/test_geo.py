import datetime as dt

import numpy as np
import pytest
from hypothesis import given, strategies as st

from searchcast import geo
from searchcast.exceptions import NotAState, ParseError


def test_region_lookup():
    assert geo.region_of("GA").code == "R04"
    assert geo.region_of("DC").code == "R03"
    with pytest.raises(NotAState):
        geo.region_of("ZZ")
    with pytest.raises(NotAState):
        geo.region_of(geo.geo("R01"))


def test_partition():
    assert len(geo.STATES) == 51 and len(geo.REGIONS) == 10
    members = geo.region_members()
    flat = [s for r in geo.REGIONS for s in members[r]]
    assert sorted(flat) == sorted(geo.STATES)


def test_geo_levels_and_names():
    assert geo.geo("US").level == "nation"
    assert geo.geo("R10").level == "region"
    assert geo.geo("NY").level == "state"
    assert geo.normalize_state("New York") == "NY"
    with pytest.raises(NotAState):
        geo.geo("XX")


def test_region_override(tmp_path):
    rows = ["state,region"] + [f"{s},{'R01' if s == 'GA' else geo.STATE_TO_REGION[s]}" for s in geo.STATES]
    p = tmp_path / "r.csv"
    p.write_text("\n".join(rows) + "\n")
    table = geo.load_region_table(p)
    assert geo.region_of("GA", table).code == "R01"
    p.write_text("\n".join(rows[:-1]) + "\n")
    with pytest.raises(ParseError):
        geo.load_region_table(p)


@pytest.mark.parametrize("day,expected", [
    ("2020-07-06", [1, 0, 0, 0, 0, 0]),
    ("2020-07-05", [0, 0, 0, 0, 0, 0]),
    ("2020-07-04", [0, 0, 0, 0, 0, 1]),
])
def test_weekday_indicators(day, expected):
    assert geo.weekday_indicators(day).tolist() == expected


@pytest.mark.parametrize("day,end", [
    ("2020-07-04", "2020-07-04"),
    ("2020-07-05", "2020-07-11"),
    ("2021-10-09", "2021-10-09"),
])
def test_week_of(day, end):
    assert geo.week_of(day).week_end_date == dt.date.fromisoformat(end)


@given(st.dates(dt.date(2000, 1, 1), dt.date(2040, 1, 1)))
def test_week_contains_day(d):
    w = geo.week_of(d)
    assert w.start_date <= d <= w.week_end_date
    assert w.week_end_date.weekday() == 5
    assert w.shift(1).index == w.index + 1
    assert geo.weekday_indicators(d).sum() == (0 if d.weekday() == 6 else 1)
