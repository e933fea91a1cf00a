"""Geographic identities (nation, HHS regions, states) and the weekly calendar.

Weeks end on Saturday. Weekday indicators are one-hot over Monday..Saturday
with Sunday as the omitted baseline.
"""
from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import NotAState, ParseError

NATION = "US"

# Standard HHS region membership (50 states + DC).
HHS_REGIONS: dict[str, tuple[str, ...]] = {
    "R01": ("CT", "ME", "MA", "NH", "RI", "VT"),
    "R02": ("NJ", "NY"),
    "R03": ("DE", "DC", "MD", "PA", "VA", "WV"),
    "R04": ("AL", "FL", "GA", "KY", "MS", "NC", "SC", "TN"),
    "R05": ("IL", "IN", "MI", "MN", "OH", "WI"),
    "R06": ("AR", "LA", "NM", "OK", "TX"),
    "R07": ("IA", "KS", "MO", "NE"),
    "R08": ("CO", "MT", "ND", "SD", "UT", "WY"),
    "R09": ("AZ", "CA", "HI", "NV"),
    "R10": ("AK", "ID", "OR", "WA"),
}

REGIONS: tuple[str, ...] = tuple(HHS_REGIONS)
STATES: tuple[str, ...] = tuple(sorted(s for members in HHS_REGIONS.values() for s in members))
STATE_TO_REGION: dict[str, str] = {s: r for r, members in HHS_REGIONS.items() for s in members}

STATE_NAMES: dict[str, str] = {
    "Alabama": "AL", "Alaska": "AK", "Arizona": "AZ", "Arkansas": "AR", "California": "CA",
    "Colorado": "CO", "Connecticut": "CT", "Delaware": "DE", "District of Columbia": "DC",
    "Florida": "FL", "Georgia": "GA", "Hawaii": "HI", "Idaho": "ID", "Illinois": "IL",
    "Indiana": "IN", "Iowa": "IA", "Kansas": "KS", "Kentucky": "KY", "Louisiana": "LA",
    "Maine": "ME", "Maryland": "MD", "Massachusetts": "MA", "Michigan": "MI", "Minnesota": "MN",
    "Mississippi": "MS", "Missouri": "MO", "Montana": "MT", "Nebraska": "NE", "Nevada": "NV",
    "New Hampshire": "NH", "New Jersey": "NJ", "New Mexico": "NM", "New York": "NY",
    "North Carolina": "NC", "North Dakota": "ND", "Ohio": "OH", "Oklahoma": "OK", "Oregon": "OR",
    "Pennsylvania": "PA", "Rhode Island": "RI", "South Carolina": "SC", "South Dakota": "SD",
    "Tennessee": "TN", "Texas": "TX", "Utah": "UT", "Vermont": "VT", "Virginia": "VA",
    "Washington": "WA", "West Virginia": "WV", "Wisconsin": "WI", "Wyoming": "WY",
}

# Saturday used as the origin of the week index.
_EPOCH_SATURDAY = dt.date(2000, 1, 1)


@dataclass(frozen=True)
class GeoId:
    level: str
    code: str

    def __post_init__(self):
        if self.level not in ("nation", "region", "state"):
            raise ValueError(f"unknown geo level {self.level!r}")

    def __str__(self):
        return self.code


def geo(code: str) -> GeoId:
    """Resolve a code (``US``, ``R01``..``R10`` or a state code) to a GeoId."""
    if code == NATION:
        return GeoId("nation", code)
    if code in HHS_REGIONS:
        return GeoId("region", code)
    if code in STATE_TO_REGION:
        return GeoId("state", code)
    raise NotAState(f"unknown geo code {code!r}")


def normalize_state(name: str) -> str:
    """Accept a two-letter code or a full state name; return the code."""
    name = name.strip()
    if name in STATE_TO_REGION:
        return name
    if name in STATE_NAMES:
        return STATE_NAMES[name]
    raise NotAState(f"not a state: {name!r}")


def region_of(state, table: dict[str, str] | None = None) -> GeoId:
    code = state.code if isinstance(state, GeoId) else state
    if isinstance(state, GeoId) and state.level != "state":
        raise NotAState(f"{state} is a {state.level}, not a state")
    table = STATE_TO_REGION if table is None else table
    try:
        return GeoId("region", table[code])
    except KeyError:
        raise NotAState(f"not a state: {code!r}") from None


def region_members(table: dict[str, str] | None = None) -> dict[str, list[str]]:
    table = STATE_TO_REGION if table is None else table
    out: dict[str, list[str]] = {r: [] for r in REGIONS}
    for s in STATES:
        out[table[s]].append(s)
    return out


def load_region_table(path) -> dict[str, str]:
    """Read a ``state,region`` override CSV; must cover all 51 states exactly once."""
    table: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["state", "region"]:
            raise ParseError("region override header must be 'state,region'", line=1)
        for lineno, row in enumerate(reader, start=2):
            state = normalize_state(row["state"])
            region = row["region"].strip()
            if region not in HHS_REGIONS:
                raise ParseError(f"unknown region {region!r}", line=lineno)
            if state in table:
                raise ParseError(f"duplicate state {state}", line=lineno)
            table[state] = region
    missing = set(STATES) - set(table)
    if missing:
        raise ParseError(f"region override missing states: {sorted(missing)}")
    return table


def _as_date(d) -> dt.date:
    if isinstance(d, pd.Timestamp):
        return d.date()
    if isinstance(d, dt.datetime):
        return d.date()
    if isinstance(d, dt.date):
        return d
    return dt.date.fromisoformat(str(d))


def weekday_indicators(date) -> np.ndarray:
    """One-hot over Mon..Sat; all zeros on Sunday."""
    out = np.zeros(6)
    wd = _as_date(date).weekday()  # Monday=0 .. Sunday=6
    if wd < 6:
        out[wd] = 1.0
    return out


@dataclass(frozen=True, order=True)
class EpiWeek:
    index: int
    week_end_date: dt.date

    @classmethod
    def from_end(cls, week_end) -> "EpiWeek":
        end = _as_date(week_end)
        if end.weekday() != 5:
            raise ValueError(f"{end} is not a Saturday")
        return cls((end - _EPOCH_SATURDAY).days // 7, end)

    @property
    def start_date(self) -> dt.date:
        return self.week_end_date - dt.timedelta(days=6)

    def shift(self, weeks: int) -> "EpiWeek":
        return EpiWeek(self.index + weeks, self.week_end_date + dt.timedelta(days=7 * weeks))


def week_of(date) -> EpiWeek:
    d = _as_date(date)
    end = d + dt.timedelta(days=(5 - d.weekday()) % 7)
    return EpiWeek.from_end(end)
