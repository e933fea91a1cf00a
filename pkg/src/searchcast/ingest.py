"""Loading surveillance and search-frequency CSVs into validated panels.

Surveillance files hold cumulative counts and are differenced into daily
increments; negative increments (revisions) are kept as-is. The input feed
(features) and truth feed (scoring) are loaded separately and never mixed.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import geo as geo_mod
from .exceptions import GapError, IncompleteWeek, NotAState, OrderError, ParseError

STATE_COLUMNS = ("date", "state", "cases", "deaths")
NATION_COLUMNS = ("date", "cases", "deaths")
QUERY_COLUMNS = ("date", "geo", "query", "value")


@dataclass
class SurveillancePanel:
    """Daily death and case increments for a set of geos over a contiguous range."""

    dates: pd.DatetimeIndex
    geos: list[str]
    deaths: np.ndarray
    cases: np.ndarray
    source: str = "input"
    _pos: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.deaths = np.asarray(self.deaths, dtype=float)
        self.cases = np.asarray(self.cases, dtype=float)
        shape = (len(self.geos), len(self.dates))
        if self.deaths.shape != shape or self.cases.shape != shape:
            raise ValueError(f"panel arrays must have shape {shape}")
        self._pos = {g: i for i, g in enumerate(self.geos)}

    def index(self, code) -> int:
        code = str(code)
        try:
            return self._pos[code]
        except KeyError:
            raise NotAState(f"{code!r} not in panel") from None

    def series(self, code, variable: str = "deaths") -> pd.Series:
        arr = getattr(self, variable)
        return pd.Series(arr[self.index(code)], index=self.dates, name=f"{code}:{variable}")

    def weekly(self, variable: str = "deaths") -> pd.DataFrame:
        """Sums over complete Sunday..Saturday weeks, indexed by week-end date."""
        arr = getattr(self, variable)
        first, n_weeks = complete_weeks(self.dates)
        if n_weeks == 0:
            return pd.DataFrame(columns=self.geos, dtype=float)
        block = arr[:, first:first + 7 * n_weeks].reshape(len(self.geos), n_weeks, 7).sum(axis=2)
        ends = self.dates[first + 6::7][:n_weeks]
        return pd.DataFrame(block.T, index=ends, columns=self.geos)


def complete_weeks(dates: pd.DatetimeIndex) -> tuple[int, int]:
    """Offset of the first Sunday and the count of complete weeks after it."""
    if len(dates) == 0:
        return 0, 0
    first = (6 - dates[0].weekday()) % 7  # Sunday has weekday() == 6
    return first, max(0, (len(dates) - first) // 7)


def _read_csv(path, expected, optional=()):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.ParserError as exc:
        raise ParseError(f"{path}: {exc}") from None
    cols = [c.strip() for c in df.columns]
    df.columns = cols
    missing = [c for c in expected if c not in cols]
    extra = [c for c in cols if c not in expected and c not in optional]
    if missing or extra:
        raise ParseError(f"{path}: expected columns {list(expected)}, got {cols}", line=1)
    return df


def _stripped(col: pd.Series) -> pd.Series:
    # long files repeat a handful of labels, so strip each distinct one once
    codes, uniq = pd.factorize(col)
    out = pd.Series(uniq, dtype=object).str.strip().to_numpy()
    return pd.Series(out[codes], index=col.index)


def _parse_dates(df, path):
    dates = pd.to_datetime(_stripped(df["date"]), format="%Y-%m-%d", errors="coerce")
    bad = np.flatnonzero(dates.isna().to_numpy())
    if bad.size:
        raise ParseError(f"{path}: bad date {df['date'].iloc[bad[0]]!r}", line=int(bad[0]) + 2)
    return dates


def _parse_numeric(df, col, path):
    vals = pd.to_numeric(df[col], errors="coerce")
    if vals.isna().any():
        vals = pd.to_numeric(df[col].str.strip(), errors="coerce")
    bad = np.flatnonzero(vals.isna().to_numpy())
    if bad.size:
        raise ParseError(f"{path}: non-numeric {col} {df[col].iloc[bad[0]]!r}", line=int(bad[0]) + 2)
    return vals.to_numpy(dtype=float)


def _cumulative_block(frame: pd.DataFrame, geo_code: str, dates: pd.DatetimeIndex):
    """Reindex one geo's cumulative rows onto ``dates``; leading days are zero."""
    d = frame["date"]
    if not d.is_monotonic_increasing or d.duplicated().any():
        raise OrderError(f"dates for {geo_code} are not strictly increasing")
    expected = pd.date_range(d.iloc[0], d.iloc[-1], freq="D")
    if len(expected) != len(d):
        present = set(d)
        gap = next(x for x in expected if x not in present)
        raise GapError(geo_code, gap.date().isoformat())
    if d.iloc[-1] != dates[-1]:
        raise GapError(geo_code, (d.iloc[-1] + pd.Timedelta(days=1)).date().isoformat())
    out = np.zeros((2, len(dates)))
    start = dates.get_loc(d.iloc[0])
    out[0, start:] = frame["cases"].to_numpy()
    out[1, start:] = frame["deaths"].to_numpy()
    return out


def _increments(cum: np.ndarray) -> np.ndarray:
    return np.diff(cum, axis=-1, prepend=0.0)


def load_surveillance(path, schema: str = "state", source_tag: str = "input") -> SurveillancePanel:
    """Read a cumulative surveillance CSV and return daily increments.

    ``schema="state"`` expects ``date,state,cases,deaths`` (a ``fips`` column is
    ignored); ``schema="nation"`` expects ``date,cases,deaths``.
    """
    if schema == "state":
        df = _read_csv(path, STATE_COLUMNS, optional=("fips",))
    elif schema == "nation":
        df = _read_csv(path, NATION_COLUMNS, optional=("fips",))
    else:
        raise ValueError(f"unknown schema {schema!r}")
    if df.empty:
        raise ParseError(f"{path}: no data rows")
    frame = pd.DataFrame({
        "date": _parse_dates(df, path),
        "cases": _parse_numeric(df, "cases", path),
        "deaths": _parse_numeric(df, "deaths", path),
    })
    if schema == "state":
        codes = []
        for i, name in enumerate(df["state"]):
            try:
                codes.append(geo_mod.normalize_state(name))
            except NotAState:
                raise ParseError(f"{path}: unknown state {name!r}", line=i + 2) from None
        frame["geo"] = codes
    else:
        frame["geo"] = geo_mod.NATION
    dates = pd.date_range(frame["date"].min(), frame["date"].max(), freq="D")
    geos = sorted(frame["geo"].unique()) if schema == "state" else [geo_mod.NATION]
    cum = np.zeros((2, len(geos), len(dates)))
    for i, code in enumerate(geos):
        sub = frame[frame["geo"] == code]
        cum[:, i, :] = _cumulative_block(sub.reset_index(drop=True), code, dates)
    return SurveillancePanel(dates=dates, geos=list(geos), cases=_increments(cum[0]),
                             deaths=_increments(cum[1]), source=source_tag)


def assemble_feed(states: SurveillancePanel, nation: SurveillancePanel | None = None,
                  region_table: dict | None = None) -> SurveillancePanel:
    """Combine a state panel with regional sums and a national series.

    States missing from the file are zero. Without a nation file the national
    series is the sum of states.
    """
    dates = states.dates
    table = geo_mod.STATE_TO_REGION if region_table is None else region_table
    S = len(geo_mod.STATES)
    deaths = np.zeros((S, len(dates)))
    cases = np.zeros((S, len(dates)))
    for i, s in enumerate(geo_mod.STATES):
        if s in states.geos:
            deaths[i] = states.deaths[states.index(s)]
            cases[i] = states.cases[states.index(s)]
    members = geo_mod.region_members(table)
    pos = {s: i for i, s in enumerate(geo_mod.STATES)}
    reg_d = np.array([deaths[[pos[s] for s in members[r]]].sum(axis=0) for r in geo_mod.REGIONS])
    reg_c = np.array([cases[[pos[s] for s in members[r]]].sum(axis=0) for r in geo_mod.REGIONS])
    if nation is None:
        nat_d, nat_c = deaths.sum(axis=0), cases.sum(axis=0)
    else:
        nat = nation_on(nation, dates)
        nat_d, nat_c = nat
    return SurveillancePanel(
        dates=dates,
        geos=list(geo_mod.STATES) + list(geo_mod.REGIONS) + [geo_mod.NATION],
        deaths=np.vstack([deaths, reg_d, nat_d[None]]),
        cases=np.vstack([cases, reg_c, nat_c[None]]),
        source=states.source,
    )


def nation_on(nation: SurveillancePanel, dates: pd.DatetimeIndex):
    d = pd.Series(nation.deaths[0], index=nation.dates).reindex(dates)
    c = pd.Series(nation.cases[0], index=nation.dates).reindex(dates)
    if d.isna().any():
        raise GapError(geo_mod.NATION, d.index[d.isna()][0].date().isoformat())
    return d.to_numpy(), c.to_numpy()


def load_feed(state_path, nation_path=None, source_tag="input", region_table=None) -> SurveillancePanel:
    states = load_surveillance(state_path, "state", source_tag)
    nation = load_surveillance(nation_path, "nation", source_tag) if nation_path else None
    return assemble_feed(states, nation, region_table)


@dataclass
class LevelData:
    codes: list[str]
    values: np.ndarray  # (geos, queries, days)
    active: np.ndarray  # (geos, queries) bool; inactive cells are zero


@dataclass
class QueryPanel:
    """Search frequencies per (geo, query, day) at state, region and nation level."""

    dates: pd.DatetimeIndex
    queries: list[str]
    levels: dict[str, LevelData]

    def level_of(self, code: str) -> str:
        return geo_mod.geo(code).level

    def series(self, code: str, query: str) -> pd.Series:
        lvl = self.levels[self.level_of(code)]
        g = lvl.codes.index(code)
        q = self.queries.index(query)
        return pd.Series(lvl.values[g, q], index=self.dates, name=f"{code}:{query}")

    def active_queries(self, level: str) -> list[str]:
        """Queries kept at one or more geos of ``level``."""
        lvl = self.levels[level]
        return [q for q, a in zip(self.queries, lvl.active.any(axis=0)) if a]

    def block(self, level: str, queries, dates: pd.DatetimeIndex | None = None) -> np.ndarray:
        """Array (geos, len(queries), days); pruned or absent queries are zero."""
        lvl = self.levels[level]
        idx = [self.queries.index(q) for q in queries]
        out = lvl.values[:, idx, :] * lvl.active[:, idx][:, :, None]
        if dates is not None and not dates.equals(self.dates):
            pos = self.dates.get_indexer(dates)
            aligned = np.zeros(out.shape[:2] + (len(dates),))
            hit = pos >= 0
            aligned[:, :, hit] = out[:, :, pos[hit]]
            out = aligned
        return out

    def copy(self) -> "QueryPanel":
        return QueryPanel(self.dates, list(self.queries), {
            k: LevelData(list(v.codes), v.values.copy(), v.active.copy()) for k, v in self.levels.items()
        })


def aggregate_levels(state_values: np.ndarray, region_table=None) -> tuple[np.ndarray, np.ndarray]:
    """Region and nation arrays as sums of member-state arrays."""
    table = geo_mod.STATE_TO_REGION if region_table is None else region_table
    members = geo_mod.region_members(table)
    pos = {s: i for i, s in enumerate(geo_mod.STATES)}
    regions = np.stack([state_values[[pos[s] for s in members[r]]].sum(axis=0) for r in geo_mod.REGIONS])
    return regions, state_values.sum(axis=0, keepdims=True)


def query_panel_from_states(dates, queries, state_values, region_table=None) -> QueryPanel:
    regions, nation = aggregate_levels(state_values, region_table)
    def level(codes, values):
        return LevelData(list(codes), values, np.ones(values.shape[:2], bool))

    return QueryPanel(pd.DatetimeIndex(dates), list(queries), {
        "state": level(geo_mod.STATES, state_values),
        "region": level(geo_mod.REGIONS, regions),
        "nation": level([geo_mod.NATION], nation),
    })


def load_query_panel(path, region_table=None) -> QueryPanel:
    """Read the long-format ``date,geo,query,value`` file.

    Absent cells are zero (the below-threshold convention of search-trend data);
    regional and national series are sums over member states.
    """
    df = _read_csv(path, QUERY_COLUMNS)
    if df.empty:
        raise ParseError(f"{path}: no data rows")
    dates = _parse_dates(df, path)
    values = _parse_numeric(df, "value", path)
    neg = np.flatnonzero(values < 0)
    if neg.size:
        raise ValueError(f"{path} line {int(neg[0]) + 2}: negative query value {values[neg[0]]}")
    geos = _stripped(df["geo"])
    unknown = sorted(set(geos) - set(geo_mod.STATES))
    if unknown:
        raise NotAState(f"{path}: unknown state codes {unknown}")
    query_col = _stripped(df["query"])
    queries = sorted(query_col.unique())
    frame = pd.DataFrame({"date": dates, "geo": geos, "query": query_col, "value": values})
    if frame.duplicated(["date", "geo", "query"]).any():
        row = int(np.flatnonzero(frame.duplicated(["date", "geo", "query"]).to_numpy())[0])
        raise ParseError(f"{path}: duplicate (date, geo, query) cell", line=row + 2)
    full_dates = pd.date_range(dates.min(), dates.max(), freq="D")
    g_idx = pd.Index(geo_mod.STATES).get_indexer(frame["geo"])
    q_idx = pd.Index(queries).get_indexer(frame["query"])
    d_idx = full_dates.get_indexer(frame["date"])
    state_values = np.zeros((len(geo_mod.STATES), len(queries), len(full_dates)))
    state_values[g_idx, q_idx, d_idx] = frame["value"].to_numpy()
    return query_panel_from_states(full_dates, queries, state_values, region_table)


def persistence_forecast(panel: SurveillancePanel, code: str, week) -> np.ndarray:
    """Naive baseline: this week's total deaths repeated for the next four weeks."""
    end = pd.Timestamp(week.week_end_date if hasattr(week, "week_end_date") else week)
    start = end - pd.Timedelta(days=6)
    if start < panel.dates[0] or end > panel.dates[-1]:
        raise IncompleteWeek(f"week ending {end.date()} is not fully observed")
    i0 = panel.dates.get_loc(start)
    v = float(panel.deaths[panel.index(code), i0:i0 + 7].sum())
    return np.full(4, v)


def write_surveillance_csv(path, panel_cum: dict[str, pd.DataFrame]):
    """Write cumulative per-state frames (columns cases, deaths) in the state schema."""
    rows = []
    for code in sorted(panel_cum):
        f = panel_cum[code]
        rows.append(pd.DataFrame({
            "date": f.index.strftime("%Y-%m-%d"),
            "state": code,
            "cases": f["cases"].astype(np.int64).to_numpy(),
            "deaths": f["deaths"].astype(np.int64).to_numpy(),
        }))
    pd.concat(rows).sort_values(["date", "state"], kind="stable").to_csv(path, index=False)


def as_date(d) -> dt.date:
    return geo_mod._as_date(d)
