"""Per-query lead-lag estimation and correlation screening against deaths."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import InsufficientHistory, SingularDesign
from .solver import ols_fit

DEFAULT_LAG_RANGE = (4, 35)
DEFAULT_THRESHOLD = 0.5
DEFAULT_WINDOW = ("2020-04-01", "2020-06-30")
LAG_TABLE_COLUMNS = ["query", "optimal_lag", "pearson_r", "selected"]


class LagResult(NamedTuple):
    lag: int
    mse: float
    degenerate: bool


def _window_positions(index: pd.DatetimeIndex, window, max_lag: int) -> np.ndarray:
    start, end = (pd.Timestamp(w) for w in window)
    pos = np.flatnonzero((index >= start) & (index <= end))
    if pos.size <= 2:
        raise InsufficientHistory(f"selection window {window} holds {pos.size} days; need more than 2")
    if pos[0] - max_lag < 0 or len(pos) != (end - start).days + 1:
        raise InsufficientHistory(
            f"series must cover {window} and {max_lag} days before it")
    return pos


def _aligned(deaths: pd.Series, query: pd.Series):
    q = query.reindex(deaths.index)
    if q.isna().any():
        raise InsufficientHistory("query series does not cover the death series dates")
    return deaths.to_numpy(dtype=float), q.to_numpy(dtype=float)


def optimal_lag(deaths: pd.Series, query: pd.Series, window=DEFAULT_WINDOW,
                lag_range=DEFAULT_LAG_RANGE) -> LagResult:
    """Lag L minimizing the in-sample MSE of ``deaths[t] ~ a + b * query[t - L]``.

    Ties go to the smallest lag. A query that is constant over the window at
    some lag contributes ``var(deaths)`` for that lag; if it is constant at every
    lag the result is flagged degenerate.
    """
    lo, hi = int(lag_range[0]), int(lag_range[1])
    if lo > hi:
        raise ValueError("empty lag range")
    y_all, x_all = _aligned(deaths, query)
    pos = _window_positions(deaths.index, window, hi)
    y = y_all[pos]
    var_y = float(np.mean((y - y.mean()) ** 2))
    best = None
    degenerate_all = True
    for lag in range(lo, hi + 1):
        x = x_all[pos - lag]
        try:
            fit = ols_fit(x[:, None], y)
            resid = y - fit.intercept - x * fit.coef[0]
            mse = float(np.mean(resid ** 2))
            degenerate_all = False
        except SingularDesign:
            mse = var_y
        if best is None or mse < best[1]:
            best = (lag, mse)
    return LagResult(best[0], best[1], degenerate_all)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt((da @ da) * (db @ db))
    if denom == 0.0:
        return 0.0
    return float(np.clip((da @ db) / denom, -1.0, 1.0))


@dataclass
class LagTable:
    """Optimal lags and correlation scores; rows sorted by descending correlation."""

    table: pd.DataFrame
    window: tuple = DEFAULT_WINDOW
    lag_range: tuple = DEFAULT_LAG_RANGE
    threshold: float = DEFAULT_THRESHOLD
    flags: dict = field(default_factory=dict)

    @property
    def selected(self) -> list[str]:
        return self.table.loc[self.table["selected"], "query"].tolist()

    @property
    def lags(self) -> dict[str, int]:
        return dict(zip(self.table["query"], self.table["optimal_lag"].astype(int)))

    def selected_lags(self) -> np.ndarray:
        lags = self.lags
        return np.array([lags[q] for q in self.selected], dtype=np.int64)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LAG_TABLE_COLUMNS)
            for row in self.table.itertuples(index=False):
                w.writerow([row.query, int(row.optimal_lag), repr(float(row.pearson_r)),
                            "true" if row.selected else "false"])

    @classmethod
    def from_csv(cls, path, **meta) -> "LagTable":
        df = pd.read_csv(path, dtype={"query": str}, keep_default_na=False)
        if list(df.columns) != LAG_TABLE_COLUMNS:
            raise ValueError(f"lag table header must be {LAG_TABLE_COLUMNS}")
        df["selected"] = df["selected"].astype(str).str.lower().map({"true": True, "false": False})
        if df["selected"].isna().any():
            raise ValueError("selected column must be true/false")
        df["optimal_lag"] = df["optimal_lag"].astype(int)
        df["pearson_r"] = df["pearson_r"].astype(float)
        return cls(df, **meta)


def score_and_select(deaths: pd.Series, queries: pd.DataFrame, window=DEFAULT_WINDOW,
                     threshold: float = DEFAULT_THRESHOLD, lag_range=DEFAULT_LAG_RANGE) -> LagTable:
    """Optimal lag and lagged Pearson correlation for every query column.

    A query is selected when its correlation strictly exceeds ``threshold``.
    Zero-variance series score r = 0.
    """
    rows = []
    flags = {}
    y_all = deaths.to_numpy(dtype=float)
    pos = _window_positions(deaths.index, window, int(lag_range[1]))
    for name in queries.columns:
        res = optimal_lag(deaths, queries[name], window, lag_range)
        if res.degenerate:
            flags[str(name)] = "DegenerateRegressor"
        x_all = queries[name].reindex(deaths.index).to_numpy(dtype=float)
        r = _pearson(y_all[pos], x_all[pos - res.lag])
        rows.append((str(name), res.lag, r, r > threshold))
    table = pd.DataFrame(rows, columns=LAG_TABLE_COLUMNS)
    table = table.sort_values(["pearson_r", "query"], ascending=[False, True], kind="mergesort")
    table = table.reset_index(drop=True)
    return LagTable(table, tuple(str(pd.Timestamp(w).date()) for w in window),
                    tuple(int(v) for v in lag_range), float(threshold), flags)


class LagSelector(TransformerMixin, BaseEstimator):
    """Choose each query's lead lag and keep the strongly correlated ones.

    ``fit(X, y)`` takes a date-indexed frame of query columns and the daily
    death series; ``transform`` returns the selected queries shifted forward
    by their optimal lags.
    """

    def __init__(self, window=DEFAULT_WINDOW, threshold=DEFAULT_THRESHOLD, lag_range=DEFAULT_LAG_RANGE):
        self.window = window
        self.threshold = threshold
        self.lag_range = lag_range

    def fit(self, X: pd.DataFrame, y: pd.Series):
        self.lag_table_ = score_and_select(y, X, self.window, self.threshold, self.lag_range)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X: pd.DataFrame) -> pd.DataFrame:
        lags = self.lag_table_.lags
        return pd.DataFrame({q: X[q].shift(lags[q]) for q in self.lag_table_.selected}, index=X.index)

    def get_feature_names_out(self, input_features=None):
        return np.asarray(self.lag_table_.selected, dtype=object)
