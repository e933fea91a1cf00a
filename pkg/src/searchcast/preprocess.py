"""Denoising of search-frequency panels.

Order of operations in :func:`preprocess_panel`: prune low-volume queries,
run the quantile spike filter on every series of every level, then blend
each state's series with its region's.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd
from numba import njit
from sklearn.base import BaseEstimator, TransformerMixin

from . import geo as geo_mod
from .exceptions import EmptyPanel, SeriesTooShort
from .ingest import QueryPanel

STATE_WEIGHT = 2.0 / 3.0


@dataclass(frozen=True)
class IqrConfig:
    upper_quantile: float = 0.999
    lower_quantile: float = 0.01
    sigma_mult: float = 3.0
    rolling_window_days: int = 7
    replacement_window_days: int = 3

    def __post_init__(self):
        if not 0 < self.lower_quantile < self.upper_quantile < 1:
            raise ValueError("need 0 < lower_quantile < upper_quantile < 1")
        if self.sigma_mult <= 0:
            raise ValueError("sigma_mult must be positive")
        if self.rolling_window_days < 1 or self.replacement_window_days < 1:
            raise ValueError("windows must be at least one day")

    def to_dict(self):
        return asdict(self)


def prune_low_volume(panel: QueryPanel) -> QueryPanel:
    """Zero out, geo by geo, queries whose mean frequency is strictly below the median mean."""
    if not panel.queries or len(panel.dates) == 0:
        raise EmptyPanel("query panel has no queries")
    out = panel.copy()
    for lvl in out.levels.values():
        for g in range(len(lvl.codes)):
            idx = np.flatnonzero(lvl.active[g])
            if idx.size == 0:
                continue
            means = lvl.values[g, idx, :].mean(axis=1)
            drop = idx[means < np.median(means)]
            lvl.active[g, drop] = False
            lvl.values[g, drop, :] = 0.0
    return out


@njit(cache=True)
def _iqr_pass(x, q_hi, q_lo, sigma_mult, roll, repl):
    n = x.shape[0]
    out = x.copy()
    flags = np.zeros(n, np.int8)
    for t in range(repl, n):
        v = x[t]
        replace = False
        if v < q_lo:
            replace = True
            flags[t] = -1
        elif v > q_hi:
            w0 = max(0, t - roll)
            m = t - w0
            s = 0.0
            for i in range(w0, t):
                s += out[i]
            mean = s / m
            sd = 0.0
            if m > 1:
                ss = 0.0
                for i in range(w0, t):
                    ss += (out[i] - mean) ** 2
                sd = np.sqrt(ss / (m - 1))
            if v > mean + sigma_mult * sd:
                replace = True
                flags[t] = 1
        if replace:
            s = 0.0
            for i in range(t - repl, t):
                s += out[i]
            out[t] = s / repl
    return out, flags


def iqr_filter(series, cfg: IqrConfig = IqrConfig(), return_flags: bool = False):
    """Overwrite spikes and dropouts with the trailing three-day mean.

    Quantile thresholds (linear interpolation between order statistics) are
    computed once on the input. A day is a large outlier if it exceeds the
    upper quantile and also the trailing-week mean by ``sigma_mult`` trailing
    standard deviations (ddof=1, on already-cleaned values); a small outlier
    if it is below the lower quantile. The first ``replacement_window_days``
    days are never modified.
    """
    values = np.asarray(series, dtype=float)
    if values.ndim != 1:
        raise ValueError("iqr_filter expects a 1-d series")
    if values.size <= cfg.replacement_window_days:
        raise SeriesTooShort(f"series of length {values.size} is too short to filter")
    q_hi, q_lo = np.quantile(values, [cfg.upper_quantile, cfg.lower_quantile])
    out, flags = _iqr_pass(values, float(q_hi), float(q_lo), float(cfg.sigma_mult),
                           int(cfg.rolling_window_days), int(cfg.replacement_window_days))
    if isinstance(series, pd.Series):
        out = pd.Series(out, index=series.index, name=series.name)
    return (out, flags) if return_flags else out


def filter_panel(panel: QueryPanel, cfg: IqrConfig = IqrConfig()) -> QueryPanel:
    out = panel.copy()
    for lvl in out.levels.values():
        for g, q in zip(*np.nonzero(lvl.active)):
            lvl.values[g, q] = iqr_filter(lvl.values[g, q], cfg)
    return out


def enrich_states(panel: QueryPanel, region_table=None) -> QueryPanel:
    """State series <- 2/3 state + 1/3 region, datewise; other levels unchanged.

    Pruned cells count as zero, so a state that lost a query inherits a third
    of its region's series.
    """
    table = geo_mod.STATE_TO_REGION if region_table is None else region_table
    out = panel.copy()
    states = out.levels["state"]
    regions = panel.levels["region"]
    rpos = {r: i for i, r in enumerate(regions.codes)}
    ridx = np.array([rpos[table[s]] for s in states.codes])
    s_vals = states.values * states.active[:, :, None]
    r_vals = (regions.values * regions.active[:, :, None])[ridx]
    states.values = STATE_WEIGHT * s_vals + (1.0 - STATE_WEIGHT) * r_vals
    states.active = states.active | regions.active[ridx]
    return out


def preprocess_panel(panel: QueryPanel, cfg: IqrConfig = IqrConfig(), region_table=None) -> QueryPanel:
    return enrich_states(filter_panel(prune_low_volume(panel), cfg), region_table)


class IQRFilter(TransformerMixin, BaseEstimator):
    """Column-wise spike filter for day-indexed 2-d data (rows are days)."""

    def __init__(self, upper_quantile=0.999, lower_quantile=0.01, sigma_mult=3.0,
                 rolling_window_days=7, replacement_window_days=3):
        self.upper_quantile = upper_quantile
        self.lower_quantile = lower_quantile
        self.sigma_mult = sigma_mult
        self.rolling_window_days = rolling_window_days
        self.replacement_window_days = replacement_window_days

    def _cfg(self):
        return IqrConfig(self.upper_quantile, self.lower_quantile, self.sigma_mult,
                         self.rolling_window_days, self.replacement_window_days)

    def fit(self, X, y=None):
        arr = np.asarray(X, dtype=float)
        arr = arr[:, None] if arr.ndim == 1 else arr
        self.n_features_in_ = arr.shape[1]
        return self

    def transform(self, X):
        cfg = self._cfg()
        if isinstance(X, pd.DataFrame):
            return X.apply(lambda col: iqr_filter(col, cfg))
        arr = np.asarray(X, dtype=float)
        if arr.ndim == 1:
            return iqr_filter(arr, cfg)
        return np.column_stack([iqr_filter(arr[:, j], cfg) for j in range(arr.shape[1])])
