"""Daily L1-penalized autoregression with search-frequency regressors.

One model is fit per (geo, anchor day T, horizon l). Rows are the days
t = T-M-l+1 .. T-l with target deaths[t+l] and regressors

* deaths[t-i] for i = 0..I (death lags),
* cases[t+l-j] for j in {max(o, l) : o in case offsets} (duplicates dropped),
* query_k[t+l-max(O_k, l)] for each selected query k,
* Monday..Saturday indicators of the target day.

Coefficients fitted at anchors T, T-1, .. are averaged before predicting from
the day-T feature row; weekly values are sums of seven consecutive daily ones.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator

from . import _argo_kernels as AK
from . import geo as geo_mod
from .exceptions import InsufficientHistory, InvalidInput
from .solver import DEFAULT_MAX_SWEEPS, DEFAULT_TOL, MIN_CV_ROWS, holdout_rows

MODES = ("full", "gt_only", "ar_only")
WEEKDAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat")
TRACE_COLUMNS = ["anchor_date", "geo", "horizon_days", "feature", "coefficient"]


@dataclass(frozen=True)
class ArgoConfig:
    training_days: int = 56
    death_lags: int = 6
    case_offsets: tuple = (7, 14, 21, 28)
    horizon_days: int = 28
    smoothing_days: int = 3
    mode: str = "full"
    cv_grid_size: int = 100
    cv_holdout_fraction: float = 0.25

    def __post_init__(self):
        if self.training_days < 28:
            raise ValueError("training_days must be at least 28")
        if self.training_days < MIN_CV_ROWS:
            raise ValueError(f"training_days must be at least {MIN_CV_ROWS} for cross-validation")
        if self.death_lags < 0:
            raise ValueError("death_lags must be non-negative")
        if self.horizon_days < 1:
            raise ValueError("horizon_days must be at least 1")
        if self.smoothing_days < 1:
            raise ValueError("smoothing_days must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if any(int(o) < 1 for o in self.case_offsets):
            raise ValueError("case offsets must be positive")
        object.__setattr__(self, "case_offsets", tuple(int(o) for o in self.case_offsets))

    def with_mode(self, mode: str) -> "ArgoConfig":
        d = asdict(self)
        d["mode"] = mode
        return ArgoConfig(**d)

    @property
    def use_ar(self) -> bool:
        return self.mode != "gt_only"

    @property
    def use_gt(self) -> bool:
        return self.mode != "ar_only"

    @property
    def n_lags(self) -> int:
        return self.death_lags + 1

    def to_dict(self):
        d = asdict(self)
        d["case_offsets"] = list(self.case_offsets)
        return d


def case_offsets_for(horizon: int, offsets) -> list[int]:
    """Case offsets used at a horizon: max(o, horizon), duplicates removed in order."""
    out = []
    for o in offsets:
        v = max(int(o), int(horizon))
        if v not in out:
            out.append(v)
    return out


def n_columns(cfg: ArgoConfig, horizon: int, n_queries: int) -> int:
    p = 6
    if cfg.use_ar:
        p += cfg.n_lags + len(case_offsets_for(horizon, cfg.case_offsets))
    if cfg.use_gt:
        p += n_queries
    return p


@dataclass
class ArgoInputs:
    """Day-aligned arrays for one geographic level.

    ``queries`` is zero wherever the query panel has no data; ``query_span``
    records the day indices that the panel actually covers.
    """

    dates: pd.DatetimeIndex
    codes: list[str]
    deaths: np.ndarray
    cases: np.ndarray
    queries: np.ndarray
    query_names: list[str]
    query_lags: np.ndarray
    query_span: tuple = (0, -1)
    _pos: dict = field(init=False, repr=False)

    def __post_init__(self):
        G, D = len(self.codes), len(self.dates)
        self.deaths = np.ascontiguousarray(self.deaths, dtype=float).reshape(G, D)
        self.cases = np.ascontiguousarray(self.cases, dtype=float).reshape(G, D)
        K = len(self.query_names)
        self.queries = np.ascontiguousarray(self.queries, dtype=float).reshape(G, K, D)
        self.query_lags = np.asarray(self.query_lags, dtype=np.int64).reshape(K)
        for name, arr in (("deaths", self.deaths), ("cases", self.cases), ("queries", self.queries)):
            if not np.all(np.isfinite(arr)):
                raise InvalidInput(f"{name} contain NaN or infinite values")
        if self.query_span == (0, -1):
            self.query_span = (0, D - 1)
        self._pos = {c: i for i, c in enumerate(self.codes)}

    @classmethod
    def from_panels(cls, surveillance, query_panel, lag_table, codes) -> "ArgoInputs":
        """Slice the surveillance feed and preprocessed query panel for ``codes``."""
        codes = [str(c) for c in codes]
        levels = {geo_mod.geo(c).level for c in codes}
        if len(levels) != 1:
            raise ValueError("all codes must belong to one geographic level")
        level = levels.pop()
        names = lag_table.selected
        lags = lag_table.selected_lags()
        rows = [surveillance.index(c) for c in codes]
        dates = surveillance.dates
        if query_panel is None or not names:
            q = np.zeros((len(codes), len(names), len(dates)))
            span = (0, len(dates) - 1)
        else:
            lvl_codes = query_panel.levels[level].codes
            block = query_panel.block(level, names, dates)
            q = block[[lvl_codes.index(c) for c in codes]]
            first = dates.get_indexer([query_panel.dates[0]])[0]
            last = dates.get_indexer([query_panel.dates[-1]])[0]
            first = 0 if query_panel.dates[0] <= dates[0] else first
            last = len(dates) - 1 if query_panel.dates[-1] >= dates[-1] else last
            if first < 0 or last < 0:
                raise InsufficientHistory("query panel does not overlap the surveillance dates")
            span = (int(first), int(last))
        return cls(dates, codes, surveillance.deaths[rows], surveillance.cases[rows],
                   q, list(names), lags, span)

    def index(self, code) -> int:
        try:
            return self._pos[str(code)]
        except KeyError:
            raise InvalidInput(f"{code!r} is not part of these inputs") from None

    def day(self, date) -> int:
        ts = pd.Timestamp(date)
        pos = self.dates.get_indexer([ts])[0]
        if pos < 0:
            raise InsufficientHistory(f"{ts.date()} is outside the observed dates")
        return int(pos)

    @property
    def weekday0(self) -> int:
        return int(self.dates[0].weekday())

    def earliest_anchor(self, horizon: int, cfg: ArgoConfig) -> int:
        """Smallest anchor day index with complete history at ``horizon``."""
        M, l = cfg.training_days, int(horizon)
        need = M + l - 1
        if cfg.use_ar:
            need = max(need, M + l - 1 + cfg.death_lags,
                       M - 1 + max(max(cfg.case_offsets), l))
        if cfg.use_gt and len(self.query_names):
            need = max(need, self.query_span[0] + M - 1 + max(int(self.query_lags.max()), l))
        return need

    def latest_anchor(self, cfg: ArgoConfig) -> int:
        last = len(self.dates) - 1
        if cfg.use_gt and len(self.query_names):
            last = min(last, self.query_span[1])
        return last

    def has_history(self, T: int, horizon: int, cfg: ArgoConfig) -> bool:
        return self.earliest_anchor(horizon, cfg) <= T <= self.latest_anchor(cfg)


def feature_names(cfg: ArgoConfig, query_names, horizon: int | None = None) -> list[str]:
    """Names of the padded coefficient layout (per-horizon names for case slots)."""
    names = [f"deaths_lag_{i}" for i in range(cfg.n_lags)]
    for o in cfg.case_offsets:
        names.append(f"cases_lag_{max(o, horizon) if horizon else o}")
    names += [f"query:{q}" for q in query_names]
    names += [f"weekday_{d}" for d in WEEKDAY_NAMES]
    return names


def active_slots(cfg: ArgoConfig, n_queries: int, horizon: int) -> np.ndarray:
    return AK.slot_mask(cfg.n_lags, np.asarray(cfg.case_offsets, dtype=np.int64), n_queries,
                        int(horizon), cfg.use_ar, cfg.use_gt)


def build_design(inputs: ArgoInputs, geo, T, horizon: int, cfg: ArgoConfig = ArgoConfig()):
    """Training design for one model.

    Returns ``(X, y, row, columns)``: the (M, p) design, its targets, the
    feature row of anchor day ``T`` and the column names.
    """
    g = inputs.index(geo)
    T = inputs.day(T) if not isinstance(T, (int, np.integer)) else int(T)
    if not inputs.has_history(T, horizon, cfg):
        raise InsufficientHistory(
            f"{geo}: anchor {inputs.dates[min(T, len(inputs.dates) - 1)].date()} horizon {horizon} "
            f"needs history from day index {inputs.earliest_anchor(horizon, cfg)}")
    X, y, row, idx = AK.design_block(
        inputs.deaths, inputs.cases, inputs.queries, inputs.query_lags, inputs.weekday0,
        g, T, int(horizon), cfg.use_ar, cfg.use_gt, cfg.training_days, cfg.n_lags,
        np.asarray(cfg.case_offsets, dtype=np.int64))
    names = feature_names(cfg, inputs.query_names, horizon)
    return X, y, row, [names[i] for i in idx]


@dataclass
class ArgoBlock:
    """Smoothed daily forecasts for several geos and anchors.

    ``daily`` has shape (geos, anchors, horizon_days); ``coef`` adds the padded
    coefficient axis. Entries without history are NaN.
    """

    codes: list[str]
    anchors: pd.DatetimeIndex
    cfg: ArgoConfig
    query_names: list[str]
    daily: np.ndarray
    intercept: np.ndarray
    coef: np.ndarray
    penalty: np.ndarray

    def weekly(self) -> np.ndarray:
        return weekly_aggregate(self.daily)

    def forecast(self, geo, anchor) -> "DailyForecast":
        g = self.codes.index(str(geo))
        a = self.anchors.get_loc(pd.Timestamp(anchor))
        return DailyForecast(str(geo), self.anchors[a].date(), self.daily[g, a].copy(),
                             self.intercept[g, a].copy(), self.coef[g, a].copy(),
                             feature_names(self.cfg, self.query_names))


@dataclass
class DailyForecast:
    geo: str
    anchor: object
    values: np.ndarray
    intercepts: np.ndarray
    coefficients: np.ndarray
    features: list[str]

    def weekly(self) -> np.ndarray:
        return weekly_aggregate(self.values)


def _solver_args(cfg: ArgoConfig):
    return (cfg.cv_grid_size, holdout_rows(cfg.training_days, cfg.cv_holdout_fraction),
            DEFAULT_TOL, DEFAULT_MAX_SWEEPS)


def forecast_block(inputs: ArgoInputs, anchors, cfg: ArgoConfig = ArgoConfig(), codes=None) -> ArgoBlock:
    """Fit and smooth all horizon models for every (geo, anchor) pair.

    Smoothing averages the intercepts and coefficient vectors fitted at the
    anchor and the preceding ``smoothing_days - 1`` days that have complete
    history; the prediction uses the anchor's own feature row.
    """
    codes = list(inputs.codes) if codes is None else [str(c) for c in codes]
    anchor_idx = [inputs.day(a) if not isinstance(a, (int, np.integer)) else int(a) for a in anchors]
    L = cfg.horizon_days
    K = len(inputs.query_names)
    P = cfg.n_lags + len(cfg.case_offsets) + K + 6
    G, A = len(codes), len(anchor_idx)
    daily = np.full((G, A, L), np.nan)
    intercept = np.full((G, A, L), np.nan)
    coef = np.full((G, A, L, P), np.nan)
    penalty = np.full((G, A, L), np.nan)
    offsets = np.asarray(cfg.case_offsets, dtype=np.int64)
    gidx = [inputs.index(c) for c in codes]
    earliest = [inputs.earliest_anchor(l, cfg) for l in range(1, L + 1)]
    latest = inputs.latest_anchor(cfg)
    for a, T in enumerate(anchor_idx):
        if T > latest or T < earliest[0]:
            raise InsufficientHistory(f"anchor {inputs.dates[min(T, len(inputs.dates) - 1)].date()} "
                                      "lacks the history needed for forecasting")
        tasks = []  # (slot in output, g, day, l)
        for gi, g in enumerate(gidx):
            for l in range(1, L + 1):
                if T < earliest[l - 1]:
                    raise InsufficientHistory(f"anchor {inputs.dates[T].date()} lacks history at horizon {l}")
                for s in range(cfg.smoothing_days):
                    if T - s >= earliest[l - 1]:
                        tasks.append((gi, g, T - s, l, s))
        arr = np.asarray(tasks, dtype=np.int64)
        lam, icpt, cf, rows = AK.fit_tasks(
            inputs.deaths, inputs.cases, inputs.queries, inputs.query_lags, inputs.weekday0,
            arr[:, 1].copy(), arr[:, 2].copy(), arr[:, 3].copy(), cfg.use_ar, cfg.use_gt,
            cfg.training_days, cfg.n_lags, offsets, *_solver_args(cfg))
        # tasks of one (geo, horizon) are contiguous, the anchor itself first
        first = np.flatnonzero(arr[:, 4] == 0)
        counts = np.diff(np.append(first, len(arr)))
        pred, i_avg, c_avg = AK.smooth_groups(first, counts, icpt, cf, rows)
        gi, li = arr[first, 0], arr[first, 3] - 1
        daily[gi, a, li] = pred
        intercept[gi, a, li] = i_avg
        coef[gi, a, li] = c_avg
        penalty[gi, a, li] = lam[first]
    return ArgoBlock(codes, pd.DatetimeIndex([inputs.dates[T] for T in anchor_idx]), cfg,
                     list(inputs.query_names), daily, intercept, coef, penalty)


def fit_and_predict_day(inputs: ArgoInputs, geo, T, horizon: int, cfg: ArgoConfig = ArgoConfig()):
    """Smoothed prediction of deaths on day T+horizon.

    Returns ``(prediction, intercept, coefficients)`` with coefficients in
    the padded layout of :func:`feature_names`.
    """
    g = inputs.index(geo)
    T = inputs.day(T) if not isinstance(T, (int, np.integer)) else int(T)
    l = int(horizon)
    if not inputs.has_history(T, l, cfg):
        raise InsufficientHistory(f"{geo}: no complete history for anchor index {T} at horizon {l}")
    days = [T - s for s in range(cfg.smoothing_days) if inputs.has_history(T - s, l, cfg)]
    n = len(days)
    lam, icpt, cf, rows = AK.fit_tasks(
        inputs.deaths, inputs.cases, inputs.queries, inputs.query_lags, inputs.weekday0,
        np.full(n, g, np.int64), np.asarray(days, np.int64), np.full(n, l, np.int64),
        cfg.use_ar, cfg.use_gt, cfg.training_days, cfg.n_lags,
        np.asarray(cfg.case_offsets, dtype=np.int64), *_solver_args(cfg))
    c_avg = cf.mean(axis=0)
    i_avg = float(icpt.mean())
    return i_avg + float(rows[0] @ c_avg), i_avg, c_avg


def weekly_aggregate(daily) -> np.ndarray:
    """Sum days 1-7, 8-14, ... along the last axis (no clamping)."""
    if isinstance(daily, DailyForecast):
        daily = daily.values
    arr = np.asarray(daily, dtype=float)
    L = arr.shape[-1]
    if L % 7:
        raise ValueError("daily horizon must be a whole number of weeks")
    return arr.reshape(arr.shape[:-1] + (L // 7, 7)).sum(axis=-1)


def trace_rows(block: ArgoBlock, codes=None):
    """Rows of the coefficient trace; only columns present at each horizon are kept."""
    codes = block.codes if codes is None else [str(c) for c in codes]
    K = len(block.query_names)
    for a, anchor in enumerate(block.anchors):
        day = anchor.strftime("%Y-%m-%d")
        for code in codes:
            g = block.codes.index(code)
            for l in range(1, block.cfg.horizon_days + 1):
                if np.isnan(block.daily[g, a, l - 1]):
                    continue
                names = feature_names(block.cfg, block.query_names, l)
                for s in np.flatnonzero(active_slots(block.cfg, K, l)):
                    yield [day, code, l, names[s], repr(float(block.coef[g, a, l - 1, s]))]


def write_coefficient_trace(path, blocks, codes=None):
    """Write ``anchor_date,geo,horizon_days,feature,coefficient`` for one or more blocks."""
    if isinstance(blocks, ArgoBlock):
        blocks = [(blocks, codes)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for block, sub in blocks:
            w.writerows(trace_rows(block, sub))


class ArgoForecaster(BaseEstimator):
    """Per-geo daily forecaster for one anchor day.

    ``fit(inputs, geo, anchor)`` runs the smoothed horizon models;
    ``predict()`` returns the daily path and ``predict_weekly()`` its weekly sums.
    """

    def __init__(self, mode="full", training_days=56, death_lags=6, case_offsets=(7, 14, 21, 28),
                 horizon_days=28, smoothing_days=3, cv_grid_size=100, cv_holdout_fraction=0.25):
        self.mode = mode
        self.training_days = training_days
        self.death_lags = death_lags
        self.case_offsets = case_offsets
        self.horizon_days = horizon_days
        self.smoothing_days = smoothing_days
        self.cv_grid_size = cv_grid_size
        self.cv_holdout_fraction = cv_holdout_fraction

    def config(self) -> ArgoConfig:
        return ArgoConfig(**self.get_params())

    def fit(self, inputs: ArgoInputs, geo, anchor):
        cfg = self.config()
        block = forecast_block(inputs, [anchor], cfg, codes=[geo])
        self.daily_ = block.daily[0, 0]
        self.intercepts_ = block.intercept[0, 0]
        self.coef_ = block.coef[0, 0]
        self.penalty_ = block.penalty[0, 0]
        self.feature_names_ = feature_names(cfg, inputs.query_names)
        return self

    def predict(self) -> np.ndarray:
        return self.daily_.copy()

    def predict_weekly(self) -> np.ndarray:
        return weekly_aggregate(self.daily_)
