"""Point-forecast scoring against the truth feed and report files."""
from __future__ import annotations

import math
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd

from . import geo as geo_mod
from .ensemble import CONSTITUENTS, MethodId
from .exceptions import EmptyEvaluation, IoError, ParseError

FORECAST_COLUMNS = ["forecast_date", "target_week_end", "horizon_weeks", "geo", "method",
                    "point", "lo95", "hi95", "selected_method"]
SCORE_COLUMNS = ["geo", "method", "horizon_weeks", "rmse", "mae", "pearson_r", "n_weeks", "dropped"]
SUMMARY_COLUMNS = ["method", "horizon_weeks", "rmse", "mae", "pearson_r", "n_geos"]
SELECTION_COLUMNS = ["horizon_weeks", "method", "count", "share"]
COVERAGE_COLUMNS = ["method", "horizon_weeks", "n_intervals", "n_covered", "coverage"]
REPORT_FILES = ("forecasts.csv", "scores_by_state.csv", "scores_summary.csv",
                "ensemble_selection.csv", "coverage.csv")
FLOAT_FORMAT = "%.10g"


class Score(NamedTuple):
    rmse: float
    mae: float
    pearson_r: float | None
    n: int


def score(predictions, truth) -> Score:
    """RMSE, MAE and Pearson r of aligned vectors; r is None if either is constant."""
    p = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(truth, dtype=float).ravel()
    if p.shape != y.shape:
        raise ValueError("predictions and truth must be aligned")
    if p.size == 0:
        raise EmptyEvaluation("nothing to score")
    e = p - y
    rmse = math.sqrt(float(np.mean(e * e)))
    mae = float(np.mean(np.abs(e)))
    dp, dy = p - p.mean(), y - y.mean()
    den = math.sqrt(float(dp @ dp) * float(dy @ dy))
    r = None if den == 0.0 else float(np.clip((dp @ dy) / den, -1.0, 1.0))
    return Score(rmse, mae, r, int(p.size))


def truth_lookup(forecasts: pd.DataFrame, truth_weekly: pd.DataFrame) -> np.ndarray:
    keys = pd.MultiIndex.from_arrays([pd.DatetimeIndex(forecasts["target_week_end"]), forecasts["geo"]])
    return truth_weekly.stack().reindex(keys).to_numpy(dtype=float)


def score_forecasts(forecasts: pd.DataFrame, truth_weekly: pd.DataFrame,
                    common_support: bool = True) -> pd.DataFrame:
    """Scores per (geo, method, horizon) against weekly truth indexed by week-end date.

    Records whose target week has no truth are dropped. With
    ``common_support`` every method of a (geo, horizon) is scored on the
    target weeks that all of them cover; ``dropped`` counts the records of
    a method left out for either reason.
    """
    if forecasts.empty:
        raise EmptyEvaluation("forecast set is empty")
    df = forecasts[["geo", "method", "horizon_weeks", "target_week_end", "point"]].copy()
    df["target_week_end"] = pd.DatetimeIndex(df["target_week_end"])
    df["truth"] = truth_lookup(df, truth_weekly)
    df["ok"] = np.isfinite(df["truth"].to_numpy()) & np.isfinite(df["point"].to_numpy(float))
    rows = []
    for (geo, h), g in df.groupby(["geo", "horizon_weeks"], sort=True):
        if common_support:
            weeks = None
            for _, gm in g.groupby("method", sort=False):
                w = set(gm.loc[gm["ok"], "target_week_end"])
                weeks = w if weeks is None else weeks & w
            use = g["ok"] & g["target_week_end"].isin(weeks)
        else:
            use = g["ok"]
        for method, gm in g.groupby("method", sort=True):
            keep = use.loc[gm.index]
            n_drop = int(len(gm) - keep.sum())
            sel = gm[keep]
            if sel.empty:
                rows.append((geo, method, int(h), np.nan, np.nan, np.nan, 0, n_drop))
                continue
            s = score(sel["point"].to_numpy(float), sel["truth"].to_numpy())
            rows.append((geo, method, int(h), s.rmse, s.mae,
                         np.nan if s.pearson_r is None else s.pearson_r, s.n, n_drop))
    out = pd.DataFrame(rows, columns=SCORE_COLUMNS)
    if (out["n_weeks"] == 0).all():
        raise EmptyEvaluation("no forecast target week has truth")
    return out


def summarize(scores: pd.DataFrame, geos=None) -> pd.DataFrame:
    """Mean of each metric over geos (states by default) per method and horizon."""
    geos = set(geo_mod.STATES) if geos is None else set(geos)
    s = scores[scores["geo"].isin(geos) & (scores["n_weeks"] > 0)]
    out = (s.groupby(["method", "horizon_weeks"], sort=True)
           .agg(rmse=("rmse", "mean"), mae=("mae", "mean"), pearson_r=("pearson_r", "mean"),
                n_geos=("geo", "nunique"))
           .reset_index())
    return out[SUMMARY_COLUMNS]


def selection_shares(forecasts: pd.DataFrame) -> pd.DataFrame:
    ens = forecasts[forecasts["method"] == MethodId.ENSEMBLE.value]
    rows = []
    for h, g in ens.groupby("horizon_weeks", sort=True):
        counts = g["selected_method"].value_counts()
        total = int(counts.sum())
        for m in CONSTITUENTS:
            c = int(counts.get(m.value, 0))
            rows.append((int(h), m.value, c, c / total))
    return pd.DataFrame(rows, columns=SELECTION_COLUMNS)


def interval_coverage(forecasts: pd.DataFrame, truth_weekly: pd.DataFrame) -> pd.DataFrame:
    df = forecasts.copy()
    df["truth"] = truth_lookup(df, truth_weekly)
    df = df[np.isfinite(df["lo95"].to_numpy(float)) & np.isfinite(df["truth"].to_numpy())]
    df = df[df["geo"].isin(geo_mod.STATES)]
    rows = []
    for (m, h), g in df.groupby(["method", "horizon_weeks"], sort=True):
        hit = int(((g["truth"] >= g["lo95"]) & (g["truth"] <= g["hi95"])).sum())
        rows.append((m, int(h), len(g), hit, hit / len(g)))
    return pd.DataFrame(rows, columns=COVERAGE_COLUMNS)


def format_forecasts(forecasts: pd.DataFrame) -> pd.DataFrame:
    """Canonical column order, date strings and row order of ``forecasts.csv``."""
    df = forecasts.copy()
    for c in ("forecast_date", "target_week_end"):
        df[c] = pd.DatetimeIndex(df[c]).strftime("%Y-%m-%d")
    df["horizon_weeks"] = df["horizon_weeks"].astype(int)
    if "selected_method" not in df:
        df["selected_method"] = ""
    df["selected_method"] = df["selected_method"].fillna("")
    for c in ("lo95", "hi95"):
        if c not in df:
            df[c] = np.nan
    # values as they will appear in the file, so rescoring the CSV gives identical scores
    for c in ("point", "lo95", "hi95"):
        df[c] = [float(FLOAT_FORMAT % v) for v in df[c].to_numpy(float)]
    df = df[FORECAST_COLUMNS].sort_values(["forecast_date", "geo", "method", "horizon_weeks"],
                                          kind="mergesort")
    return df.reset_index(drop=True)


def _write(df: pd.DataFrame, path: Path):
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def emit_reports(forecasts: pd.DataFrame, truth_weekly: pd.DataFrame, out_dir,
                 common_support: bool = True) -> dict[str, Path]:
    """Score ``forecasts`` and write the five report files into ``out_dir``.

    Nothing is written if scoring fails.
    """
    if forecasts is None or len(forecasts) == 0:
        raise EmptyEvaluation("forecast set is empty")
    fc = format_forecasts(forecasts)
    scores = score_forecasts(fc, truth_weekly, common_support)
    tables = {
        "forecasts.csv": fc,
        "scores_by_state.csv": scores,
        "scores_summary.csv": summarize(scores),
        "ensemble_selection.csv": selection_shares(fc),
        "coverage.csv": interval_coverage(fc, truth_weekly),
    }
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {}
        for name in REPORT_FILES:
            paths[name] = out / name
            _write(tables[name], paths[name])
    except OSError as exc:
        raise IoError(f"cannot write reports to {out}: {exc}") from exc
    return paths


def read_forecasts(path) -> pd.DataFrame:
    """Load a forecast CSV in the ``forecasts.csv`` schema (own or third-party)."""
    try:
        df = pd.read_csv(path, dtype={"geo": str, "method": str, "selected_method": str},
                         keep_default_na=False, na_values={"point": [""], "lo95": [""], "hi95": [""]})
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ParseError(f"{path}: {exc}") from exc
    missing = [c for c in FORECAST_COLUMNS if c not in df.columns]
    if missing:
        raise ParseError(f"{path}: missing columns {missing}")
    for c in ("forecast_date", "target_week_end"):
        try:
            df[c] = pd.to_datetime(df[c], format="%Y-%m-%d")
        except ValueError as exc:
            raise ParseError(f"{path}: bad date in {c}: {exc}") from exc
    for c in ("point", "lo95", "hi95"):
        df[c] = pd.to_numeric(df[c], errors="raise")
    df["horizon_weeks"] = df["horizon_weeks"].astype(int)
    return df[FORECAST_COLUMNS]
