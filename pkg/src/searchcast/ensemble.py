"""Winner-takes-all selection among the constituent forecasters and residual intervals."""
from __future__ import annotations

from enum import Enum
from typing import Mapping, NamedTuple

import numpy as np
import pandas as pd

SELECTION_WINDOW = 15
MIN_INTERVAL_RESIDUALS = 8
Z95 = 1.96


class MethodId(str, Enum):
    ARGO = "ARGO"
    ARGOX_2STEP = "ARGOX_2STEP"
    ARGOX_NATCONSTRAINT = "ARGOX_NATCONSTRAINT"
    NAIVE = "NAIVE"
    ENSEMBLE = "ENSEMBLE"

    def __str__(self):
        return self.value


# Selection domain, in tie-break priority order.
CONSTITUENTS = (MethodId.ARGO, MethodId.ARGOX_2STEP, MethodId.ARGOX_NATCONSTRAINT)


class Selection(NamedTuple):
    method: MethodId
    flagged: bool
    mses: dict


def select_winner(errors: Mapping, window: int = SELECTION_WINDOW) -> Selection:
    """Constituent with the lowest MSE over its last ``window`` realized errors.

    ``errors`` maps each constituent to its realized errors in time order.
    Ties go to the earlier entry of ``CONSTITUENTS``. If any constituent has
    fewer than ``window`` errors the result is ARGO, flagged.
    """
    mses = {}
    for m in CONSTITUENTS:
        e = np.asarray(errors.get(m, errors.get(m.value, ())), dtype=float)
        if e.size < window:
            return Selection(MethodId.ARGO, True, mses)
        tail = e[-window:]
        mses[m] = float(np.mean(tail * tail))
    best = CONSTITUENTS[0]
    for m in CONSTITUENTS[1:]:
        if mses[m] < mses[best]:
            best = m
    return Selection(best, False, mses)


def build_interval(point: float, residuals, window: int = SELECTION_WINDOW,
                   min_residuals: int = MIN_INTERVAL_RESIDUALS, z: float = Z95):
    """``point -/+ z * sd`` over the last ``window`` residuals, or None if too few."""
    r = np.asarray(residuals, dtype=float)[-window:]
    if r.size < min_residuals:
        return None
    half = z * float(np.std(r, ddof=1))
    return point - half, point + half


def _realized(frame: pd.DataFrame, realized: pd.DataFrame) -> np.ndarray:
    lookup = realized.stack()
    keys = pd.MultiIndex.from_arrays([pd.DatetimeIndex(frame["target_week_end"]), frame["geo"]])
    return lookup.reindex(keys).to_numpy(dtype=float)


def attach_ensemble(forecasts: pd.DataFrame, realized: pd.DataFrame, window: int = SELECTION_WINDOW,
                    min_residuals: int = MIN_INTERVAL_RESIDUALS, pooled: bool = False,
                    geos=None) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Add intervals to every record and ENSEMBLE records where history allows.

    ``forecasts`` has columns forecast_date, target_week_end, horizon_weeks,
    geo, method, point. ``realized`` holds weekly values indexed by week-end
    date with one column per geo; only weeks ending on or before a forecast
    date count as history for it. With ``pooled`` the selection uses errors
    of all horizons together. Returns (forecasts, selection log).
    """
    df = forecasts.copy()
    df["forecast_date"] = pd.DatetimeIndex(df["forecast_date"])
    df["target_week_end"] = pd.DatetimeIndex(df["target_week_end"])
    df["error"] = df["point"].to_numpy(float) - _realized(df, realized)
    df["lo95"] = np.nan
    df["hi95"] = np.nan
    df["selected_method"] = ""
    df = df.sort_values(["geo", "method", "horizon_weeks", "forecast_date"], kind="mergesort")
    df = df.reset_index(drop=True)

    # residual intervals per (geo, method, horizon)
    err_all = df["error"].to_numpy()
    tgt_all = df["target_week_end"].to_numpy()
    fd_all = df["forecast_date"].to_numpy()
    pts_all = df["point"].to_numpy(float)
    lo = np.full(len(df), np.nan)
    hi = np.full(len(df), np.nan)
    for idx in df.groupby(["geo", "method", "horizon_weeks"], sort=False).indices.values():
        err, tgt = err_all[idx], tgt_all[idx]
        for k, i in enumerate(idx):
            past = err[:k][(tgt[:k] <= fd_all[i]) & np.isfinite(err[:k])]
            iv = build_interval(pts_all[i], past, window, min_residuals)
            if iv is not None:
                lo[i], hi[i] = iv
    df["lo95"] = lo
    df["hi95"] = hi

    rows, log = [], []
    wanted = set(df["geo"]) if geos is None else set(geos)
    names = [m.value for m in CONSTITUENTS]
    cons = df[df["method"].isin(names) & df["geo"].isin(wanted)]
    for geo, g in cons.groupby("geo", sort=True):
        series = {}
        for (m, h), v in g.groupby(["method", "horizon_weeks"], sort=False):
            ok = np.isfinite(v["error"].to_numpy())
            series[(m, h)] = (v["forecast_date"].to_numpy(), v["target_week_end"].to_numpy(),
                              v["error"].to_numpy(), ok, v.index.to_numpy())
        horizons = sorted({h for _, h in series})
        empty = (np.empty(0, "datetime64[ns]"),) * 2 + (np.empty(0), np.empty(0, bool),
                                                         np.empty(0, int))

        def history(m, h, fd):
            _, tgt, err, ok, _ = series.get((m, h), empty)
            keep = ok & (tgt <= fd)
            return tgt[keep], err[keep]

        for fd in np.unique(g["forecast_date"].to_numpy()):
            for h in horizons:
                if pooled:
                    errs = {}
                    for m in names:
                        parts = [history(m, hh, fd) for hh in horizons]
                        tgt = np.concatenate([p[0] for p in parts])
                        err = np.concatenate([p[1] for p in parts])
                        hs = np.concatenate([np.full(p[0].size, hh) for p, hh in zip(parts, horizons)])
                        order = np.lexsort((hs, tgt))
                        errs[m] = err[order]
                    sel = select_winner(errs, window * len(horizons))
                else:
                    sel = select_winner({m: history(m, h, fd)[1] for m in names}, window)
                if sel.flagged or (sel.method.value, h) not in series:
                    continue
                fds, _, _, _, rid = series[(sel.method.value, h)]
                hit = np.flatnonzero(fds == fd)
                if hit.size == 0:
                    continue
                rec = df.loc[rid[hit[0]]]
                rows.append({
                    "forecast_date": rec["forecast_date"], "target_week_end": rec["target_week_end"],
                    "horizon_weeks": h, "geo": geo, "method": MethodId.ENSEMBLE.value,
                    "point": rec["point"], "lo95": rec["lo95"], "hi95": rec["hi95"],
                    "selected_method": sel.method.value, "error": rec["error"],
                })
                log.append({"forecast_date": rec["forecast_date"], "geo": geo, "horizon_weeks": h,
                            "selected_method": sel.method.value,
                            **{f"mse_{m.value}": sel.mses[m] for m in CONSTITUENTS}})
    if rows:
        df = pd.concat([df, pd.DataFrame(rows)], ignore_index=True)
    df = df.drop(columns="error")
    return df, pd.DataFrame(log)
