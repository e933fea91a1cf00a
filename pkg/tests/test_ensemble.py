import math

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from searchcast import ensemble as E
from searchcast.ensemble import MethodId

A, B, C = (m.value for m in E.CONSTITUENTS)


def const_errors(mses, n=15):
    return {m: np.full(n, math.sqrt(v)) for m, v in zip((A, B, C), mses)}


def test_strict_argmin_and_ties():
    assert E.select_winner(const_errors((4, 9, 16))).method is MethodId.ARGO
    assert E.select_winner(const_errors((9, 9, 16))).method is MethodId.ARGO
    assert E.select_winner(const_errors((9, 4, 4))).method is MethodId.ARGOX_2STEP
    assert E.select_winner(const_errors((9, 16, 4))).method is MethodId.ARGOX_NATCONSTRAINT


def test_short_history_falls_back_to_argo_flagged():
    errs = const_errors((16, 1, 1))
    errs[C] = errs[C][:14]
    sel = E.select_winner(errs)
    assert sel.method is MethodId.ARGO and sel.flagged


def brute_force(errs, window):
    best, best_mse = None, None
    for m in (A, B, C):
        tail = list(errs[m])[-window:]
        mse = sum(e * e for e in tail) / len(tail)
        if best is None or mse < best_mse:
            best, best_mse = m, mse
    return best


def test_selection_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        n = int(rng.integers(15, 40))
        errs = {m: rng.normal(0, rng.uniform(0.5, 2), n) for m in (A, B, C)}
        if rng.random() < 0.2:  # force exact ties now and then
            errs[B] = errs[A].copy()
        assert E.select_winner(errs).method.value == brute_force(errs, 15)


def test_interval_arithmetic():
    assert E.build_interval(50.0, np.zeros(15)) == (50.0, 50.0)
    r = np.array([-10.0, 10.0] * 7 + [0.0])
    r = r / np.std(r, ddof=1) * 10.0
    lo, hi = E.build_interval(50.0, r)
    assert hi - lo == pytest.approx(39.2)
    assert E.build_interval(50.0, np.ones(7)) is None
    # only the last 15 residuals count
    long = np.concatenate([np.full(30, 1e6), r])
    assert E.build_interval(50.0, long) == (lo, hi)


def coverage_draws(seed=0, n=10_000, sigma=10.0, window=15):
    rng = np.random.default_rng(seed)
    hit = 0
    for _ in range(n):
        lo, hi = E.build_interval(0.0, rng.normal(0, sigma, window))
        hit += lo <= rng.normal(0, sigma) <= hi
    return hit / n


def test_coverage_matches_exact_expectation():
    # with sd estimated from 15 residuals the new error over s is t with 14 df
    exact = 2 * stats.t.cdf(E.Z95, 14) - 1
    cov = coverage_draws()
    assert abs(cov - exact) <= 3 * math.sqrt(exact * (1 - exact) / 10_000)


@pytest.mark.xfail(strict=True, reason="expected coverage with a 15-residual window is 92.98%")
def test_coverage_band():
    assert 0.93 <= coverage_draws() <= 0.97


def toy_frames(n_weeks=24, geos=("NY", "NJ"), seed=0):
    rng = np.random.default_rng(seed)
    weeks = pd.date_range("2020-06-06", periods=n_weeks + 4, freq="7D")
    truth = pd.DataFrame(rng.normal(100, 10, (len(weeks), len(geos))), index=weeks, columns=list(geos))
    noise = {A: 1.0, B: 5.0, C: 3.0, "NAIVE": 8.0}
    rows = []
    for fd in weeks[:n_weeks]:
        for geo in geos:
            for h in (1, 2):
                tgt = fd + pd.Timedelta(weeks=h)
                for m, s in noise.items():
                    rows.append((fd, tgt, h, geo, m, truth.loc[tgt, geo] + rng.normal(0, s)))
    fc = pd.DataFrame(rows, columns=["forecast_date", "target_week_end", "horizon_weeks", "geo",
                                     "method", "point"])
    return fc, truth


def test_attach_ensemble_records():
    fc, truth = toy_frames()
    out, log = E.attach_ensemble(fc, truth)
    ens = out[out["method"] == "ENSEMBLE"]
    assert len(ens) > 0 and len(ens) == len(log)
    # the first ensemble forecast needs 15 realized errors at every horizon
    first = ens.groupby("horizon_weeks")["forecast_date"].min()
    start = pd.Timestamp("2020-06-06")
    assert first[1] == start + pd.Timedelta(weeks=15)
    assert first[2] == start + pd.Timedelta(weeks=16)
    # the ensemble copies the selected record, interval included
    for rec in ens.itertuples():
        src = out[(out.method == rec.selected_method) & (out.geo == rec.geo)
                  & (out.horizon_weeks == rec.horizon_weeks) & (out.forecast_date == rec.forecast_date)]
        assert src["point"].item() == rec.point
        assert (np.isnan(src["lo95"].item()) and np.isnan(rec.lo95)) or src["lo95"].item() == rec.lo95
    assert (ens["selected_method"] == A).mean() > 0.8


def test_intervals_use_only_realized_history():
    fc, truth = toy_frames()
    out, _ = E.attach_ensemble(fc, truth)
    g = out[(out.geo == "NY") & (out.method == B) & (out.horizon_weeks == 2)].sort_values("forecast_date")
    first = g.dropna(subset=["lo95"]).iloc[0]
    # eight realized two-week-ahead residuals exist once the forecast date is 9 weeks after the start
    assert first["forecast_date"] == pd.Timestamp("2020-06-06") + pd.Timedelta(weeks=9)
    hist = g[g["target_week_end"] <= first["forecast_date"]]
    resid = hist["point"].to_numpy() - truth.loc[hist["target_week_end"], "NY"].to_numpy()
    lo, hi = E.build_interval(first["point"], resid)
    assert (first["lo95"], first["hi95"]) == pytest.approx((lo, hi))


def test_pooled_selection_runs():
    fc, truth = toy_frames(30)
    out, log = E.attach_ensemble(fc, truth, pooled=True)
    ens = out[out["method"] == "ENSEMBLE"]
    assert len(ens) and set(ens["selected_method"]) <= {A, B, C}
    # pooled selection picks one method for both horizons of a (geo, date)
    per = ens.groupby(["geo", "forecast_date"])["selected_method"].nunique()
    assert (per == 1).all()
