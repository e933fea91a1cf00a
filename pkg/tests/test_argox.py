import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from searchcast import argox as AX
from searchcast import geo
from searchcast.exceptions import ConstraintDegenerate, InsufficientHistory, NumericalFailure

from oracles import constrained_blp_kkt


def history(seed, n_states=3, n_pred=None, weeks=30):
    rng = np.random.default_rng(seed)
    d = n_pred or 4 * n_states
    W = rng.normal(size=(weeks, d)) @ rng.normal(size=(d, d)) * 0.5 + rng.normal(0, 3, d)
    Z = W[:, :n_states] * 0.7 + rng.normal(size=(weeks, n_states)) + rng.normal(0, 2, n_states)
    return Z, W, rng


def shrunk_by_hand(Z, W, eps=AX.JITTER):
    n = len(Z)
    Zc, Wc = Z - Z.mean(0), W - W.mean(0)
    S_zw = Zc.T @ Wc / (n - 1)
    S_ww = Wc.T @ Wc / (n - 1)
    return 0.5 * S_zw, 0.5 * S_ww + 0.5 * np.diag(np.diag(S_ww)) + eps * np.eye(W.shape[1])


def test_cov_stats_match_numpy():
    Z, W, _ = history(0)
    cov = AX.CovStats(Z, W)
    full = np.cov(np.hstack([Z, W]).T, ddof=1)
    k = Z.shape[1]
    np.testing.assert_allclose(cov.S_ZW, full[:k, k:], atol=1e-12)
    np.testing.assert_allclose(cov.S_WW, full[k:, k:], atol=1e-12)
    assert np.array_equal(cov.S_WW, cov.S_WW.T)
    again = AX.CovStats(cov.Z, cov.W)
    assert np.array_equal(again.S_WW, cov.S_WW) and np.array_equal(again.S_ZW, cov.S_ZW)


@pytest.mark.parametrize("seed", range(10))
def test_blp_joint_matches_dense_formula(seed):
    Z, W, rng = history(seed)
    w = rng.normal(size=W.shape[1])
    s_zw, s_ww = shrunk_by_hand(Z, W)
    expected = Z.mean(0) + s_zw @ np.linalg.inv(s_ww) @ (w - W.mean(0))
    np.testing.assert_allclose(AX.blp_joint(w, AX.CovStats(Z, W)), expected, rtol=1e-8, atol=1e-8)


def test_blp_at_predictor_mean_returns_mean_increment():
    Z, W, _ = history(1)
    cov = AX.CovStats(Z, W)
    np.testing.assert_allclose(AX.blp_joint(W.mean(0), cov), Z.mean(0), atol=1e-12)


def test_uncorrelated_predictors_carry_no_signal():
    rng = np.random.default_rng(2)
    W = rng.normal(size=(30, 4))
    Z = rng.normal(size=(30, 1))
    # make Z exactly uncorrelated with every predictor in-sample
    Wc = np.column_stack([np.ones(30), W])
    Z = Z - Wc @ np.linalg.lstsq(Wc, Z, rcond=None)[0] + 5.0
    cov = AX.CovStats(Z, W)
    np.testing.assert_allclose(AX.blp_joint(rng.normal(size=4) * 10, cov), Z.mean(0), atol=1e-9)


def test_without_shrinkage_equals_textbook_blp():
    Z, W, rng = history(3, n_states=2, n_pred=4, weeks=200)
    w = rng.normal(size=4)
    cov = AX.CovStats(Z, W, eps=0.0)
    gain = cov.S_ZW @ np.linalg.inv(cov.S_WW)
    textbook = Z.mean(0) + gain @ (w - W.mean(0))
    # undo the shrinkage: feed (2 S_ZW, 2 S_WW - D) through the shrunk formula
    cov.S_ZW = 2.0 * cov.S_ZW
    cov.S_WW = 2.0 * cov.S_WW - np.diag(np.diag(cov.S_WW))
    np.testing.assert_allclose(AX.blp_joint(w, cov), textbook, rtol=1e-9)


def test_alone_uses_three_predictors_and_rejects_constant_history():
    Z, W, rng = history(4, n_states=1, n_pred=3)
    cov = AX.CovStats(Z, W)
    assert AX.blp_alone(W.mean(0), cov) == pytest.approx(Z.mean(), abs=1e-12)
    with pytest.raises(ValueError):
        AX.blp_alone(np.zeros(4), AX.CovStats(Z, np.hstack([W, W[:, :1]])))
    flat = np.ones((30, 3))
    with pytest.raises(NumericalFailure):
        AX.blp_alone(np.ones(3), AX.CovStats(Z, flat))


def test_alone_beats_persistence_when_gt_estimate_is_good():
    rng = np.random.default_rng(5)
    T = 200
    y = 100 + np.cumsum(rng.normal(0, 5, T + 2))
    errs_blp, errs_naive = [], []
    rows = []
    for t in range(1, T + 1):
        gt = y[t + 1] + rng.normal(0, 1)
        nat = 20 * y[t + 1] + rng.normal(0, 40)
        rows.append((y[t + 1] - y[t], [y[t] - y[t - 1], gt - y[t], nat - y[t]]))
    for t in range(30, T):
        Z = np.array([[r[0]] for r in rows[t - 30:t]])
        W = np.array([r[1] for r in rows[t - 30:t]])
        z = AX.blp_alone(np.array(rows[t][1]), AX.CovStats(Z, W))
        errs_blp.append(z - rows[t][0])
        errs_naive.append(-rows[t][0])
    assert np.sqrt(np.mean(np.square(errs_blp))) <= np.sqrt(np.mean(np.square(errs_naive)))


def test_non_pd_raises():
    Z, W, _ = history(6)
    cov = AX.CovStats(Z, W, eps=0.0)
    cov.S_WW = -np.eye(W.shape[1])
    with pytest.raises(NumericalFailure):
        AX.blp_joint(W[0], cov)


def constrained_case(seed, n=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(3, 11))
    Z, W, _ = history(seed, n_states=n, weeks=30)
    w = W.mean(0) + rng.normal(size=W.shape[1]) * W.std(0)
    y_last = rng.uniform(50, 500, n)
    target = y_last.sum() + Z.mean(0).sum() + rng.normal(0, 50)
    return Z, W, w, y_last, target


@pytest.mark.parametrize("seed", range(100))
def test_constrained_blp_against_kkt_system(seed):
    Z, W, w, y_last, target = constrained_case(seed)
    cov = AX.CovStats(Z, W)
    sol = AX.blp_nat_constrained(w, cov, y_last, target)
    pred = y_last + sol.increments
    # (a) the national constraint holds
    assert abs(pred.sum() - target) <= 1e-8 * abs(target)
    # (b) same answer as a generic linear KKT solve
    s_zw, s_ww = shrunk_by_hand(Z, W)
    ref, A_ref, lam_ref = constrained_blp_kkt(s_zw, s_ww, Z.mean(0), W.mean(0), w, y_last, target)
    np.testing.assert_allclose(sol.increments, ref, rtol=1e-6, atol=1e-6 * np.abs(ref).max())
    assert sol.multiplier == pytest.approx(lam_ref, rel=1e-6, abs=1e-12)
    # (c) dropping the constraint recovers the unconstrained shrunk BLP
    free = AX.blp_joint(w, cov)
    unconstrained_target = y_last.sum() + free.sum()
    sol0 = AX.blp_nat_constrained(w, cov, y_last, unconstrained_target)
    np.testing.assert_allclose(sol0.increments, free, rtol=1e-10, atol=1e-10 * np.abs(free).max())


@pytest.mark.parametrize("seed", range(20))
def test_lagrangian_gradient_vanishes(seed):
    Z, W, w, y_last, target = constrained_case(seed + 500, n=6)
    cov = AX.CovStats(Z, W)
    sol = AX.blp_nat_constrained(w, cov, y_last, target)
    g = AX.lagrangian_gradient(cov, w, sol.gain, sol.multiplier)
    assert np.max(np.abs(g)) < 1e-8
    # the gain reproduces the increments
    np.testing.assert_allclose(cov.mu_Z + sol.gain @ (w - cov.mu_W), sol.increments, rtol=1e-9)


def test_constrained_at_training_mean():
    Z, W, _, y_last, _ = constrained_case(7, n=4)
    cov = AX.CovStats(Z, W)
    target = y_last.sum() + Z.mean(0).sum()
    sol = AX.blp_nat_constrained(W.mean(0), cov, y_last, target)
    np.testing.assert_allclose(sol.increments, Z.mean(0), atol=1e-10)
    with pytest.raises(ConstraintDegenerate):
        AX.blp_nat_constrained(W.mean(0), cov, y_last, target + 10.0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 100_000), shift=st.floats(-1e4, 1e4))
def test_constraint_always_binds(seed, shift):
    Z, W, w, y_last, target = constrained_case(seed)
    sol = AX.blp_nat_constrained(w, AX.CovStats(Z, W), y_last, target + shift)
    assert abs((y_last + sol.increments).sum() - (target + shift)) <= 1e-8 * max(1.0, abs(target + shift))


def test_multiple_correlation_bounds_and_identity():
    rng = np.random.default_rng(8)
    x = rng.normal(size=20)
    assert AX.multiple_correlation(x, x) == pytest.approx(1.0, abs=1e-6)
    r = AX.multiple_correlation(rng.normal(size=40), rng.normal(size=(40, 3)))
    assert np.isfinite(r) and 0.0 <= r <= 1.0
    with pytest.raises(InsufficientHistory):
        AX.multiple_correlation(x[:9], x[:9])


def test_multiple_correlation_toy_by_hand():
    y = np.array([1.0, 3.0, 2.0, 5.0, 4.0, 6.0, 8.0, 7.0, 9.0, 12.0])
    X = np.column_stack([np.arange(10.0), np.array([0, 1, 0, 1, 0, 1, 0, 1, 0, 1.0])])
    Xc, yc = X - X.mean(0), y - y.mean()
    # two predictors: closed form via the 2x2 normal equations
    a, b, c = Xc[:, 0] @ Xc[:, 0], Xc[:, 0] @ Xc[:, 1], Xc[:, 1] @ Xc[:, 1]
    u, v = Xc[:, 0] @ yc, Xc[:, 1] @ yc
    det = a * c - b * b
    beta = np.array([c * u - b * v, a * v - b * u]) / det
    r2 = 1 - np.sum((yc - Xc @ beta) ** 2) / (yc @ yc)
    assert AX.multiple_correlation(y, X) == pytest.approx(np.sqrt(r2), abs=1e-8)


def test_grouping_defaults():
    g = AX.StateGrouping()
    assert len(g.joint) == 45 and len(g.alone) == 6
    assert set(g.joint) | set(g.alone) == set(geo.STATES)
    assert len(g.constrained) == 49 and not {"HI", "VT"} & set(g.constrained)
    with pytest.raises(ValueError):
        AX.StateGrouping(alone=("ZZ",))


def test_alone_selection_keeps_islands_and_bottom_four():
    rng = np.random.default_rng(9)
    weeks = 40
    base = rng.normal(size=weeks).cumsum()
    cols = {}
    odd = ["WY", "ND", "SD", "MT"]
    for s in geo.STATES:
        cols[s] = rng.normal(size=weeks) if s in odd else base * rng.uniform(1, 3) + 0.05 * rng.normal(size=weeks)
    for r in geo.REGIONS:
        cols[r] = sum(cols[s] for s in geo.region_members()[r])
    cols[geo.NATION] = sum(cols[s] for s in geo.STATES)
    chosen = AX.select_alone_states(pd.DataFrame(cols))
    assert {"AK", "HI"} <= set(chosen)
    assert len(chosen) == 6


def test_bundle_broadcasts_region_estimates():
    states = ["NJ", "NY", "CT"]
    b = AX.WeeklyEstimateBundle.assemble(
        "2020-07-04", 1, states, [1.0, 2.0, 3.0], {"R02": 10.0, "R01": 20.0}, 100.0,
        [5.0, 6.0, 7.0], [4.0, 4.0, 4.0])
    assert b.region[0] == b.region[1] == 10.0
    w = b.joint_predictors(["NJ", "NY"])
    np.testing.assert_allclose(w, [1, 2, -4, -4, 5, 4, 95, 94])
    np.testing.assert_allclose(b.alone_predictors("CT"), [3, -4, 93])


def test_estimators():
    Z, W, rng = history(10, n_states=2, n_pred=4)
    m = AX.ShrunkBLP().fit(W, Z)
    np.testing.assert_allclose(m.predict(W[:3]), [AX.blp_joint(w, AX.CovStats(Z, W)) for w in W[:3]])
    single = AX.ShrunkBLP().fit(W, Z[:, 0])
    assert single.predict(W[:2]).shape == (2,)
    c = AX.NatConstrainedBLP().fit(W, Z)
    y_last = np.array([10.0, 20.0])
    pred = c.predict(W[0], y_last, 42.0)
    assert pred.sum() == pytest.approx(42.0)
