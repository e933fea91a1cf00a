"""Second-step state predictors built from first-step weekly estimates.

For a state m at anchor week a and horizon h the target is the increment
``Z = y[a+h] - y[a]`` and the predictors are

    (y[a] - y[a-1], gt[m] - y[a], region[m] - y[a], nation - y[a])

where gt, region and nation are first-step weekly estimates. All predictors
use empirical means and covariances over a trailing window, shrunk as

    Sigma_WW -> (Sigma_WW + diag(Sigma_WW)) / 2 + eps * I,   Sigma_ZW -> Sigma_ZW / 2.

The nationally constrained variant adds the restriction that the state
predictions sum to a national target and is solved in closed form with a
Lagrange multiplier.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from . import geo as geo_mod
from .exceptions import ConstraintDegenerate, InsufficientHistory, NumericalFailure

COV_WINDOW = 30
JITTER = 1e-8
CORRELATION_RIDGE = 1e-6
DEFAULT_ALONE = ("AK", "HI", "DE", "KY", "VT", "ME")
DEFAULT_EXCLUDED = ("HI", "VT")
ALWAYS_ALONE = ("AK", "HI")
MIN_CORRELATION_WEEKS = 10


@dataclass(frozen=True)
class StateGrouping:
    alone: tuple = DEFAULT_ALONE
    excluded: tuple = DEFAULT_EXCLUDED
    states: tuple = geo_mod.STATES

    def __post_init__(self):
        unknown = (set(self.alone) | set(self.excluded)) - set(self.states)
        if unknown:
            raise ValueError(f"unknown state codes in grouping: {sorted(unknown)}")

    @property
    def joint(self) -> list[str]:
        return [s for s in self.states if s not in self.alone]

    @property
    def constrained(self) -> list[str]:
        return [s for s in self.states if s not in self.excluded]


@dataclass
class CovStats:
    """Window means and covariances of (Z, W) with the shrinkage applied on demand."""

    Z: np.ndarray
    W: np.ndarray
    eps: float = JITTER
    mu_Z: np.ndarray = field(init=False)
    mu_W: np.ndarray = field(init=False)
    S_ZZ: np.ndarray = field(init=False)
    S_ZW: np.ndarray = field(init=False)
    S_WW: np.ndarray = field(init=False)

    def __post_init__(self):
        self.Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        if self.Z.shape[0] != self.W.shape[0]:
            raise ValueError("Z and W histories must have the same number of weeks")
        if self.Z.shape[0] < 2:
            raise InsufficientHistory("covariances need at least two weeks")
        if not (np.all(np.isfinite(self.Z)) and np.all(np.isfinite(self.W))):
            raise NumericalFailure("history contains NaN or infinite values")
        n = self.Z.shape[0]
        self.mu_Z = self.Z.mean(axis=0)
        self.mu_W = self.W.mean(axis=0)
        Zc = self.Z - self.mu_Z
        Wc = self.W - self.mu_W
        self.S_ZZ = Zc.T @ Zc / (n - 1)
        self.S_ZW = Zc.T @ Wc / (n - 1)
        self.S_WW = Wc.T @ Wc / (n - 1)
        self.S_WW = 0.5 * (self.S_WW + self.S_WW.T)

    @property
    def D_WW(self) -> np.ndarray:
        return np.diag(np.diag(self.S_WW))

    def shrunk(self):
        """(Sigma_ZW', Sigma_WW') = (Sigma_ZW / 2, (Sigma_WW + D_WW) / 2 + eps I)."""
        d = np.diag(self.S_WW)
        if np.any(d <= 0.0):
            bad = np.flatnonzero(d <= 0.0).tolist()
            raise NumericalFailure(f"predictors {bad} have zero variance over the window")
        S_ww = 0.5 * (self.S_WW + np.diag(d)) + self.eps * np.eye(d.size)
        return 0.5 * self.S_ZW, S_ww


def _factor(S):
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise NumericalFailure("shrunk predictor covariance is not positive definite") from None


def _solve(L, B):
    return np.linalg.solve(L.T, np.linalg.solve(L, B))


def blp_gain(cov: CovStats) -> np.ndarray:
    """Shrunk BLP gain Sigma_ZW' Sigma_WW'^{-1}."""
    s_zw, s_ww = cov.shrunk()
    return _solve(_factor(s_ww), s_zw.T).T


def blp_joint(W_now, cov: CovStats) -> np.ndarray:
    """Predicted increments mu_Z + gain (W - mu_W)."""
    W_now = np.asarray(W_now, dtype=float)
    return cov.mu_Z + blp_gain(cov) @ (W_now - cov.mu_W)


def blp_alone(W_now, cov3: CovStats) -> float:
    """Scalar version with three predictors (no regional term)."""
    if cov3.W.shape[1] != 3 or cov3.Z.shape[1] != 1:
        raise ValueError("stand-alone model expects one target and three predictors")
    return float(blp_joint(W_now, cov3)[0])


@dataclass
class ConstrainedSolution:
    increments: np.ndarray
    gain: np.ndarray
    multiplier: float


def blp_nat_constrained(W_now, cov: CovStats, y_last, national_target) -> ConstrainedSolution:
    """Shrunk BLP whose state predictions ``y_last + Z`` sum to ``national_target``.

    With S' = Sigma_WW'^{-1}, w = W - mu_W and
    r = national_target - sum(y_last) - sum(mu_Z) - 1' Sigma_ZW' S' w, the solution is
    Z = mu_Z + Sigma_ZW' S' w + r / n, from gain A = (Sigma_ZW' + (lam/2) 1 w') S'
    and multiplier lam = 2 r / (n w' S' w).
    """
    W_now = np.asarray(W_now, dtype=float)
    y_last = np.asarray(y_last, dtype=float)
    n = cov.mu_Z.size
    s_zw, s_ww = cov.shrunk()
    L = _factor(s_ww)
    w = W_now - cov.mu_W
    Sw = _solve(L, w)
    base = s_zw @ Sw
    resid = float(national_target) - y_last.sum() - cov.mu_Z.sum() - base.sum()
    quad = float(w @ Sw)
    if quad <= 0.0:
        if abs(resid) <= 1e-12 * max(1.0, abs(float(national_target))):
            # constraint already satisfied; no multiplier needed
            return ConstrainedSolution(cov.mu_Z + base, _solve(L, s_zw.T).T, 0.0)
        raise ConstraintDegenerate("predictor deviation is zero; the multiplier is undefined")
    lam = 2.0 * resid / (n * quad)
    gain = _solve(L, (s_zw + 0.5 * lam * np.outer(np.ones(n), w)).T).T
    Z = cov.mu_Z + base + resid / n
    return ConstrainedSolution(Z, gain, lam)


def lagrangian_gradient(cov: CovStats, W_now, gain, multiplier) -> np.ndarray:
    """Gradient in A of tr(S_ZZ - 2 A S_WZ + A S_WW A') - lam (1' A w - target).

    Uses the shrunk matrices; returned in the transposed (W x Z) orientation.
    """
    s_zw, s_ww = cov.shrunk()
    w = np.asarray(W_now, dtype=float) - cov.mu_W
    n = cov.mu_Z.size
    return 2.0 * s_ww @ gain.T - 2.0 * s_zw.T - multiplier * np.outer(w, np.ones(n))


def multiple_correlation(target, others) -> float:
    """Multiple correlation of ``target`` with the columns of ``others``.

    R^2 comes from a ridge-jittered least-squares projection on centered data
    (there are usually more predictors than weeks); R = sqrt(R^2) in [0, 1].
    """
    y = np.asarray(target, dtype=float)
    X = np.asarray(others, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if y.size < MIN_CORRELATION_WEEKS:
        raise InsufficientHistory(f"multiple correlation needs at least {MIN_CORRELATION_WEEKS} weeks")
    yc = y - y.mean()
    Xc = X - X.mean(axis=0)
    tss = float(yc @ yc)
    if tss == 0.0:
        return 0.0
    beta = np.linalg.solve(Xc.T @ Xc + CORRELATION_RIDGE * np.eye(X.shape[1]), Xc.T @ yc)
    r = yc - Xc @ beta
    r2 = 1.0 - float(r @ r) / tss
    return float(np.sqrt(min(1.0, max(0.0, r2))))


def state_correlations(weekly, region_table=None) -> dict[str, float]:
    """Multiple correlation of each state against the nation, other regions and other states.

    ``weekly`` is a DataFrame of weekly deaths with state, region and ``US`` columns.
    """
    table = geo_mod.STATE_TO_REGION if region_table is None else region_table
    out = {}
    for s in geo_mod.STATES:
        cols = [geo_mod.NATION] + [r for r in geo_mod.REGIONS if r != table[s]] + \
               [o for o in geo_mod.STATES if o != s]
        out[s] = multiple_correlation(weekly[s].to_numpy(), weekly[cols].to_numpy())
    return out


def select_alone_states(weekly, n_lowest: int = 4, always=ALWAYS_ALONE, region_table=None) -> tuple:
    """``always`` plus the ``n_lowest`` remaining states by multiple correlation."""
    r = state_correlations(weekly, region_table)
    rest = sorted((v, s) for s, v in r.items() if s not in always)
    chosen = set(always) | {s for _, s in rest[:n_lowest]}
    return tuple(s for s in geo_mod.STATES if s in chosen)


@dataclass
class WeeklyEstimateBundle:
    """First-step estimates for one anchor week and horizon, state-ordered."""

    week: object
    horizon: int
    states: list
    gt: np.ndarray
    region: np.ndarray
    nation: float
    y_last: np.ndarray
    y_prev: np.ndarray

    @classmethod
    def assemble(cls, week, horizon, states, gt, region_estimates: dict, nation, y_last, y_prev,
                 region_table=None):
        table = geo_mod.STATE_TO_REGION if region_table is None else region_table
        reg = np.array([region_estimates[table[s]] for s in states], dtype=float)
        return cls(week, int(horizon), list(states), np.asarray(gt, float), reg, float(nation),
                   np.asarray(y_last, float), np.asarray(y_prev, float))

    def _idx(self, states):
        pos = {s: i for i, s in enumerate(self.states)}
        return np.array([pos[s] for s in states], dtype=int)

    def joint_predictors(self, states=None) -> np.ndarray:
        """Stacked predictor vector [last increments | gt | region | nation] deviations."""
        i = self._idx(self.states if states is None else states)
        y = self.y_last[i]
        return np.concatenate([y - self.y_prev[i], self.gt[i] - y, self.region[i] - y, self.nation - y])

    def alone_predictors(self, state) -> np.ndarray:
        i = self._idx([state])[0]
        y = self.y_last[i]
        return np.array([y - self.y_prev[i], self.gt[i] - y, self.nation - y])


def joint_history(bundles, states, targets) -> tuple[np.ndarray, np.ndarray]:
    """Stack (Z, W) for ``states`` from bundles and realized values ``targets[k][state]``."""
    Z = np.array([[t[s] for s in states] for t in targets], dtype=float)
    Z = Z - np.array([b.y_last[b._idx(states)] for b in bundles])
    W = np.array([b.joint_predictors(states) for b in bundles])
    return Z, W


class ShrunkBLP(RegressorMixin, BaseEstimator):
    """Multi-output shrunk best linear predictor; ``fit(W, Z)`` then ``predict(W)``."""

    def __init__(self, eps=JITTER):
        self.eps = eps

    def fit(self, X, y):
        Z = np.asarray(y, dtype=float)
        Z = Z[:, None] if Z.ndim == 1 else Z
        self.cov_ = CovStats(Z, np.asarray(X, dtype=float), self.eps)
        self.gain_ = blp_gain(self.cov_)
        self.n_features_in_ = self.cov_.W.shape[1]
        self._single = np.asarray(y).ndim == 1
        return self

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = self.cov_.mu_Z + (X - self.cov_.mu_W) @ self.gain_.T
        return out[:, 0] if self._single else out


class NatConstrainedBLP(BaseEstimator):
    """Shrunk BLP constrained to a national total; ``predict(W, y_last, target)``."""

    def __init__(self, eps=JITTER):
        self.eps = eps

    def fit(self, X, y):
        self.cov_ = CovStats(np.asarray(y, dtype=float), np.asarray(X, dtype=float), self.eps)
        self.n_features_in_ = self.cov_.W.shape[1]
        return self

    def predict(self, W_now, y_last, national_target) -> np.ndarray:
        sol = blp_nat_constrained(W_now, self.cov_, y_last, national_target)
        self.multiplier_ = sol.multiplier
        return np.asarray(y_last, dtype=float) + sol.increments
