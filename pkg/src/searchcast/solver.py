"""L1-penalized linear regression, OLS, and rolling-origin selection of the penalty.

The LASSO objective uses the 1/(2n) normalization on standardized columns::

    (1/(2n)) * sum_i (y_i - mu - x_i' b)^2 + lam * sum_j |b_j * sd_j|

i.e. the penalty applies to coefficients on the unit-variance scale and the
intercept is never penalized. Coefficients are reported on the original scale.
Columns with zero variance always receive a zero coefficient.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from . import _kernels as K
from ._validation import as_2d_float, check_xy, column_names
from .exceptions import InsufficientRows, InvalidPenalty, SingularDesign

DEFAULT_TOL = 1e-7
DEFAULT_MAX_SWEEPS = 10_000
OLS_JITTER = 1e-10
MIN_CV_ROWS = 20


@dataclass
class DesignMatrix:
    """A regression design with its column names and standardization stats."""

    values: np.ndarray
    columns: list[str]
    mean: np.ndarray = field(init=False)
    std: np.ndarray = field(init=False)
    zero_std: np.ndarray = field(init=False)

    def __post_init__(self):
        self.values = as_2d_float(self.values)
        if len(self.columns) != self.values.shape[1]:
            raise ValueError("column names do not match design width")
        scratch = np.empty_like(self.values)
        self.mean, self.std, ok = K.standardize(self.values, scratch)
        self.zero_std = ~ok

    @property
    def shape(self):
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


@dataclass
class FitResult:
    intercept: float
    coef: np.ndarray
    lam: float
    objective: float
    n_nonzero: int
    coef_std: np.ndarray
    n_sweeps: int = 0
    converged: bool = True
    trace: np.ndarray | None = None

    def predict(self, X) -> np.ndarray:
        return self.intercept + as_2d_float(X) @ self.coef


def _prepare(X, y):
    if isinstance(X, DesignMatrix):
        X = X.values
    Xa, ya = check_xy(X, y)
    Xs = np.empty_like(Xa)
    mu, sd, ok = K.standardize(Xa, Xs)
    ybar = float(ya.mean())
    G, c = K.gram(Xs, ya, ybar)
    return Xa, ya, Xs, mu, sd, ok, ybar, G, c


def lasso_objective(X, y, intercept, coef, lam) -> float:
    """Recompute the penalized objective from raw data and original-scale coefficients."""
    Xa, ya = check_xy(X.values if isinstance(X, DesignMatrix) else X, y)
    n = Xa.shape[0]
    resid = ya - intercept - Xa @ coef
    sd = Xa.std(axis=0)
    return float(resid @ resid / (2 * n) + lam * np.abs(coef * sd).sum())


def lambda_max(X, y) -> float:
    """Smallest penalty at which every coefficient is zero."""
    _, _, _, _, _, _, _, _, c = _prepare(X, y)
    return float(np.max(np.abs(c))) if c.size else 0.0


def lambda_grid(lam_max: float, size: int = 100) -> np.ndarray:
    """Log-spaced grid from ``lam_max`` down to ``1e-4 * lam_max``."""
    if size < 1:
        raise ValueError("grid size must be positive")
    return K.lambda_grid(float(lam_max), int(size))


def lasso_fit(X, y, lam: float, *, tol: float = DEFAULT_TOL,
              max_sweeps: int = DEFAULT_MAX_SWEEPS, init: str = "zeros",
              record_trace: bool = False) -> FitResult:
    """Fit the LASSO at a fixed penalty by cyclic coordinate descent.

    Parameters
    ----------
    X : array-like or DesignMatrix, shape (n, p)
    y : array-like, shape (n,)
    lam : float
        Penalty on the standardized scale; must be non-negative.
    tol : float
        Convergence threshold on the largest coefficient change in a full sweep.
    max_sweeps : int
        Hard cap on sweeps.
    init : {"zeros", "homotopy"}
        Starting point. ``"homotopy"`` starts from the exact path solution,
        after which descent only has to confirm optimality.
    record_trace : bool
        Keep the objective value after every sweep in ``FitResult.trace``.

    Returns
    -------
    FitResult
    """
    if not np.isfinite(lam) or lam < 0:
        raise InvalidPenalty(f"penalty must be a non-negative number, got {lam!r}")
    Xa, ya, Xs, mu, sd, ok, ybar, G, c = _prepare(X, y)
    n, p = Xa.shape
    if n < 2:
        raise InsufficientRows("need at least two rows")
    beta = np.zeros(p)
    if init == "homotopy":
        lams, betas, good = K.homotopy_path(G, c, float(lam), 40 * p + 40)
        if good:
            K.path_at(lams, betas, float(lam), beta)
    elif init != "zeros":
        raise ValueError(f"unknown init {init!r}")
    trace = np.full(max_sweeps if record_trace else 0, np.nan)
    sweeps = K.coordinate_descent(G, c, float(lam), beta, tol, max_sweeps, trace)
    beta[~ok] = 0.0
    coef = np.where(ok, beta / np.where(ok, sd, 1.0), 0.0)
    intercept = ybar - float(coef @ mu)
    obj = lasso_objective(Xa, ya, intercept, coef, lam)
    return FitResult(
        intercept=intercept,
        coef=coef,
        lam=float(lam),
        objective=obj,
        n_nonzero=int(np.count_nonzero(coef)),
        coef_std=beta,
        n_sweeps=int(sweeps),
        converged=sweeps < max_sweeps,
        trace=trace[:sweeps] if record_trace else None,
    )


def lasso_path(X, y, lams) -> np.ndarray:
    """Exact standardized-scale solutions at each penalty in ``lams``."""
    _, _, _, _, _, ok, _, G, c = _prepare(X, y)
    lams = np.asarray(lams, dtype=float)
    lo = float(lams.min())
    path_l, path_b, good = K.homotopy_path(G, c, lo, 40 * c.size + 40)
    out = np.zeros((lams.size, c.size))
    for i, lam in enumerate(lams):
        if good:
            K.path_at(path_l, path_b, float(lam), out[i])
        K.coordinate_descent(G, c, float(lam), out[i], DEFAULT_TOL, DEFAULT_MAX_SWEEPS, np.empty(0))
    return out


def cross_validate_lambda(X, y, grid_size: int = 100, holdout_fraction: float = 0.25) -> float:
    """Pick the penalty by a single rolling-origin holdout.

    Rows are taken as time-ordered: the leading rows train, the trailing
    ``holdout_fraction`` validate. Ties go to the larger penalty.
    """
    Xa, ya = check_xy(X.values if isinstance(X, DesignMatrix) else X, y)
    n = Xa.shape[0]
    if n < MIN_CV_ROWS:
        raise InsufficientRows(f"cross-validation needs at least {MIN_CV_ROWS} rows, got {n}")
    lam, _ = K.cv_select(Xa, ya, int(grid_size), holdout_rows(n, holdout_fraction),
                         DEFAULT_TOL, DEFAULT_MAX_SWEEPS)
    return float(lam)


def holdout_rows(n: int, fraction: float) -> int:
    if not 0 < fraction < 1:
        raise ValueError("holdout fraction must lie in (0, 1)")
    return min(n - 2, max(1, int(round(n * fraction))))


def ols_fit(X, y) -> FitResult:
    """Least squares with intercept via jittered normal equations."""
    Xa, ya, Xs, mu, sd, ok, ybar, G, c = _prepare(X, y)
    if not ok.all():
        bad = np.flatnonzero(~ok).tolist()
        raise SingularDesign(f"columns {bad} have zero variance")
    p = Xa.shape[1]
    if p and np.linalg.eigvalsh(G)[0] < OLS_JITTER:
        raise SingularDesign("design is rank deficient")
    try:
        L = np.linalg.cholesky(G + OLS_JITTER * np.eye(p))
    except np.linalg.LinAlgError:
        raise SingularDesign("normal equations are not positive definite") from None
    beta = np.linalg.solve(L.T, np.linalg.solve(L, c))
    coef = beta / sd
    intercept = ybar - float(coef @ mu)
    resid = ya - intercept - Xa @ coef
    return FitResult(
        intercept=intercept,
        coef=coef,
        lam=0.0,
        objective=float(resid @ resid / (2 * len(ya))),
        n_nonzero=int(np.count_nonzero(coef)),
        coef_std=beta,
    )


class LassoCD(RegressorMixin, BaseEstimator):
    """LASSO regressor with an unpenalized intercept, fit by coordinate descent."""

    def __init__(self, alpha=1.0, tol=DEFAULT_TOL, max_sweeps=DEFAULT_MAX_SWEEPS, init="zeros"):
        self.alpha = alpha
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.init = init

    def fit(self, X, y):
        res = lasso_fit(X, y, self.alpha, tol=self.tol, max_sweeps=self.max_sweeps, init=self.init)
        self.coef_ = res.coef
        self.intercept_ = res.intercept
        self.n_iter_ = res.n_sweeps
        self.objective_ = res.objective
        self.feature_names_in_ = np.asarray(column_names(X, res.coef.size), dtype=object)
        self.n_features_in_ = res.coef.size
        return self

    def predict(self, X):
        if not hasattr(self, "coef_"):
            raise NotFittedError("LassoCD is not fitted yet")
        return self.intercept_ + as_2d_float(X) @ self.coef_


class RollingLassoCV(LassoCD):
    """LASSO whose penalty is chosen by a trailing-block holdout on time-ordered rows."""

    def __init__(self, grid_size=100, holdout_fraction=0.25, tol=DEFAULT_TOL,
                 max_sweeps=DEFAULT_MAX_SWEEPS):
        self.grid_size = grid_size
        self.holdout_fraction = holdout_fraction
        self.tol = tol
        self.max_sweeps = max_sweeps

    def fit(self, X, y):
        self.alpha_ = cross_validate_lambda(X, y, self.grid_size, self.holdout_fraction)
        res = lasso_fit(X, y, self.alpha_, tol=self.tol, max_sweeps=self.max_sweeps, init="homotopy")
        self.coef_ = res.coef
        self.intercept_ = res.intercept
        self.n_iter_ = res.n_sweeps
        self.objective_ = res.objective
        self.n_features_in_ = res.coef.size
        return self
