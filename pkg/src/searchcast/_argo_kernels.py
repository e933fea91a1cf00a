"""Compiled design construction and batched fitting for the daily regressor.

Coefficients live in a padded layout shared by every horizon::

    [death lags 0..I | case-offset slots | query slots | Mon..Sat]

A slot that is unused at a horizon (a duplicated case offset, or a block
switched off by the feature mode) keeps coefficient 0.
"""
import numba
import numpy as np
from numba import njit, prange

from ._kernels import cv_select, fit_standardized


@njit(cache=True)
def slot_mask(n_lags, offsets, n_queries, l, use_ar, use_gt):
    n_off = offsets.shape[0]
    P = n_lags + n_off + n_queries + 6
    mask = np.zeros(P, np.bool_)
    if use_ar:
        for i in range(n_lags):
            mask[i] = True
        for j in range(n_off):
            oj = max(offsets[j], l)
            dup = False
            for jj in range(j):
                if max(offsets[jj], l) == oj:
                    dup = True
            if not dup:
                mask[n_lags + j] = True
    if use_gt:
        for k in range(n_queries):
            mask[n_lags + n_off + k] = True
    for r in range(6):
        mask[P - 6 + r] = True
    return mask


@njit(cache=True)
def _fill_row(y, c, X, qlag, wd0, g, t, l, n_lags, offsets, idx, out):
    n_off = offsets.shape[0]
    K = X.shape[1]
    q0 = n_lags + n_off
    w0 = q0 + K
    for a in range(idx.shape[0]):
        s = idx[a]
        if s < n_lags:
            out[a] = y[g, t - s]
        elif s < q0:
            out[a] = c[g, t + l - max(offsets[s - n_lags], l)]
        elif s < w0:
            k = s - q0
            out[a] = X[g, k, t + l - max(qlag[k], l)]
        else:
            # weekday of the target date; Monday = 0 .. Saturday = 5
            out[a] = 1.0 if (wd0 + t + l) % 7 == s - w0 else 0.0


@njit(cache=True)
def design_block(y, c, X, qlag, wd0, g, T, l, use_ar, use_gt, M, n_lags, offsets):
    """Training design, targets and prediction row for one (geo, anchor, horizon)."""
    mask = slot_mask(n_lags, offsets, X.shape[1], l, use_ar, use_gt)
    idx = np.flatnonzero(mask)
    p = idx.shape[0]
    Xd = np.empty((M, p))
    yd = np.empty(M)
    row = np.empty(p)
    start = T - M - l + 1
    for r in range(M):
        t = start + r
        _fill_row(y, c, X, qlag, wd0, g, t, l, n_lags, offsets, idx, Xd[r])
        yd[r] = y[g, t + l]
    _fill_row(y, c, X, qlag, wd0, g, T, l, n_lags, offsets, idx, row)
    return Xd, yd, row, idx


def _fit_tasks(y, c, X, qlag, wd0, tg, tT, tl, use_ar, use_gt, M, n_lags, offsets,
               grid_size, n_val, tol, max_sweeps):
    """Cross-validate, fit and build the prediction row for each task.

    Returns (lambda[B], intercept[B], coef[B, P], row[B, P]) in the padded layout.
    """
    B = tg.shape[0]
    P = n_lags + offsets.shape[0] + X.shape[1] + 6
    lam = np.zeros(B)
    icpt = np.zeros(B)
    coef = np.zeros((B, P))
    rows = np.zeros((B, P))
    for b in prange(B):
        Xd, yd, row, idx = design_block(y, c, X, qlag, wd0, tg[b], tT[b], tl[b],
                                        use_ar, use_gt, M, n_lags, offsets)
        lb, _ = cv_select(Xd, yd, grid_size, n_val, tol, max_sweeps)
        i0, c0, _ = fit_standardized(Xd, yd, lb, tol, max_sweeps)
        lam[b] = lb
        icpt[b] = i0
        for a in range(idx.shape[0]):
            coef[b, idx[a]] = c0[a]
            rows[b, idx[a]] = row[a]
    return lam, icpt, coef, rows


# The threaded build is slower on a single thread, so both are kept.
fit_tasks_parallel = njit(parallel=True, cache=True)(_fit_tasks)
fit_tasks_serial = njit(cache=True)(_fit_tasks)


def fit_tasks(*args):
    if numba.get_num_threads() > 1:
        return fit_tasks_parallel(*args)
    return fit_tasks_serial(*args)


@njit(cache=True)
def smooth_groups(starts, counts, icpt, coef, rows):
    """Average intercepts/coefficients over each task group; predict from its first row."""
    n = starts.shape[0]
    P = coef.shape[1]
    pred = np.empty(n)
    i_avg = np.empty(n)
    c_avg = np.zeros((n, P))
    for q in range(n):
        s0 = starts[q]
        m = counts[q]
        acc = 0.0
        for b in range(s0, s0 + m):
            acc += icpt[b]
            for j in range(P):
                c_avg[q, j] += coef[b, j]
        i_avg[q] = acc / m
        v = i_avg[q]
        for j in range(P):
            c_avg[q, j] /= m
            v += rows[s0, j] * c_avg[q, j]
        pred[q] = v
    return pred, i_avg, c_avg
