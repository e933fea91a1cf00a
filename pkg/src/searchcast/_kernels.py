"""Compiled kernels for the penalized-regression solver.

All routines operate on the standardized problem

    minimize  1/2 b'Gb - c'b + lam * |b|_1,   G = Xs'Xs/n,  c = Xs'(y - ybar)/n

where Xs holds centered columns scaled to unit (population) variance. Columns
with zero variance are carried as all-zero and never enter the model.
"""
import numpy as np
from numba import njit, prange

ZERO_STD_RTOL = 1e-10
# Reassociation lets reductions vectorize; NaN/inf semantics stay strict.
FAST = {"reassoc", "contract"}
GRID_DECADES = 4.0


@njit(cache=True, fastmath=FAST)
def standardize(X, out):
    """Center/scale columns of X into ``out``; return (mean, std, usable)."""
    n, p = X.shape
    mu = np.zeros(p)
    sd = np.zeros(p)
    ok = np.zeros(p, np.bool_)
    for j in range(p):
        s = 0.0
        amax = 0.0
        for i in range(n):
            s += X[i, j]
            a = abs(X[i, j])
            if a > amax:
                amax = a
        m = s / n
        v = 0.0
        for i in range(n):
            d = X[i, j] - m
            v += d * d
        sdj = np.sqrt(v / n)
        mu[j] = m
        sd[j] = sdj
        if sdj > ZERO_STD_RTOL * amax and sdj > 0.0:
            ok[j] = True
            for i in range(n):
                out[i, j] = (X[i, j] - m) / sdj
        else:
            for i in range(n):
                out[i, j] = 0.0
    return mu, sd, ok


@njit(cache=True, fastmath=FAST)
def gram(Xs, y, ybar):
    n, p = Xs.shape
    XT = np.ascontiguousarray(Xs.T)
    r = np.empty(n)
    for i in range(n):
        r[i] = y[i] - ybar
    G = np.zeros((p, p))
    c = np.zeros(p)
    for a in range(p):
        xa = XT[a]
        for b in range(a, p):
            xb = XT[b]
            s = 0.0
            for i in range(n):
                s += xa[i] * xb[i]
            G[a, b] = s / n
            G[b, a] = s / n
        s = 0.0
        for i in range(n):
            s += xa[i] * r[i]
        c[a] = s / n
    return G, c


@njit(cache=True, fastmath=FAST)
def lambda_grid(lam_max, size):
    out = np.empty(size)
    if size == 1:
        out[0] = lam_max
        return out
    for i in range(size):
        out[i] = lam_max * 10.0 ** (-GRID_DECADES * i / (size - 1))
    return out


@njit(cache=True, fastmath=FAST)
def objective(G, c, lam, beta):
    p = c.shape[0]
    q = 0.0
    l1 = 0.0
    for a in range(p):
        if beta[a] == 0.0:
            continue
        l1 += abs(beta[a])
        s = 0.0
        for b in range(p):
            s += G[a, b] * beta[b]
        q += beta[a] * (0.5 * s - c[a])
    return q + lam * l1


@njit(cache=True, fastmath=FAST)
def _coord(G, g, beta, j, lam):
    z = g[j] + G[j, j] * beta[j]
    if z > lam:
        return (z - lam) / G[j, j]
    if z < -lam:
        return (z + lam) / G[j, j]
    return 0.0


@njit(cache=True, fastmath=FAST)
def coordinate_descent(G, c, lam, beta, tol, max_sweeps, trace):
    """Cyclic coordinate descent with soft-thresholding, in place on ``beta``.

    Alternates full sweeps with sweeps restricted to the current nonzero set;
    stops after a full sweep whose largest coefficient change is below ``tol``.
    ``trace`` (possibly empty) receives the objective after each sweep.
    Returns the number of sweeps performed.
    """
    p = c.shape[0]
    g = c.copy()
    for a in range(p):
        if beta[a] != 0.0:
            for k in range(p):
                g[k] -= G[k, a] * beta[a]
    sweeps = 0
    ntrace = trace.shape[0]
    while sweeps < max_sweeps:
        maxd = 0.0
        for j in range(p):
            if G[j, j] <= 0.0:
                beta[j] = 0.0
                continue
            b = _coord(G, g, beta, j, lam)
            d = b - beta[j]
            if d != 0.0:
                beta[j] = b
                for k in range(p):
                    g[k] -= G[k, j] * d
                if abs(d) > maxd:
                    maxd = abs(d)
        if sweeps < ntrace:
            trace[sweeps] = objective(G, c, lam, beta)
        sweeps += 1
        if maxd < tol:
            break
        while sweeps < max_sweeps:
            maxd = 0.0
            for j in range(p):
                if beta[j] == 0.0:
                    continue
                b = _coord(G, g, beta, j, lam)
                d = b - beta[j]
                if d != 0.0:
                    beta[j] = b
                    for k in range(p):
                        g[k] -= G[k, j] * d
                    if abs(d) > maxd:
                        maxd = abs(d)
            if sweeps < ntrace:
                trace[sweeps] = objective(G, c, lam, beta)
            sweeps += 1
            if maxd < tol:
                break
    return sweeps


@njit(cache=True, fastmath=FAST)
def _chol_solve2(L, LT, k, r1, r2, o1, o2):
    """Solve (L L') o = r for two right-hand sides; LT mirrors L transposed."""
    for i in range(k):
        s1 = r1[i]
        s2 = r2[i]
        Li = L[i]
        for j in range(i):
            s1 -= Li[j] * o1[j]
            s2 -= Li[j] * o2[j]
        o1[i] = s1 / Li[i]
        o2[i] = s2 / Li[i]
    for i in range(k - 1, -1, -1):
        s1 = o1[i]
        s2 = o2[i]
        Ui = LT[i]
        for j in range(i + 1, k):
            s1 -= Ui[j] * o1[j]
            s2 -= Ui[j] * o2[j]
        o1[i] = s1 / Ui[i]
        o2[i] = s2 / Ui[i]


@njit(cache=True, fastmath=FAST)
def _chol_refactor(G, act, k, L, LT):
    """Cholesky of G[act, act] into L (and its transpose); False if not numerically PD."""
    for i in range(k):
        for j in range(i + 1):
            s = G[act[i], act[j]]
            for m in range(j):
                s -= L[i, m] * L[j, m]
            if i == j:
                if s <= 1e-12 * G[act[i], act[i]]:
                    return False
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
            LT[j, i] = L[i, j]
    return True


@njit(cache=True, fastmath=FAST)
def homotopy_path(G, c, lam_stop, max_steps):
    """Exact LASSO solution path by homotopy (LARS with the lasso modification).

    Returns breakpoints ``lams`` (decreasing from max|c|, where the solution
    is zero, to lam_stop) and the solutions ``betas`` at those points;
    the solution is linear in lambda between consecutive breakpoints.
    ``ok`` is False if the step budget ran out or the active Gram matrix
    became singular; callers then fall back to coordinate descent.
    """
    p = c.shape[0]
    cap = min(max_steps, 2 * p + 8) + 3
    lams = np.empty(cap)
    betas = np.empty((cap, p))
    betas[0] = 0.0
    beta = np.zeros(p)
    act = np.empty(p, np.int64)
    inact = np.ones(p, np.bool_)
    blocked = np.zeros(p, np.bool_)
    sgn = np.zeros(p)
    L = np.zeros((p, p))
    LT = np.zeros((p, p))
    u = np.zeros(p)
    v = np.zeros(p)
    rhs = np.zeros(p)
    rhs2 = np.zeros(p)
    k = 0

    cmax = 0.0
    for j in range(p):
        if G[j, j] > 0.0 and abs(c[j]) > cmax:
            cmax = abs(c[j])
    m = 0
    lam = cmax
    if lam <= lam_stop or cmax == 0.0:
        lams[m] = lam_stop
        m += 1
        return lams[:m], betas[:m], True
    lams[m] = lam
    m += 1
    # variables at the boundary enter
    for j in range(p):
        if G[j, j] > 0.0 and abs(c[j]) >= lam * (1.0 - 1e-12):
            act[k] = j
            inact[j] = False
            sgn[j] = 1.0 if c[j] > 0 else -1.0
            k += 1
    if not _chol_refactor(G, act, k, L, LT):
        return lams[:m], betas[:m], False

    steps = 0
    while True:
        if steps >= max_steps:
            return lams[:m], betas[:m], False
        steps += 1
        if m >= cap:
            cap = 2 * cap
            grown_l = np.empty(cap)
            grown_b = np.empty((cap, p))
            grown_l[:m] = lams[:m]
            grown_b[:m] = betas[:m]
            lams = grown_l
            betas = grown_b
        for i in range(k):
            rhs[i] = c[act[i]]
            rhs2[i] = sgn[act[i]]
        _chol_solve2(L, LT, k, rhs, rhs2, u, v)
        nxt = lam_stop
        evt = -1
        evt_add = False
        evt_sgn = 0.0
        hi = lam * (1.0 - 1e-12)
        for i in range(k):
            if v[i] != 0.0:
                lz = u[i] / v[i]
                if lz < hi and lz > nxt:
                    nxt = lz
                    evt = i
                    evt_add = False
        for j in range(p):
            if not inact[j] or blocked[j] or G[j, j] <= 0.0:
                continue
            aj = c[j]
            bj = 0.0
            for i in range(k):
                gji = G[j, act[i]]
                aj -= gji * u[i]
                bj += gji * v[i]
            den = 1.0 - bj
            if den > 0.0:
                lz = aj / den
                if lz < hi and lz > nxt:
                    nxt = lz
                    evt = j
                    evt_add = True
                    evt_sgn = 1.0
            den = -1.0 - bj
            if den < 0.0:
                lz = aj / den
                if lz < hi and lz > nxt:
                    nxt = lz
                    evt = j
                    evt_add = True
                    evt_sgn = -1.0
        lam = nxt
        for i in range(k):
            beta[act[i]] = u[i] - lam * v[i]
        if evt < 0:
            lams[m] = lam
            betas[m] = beta
            m += 1
            return lams[:m], betas[:m], True
        if evt_add:
            # append row to the Cholesky factor
            for i in range(k):
                s = G[evt, act[i]]
                for q in range(i):
                    s -= L[k, q] * L[i, q]
                L[k, i] = s / L[i, i]
                LT[i, k] = L[k, i]
            s = G[evt, evt]
            for q in range(k):
                s -= L[k, q] * L[k, q]
            if s <= 1e-10 * G[evt, evt]:
                blocked[evt] = True
            else:
                L[k, k] = np.sqrt(s)
                LT[k, k] = L[k, k]
                act[k] = evt
                inact[evt] = False
                sgn[evt] = evt_sgn
                k += 1
        else:
            j = act[evt]
            beta[j] = 0.0
            sgn[j] = 0.0
            inact[j] = True
            for i in range(evt, k - 1):
                act[i] = act[i + 1]
            k -= 1
            if not _chol_refactor(G, act, k, L, LT):
                return lams[:m], betas[:m], False
        lams[m] = lam
        betas[m] = beta
        m += 1


@njit(cache=True, fastmath=FAST)
def path_at(lams, betas, lam, out):
    """Linear interpolation of a homotopy path at ``lam``."""
    m = lams.shape[0]
    p = out.shape[0]
    if lam >= lams[0]:
        for j in range(p):
            out[j] = betas[0, j]
        return
    for i in range(1, m):
        if lam >= lams[i]:
            w = (lams[i - 1] - lam) / (lams[i - 1] - lams[i])
            for j in range(p):
                out[j] = betas[i - 1, j] + w * (betas[i, j] - betas[i - 1, j])
            return
    for j in range(p):
        out[j] = betas[m - 1, j]


@njit(cache=True, fastmath=FAST)
def solve_at(G, c, lam, beta, tol, max_sweeps):
    """Solution at ``lam``: exact homotopy warm start, polished by CD."""
    p = c.shape[0]
    lams, betas, ok = homotopy_path(G, c, lam, 40 * p + 40)
    if ok:
        path_at(lams, betas, lam, beta)
    else:
        beta[:] = 0.0
    return coordinate_descent(G, c, lam, beta, tol, max_sweeps, np.empty(0))


@njit(cache=True, fastmath=FAST)
def cv_select(X, y, grid_size, n_val, tol, max_sweeps):
    """Rolling-origin holdout choice of lambda.

    The grid runs from lambda_max (full data) down by four decades. Models are
    fit on the leading rows and scored on the trailing ``n_val`` rows; the
    largest lambda attaining the minimum validation MSE wins.
    Returns (lambda, lambda_max).
    """
    n, p = X.shape
    Xs = np.empty((n, p))
    mu, sd, ok = standardize(X, Xs)
    ybar = 0.0
    for i in range(n):
        ybar += y[i]
    ybar /= n
    lmax = 0.0
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += Xs[i, j] * (y[i] - ybar)
        s = abs(s) / n
        if s > lmax:
            lmax = s
    if grid_size == 1 or lmax == 0.0:
        return lmax, lmax
    grid = lambda_grid(lmax, grid_size)
    ntr = n - n_val
    Xt = np.empty((ntr, p))
    mut, sdt, okt = standardize(X[:ntr], Xt)
    ytb = 0.0
    for i in range(ntr):
        ytb += y[i]
    ytb /= ntr
    Gt, ct = gram(Xt, y[:ntr], ytb)
    Xv = np.zeros((n_val, p))
    for j in range(p):
        if okt[j]:
            for i in range(n_val):
                Xv[i, j] = (X[ntr + i, j] - mut[j]) / sdt[j]
    lams, betas, good = homotopy_path(Gt, ct, grid[grid_size - 1], 40 * p + 40)
    best = np.inf
    best_lam = grid[0]
    if good:
        # Predictions are linear in lambda between breakpoints, so evaluate
        # them at the breakpoints once and interpolate along the grid.
        m = lams.shape[0]
        pk = np.zeros((m, n_val))
        for a in range(m):
            for j in range(p):
                bj = betas[a, j]
                if bj != 0.0:
                    for i in range(n_val):
                        pk[a, i] += Xv[i, j] * bj
        seg = 1
        for gi in range(grid_size):
            lam = grid[gi]
            if lam >= lams[0]:
                w = -1.0
            else:
                while seg < m - 1 and lam < lams[seg]:
                    seg += 1
                w = (lams[seg - 1] - lam) / (lams[seg - 1] - lams[seg])
                if w > 1.0:
                    w = 1.0
            err = 0.0
            for i in range(n_val):
                if w < 0.0:
                    pr = pk[0, i]
                else:
                    pr = pk[seg - 1, i] + w * (pk[seg, i] - pk[seg - 1, i])
                r = y[ntr + i] - ytb - pr
                err += r * r
            err /= n_val
            if err < best:
                best = err
                best_lam = lam
        return best_lam, lmax
    beta = np.zeros(p)
    for gi in range(grid_size):
        lam = grid[gi]
        coordinate_descent(Gt, ct, lam, beta, tol, max_sweeps, np.empty(0))
        err = 0.0
        for i in range(n_val):
            r = y[ntr + i] - ytb
            for j in range(p):
                if beta[j] != 0.0:
                    r -= Xv[i, j] * beta[j]
            err += r * r
        err /= n_val
        if err < best:
            best = err
            best_lam = lam
    return best_lam, lmax


@njit(cache=True, fastmath=FAST)
def fit_standardized(X, y, lam, tol, max_sweeps):
    """Fit at fixed lambda; returns (intercept, coef on original scale, sweeps)."""
    n, p = X.shape
    Xs = np.empty((n, p))
    mu, sd, ok = standardize(X, Xs)
    ybar = 0.0
    for i in range(n):
        ybar += y[i]
    ybar /= n
    G, c = gram(Xs, y, ybar)
    beta = np.zeros(p)
    sweeps = solve_at(G, c, lam, beta, tol, max_sweeps)
    coef = np.zeros(p)
    icpt = ybar
    for j in range(p):
        if ok[j] and beta[j] != 0.0:
            coef[j] = beta[j] / sd[j]
            icpt -= coef[j] * mu[j]
    return icpt, coef, sweeps


@njit(parallel=True, cache=True, fastmath=FAST)
def batch_cv_fit(Xb, yb, grid_size, n_val, tol, max_sweeps):
    """Cross-validate lambda and refit on every problem of a batch.

    Xb: (B, n, p), yb: (B, n). Returns (lam, intercept, coef[B, p]).
    """
    B, n, p = Xb.shape
    lam = np.zeros(B)
    icpt = np.zeros(B)
    coef = np.zeros((B, p))
    for b in prange(B):
        lb, _ = cv_select(Xb[b], yb[b], grid_size, n_val, tol, max_sweeps)
        i0, c0, _ = fit_standardized(Xb[b], yb[b], lb, tol, max_sweeps)
        lam[b] = lb
        icpt[b] = i0
        coef[b] = c0
    return lam, icpt, coef
