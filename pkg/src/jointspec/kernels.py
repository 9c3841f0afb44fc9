"""Hot numeric kernels.

Every kernel exists twice: a numba version (``*_nb``, mostly the direct
loop) and a numpy/scipy version (``*_np``, vectorised or cumulative-sum
form). The unsuffixed names dispatch on ``jointspec._accel.USE_NUMBA``.
Both paths are exercised by the test-suite and compared in
``benchmarks/bench_kernels.py``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import lfilter

from ._accel import HAS_NUMBA, USE_NUMBA, njit

# ---------------------------------------------------------------------------
# GARCH(1,1) and AR(1)-GARCH(1,1) conditional-variance recursions
# ---------------------------------------------------------------------------


@njit
def garch_filter_nb(x, omega, alpha, beta, h0):
    n = x.shape[0] - 1
    var = np.empty(n)
    dvar = np.empty((n, 3))
    h_prev = h0
    d0 = 0.0
    d1 = 0.0
    d2 = 0.0
    for i in range(n):
        e2 = x[i] * x[i]
        h = omega + alpha * e2 + beta * h_prev
        d0 = 1.0 + beta * d0
        d1 = e2 + beta * d1
        d2 = h_prev + beta * d2
        var[i] = h
        dvar[i, 0] = d0
        dvar[i, 1] = d1
        dvar[i, 2] = d2
        h_prev = h
    return var, dvar


def garch_filter_np(x, omega, alpha, beta, h0):
    x = np.asarray(x, dtype=float)
    e2 = x[:-1] ** 2
    a = [1.0, -beta]
    var = lfilter([1.0], a, omega + alpha * e2, zi=[beta * h0])[0]
    h_lag = np.concatenate(([h0], var[:-1]))
    dvar = np.empty((var.shape[0], 3))
    dvar[:, 0] = lfilter([1.0], a, np.ones_like(e2))
    dvar[:, 1] = lfilter([1.0], a, e2)
    dvar[:, 2] = lfilter([1.0], a, h_lag)
    return var, dvar


@njit
def argarch_filter_nb(x, c, phi, omega, alpha, beta, h0):
    n = x.shape[0] - 1
    mean = np.empty(n)
    var = np.empty(n)
    dmean = np.zeros((n, 5))
    dvar = np.zeros((n, 5))
    h_prev = h0
    e_prev = 0.0
    de_c = 0.0
    de_phi = 0.0
    dh = np.zeros(5)
    for i in range(n):
        m = c + phi * x[i]
        h = omega + alpha * e_prev * e_prev + beta * h_prev
        # forcing terms, then the beta-recursion on the old gradient
        g0 = 2.0 * alpha * e_prev * de_c + beta * dh[0]
        g1 = 2.0 * alpha * e_prev * de_phi + beta * dh[1]
        g2 = 1.0 + beta * dh[2]
        g3 = e_prev * e_prev + beta * dh[3]
        g4 = h_prev + beta * dh[4]
        dh[0] = g0
        dh[1] = g1
        dh[2] = g2
        dh[3] = g3
        dh[4] = g4
        mean[i] = m
        var[i] = h
        dmean[i, 0] = 1.0
        dmean[i, 1] = x[i]
        for j in range(5):
            dvar[i, j] = dh[j]
        e_prev = x[i + 1] - m
        de_c = -1.0
        de_phi = -x[i]
        h_prev = h
    return mean, var, dmean, dvar


def argarch_filter_np(x, c, phi, omega, alpha, beta, h0):
    x = np.asarray(x, dtype=float)
    n = x.shape[0] - 1
    mean = c + phi * x[:-1]
    eps = x[1:] - mean
    # innovation entering step i is eps_{i-1}; eps_0 := 0
    e_lag = np.concatenate(([0.0], eps[:-1]))
    de_c = np.concatenate(([0.0], -np.ones(n - 1)))
    de_phi = np.concatenate(([0.0], -x[:-2]))
    a = [1.0, -beta]
    var = lfilter([1.0], a, omega + alpha * e_lag**2, zi=[beta * h0])[0]
    h_lag = np.concatenate(([h0], var[:-1]))
    dvar = np.empty((n, 5))
    dvar[:, 0] = lfilter([1.0], a, 2.0 * alpha * e_lag * de_c)
    dvar[:, 1] = lfilter([1.0], a, 2.0 * alpha * e_lag * de_phi)
    dvar[:, 2] = lfilter([1.0], a, np.ones(n))
    dvar[:, 3] = lfilter([1.0], a, e_lag**2)
    dvar[:, 4] = lfilter([1.0], a, h_lag)
    dmean = np.zeros((n, 5))
    dmean[:, 0] = 1.0
    dmean[:, 1] = x[:-1]
    return mean, var, dmean, dvar


# ---------------------------------------------------------------------------
# Cramer-von Mises double sum  (1/n) sum_ij {1 - F_n(lag_i v lag_j)} w_i w_j
# ---------------------------------------------------------------------------


@njit
def cvm_double_sum_nb(lag, w):
    # equals (1/n^2) sum_l D(lag_l-)^2 with D the running sum over sorted lags
    n = lag.shape[0]
    order = np.argsort(lag, kind="mergesort")
    total = 0.0
    run = 0.0  # sum of w over lags strictly below the current tie group
    i = 0
    while i < n:
        j = i
        grp = 0.0
        while j < n and lag[order[j]] == lag[order[i]]:
            grp += w[order[j]]
            j += 1
        total += (j - i) * run * run
        run += grp
        i = j
    return total / (n * n)


def cvm_double_sum_np(lag, w):
    lag = np.asarray(lag, dtype=float)
    w = np.asarray(w, dtype=float)
    n = lag.shape[0]
    order = np.argsort(lag, kind="stable")
    s = lag[order]
    csum = np.concatenate(([0.0], np.cumsum(w[order])))
    # left limit D(lag_l-) = sum_{i: lag_i < lag_l} w_i
    left = csum[np.searchsorted(s, s, side="left")]
    return float(np.sum(left**2) / n**2)


# ---------------------------------------------------------------------------
# Nadaraya-Watson ratio for the score density
# ---------------------------------------------------------------------------


@njit
def nw_ratio_nb(lag, num, den, h, floor):
    n, d = num.shape
    out = np.zeros((n, d))
    c = 1.0 / math.sqrt(2.0 * math.pi)
    for t in range(n):
        acc = np.zeros(d)
        dacc = 0.0
        for i in range(n):
            z = (lag[i] - lag[t]) / h
            k = c * math.exp(-0.5 * z * z) / h
            dacc += k * den[i]
            for j in range(d):
                acc[j] += k * num[i, j]
        if dacc < floor:
            dacc = floor
        for j in range(d):
            out[t, j] = acc[j] / dacc
    return out


def nw_ratio_np(lag, num, den, h, floor):
    lag = np.asarray(lag, dtype=float)
    z = (lag[:, None] - lag[None, :]) / h
    kmat = np.exp(-0.5 * z * z) / (h * math.sqrt(2.0 * math.pi))
    numer = kmat.T @ num
    denom = np.maximum(kmat.T @ den, floor)
    return numer / denom[:, None]


# ---------------------------------------------------------------------------
# Khmaladze transform of the marked process
#   T(x) = n^{-1/2} sum_i w_i [1{lag_i <= x}
#                              - sum_{j: lag_j <= min(x, lag_i)} a_j . g_i]
# ---------------------------------------------------------------------------


@njit
def khmaladze_values_nb(lag, w, g, a, xs):
    n, r = g.shape
    order = np.argsort(lag, kind="mergesort")
    # R_j = sum_{i: lag_i >= lag_j} w_i g_i, by a backward pass over tie groups
    corr = np.zeros(n)
    tail = np.zeros(r)
    hi = n
    while hi > 0:
        lo = hi - 1
        while lo > 0 and lag[order[lo - 1]] == lag[order[hi - 1]]:
            lo -= 1
        for t in range(lo, hi):
            i = order[t]
            for q in range(r):
                tail[q] += w[i] * g[i, q]
        for t in range(lo, hi):
            j = order[t]
            acc = 0.0
            for q in range(r):
                acc += a[j, q] * tail[q]
            corr[j] = acc
        hi = lo
    s = np.empty(n)
    csum = np.zeros(n + 1)
    for t in range(n):
        j = order[t]
        s[t] = lag[j]
        csum[t + 1] = csum[t] + w[j] - corr[j]
    out = np.empty(xs.shape[0])
    root = math.sqrt(n)
    for t in range(xs.shape[0]):
        out[t] = csum[np.searchsorted(s, xs[t], side="right")] / root
    return out


def khmaladze_values_np(lag, w, g, a, xs):
    lag = np.asarray(lag, dtype=float)
    n = lag.shape[0]
    order = np.argsort(lag, kind="stable")
    s = lag[order]
    wg = (w[:, None] * g)[order]
    # tail sums over lag_i >= s_j, tie groups handled via searchsorted
    tail = np.cumsum(wg[::-1], axis=0)[::-1]
    tail = np.vstack((tail, np.zeros((1, g.shape[1]))))
    first = np.searchsorted(s, s, side="left")
    R = tail[first]
    corr = np.einsum("ij,ij->i", a[order], R)
    csum = np.concatenate(([0.0], np.cumsum(w[order] - corr)))
    idx = np.searchsorted(s, np.asarray(xs, dtype=float), side="right")
    return csum[idx] / math.sqrt(n)


# ---------------------------------------------------------------------------
# Multiplier-bootstrap kernel matrix
# ---------------------------------------------------------------------------


@njit
def build_m_nb(surv, w, phi, L, N):
    n = w.shape[0]
    d = phi.shape[1]
    pn = np.zeros((n, d))
    for i in range(n):
        for p in range(d):
            acc = 0.0
            for q in range(d):
                acc += N[p, q] * phi[i, q]
            pn[i, p] = acc
    M = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            s = surv[i] if surv[i] < surv[j] else surv[j]
            t2 = 0.0
            t3 = 0.0
            t4 = 0.0
            for p in range(d):
                t2 += phi[j, p] * L[i, p]
                t3 += phi[i, p] * L[j, p]
                t4 += phi[i, p] * pn[j, p]
            v = w[i] * w[j] * s - w[i] * t2 - w[j] * t3 + t4
            M[i, j] = v
            M[j, i] = v
    return M


def build_m_np(surv, w, phi, L, N):
    first = np.minimum.outer(surv, surv) * np.outer(w, w)
    cross = w[:, None] * (L @ phi.T)
    M = first - cross - cross.T + phi @ N @ phi.T
    return 0.5 * (M + M.T)


# ---------------------------------------------------------------------------
# Imhof integrand  sin(theta(u)) / (u rho(u))
# ---------------------------------------------------------------------------


def imhof_integrand_py(u, lam, q):
    lu = lam * u
    theta = 0.5 * np.sum(np.arctan(lu)) - 0.5 * q * u
    logrho = 0.25 * np.sum(np.log1p(lu * lu))
    return math.sin(theta) / (u * math.exp(logrho))


imhof_lowlevel = None

if HAS_NUMBA:
    from numba import carray, cfunc, types

    @cfunc(types.float64(types.float64, types.CPointer(types.float64)), cache=True)
    def _imhof_cfunc(u, data):
        # data = [q, mode, r, lam_1, ..., lam_r]; mode 0: full integrand,
        # 1: sin(A)/(u rho), 2: cos(A)/(u rho) with A = sum(arctan)/2
        q = data[0]
        mode = int(data[1])
        r = int(data[2])
        lam = carray(data, (r + 3,))
        th = 0.0
        lr = 0.0
        for k in range(3, r + 3):
            lu = lam[k] * u
            th += math.atan(lu)
            lr += math.log1p(lu * lu)
        den = u * math.exp(0.25 * lr)
        if mode == 1:
            return math.sin(0.5 * th) / den
        if mode == 2:
            return math.cos(0.5 * th) / den
        return math.sin(0.5 * th - 0.5 * q * u) / den

    def imhof_lowlevel(lam, q, mode=0):
        """Return a ``scipy.LowLevelCallable`` and the buffer it points into."""
        import ctypes

        from scipy import LowLevelCallable

        buf = np.ascontiguousarray(np.concatenate(([q, float(mode), float(lam.size)], lam)))
        ptr = ctypes.cast(buf.ctypes.data, ctypes.c_void_p)
        fn = LowLevelCallable(_imhof_cfunc.ctypes, ptr, signature="double (double, void *)")
        return fn, buf


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if USE_NUMBA:
    garch_filter = garch_filter_nb
    argarch_filter = argarch_filter_nb
    cvm_double_sum = cvm_double_sum_nb
    nw_ratio = nw_ratio_nb
    khmaladze_values = khmaladze_values_nb
    build_m = build_m_nb
else:
    garch_filter = garch_filter_np
    argarch_filter = argarch_filter_np
    cvm_double_sum = cvm_double_sum_np
    nw_ratio = nw_ratio_np
    khmaladze_values = khmaladze_values_np
    build_m = build_m_np
