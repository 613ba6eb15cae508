"""Compiled float64 orbit kernels for the Monte Carlo experiments.

Each kernel works one sample per loop index; samples never share state, so
the parallel loops give bit-identical results for any thread count.
"""
import numba
import numpy as np

# the bundled TBB is too old for numba; skip it instead of warning on import
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

ABSORB = 1e-14
A_MAX = 10 ** 9
SQ3 = np.sqrt(3.0)
HUGE_DIGIT = np.int64(2) ** 62     # stands in for a digit beyond the float range


@numba.njit(cache=True, inline="always")
def step_f(x):
    """(a, eps, odd, Tx, w) for x in (0,1).

    w is Tx for e-type digits and iota(Tx) = (1-Tx)/(1+Tx) for o-type ones;
    in both cases -(alpha*-2a)(alpha*-2a-eps) = w (1-w) with alpha* the
    forward endpoint of the (possibly conjugated) geodesic.
    """
    if x <= 0.5:
        u = 1.0 / x
        m = np.int64(np.ceil(u))
        if m <= 3:
            return 1, 1, False, u - 2.0, u - 2.0
        if m % 2 == 0:
            a = m // 2
            w = 2.0 * a - u
            return a, -1, False, w, w
        a = (m - 1) // 2
        w = u - 2.0 * a
        return a, 1, False, w, w
    t = (1.0 + x) / (1.0 - x)
    m = np.int64(np.ceil(t))
    if m % 2 == 0:
        a = m // 2
        w = 2.0 * a - t
        return a, -1, True, (1.0 - w) / (1.0 + w), w
    a = (m - 1) // 2
    w = t - 2.0 * a
    return a, 1, True, (1.0 - w) / (1.0 + w), w


@numba.njit(cache=True, inline="always")
def dual_back_f(a, eps, odd, y):
    """hbar_d(y), the inverse branch of the dual map."""
    if not odd:
        return eps / (2.0 * a + y)
    return 1.0 / (1.0 + eps / ((a - max(0, eps)) + 1.0 / (1.0 + y)))


@numba.njit(cache=True, inline="always")
def log_f_obs(x, tx):
    if x <= 0.5:
        if tx <= 0.5:
            return -2.0 * np.log(tx)
        return np.log(2.0) - 2.0 * np.log(1.0 - tx)
    if tx > 0.5:
        return 2.0 * (np.log1p(tx) - np.log(1.0 - tx))
    return 2.0 * np.log1p(tx) - np.log(2.0) - 2.0 * np.log(tx)


@numba.njit(cache=True, inline="always")
def excursion_f(x, y, a, eps, odd, w):
    """(r, exp(h)) of the excursion coded by the point (x, y)."""
    if odd:
        alpha = (1.0 + x) / (1.0 - x)
        beta = (1.0 - y) / (1.0 + y)
    else:
        alpha = 1.0 / x
        beta = y
    La = (alpha - 1.0) / (w * (1.0 - w))
    Lb = (beta + 2.0 * a) * (beta + 2.0 * a + eps) / (beta + 1.0)
    return 0.5 * np.log(La * Lb), 0.5 * (alpha + beta)


@numba.njit(cache=True)
def _absorbed(x):
    return x < ABSORB or 1.0 - x < ABSORB


@numba.njit(cache=True)
def cstar_orbit(x, y, n_iter):
    """(2 log Q_N / N, mean log f, T_N / N, ok) along one orbit."""
    V, Q, logscale = 0.0, 1.0, 0.0
    sf, sr = 0.0, 0.0
    for _ in range(n_iter):
        if _absorbed(x):
            return 0.0, 0.0, 0.0, False
        a, eps, odd, tx, w = step_f(x)
        if a > A_MAX or w <= 0.0 or w >= 1.0:
            return 0.0, 0.0, 0.0, False
        sf += log_f_obs(x, tx)
        r, _ = excursion_f(x, y, a, eps, odd, w)
        sr += r
        if odd:
            m = a - max(0, eps)
            V, Q = m * V + (m + 1) * Q, (m + eps) * V + (m + eps + 1) * Q
        else:
            V, Q = eps * Q, V + 2.0 * a * Q
        s = abs(Q)
        V /= s
        Q /= s
        logscale += np.log(s)
        y = dual_back_f(a, eps, odd, y)
        x = tx
    return 2.0 * logscale / n_iter, sf / n_iter, sr / n_iter, True


@numba.njit(cache=True)
def digit_max_one(x, n_iter):
    best = np.int64(0)
    for _ in range(n_iter):
        if _absorbed(x):
            return HUGE_DIGIT
        a, eps, odd, tx, w = step_f(x)
        if a > A_MAX:
            return HUGE_DIGIT
        if a > best:
            best = a
        x = tx
    return best


@numba.njit(cache=True, parallel=True)
def digit_maxima(xs, n_iter):
    """max_{n<=N} a_n for each start; absorption reports HUGE_DIGIT since the
    digit that follows exceeds every threshold in use."""
    out = np.zeros(xs.shape[0], dtype=np.int64)
    for i in numba.prange(xs.shape[0]):
        out[i] = digit_max_one(xs[i], n_iter)
    return out


@numba.njit(cache=True)
def geodesic_max_one(x, y, horizon):
    """(max exp(h_n) over excursions completed by ``horizon``, their number,
    absorbed?) for the start (x, y)."""
    T, mx, n = 0.0, 0.0, 0
    while True:
        if _absorbed(x):
            return mx, n, True
        a, eps, odd, tx, w = step_f(x)
        if a > A_MAX or w <= 0.0 or w >= 1.0:
            return mx, n, True
        r, eh = excursion_f(x, y, a, eps, odd, w)
        if T + r > horizon:
            return mx, n, False
        T += r
        n += 1
        if eh > mx:
            mx = eh
        y = dual_back_f(a, eps, odd, y)
        x = tx


@numba.njit(cache=True, parallel=True)
def geodesic_maxima(xs, ys, horizon):
    """Per start (x, y): max exp(h_n) over excursions completed by flow time
    ``horizon``, the number of those excursions, and an absorption flag."""
    M = xs.shape[0]
    best = np.zeros(M)
    count = np.zeros(M, dtype=np.int64)
    lost = np.zeros(M, dtype=np.bool_)
    for i in numba.prange(M):
        best[i], count[i], lost[i] = geodesic_max_one(xs[i], ys[i], horizon)
    return best, count, lost
