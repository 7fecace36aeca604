"""Hot numeric kernels.

Partial-correlation tests dominate the pruning pipeline (each sliding
window gets its own causal graph, and each graph runs hundreds of
conditional-independence tests), so the inner loops live here in an
njit-compiled form with pure-numpy fallbacks.  ``CAUSALPRUNE_NUMBA=0``
selects the numpy path; ``benchmarks/bench_kernels.py`` compares the two.

All kernels take float64 C-contiguous arrays.
"""

import math

import numpy as np

from ._accel import NUMBA_ENABLED, njit

# Residual variance below this fraction of the raw variance is treated as
# exactly zero (rho = 0 convention for degenerate regressions).
_DEGENERATE_REL_VAR = 1e-12


# ---------------------------------------------------------------------------
# loop implementations (njit-able)
# ---------------------------------------------------------------------------

def _corr_matrix_loop(data):
    n, p = data.shape
    means = np.zeros(p)
    for j in range(p):
        s = 0.0
        for t in range(n):
            s += data[t, j]
        means[j] = s / n
    centered = np.empty((n, p))
    norms = np.zeros(p)
    for j in range(p):
        ss = 0.0
        for t in range(n):
            c = data[t, j] - means[j]
            centered[t, j] = c
            ss += c * c
        norms[j] = math.sqrt(ss)
    corr = np.zeros((p, p))
    for i in range(p):
        corr[i, i] = 1.0
        if norms[i] == 0.0:
            continue
        for j in range(i + 1, p):
            if norms[j] == 0.0:
                continue
            s = 0.0
            for t in range(n):
                s += centered[t, i] * centered[t, j]
            r = s / (norms[i] * norms[j])
            if r > 1.0:
                r = 1.0
            elif r < -1.0:
                r = -1.0
            corr[i, j] = r
            corr[j, i] = r
    return corr


def _pcorr_from_corr_loop(corr, i, j, cond):
    # Partial correlation of variables i, j given ``cond`` from the full
    # correlation matrix, via the precision matrix of the submatrix.
    k = cond.shape[0]
    m = k + 2
    sub = np.empty((m, m))
    idx = np.empty(m, dtype=np.int64)
    idx[0] = i
    idx[1] = j
    for a in range(k):
        idx[a + 2] = cond[a]
    for a in range(m):
        for b in range(m):
            sub[a, b] = corr[idx[a], idx[b]]
    # Gauss-Jordan inversion with partial pivoting; tiny pivot -> singular.
    inv = np.zeros((m, m))
    for a in range(m):
        inv[a, a] = 1.0
    for col in range(m):
        piv = col
        best = abs(sub[col, col])
        for r in range(col + 1, m):
            if abs(sub[r, col]) > best:
                best = abs(sub[r, col])
                piv = r
        if best < 1e-12:
            return np.nan
        if piv != col:
            for c in range(m):
                tmp = sub[col, c]
                sub[col, c] = sub[piv, c]
                sub[piv, c] = tmp
                tmp = inv[col, c]
                inv[col, c] = inv[piv, c]
                inv[piv, c] = tmp
        pval = sub[col, col]
        for c in range(m):
            sub[col, c] /= pval
            inv[col, c] /= pval
        for r in range(m):
            if r == col:
                continue
            f = sub[r, col]
            if f != 0.0:
                for c in range(m):
                    sub[r, c] -= f * sub[col, c]
                    inv[r, c] -= f * inv[col, c]
    denom = inv[0, 0] * inv[1, 1]
    if denom <= 0.0:
        return np.nan
    rho = -inv[0, 1] / math.sqrt(denom)
    if rho > 1.0:
        rho = 1.0
    elif rho < -1.0:
        rho = -1.0
    return rho


def _parcorr_resid_loop(x, y, z):
    # rho of least-squares residuals of x and y on z (with intercept).
    n = x.shape[0]
    k = z.shape[1]
    xm = 0.0
    ym = 0.0
    for t in range(n):
        xm += x[t]
        ym += y[t]
    xm /= n
    ym /= n
    rx = np.empty(n)
    ry = np.empty(n)
    vx0 = 0.0
    vy0 = 0.0
    for t in range(n):
        rx[t] = x[t] - xm
        ry[t] = y[t] - ym
        vx0 += rx[t] * rx[t]
        vy0 += ry[t] * ry[t]
    if k > 0:
        zc = np.empty((n, k))
        for c in range(k):
            m = 0.0
            for t in range(n):
                m += z[t, c]
            m /= n
            for t in range(n):
                zc[t, c] = z[t, c] - m
        g = np.zeros((k, k))
        bx = np.zeros(k)
        by = np.zeros(k)
        for a in range(k):
            for b in range(a, k):
                s = 0.0
                for t in range(n):
                    s += zc[t, a] * zc[t, b]
                g[a, b] = s
                g[b, a] = s
            sx = 0.0
            sy = 0.0
            for t in range(n):
                sx += zc[t, a] * rx[t]
                sy += zc[t, a] * ry[t]
            bx[a] = sx
            by[a] = sy
        # tiny ridge keeps the normal equations solvable for collinear z
        tr = 0.0
        for a in range(k):
            tr += g[a, a]
        ridge = 1e-12 * tr / k
        for a in range(k):
            g[a, a] += ridge
        beta_x = _solve_sym(g, bx)
        beta_y = _solve_sym(g, by)
        for t in range(n):
            sx = 0.0
            sy = 0.0
            for c in range(k):
                sx += zc[t, c] * beta_x[c]
                sy += zc[t, c] * beta_y[c]
            rx[t] -= sx
            ry[t] -= sy
    vx = 0.0
    vy = 0.0
    sxy = 0.0
    for t in range(n):
        vx += rx[t] * rx[t]
        vy += ry[t] * ry[t]
        sxy += rx[t] * ry[t]
    if vx <= _DEGENERATE_REL_VAR * vx0 or vy <= _DEGENERATE_REL_VAR * vy0:
        return 0.0
    if vx == 0.0 or vy == 0.0:
        return 0.0
    rho = sxy / math.sqrt(vx * vy)
    if rho > 1.0:
        rho = 1.0
    elif rho < -1.0:
        rho = -1.0
    return rho


def _solve_sym_loop(g, b):
    # Gauss elimination with partial pivoting; zero pivot rows give beta 0.
    k = b.shape[0]
    a = np.empty((k, k + 1))
    for r in range(k):
        for c in range(k):
            a[r, c] = g[r, c]
        a[r, k] = b[r]
    for col in range(k):
        piv = col
        best = abs(a[col, col])
        for r in range(col + 1, k):
            if abs(a[r, col]) > best:
                best = abs(a[r, col])
                piv = r
        if best < 1e-300:
            continue
        if piv != col:
            for c in range(k + 1):
                tmp = a[col, c]
                a[col, c] = a[piv, c]
                a[piv, c] = tmp
        for r in range(col + 1, k):
            f = a[r, col] / a[col, col]
            if f != 0.0:
                for c in range(col, k + 1):
                    a[r, c] -= f * a[col, c]
    beta = np.zeros(k)
    for col in range(k - 1, -1, -1):
        if abs(a[col, col]) < 1e-300:
            beta[col] = 0.0
            continue
        s = a[col, k]
        for c in range(col + 1, k):
            s -= a[col, c] * beta[c]
        beta[col] = s / a[col, col]
    return beta


def _hist_entropy_loop(x, bins):
    n = x.shape[0]
    lo = x[0]
    hi = x[0]
    for t in range(1, n):
        if x[t] < lo:
            lo = x[t]
        if x[t] > hi:
            hi = x[t]
    if hi == lo:
        return 0.0
    counts = np.zeros(bins, dtype=np.int64)
    scale = bins / (hi - lo)
    for t in range(n):
        idx = int((x[t] - lo) * scale)
        if idx >= bins:
            idx = bins - 1
        counts[idx] += 1
    h = 0.0
    for b in range(bins):
        if counts[b] > 0:
            p = counts[b] / n
            h -= p * math.log(p)
    return h


def _channel_stats_loop(values, bins):
    # per-channel std / mean / histogram entropy, averaged across channels
    w, c = values.shape
    std_sum = 0.0
    mean_sum = 0.0
    ent_sum = 0.0
    col = np.empty(w)
    for ch in range(c):
        m = 0.0
        for t in range(w):
            col[t] = values[t, ch]
            m += col[t]
        m /= w
        v = 0.0
        for t in range(w):
            dv = col[t] - m
            v += dv * dv
        std_sum += math.sqrt(v / w)
        mean_sum += m
        ent_sum += _hist_entropy(col, bins)
    out = np.empty(3)
    out[0] = std_sum / c
    out[1] = mean_sum / c
    out[2] = ent_sum / c
    return out


# ---------------------------------------------------------------------------
# numpy fallbacks
# ---------------------------------------------------------------------------

def corr_matrix_np(data):
    n, p = data.shape
    centered = data - data.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    corr = np.eye(p)
    ok = norms > 0.0
    safe = np.where(ok, norms, 1.0)
    cc = (centered.T @ centered) / np.outer(safe, safe)
    cc[~ok, :] = 0.0
    cc[:, ~ok] = 0.0
    np.fill_diagonal(cc, 1.0)
    np.clip(cc, -1.0, 1.0, out=cc)
    corr[:, :] = cc
    return corr


def pcorr_from_corr_np(corr, i, j, cond):
    idx = np.concatenate(([i, j], cond)).astype(np.int64)
    sub = corr[np.ix_(idx, idx)]
    try:
        if np.linalg.cond(sub) > 1e12:
            return np.nan
        prec = np.linalg.inv(sub)
    except np.linalg.LinAlgError:
        return np.nan
    denom = prec[0, 0] * prec[1, 1]
    if denom <= 0.0:
        return np.nan
    return float(np.clip(-prec[0, 1] / math.sqrt(denom), -1.0, 1.0))


def parcorr_resid_np(x, y, z):
    rx = x - x.mean()
    ry = y - y.mean()
    vx0 = rx @ rx
    vy0 = ry @ ry
    if z.shape[1] > 0:
        zc = z - z.mean(axis=0)
        bx, *_ = np.linalg.lstsq(zc, rx, rcond=None)
        by, *_ = np.linalg.lstsq(zc, ry, rcond=None)
        rx = rx - zc @ bx
        ry = ry - zc @ by
    vx = rx @ rx
    vy = ry @ ry
    if vx <= _DEGENERATE_REL_VAR * vx0 or vy <= _DEGENERATE_REL_VAR * vy0:
        return 0.0
    if vx == 0.0 or vy == 0.0:
        return 0.0
    return float(np.clip((rx @ ry) / math.sqrt(vx * vy), -1.0, 1.0))


def hist_entropy_np(x, bins):
    lo = x.min()
    hi = x.max()
    if hi == lo:
        return 0.0
    counts, _ = np.histogram(x, bins=bins, range=(lo, hi))
    p = counts[counts > 0] / x.shape[0]
    return float(-(p * np.log(p)).sum())


def channel_stats_np(values, bins):
    out = np.empty(3)
    out[0] = values.std(axis=0).mean()
    out[1] = values.mean(axis=0).mean()
    out[2] = np.mean([hist_entropy_np(values[:, ch], bins)
                      for ch in range(values.shape[1])])
    return out


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:
    _solve_sym = njit(cache=True)(_solve_sym_loop)
    _hist_entropy = njit(cache=True)(_hist_entropy_loop)
    corr_matrix = njit(cache=True)(_corr_matrix_loop)
    pcorr_from_corr = njit(cache=True)(_pcorr_from_corr_loop)
    parcorr_resid = njit(cache=True)(_parcorr_resid_loop)
    channel_stats = njit(cache=True)(_channel_stats_loop)
    hist_entropy = _hist_entropy
else:
    _solve_sym = _solve_sym_loop
    _hist_entropy = _hist_entropy_loop
    corr_matrix = corr_matrix_np
    pcorr_from_corr = pcorr_from_corr_np
    parcorr_resid = parcorr_resid_np
    channel_stats = channel_stats_np
    hist_entropy = hist_entropy_np
