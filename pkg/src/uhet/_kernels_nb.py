"""Numba-jitted implementations of the U-statistic hot kernels.

Same contract as ``_kernels_np``; see there for the returned tuples.
The exact kernel uses the same sorted-prefix-sum scheme, with explicit
loops to avoid materializing the cross-difference outer products twice.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _diff_weight(yt, yc, wt, wc):
    nt = yt.shape[0]
    nc = yc.shape[0]
    d = np.empty(nt * nc)
    w = np.empty(nt * nc)
    r = 0
    for i in range(nt):
        for j in range(nc):
            d[r] = yt[i] - yc[j]
            w[r] = wt[i] * wc[j]
            r += 1
    return d, w


@njit(cache=True)
def _sorted_cumweights(d, w):
    order = np.argsort(d, kind="mergesort")
    ds = d[order]
    cw = np.empty(d.shape[0] + 1)
    cw[0] = 0.0
    for r in range(d.shape[0]):
        cw[r + 1] = cw[r] + w[order[r]]
    return ds, cw


@njit(cache=True)
def exact_pair(yt_p, yc_p, wt_p, wc_p, yt_q, yc_q, wt_q, wc_q):
    n_tp, n_cp = yt_p.shape[0], yc_p.shape[0]
    n_tq, n_cq = yt_q.shape[0], yc_q.shape[0]
    d_p, w_p = _diff_weight(yt_p, yc_p, wt_p, wc_p)
    d_q, w_q = _diff_weight(yt_q, yc_q, wt_q, wc_q)
    dq_s, cw_q = _sorted_cumweights(d_q, w_q)
    dp_s, cw_p = _sorted_cumweights(d_p, w_p)
    tw_q = cw_q[-1]

    num = 0.0
    sphi_tp = np.zeros(n_tp)
    sphi_cp = np.zeros(n_cp)
    r = 0
    for i in range(n_tp):
        for j in range(n_cp):
            d = d_p[r]
            lo = np.searchsorted(dq_s, d, side="left")
            hi = np.searchsorted(dq_s, d, side="right")
            below = cw_q[lo]
            equal = cw_q[hi] - cw_q[lo]
            a = w_p[r] * ((tw_q - below - equal) + 0.5 * equal)
            num += a
            sphi_tp[i] += a
            sphi_cp[j] += a
            r += 1

    sphi_tq = np.zeros(n_tq)
    sphi_cq = np.zeros(n_cq)
    r = 0
    for k in range(n_tq):
        for l in range(n_cq):
            d = d_q[r]
            lo = np.searchsorted(dp_s, d, side="left")
            hi = np.searchsorted(dp_s, d, side="right")
            below = cw_p[lo]
            equal = cw_p[hi] - cw_p[lo]
            b = w_q[r] * (below + 0.5 * equal)
            sphi_tq[k] += b
            sphi_cq[l] += b
            r += 1
    return num, sphi_tp, sphi_cp, sphi_tq, sphi_cq


@njit(cache=True)
def sampled_pair(yt_p, yc_p, wt_p, wc_p, yt_q, yc_q, wt_q, wc_q, ii, jj, kk, ll):
    m = ii.shape[0]
    sphi_tp = np.zeros(yt_p.shape[0])
    sphi_cp = np.zeros(yc_p.shape[0])
    sphi_tq = np.zeros(yt_q.shape[0])
    sphi_cq = np.zeros(yc_q.shape[0])
    cnt_tp = np.zeros(yt_p.shape[0], dtype=np.int64)
    cnt_cp = np.zeros(yc_p.shape[0], dtype=np.int64)
    cnt_tq = np.zeros(yt_q.shape[0], dtype=np.int64)
    cnt_cq = np.zeros(yc_q.shape[0], dtype=np.int64)
    sum_wphi = 0.0
    sum_w = 0.0
    for r in range(m):
        i, j, k, l = ii[r], jj[r], kk[r], ll[r]
        d1 = yt_p[i] - yc_p[j]
        d2 = yt_q[k] - yc_q[l]
        if d1 < d2:
            phi = 1.0
        elif d1 == d2:
            phi = 0.5
        else:
            phi = 0.0
        w = wt_p[i] * wc_p[j] * wt_q[k] * wc_q[l]
        wphi = w * phi
        sum_wphi += wphi
        sum_w += w
        sphi_tp[i] += wphi
        sphi_cp[j] += wphi
        sphi_tq[k] += wphi
        sphi_cq[l] += wphi
        cnt_tp[i] += 1
        cnt_cp[j] += 1
        cnt_tq[k] += 1
        cnt_cq[l] += 1
    return (
        sum_wphi,
        sum_w,
        sphi_tp,
        cnt_tp,
        sphi_cp,
        cnt_cp,
        sphi_tq,
        cnt_tq,
        sphi_cq,
        cnt_cq,
    )
