"""Pure-numpy implementations of the U-statistic hot kernels.

Both backends share the same contract.  ``exact_pair`` evaluates the complete
four-index sum through sorted prefix sums of within-stratum outcome
differences, so it is O(m log m) in the number of (treated, control) pairs
rather than O(m^2).  ``sampled_pair`` accumulates over Monte Carlo index
quadruples.

Each returns, besides the kernel totals, the per-subject sums of the weighted
kernel over all tuples containing that subject (own weight included); those
feed the projection estimates of the variance machinery.
"""

import numpy as np


def _diff_weight(yt, yc, wt, wc):
    d = (yt[:, None] - yc[None, :]).ravel()
    w = (wt[:, None] * wc[None, :]).ravel()
    return d, w


def _rank_masses(d_sorted, cw, query):
    """For each query value, weight mass strictly below / equal among the
    sorted reference differences."""
    lo = np.searchsorted(d_sorted, query, side="left")
    hi = np.searchsorted(d_sorted, query, side="right")
    below = cw[lo]
    equal = cw[hi] - cw[lo]
    return below, equal


def exact_pair(yt_p, yc_p, wt_p, wc_p, yt_q, yc_q, wt_q, wc_q):
    """Complete weighted kernel sum and per-subject weighted-kernel sums.

    Returns (num, sphi_tp, sphi_cp, sphi_tq, sphi_cq) where ``num`` is
    sum over all tuples of w_i w_j w_k w_l * phi and ``sphi_*`` are the
    per-subject sums over tuples containing each subject.
    """
    d_p, w_p = _diff_weight(yt_p, yc_p, wt_p, wc_p)
    d_q, w_q = _diff_weight(yt_q, yc_q, wt_q, wc_q)

    o_q = np.argsort(d_q, kind="stable")
    dq_s = d_q[o_q]
    cw_q = np.concatenate(([0.0], np.cumsum(w_q[o_q])))
    tw_q = cw_q[-1]
    below, equal = _rank_masses(dq_s, cw_q, d_p)
    # phi mass seen from the p side: strictly greater + half of the ties
    f_q = (tw_q - below - equal) + 0.5 * equal
    a = (w_p * f_q).reshape(len(yt_p), len(yc_p))
    num = float(a.sum())
    sphi_tp = a.sum(axis=1)
    sphi_cp = a.sum(axis=0)

    o_p = np.argsort(d_p, kind="stable")
    dp_s = d_p[o_p]
    cw_p = np.concatenate(([0.0], np.cumsum(w_p[o_p])))
    below, equal = _rank_masses(dp_s, cw_p, d_q)
    g_p = below + 0.5 * equal
    b = (w_q * g_p).reshape(len(yt_q), len(yc_q))
    sphi_tq = b.sum(axis=1)
    sphi_cq = b.sum(axis=0)
    return num, sphi_tp, sphi_cp, sphi_tq, sphi_cq


def sampled_pair(yt_p, yc_p, wt_p, wc_p, yt_q, yc_q, wt_q, wc_q, ii, jj, kk, ll):
    """Accumulate weighted kernels over sampled index quadruples.

    Returns (sum_wphi, sum_w, sphi_tp, cnt_tp, sphi_cp, cnt_cp,
    sphi_tq, cnt_tq, sphi_cq, cnt_cq).
    """
    d1 = yt_p[ii] - yc_p[jj]
    d2 = yt_q[kk] - yc_q[ll]
    phi = (d1 < d2).astype(np.float64)
    phi += 0.5 * (d1 == d2)
    w = wt_p[ii] * wc_p[jj] * wt_q[kk] * wc_q[ll]
    wphi = w * phi
    out = [float(wphi.sum()), float(w.sum())]
    for idx, size in ((ii, len(yt_p)), (jj, len(yc_p)), (kk, len(yt_q)), (ll, len(yc_q))):
        out.append(np.bincount(idx, weights=wphi, minlength=size))
        out.append(np.bincount(idx, minlength=size).astype(np.int64))
    return tuple(out)
