"""Adjusted four-sample U-statistics: pairwise values, projection estimates,
per-subject influence values, and covariance assembly.

For a stratum pair (p, q) the statistic is the self-normalized weighted mean
of the tie-aware kernel phi = I(d_p < d_q) + 1/2 I(d_p = d_q) over all
(treated_p, control_p, treated_q, control_q) tuples, where d is the
treated-minus-control outcome difference.  The variance estimator linearizes
the statistic through the weight means, the projection of the weighted
kernel, and the propensity estimating equation; each subject gets one
influence value psi, and Var(U) is estimated by sum over groups of
sampleVar(psi) / n_group.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Stratum
from .errors import CoverageError, DegenerateWeightsError, SingularMatrixError
from .kernels import exact_pair, sampled_pair
from .numkit import RngStream
from .propensity import PropensityFit, WeightSet

EXACT_TUPLE_LIMIT = 10**7
COVERAGE_RETRY_CAP = 100


def kernel_phi(y1t: float, y1c: float, y2t: float, y2c: float) -> float:
    """Tie-aware comparison of outcome differences between two strata."""
    d1 = y1t - y1c
    d2 = y2t - y2c
    if d1 < d2:
        return 1.0
    if d1 == d2:
        return 0.5
    return 0.0


@dataclass(frozen=True)
class StratumInputs:
    """Everything the pair engine needs from one stratum.

    For the unadjusted statistic use :func:`unit_inputs`; gradients and
    scores are zero there and the propensity terms drop out identically.
    """

    y_t: np.ndarray
    y_c: np.ndarray
    w_t: np.ndarray
    w_c: np.ndarray
    grad_t: np.ndarray
    grad_c: np.ndarray
    score_t: np.ndarray
    score_c: np.ndarray
    jacobian: np.ndarray

    @property
    def n_t(self) -> int:
        return len(self.y_t)

    @property
    def n_c(self) -> int:
        return len(self.y_c)

    @property
    def n(self) -> int:
        return self.n_t + self.n_c


def fitted_inputs(s: Stratum, fit: PropensityFit, ws: WeightSet) -> StratumInputs:
    tr, co = s.split_groups()
    return StratumInputs(
        y_t=s.outcomes[tr],
        y_c=s.outcomes[co],
        w_t=ws.w_t,
        w_c=ws.w_c,
        grad_t=ws.grad_t,
        grad_c=ws.grad_c,
        score_t=fit.scores[tr],
        score_c=fit.scores[co],
        jacobian=fit.jacobian,
    )


def unit_inputs(s: Stratum) -> StratumInputs:
    tr, co = s.split_groups()
    nt, nc = len(tr), len(co)
    return StratumInputs(
        y_t=s.outcomes[tr],
        y_c=s.outcomes[co],
        w_t=np.ones(nt),
        w_c=np.ones(nc),
        grad_t=np.zeros((nt, 1)),
        grad_c=np.zeros((nc, 1)),
        score_t=np.zeros((nt, 1)),
        score_c=np.zeros((nc, 1)),
        jacobian=-np.eye(1),
    )


@dataclass(frozen=True)
class PairStatistic:
    """One pairwise adjusted U-statistic with its influence values.

    ``influence`` maps ('p'|'q', 't'|'c') to the per-subject psi array.
    ``var_u`` estimates Var(U); ``sigma2`` is the Theorem-1 style
    normalized variance n_pair * var_u so that
    sqrt(n_pair) (U - theta) is approximately N(0, sigma2).
    """

    pair: tuple
    u_value: float
    influence: dict
    var_u: float
    n_pair: int
    n_eval: int
    mode: str

    @property
    def sigma2(self) -> float:
        return self.n_pair * self.var_u


def _check_weights(sx: StratumInputs, name: str):
    for arr in (sx.w_t, sx.w_c):
        tot = arr.sum()
        if not np.isfinite(tot) or tot <= 0.0:
            raise DegenerateWeightsError(f"stratum {name}: weight sum {tot!r}")


def _exact_accumulate(sp: StratumInputs, sq: StratumInputs):
    num, sphi_tp, sphi_cp, sphi_tq, sphi_cq = exact_pair(
        sp.y_t, sp.y_c, sp.w_t, sp.w_c, sq.y_t, sq.y_c, sq.w_t, sq.w_c
    )
    m_total = sp.n_t * sp.n_c * sq.n_t * sq.n_c
    denom = sp.w_t.sum() * sp.w_c.sum() * sq.w_t.sum() * sq.w_c.sum()
    u = num / denom
    counts = (
        np.full(sp.n_t, m_total // sp.n_t),
        np.full(sp.n_c, m_total // sp.n_c),
        np.full(sq.n_t, m_total // sq.n_t),
        np.full(sq.n_c, m_total // sq.n_c),
    )
    return u, (sphi_tp, sphi_cp, sphi_tq, sphi_cq), counts, m_total


def _sampled_accumulate(sp: StratumInputs, sq: StratumInputs, rng: RngStream, m: int):
    gen = rng.generator
    for _ in range(COVERAGE_RETRY_CAP):
        ii = gen.integers(0, sp.n_t, m)
        jj = gen.integers(0, sp.n_c, m)
        kk = gen.integers(0, sq.n_t, m)
        ll = gen.integers(0, sq.n_c, m)
        (
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
        ) = sampled_pair(
            sp.y_t, sp.y_c, sp.w_t, sp.w_c, sq.y_t, sq.y_c, sq.w_t, sq.w_c,
            ii, jj, kk, ll,
        )
        if min(cnt_tp.min(), cnt_cp.min(), cnt_tq.min(), cnt_cq.min()) > 0:
            u = sum_wphi / sum_w
            return (
                u,
                (sphi_tp, sphi_cp, sphi_tq, sphi_cq),
                (cnt_tp, cnt_cp, cnt_tq, cnt_cq),
                m,
            )
    raise CoverageError(
        f"could not cover every subject in {COVERAGE_RETRY_CAP} redraws; "
        f"increase the sampling size (m={m})"
    )


def pair_statistic(
    sp: StratumInputs,
    sq: StratumInputs,
    pair: tuple = (0, 1),
    rng: RngStream | None = None,
    m: int | None = None,
    exact_limit: int = EXACT_TUPLE_LIMIT,
) -> PairStatistic:
    """Compute U_a^{(p,q)} and its influence values.

    Uses the complete sum when the tuple count is at most ``exact_limit``
    (or when no sampling size is available), otherwise Monte Carlo sampling
    with ``m`` tuples drawn from ``rng``.
    """
    _check_weights(sp, "p")
    _check_weights(sq, "q")
    tuple_count = sp.n_t * sp.n_c * sq.n_t * sq.n_c
    if tuple_count <= exact_limit or rng is None or m is None:
        u, sphis, counts, m_total = _exact_accumulate(sp, sq)
        mode = "exact"
    else:
        u, sphis, counts, m_total = _sampled_accumulate(sp, sq, rng, m)
        mode = "sampled"

    theta = {
        ("p", "t"): float(sp.w_t.mean()),
        ("p", "c"): float(sp.w_c.mean()),
        ("q", "t"): float(sq.w_t.mean()),
        ("q", "c"): float(sq.w_c.mean()),
    }
    prod_theta = np.prod(list(theta.values()))
    c2 = 1.0 / prod_theta
    theta_star = u * prod_theta

    groups = {
        ("p", "t"): (sp.y_t, sp.w_t, sp.grad_t, sp.score_t, sphis[0], counts[0]),
        ("p", "c"): (sp.y_c, sp.w_c, sp.grad_c, sp.score_c, sphis[1], counts[1]),
        ("q", "t"): (sq.y_t, sq.w_t, sq.grad_t, sq.score_t, sphis[2], counts[2]),
        ("q", "c"): (sq.y_c, sq.w_c, sq.grad_c, sq.score_c, sphis[3], counts[3]),
    }

    # Per-stratum score coefficient: a_s = c1_s^t c3_s^t + c1_s^c c3_s^c + c2 c4_s
    coef = {}
    for skey, sx in (("p", sp), ("q", sq)):
        c4 = np.zeros(sx.grad_t.shape[1])
        a = np.zeros(sx.grad_t.shape[1])
        for gkey in ("t", "c"):
            _, w, grad, _, sphi, _ = groups[(skey, gkey)]
            c1 = -u / theta[(skey, gkey)]
            c3 = grad.mean(axis=0)
            a += c1 * c3
            c4 += (grad / w[:, None]).T @ sphi / m_total
        a += c2 * c4
        jac = sx.jacobian
        sv = np.linalg.svd(jac, compute_uv=False)
        if sv[-1] <= 1e-12 * sv[0]:
            raise SingularMatrixError("propensity Jacobian is numerically singular")
        coef[skey] = np.linalg.solve(jac, a)  # J^{-1} a (J symmetric)

    influence = {}
    var_u = 0.0
    for (skey, gkey), (y, w, grad, score, sphi, cnt) in groups.items():
        sx = sp if skey == "p" else sq
        n_grp = len(y)
        htilde = sphi / cnt
        c1 = -u / theta[(skey, gkey)]
        psi = (
            c1 * (w - theta[(skey, gkey)])
            + c2 * (htilde - theta_star)
            - (n_grp / sx.n) * (score @ coef[skey])
        )
        if not np.isfinite(psi).all():
            raise DegenerateWeightsError("non-finite influence values")
        influence[(skey, gkey)] = psi
        var_u += float(np.var(psi, ddof=1)) / n_grp

    return PairStatistic(
        pair=pair,
        u_value=float(u),
        influence=influence,
        var_u=var_u,
        n_pair=sp.n + sq.n,
        n_eval=int(m_total),
        mode=mode,
    )


@dataclass(frozen=True)
class CovarianceAssembly:
    """Estimated covariance of sqrt(N) * (vector of pairwise statistics)."""

    sigma_hat: np.ndarray
    lambda_hat: dict
    pair_order: tuple


def pair_order(n_strata: int) -> tuple:
    return tuple(
        (p, q) for p in range(n_strata) for q in range(p + 1, n_strata)
    )


def assemble_covariance(
    pairs: list, group_sizes: dict, total_n: int
) -> CovarianceAssembly:
    """Combine per-pair influence values into the joint covariance.

    ``group_sizes`` maps (stratum index, 't'|'c') to group size.  For each
    group the stacked influence vectors (zero in coordinates whose pair does
    not involve the stratum) get a sample covariance, weighted by the inverse
    empirical group fraction.
    """
    order = tuple(ps.pair for ps in pairs)
    k = len(order)
    sigma = np.zeros((k, k))
    lam = {}
    strata = sorted({s for pq in order for s in pq})
    for s in strata:
        for gkey in ("t", "c"):
            n_grp = group_sizes[(s, gkey)]
            lam[(s, gkey)] = n_grp / total_n
            stack = np.zeros((n_grp, k))
            for col, ps in enumerate(pairs):
                if s == ps.pair[0]:
                    stack[:, col] = ps.influence[("p", gkey)]
                elif s == ps.pair[1]:
                    stack[:, col] = ps.influence[("q", gkey)]
            c = np.atleast_2d(np.cov(stack, rowvar=False, ddof=1))
            sigma += c / lam[(s, gkey)]
    sigma = 0.5 * (sigma + sigma.T)
    return CovarianceAssembly(sigma_hat=sigma, lambda_hat=lam, pair_order=order)
