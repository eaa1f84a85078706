"""Per-stratum propensity estimation, balancing weights, and trimming.

Propensity scores come from a logistic model fit by Newton-Raphson with
step-halving.  Balancing weights are w_t = h(e)/e and w_c = h(e)/(1-e);
their beta-gradients are carried along because the influence-function
variance of the adjusted U-statistic needs them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import HFunction, Stratum
from .errors import (
    NonConvergenceError,
    SeparationError,
    SingularDesignError,
    TrimInfeasibleError,
)

_E_FLOOR = 1e-12


@dataclass(frozen=True)
class PropensityFit:
    """Fitted logistic propensity model for one stratum."""

    beta: np.ndarray
    fitted: np.ndarray          # e(X_i), same row order as the stratum
    scores: np.ndarray          # (T_i - e_i) * X_i, n x d
    jacobian: np.ndarray        # -(1/n) sum e_i (1-e_i) X_i X_i'
    converged: bool
    iterations: int


@dataclass(frozen=True)
class WeightSet:
    """Balancing weights and their beta-gradients, split by group.

    Rows of ``grad_t``/``grad_c`` align with ``w_t``/``w_c``, which follow
    the order of the treated/control index partitions.
    """

    w_t: np.ndarray
    w_c: np.ndarray
    grad_t: np.ndarray
    grad_c: np.ndarray

    @property
    def mean_t(self) -> float:
        return float(self.w_t.mean())

    @property
    def mean_c(self) -> float:
        return float(self.w_c.mean())


@dataclass(frozen=True)
class TrimReport:
    """Outcome of a trimming rule applied to one stratum."""

    rule: str
    removed_treated: np.ndarray
    removed_control: np.ndarray
    retained: np.ndarray        # row indices into the original stratum
    stratum: Stratum            # retained subjects only
    refit: PropensityFit        # model refit on retained subjects

    @property
    def n_removed(self) -> int:
        return len(self.removed_treated) + len(self.removed_control)


def fit_logistic(s: Stratum, max_iter: int = 100, tol: float = 1e-10) -> PropensityFit:
    """Newton-Raphson logistic fit of treatment on the stratum covariates.

    Starts at beta = 0 and halves the step (up to 30 times) whenever the
    log-likelihood would decrease.  Separation is an error, not a clamp:
    diverging weights would violate the probabilistic-assignment assumption.
    """
    x = s.covariates
    t = s.treatment.astype(float)
    n, d = x.shape
    sv = np.linalg.svd(x, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise SingularDesignError(f"stratum {s.id!r}: rank-deficient design")

    beta = np.zeros(d)
    eta = x @ beta
    e = 1.0 / (1.0 + np.exp(-eta))
    ll = float(t @ np.log(e) + (1.0 - t) @ np.log1p(-e))
    grad = x.T @ (t - e)
    it = 0
    for it in range(1, max_iter + 1):
        if np.abs(grad).max() < tol * n:
            break
        w = e * (1.0 - e)
        hess = x.T @ (x * w[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            raise SingularDesignError(f"stratum {s.id!r}: singular Hessian")
        factor = 1.0
        for _ in range(31):
            cand = beta + factor * step
            eta = x @ cand
            e_new = 1.0 / (1.0 + np.exp(-eta))
            with np.errstate(divide="ignore"):
                ll_new = float(t @ np.log(e_new) + (1.0 - t) @ np.log1p(-e_new))
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * abs(ll):
                break
            factor *= 0.5
        beta, e, ll = cand, e_new, ll_new
        grad = x.T @ (t - e)
        if np.linalg.norm(beta) > 1e3 or e.min() < _E_FLOOR or e.max() > 1.0 - _E_FLOOR:
            raise SeparationError(
                f"stratum {s.id!r}: fitted propensities diverge toward 0/1 "
                f"(quasi-separation; |beta|={np.linalg.norm(beta):.3g})"
            )
    else:
        raise NonConvergenceError(
            f"stratum {s.id!r}: no convergence after {max_iter} iterations",
            beta=beta,
            grad_norm=float(np.abs(grad).max()),
        )

    if np.linalg.norm(beta) > 1e3 or e.min() < _E_FLOOR or e.max() > 1.0 - _E_FLOOR:
        raise SeparationError(
            f"stratum {s.id!r}: fitted propensities degenerate "
            f"(quasi-separation; |beta|={np.linalg.norm(beta):.3g})"
        )
    scores = (t - e)[:, None] * x
    w = e * (1.0 - e)
    jac = -(x.T @ (x * w[:, None])) / n
    return PropensityFit(
        beta=beta, fitted=e, scores=scores, jacobian=jac, converged=True, iterations=it
    )


def compute_weights(fit: PropensityFit, s: Stratum, h: HFunction) -> WeightSet:
    """Balancing weights h(e)/e, h(e)/(1-e) with analytic beta-gradients.

    d w / d beta = (d w / d e) * e(1-e) * X by the chain rule through the
    logistic link.
    """
    tr, co = s.split_groups()
    e = fit.fitted
    hv = h.value_at(e)
    hd = h.deriv_at(e)
    w_t_all = hv / e
    w_c_all = hv / (1.0 - e)
    dwt_de = (hd * e - hv) / e**2
    dwc_de = (hd * (1.0 - e) + hv) / (1.0 - e) ** 2
    de_dbeta = (e * (1.0 - e))[:, None] * s.covariates
    grad_t_all = dwt_de[:, None] * de_dbeta
    grad_c_all = dwc_de[:, None] * de_dbeta
    return WeightSet(
        w_t=w_t_all[tr],
        w_c=w_c_all[co],
        grad_t=grad_t_all[tr],
        grad_c=grad_c_all[co],
    )


def _finish_trim(s: Stratum, rule: str, keep_mask: np.ndarray) -> TrimReport:
    tr, co = s.split_groups()
    removed_t = tr[~keep_mask[tr]]
    removed_c = co[~keep_mask[co]]
    if keep_mask[tr].sum() < 2 or keep_mask[co].sum() < 2:
        raise TrimInfeasibleError(
            f"stratum {s.id!r}: trimming by rule {rule!r} leaves fewer than "
            f"2 subjects in a group"
        )
    retained = np.flatnonzero(keep_mask)
    sub = s.subset(retained)
    refit = fit_logistic(sub)
    return TrimReport(
        rule=rule,
        removed_treated=removed_t,
        removed_control=removed_c,
        retained=retained,
        stratum=sub,
        refit=refit,
    )


def trim_overlap(s: Stratum, fit: PropensityFit) -> TrimReport:
    """Drop controls below the minimum treated propensity and treated above
    the maximum control propensity, then refit the logistic model."""
    tr, co = s.split_groups()
    e = fit.fitted
    keep = np.ones(s.n, dtype=bool)
    keep[co] = e[co] >= e[tr].min()
    keep[tr] = e[tr] <= e[co].max()
    return _finish_trim(s, "overlap", keep)


def trim_hard(s: Stratum, fit: PropensityFit, gamma: float) -> TrimReport:
    """Drop subjects with propensity outside [gamma, 1-gamma], then refit."""
    if not 0.0 < gamma < 0.5:
        raise ValueError("gamma must be in (0, 1/2)")
    e = fit.fitted
    keep = (e >= gamma) & (e <= 1.0 - gamma)
    return _finish_trim(s, f"hard({gamma})", keep)


def trim_both(s: Stratum, fit: PropensityFit, gamma: float) -> TrimReport:
    """Apply the overlap rule and the hard threshold simultaneously."""
    if not 0.0 < gamma < 0.5:
        raise ValueError("gamma must be in (0, 1/2)")
    tr, co = s.split_groups()
    e = fit.fitted
    keep = (e >= gamma) & (e <= 1.0 - gamma)
    keep[co] &= e[co] >= e[tr].min()
    keep[tr] &= e[tr] <= e[co].max()
    return _finish_trim(s, f"both({gamma})", keep)
