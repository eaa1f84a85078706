import math

import numpy as np
import pytest

from uhet.data import HFunction, Stratum
from uhet.errors import SeparationError, TrimInfeasibleError
from uhet.propensity import (
    compute_weights,
    fit_logistic,
    trim_both,
    trim_hard,
    trim_overlap,
)
from conftest import make_null_stratum


def intercept_only_stratum(n_treated, n_control):
    n = n_treated + n_control
    t = np.array([1] * n_treated + [0] * n_control)
    return Stratum(id="s", outcomes=np.arange(float(n)), treatment=t,
                   covariates=np.ones((n, 1)))


def test_intercept_only_mle():
    fit = fit_logistic(intercept_only_stratum(3, 7))
    assert fit.beta[0] == pytest.approx(math.log(3.0 / 7.0), abs=1e-8)
    assert np.allclose(fit.fitted, 0.3, atol=1e-8)
    assert fit.converged


def test_score_vanishes_at_optimum(gen):
    s = make_null_stratum(gen, "s", n=80)
    fit = fit_logistic(s)
    assert np.abs(fit.scores.sum(axis=0)).max() < 1e-6


def test_jacobian_matches_definition(gen):
    s = make_null_stratum(gen, "s", n=60)
    fit = fit_logistic(s)
    e = fit.fitted
    x = s.covariates
    jac = -(x.T @ (x * (e * (1 - e))[:, None])) / s.n
    assert np.allclose(fit.jacobian, jac)


def test_separation_detected():
    z = np.array([-3.0, -2.0, -1.5, 1.5, 2.0, 3.0])
    t = (z > 0).astype(int)
    s = Stratum(id="s", outcomes=np.zeros(6), treatment=t,
                covariates=np.column_stack([np.ones(6), z]))
    with pytest.raises(SeparationError):
        fit_logistic(s)


def test_matches_grid_search_maximizer(gen):
    s = make_null_stratum(gen, "s", n=120)
    fit = fit_logistic(s)
    x = s.covariates
    t = s.treatment.astype(float)

    def loglik(beta):
        eta = x @ beta
        return float(t @ eta - np.logaddexp(0.0, eta).sum())

    # refine a 41x41 grid four times around the running maximizer
    center = np.zeros(2)
    width = 3.0
    for _ in range(4):
        g0 = np.linspace(center[0] - width, center[0] + width, 41)
        g1 = np.linspace(center[1] - width, center[1] + width, 41)
        best = max(((loglik(np.array([a, b])), a, b) for a in g0 for b in g1))
        center = np.array([best[1], best[2]])
        width = width / 10.0
    assert np.abs(fit.beta - center).max() < 1e-4


@pytest.mark.parametrize("h", list(HFunction))
def test_weight_formulas(gen, h):
    s = make_null_stratum(gen, "s", n=50)
    fit = fit_logistic(s)
    ws = compute_weights(fit, s, h)
    tr, co = s.split_groups()
    e = fit.fitted
    assert np.allclose(ws.w_t, h.value_at(e[tr]) / e[tr])
    assert np.allclose(ws.w_c, h.value_at(e[co]) / (1.0 - e[co]))
    assert (ws.w_t > 0).all() and (ws.w_c > 0).all()


@pytest.mark.parametrize("h", list(HFunction))
def test_weight_gradients_match_finite_differences(gen, h):
    s = make_null_stratum(gen, "s", n=40)
    fit = fit_logistic(s)
    ws = compute_weights(fit, s, h)
    tr, co = s.split_groups()
    x = s.covariates
    step = 1e-5

    def weights_at(beta):
        e = 1.0 / (1.0 + np.exp(-(x @ beta)))
        hv = h.value_at(e)
        return hv / e, hv / (1.0 - e)

    for j in range(x.shape[1]):
        dv = np.zeros(x.shape[1])
        dv[j] = step
        wt_hi, wc_hi = weights_at(fit.beta + dv)
        wt_lo, wc_lo = weights_at(fit.beta - dv)
        fd_t = (wt_hi - wt_lo)[tr] / (2 * step)
        fd_c = (wc_hi - wc_lo)[co] / (2 * step)
        scale_t = np.maximum(np.abs(fd_t), 1e-3)
        scale_c = np.maximum(np.abs(fd_c), 1e-3)
        assert (np.abs(ws.grad_t[:, j] - fd_t) / scale_t).max() < 1e-6
        assert (np.abs(ws.grad_c[:, j] - fd_c) / scale_c).max() < 1e-6


def test_weighted_covariate_balance():
    # with h = 1 the weighted covariate means in both groups estimate the
    # population mean, so they should nearly agree at large n
    gen = np.random.default_rng(5)
    s = make_null_stratum(gen, "s", n=5000, gamma=1.0)
    fit = fit_logistic(s)
    ws = compute_weights(fit, s, HFunction.ONE)
    tr, co = s.split_groups()
    z = s.covariates[:, 1]
    mean_t = (ws.w_t * z[tr]).sum() / ws.w_t.sum()
    mean_c = (ws.w_c * z[co]).sum() / ws.w_c.sum()
    assert abs(mean_t - mean_c) < 0.1


def overlap_test_stratum():
    # propensities spread widely so both trimming rules have work to do
    gen = np.random.default_rng(17)
    return make_null_stratum(gen, "s", n=300, gamma=3.0)


def test_trim_overlap_rule():
    s = overlap_test_stratum()
    fit = fit_logistic(s)
    tr, co = s.split_groups()
    e = fit.fitted
    rep = trim_overlap(s, fit)
    expect_rm_c = set(co[e[co] < e[tr].min()])
    expect_rm_t = set(tr[e[tr] > e[co].max()])
    assert set(rep.removed_control) == expect_rm_c
    assert set(rep.removed_treated) == expect_rm_t
    assert rep.stratum.n == s.n - len(expect_rm_c) - len(expect_rm_t)
    assert rep.refit.converged


def test_trim_hard_rule():
    s = overlap_test_stratum()
    fit = fit_logistic(s)
    rep = trim_hard(s, fit, 0.2)
    e = fit.fitted
    kept = (e >= 0.2) & (e <= 0.8)
    assert rep.stratum.n == int(kept.sum())
    assert rep.n_removed == s.n - int(kept.sum())
    assert rep.n_removed > 0
    refit_e = rep.refit.fitted
    assert refit_e.shape[0] == rep.stratum.n


def test_trim_both_is_intersection():
    s = overlap_test_stratum()
    fit = fit_logistic(s)
    both = trim_both(s, fit, 0.2)
    hard = trim_hard(s, fit, 0.2)
    overlap = trim_overlap(s, fit)
    assert set(both.retained) == set(hard.retained) & set(overlap.retained)


def test_trim_infeasible():
    s = overlap_test_stratum()
    fit = fit_logistic(s)
    with pytest.raises(TrimInfeasibleError):
        trim_hard(s, fit, 0.499)


def test_trim_gamma_domain():
    s = overlap_test_stratum()
    fit = fit_logistic(s)
    for g in (0.0, 0.5, -0.1):
        with pytest.raises(ValueError):
            trim_hard(s, fit, g)
