"""Global heterogeneity tests and report assembly.

The adjusted test pipeline: per-stratum propensity fit, optional trimming
with refit, balancing weights, all pairwise adjusted U-statistics, joint
covariance, the global statistic T = N * sum (U_pq - 1/2)^2, and a p-value
against the simulated reference distribution of ||N(0, Sigma_hat)||^2.

The unadjusted variant runs the same engine with unit weights; the
Gail-Simon likelihood ratio test is the parametric baseline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import HFunction, StratifiedDataset
from .errors import InferenceError, ValidationError
from .numkit import RngStream, chi2_sf, mvn_sample, normal_quantile, ols_fit
from .propensity import compute_weights, fit_logistic, trim_both, trim_hard, trim_overlap
from .ustat import (
    CovarianceAssembly,
    PairStatistic,
    assemble_covariance,
    fitted_inputs,
    pair_order,
    pair_statistic,
    unit_inputs,
)

DEFAULT_REF_SAMPLES = 10**5
DEFAULT_KERNEL_FACTOR = 1000


@dataclass(frozen=True)
class HeterogeneityReport:
    """Result of a global heterogeneity test."""

    u_vector: np.ndarray
    sigma_hat: np.ndarray
    t_a: float
    p_value: float
    reference_draws: int
    pairs: tuple
    pair_cis: tuple
    trim_audit: dict
    config: dict
    seed: int
    n_total: int
    n_strata: int
    max_stat: float
    max_stat_p_value: float
    stratum_ids: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "u_vector": [float(u) for u in self.u_vector],
            "sigma_hat": [[float(v) for v in row] for row in np.atleast_2d(self.sigma_hat)],
            "t_a": float(self.t_a),
            "p_value": float(self.p_value),
            "reference_draws": self.reference_draws,
            "pairs": [
                {
                    "p": ps.pair[0],
                    "q": ps.pair[1],
                    "u": float(ps.u_value),
                    "ci_lo": float(lo),
                    "ci_hi": float(hi),
                    "sigma2": float(ps.sigma2),
                    "mode": ps.mode,
                    "n_eval": ps.n_eval,
                }
                for ps, (lo, hi) in zip(self.pairs, self.pair_cis)
            ],
            "trim": self.trim_audit,
            "config": self.config,
            "seed": self.seed,
            "n_total": self.n_total,
            "n_strata": self.n_strata,
            "max_stat": float(self.max_stat),
            "max_stat_p_value": float(self.max_stat_p_value),
            "stratum_ids": list(self.stratum_ids),
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


@dataclass(frozen=True)
class LrtReport:
    """Gail-Simon likelihood ratio test on per-stratum regression effects."""

    tau_hat: np.ndarray
    s2: np.ndarray
    tau_bar: float
    h_stat: float
    df: int
    p_value: float

    def to_dict(self) -> dict:
        return {
            "tau_hat": [float(v) for v in self.tau_hat],
            "s2": [float(v) for v in self.s2],
            "tau_bar": float(self.tau_bar),
            "h_stat": float(self.h_stat),
            "df": self.df,
            "p_value": float(self.p_value),
        }


def reference_pvalue(t_a: float, sigma_hat: np.ndarray, l: int, rng: RngStream) -> float:
    """Monte Carlo p-value of t_a against ||N(0, sigma_hat)||^2, with the
    add-one correction so it is never exactly zero."""
    if l < 1000:
        raise ValueError("l must be >= 1000")
    draws = mvn_sample(rng, np.atleast_2d(sigma_hat), l)
    norms = np.einsum("ij,ij->i", draws, draws)
    return (int((norms >= t_a).sum()) + 1) / (l + 1)


def pair_confidence_interval(ps: PairStatistic, n_pair: int | None = None,
                             alpha: float = 0.05):
    """Wald interval U +/- z * sigma_hat / sqrt(n_pair)."""
    if n_pair is None:
        n_pair = ps.n_pair
    z = normal_quantile(1.0 - alpha / 2.0)
    half = z * np.sqrt(ps.sigma2 / n_pair)
    return ps.u_value - half, ps.u_value + half


def _run_u_pipeline(
    inputs,
    group_sizes,
    rng: RngStream,
    kernel_samples,
    ref_samples,
    alpha,
    exact_limit,
    trim_audit,
    config,
    seed,
    stratum_ids,
):
    n_total = sum(group_sizes.values())
    s = len(inputs)
    m = kernel_samples if kernel_samples is not None else DEFAULT_KERNEL_FACTOR * n_total
    pairs = []
    for p, q in pair_order(s):
        ps = pair_statistic(
            inputs[p],
            inputs[q],
            pair=(p, q),
            rng=rng.substream(1, p, q),
            m=m,
            exact_limit=exact_limit,
        )
        pairs.append(ps)
    cov = assemble_covariance(pairs, group_sizes, n_total)
    u_vec = np.array([ps.u_value for ps in pairs])
    t_a = n_total * float(((u_vec - 0.5) ** 2).sum())
    max_stat = float(np.sqrt(n_total) * np.abs(u_vec - 0.5).max())
    try:
        draws = mvn_sample(rng.substream(2), cov.sigma_hat, ref_samples)
    except Exception as exc:  # Cholesky failure after jitter
        raise InferenceError(f"reference sampling failed: {exc}") from exc
    norms = np.einsum("ij,ij->i", draws, draws)
    p_value = (int((norms >= t_a).sum()) + 1) / (ref_samples + 1)
    max_ref = np.abs(draws).max(axis=1)
    max_p = (int((max_ref >= max_stat).sum()) + 1) / (ref_samples + 1)
    cis = tuple(pair_confidence_interval(ps, alpha=alpha) for ps in pairs)
    return HeterogeneityReport(
        u_vector=u_vec,
        sigma_hat=cov.sigma_hat,
        t_a=t_a,
        p_value=p_value,
        reference_draws=ref_samples,
        pairs=tuple(pairs),
        pair_cis=cis,
        trim_audit=trim_audit,
        config=config,
        seed=seed,
        n_total=n_total,
        n_strata=s,
        max_stat=max_stat,
        max_stat_p_value=max_p,
        stratum_ids=stratum_ids,
    )


def adjusted_u_test(
    ds: StratifiedDataset,
    h: HFunction = HFunction.ONE,
    trim: str = "none",
    gamma: float = 0.1,
    rng: RngStream | None = None,
    kernel_samples: int | None = None,
    ref_samples: int = DEFAULT_REF_SAMPLES,
    alpha: float = 0.05,
    exact_limit: int = 10**7,
) -> HeterogeneityReport:
    """Propensity-adjusted global heterogeneity test.

    ``trim`` is one of none/overlap/hard/both; trimmed strata are refit and
    downstream inference uses the refit propensities.  ``kernel_samples``
    defaults to 1000 * N; the complete sum is used for pairs whose tuple
    count is at most ``exact_limit``.
    """
    if rng is None:
        raise ValidationError("a seeded RngStream is required")
    if trim not in ("none", "overlap", "hard", "both"):
        raise ValidationError(f"unknown trim policy {trim!r}")

    inputs = []
    group_sizes = {}
    trim_audit = {"policy": trim, "per_stratum": []}
    for i, stratum in enumerate(ds.strata):
        fit = fit_logistic(stratum)
        removed_t = removed_c = 0
        if trim == "none":
            work, use_fit = stratum, fit
        else:
            if trim == "overlap":
                rep = trim_overlap(stratum, fit)
            elif trim == "hard":
                rep = trim_hard(stratum, fit, gamma)
            else:
                rep = trim_both(stratum, fit, gamma)
            work, use_fit = rep.stratum, rep.refit
            removed_t = len(rep.removed_treated)
            removed_c = len(rep.removed_control)
        trim_audit["per_stratum"].append(
            {
                "stratum": stratum.id,
                "removed_treated": removed_t,
                "removed_control": removed_c,
                "retained": work.n,
            }
        )
        ws = compute_weights(use_fit, work, h)
        inputs.append(fitted_inputs(work, use_fit, ws))
        group_sizes[(i, "t")] = work.n_treated
        group_sizes[(i, "c")] = work.n_control

    config = {
        "method": "adjusted",
        "h": h.value,
        "trim": trim,
        "gamma": gamma if trim in ("hard", "both") else None,
        "kernel_samples": kernel_samples,
        "ref_samples": ref_samples,
        "alpha": alpha,
    }
    return _run_u_pipeline(
        inputs,
        group_sizes,
        rng,
        kernel_samples,
        ref_samples,
        alpha,
        exact_limit,
        trim_audit,
        config,
        rng.seed,
        tuple(s.id for s in ds.strata),
    )


def unadjusted_u_test(
    ds: StratifiedDataset,
    rng: RngStream | None = None,
    kernel_samples: int | None = None,
    ref_samples: int = DEFAULT_REF_SAMPLES,
    alpha: float = 0.05,
    exact_limit: int = 10**7,
) -> HeterogeneityReport:
    """Unit-weight U test (no confounder adjustment)."""
    if rng is None:
        raise ValidationError("a seeded RngStream is required")
    inputs = [unit_inputs(s) for s in ds.strata]
    group_sizes = {}
    for i, s in enumerate(ds.strata):
        group_sizes[(i, "t")] = s.n_treated
        group_sizes[(i, "c")] = s.n_control
    config = {
        "method": "unadjusted",
        "h": None,
        "trim": "none",
        "gamma": None,
        "kernel_samples": kernel_samples,
        "ref_samples": ref_samples,
        "alpha": alpha,
    }
    trim_audit = {"policy": "none", "per_stratum": []}
    return _run_u_pipeline(
        inputs,
        group_sizes,
        rng,
        kernel_samples,
        ref_samples,
        alpha,
        exact_limit,
        trim_audit,
        config,
        rng.seed,
        tuple(s.id for s in ds.strata),
    )


def gail_simon_stat(tau_hat, s2):
    """Precision-weighted pooled effect and the heterogeneity statistic
    sum (tau_s - tau_bar)^2 / s2_s."""
    tau_hat = np.asarray(tau_hat, dtype=float)
    prec = 1.0 / np.asarray(s2, dtype=float)
    tau_bar = float((tau_hat * prec).sum() / prec.sum())
    h_stat = float(((tau_hat - tau_bar) ** 2 * prec).sum())
    return tau_bar, h_stat


def lrt_test(ds: StratifiedDataset, outcome_covariates=None) -> LrtReport:
    """Per-stratum OLS of outcome on (intercept, treatment, covariates);
    the treatment coefficients feed the chi-square heterogeneity statistic."""
    taus = []
    variances = []
    for s in ds.strata:
        covs = s.covariates[:, 1:]
        if outcome_covariates is not None:
            covs = covs[:, outcome_covariates]
        x = np.column_stack([np.ones(s.n), s.treatment.astype(float), covs])
        try:
            coef, cov = ols_fit(x, s.outcomes)
        except Exception as exc:
            raise InferenceError(f"stratum {s.id!r}: OLS failed ({exc})") from exc
        taus.append(coef[1])
        variances.append(cov[1, 1])
    tau_hat = np.array(taus)
    s2 = np.array(variances)
    tau_bar, h_stat = gail_simon_stat(tau_hat, s2)
    df = len(ds.strata) - 1
    return LrtReport(
        tau_hat=tau_hat,
        s2=s2,
        tau_bar=tau_bar,
        h_stat=h_stat,
        df=df,
        p_value=chi2_sf(h_stat, df),
    )
