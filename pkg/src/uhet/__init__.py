"""Nonparametric tests for treatment-effect heterogeneity across strata in
observational studies, via propensity-weighted multisample U-statistics."""

from .data import HFunction, Schema, StratifiedDataset, Stratum, load_dataset
from .inference import (
    HeterogeneityReport,
    LrtReport,
    adjusted_u_test,
    gail_simon_stat,
    lrt_test,
    pair_confidence_interval,
    reference_pvalue,
    unadjusted_u_test,
)
from .numkit import RngStream
from .propensity import compute_weights, fit_logistic, trim_hard, trim_overlap
from .simgen import (
    ErrorDist,
    ExperimentCell,
    PowerScenario,
    SensitivityScenario,
    generate_power_dataset,
    generate_sensitivity_dataset,
    run_experiment,
)
from .ustat import PairStatistic, kernel_phi, pair_statistic

__version__ = "0.1.0"

__all__ = [
    "ErrorDist",
    "ExperimentCell",
    "HFunction",
    "HeterogeneityReport",
    "LrtReport",
    "PairStatistic",
    "PowerScenario",
    "RngStream",
    "Schema",
    "SensitivityScenario",
    "StratifiedDataset",
    "Stratum",
    "adjusted_u_test",
    "compute_weights",
    "fit_logistic",
    "gail_simon_stat",
    "generate_power_dataset",
    "generate_sensitivity_dataset",
    "kernel_phi",
    "load_dataset",
    "lrt_test",
    "pair_confidence_interval",
    "pair_statistic",
    "reference_pvalue",
    "run_experiment",
    "trim_hard",
    "trim_overlap",
    "unadjusted_u_test",
]
