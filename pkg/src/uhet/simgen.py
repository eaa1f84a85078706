"""Scenario generators and the Monte Carlo experiment runner.

Two families of synthetic data: a three-stratum power design with a single
confounder entering both the outcome and the treatment assignment, and a
sensitivity design with quadratic terms that the analysis model deliberately
omits.  The runner evaluates the adjusted tests, the unadjusted U test, and
the regression LRT over replication grids with common random numbers for the
data across effect sizes.
"""

from __future__ import annotations

import enum
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import HFunction, StratifiedDataset, Stratum
from .errors import UhetError, ValidationError
from .inference import adjusted_u_test, lrt_test, unadjusted_u_test
from .numkit import RngStream

REGEN_CAP = 100


class ErrorDist(enum.Enum):
    """Outcome error distributions used across the simulation studies."""

    NORMAL = "normal"
    UNIFORM = "uniform"
    STUDENT_T4 = "t4"
    BIMODAL = "bimodal"

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        if self is ErrorDist.NORMAL:
            return gen.standard_normal(size)
        if self is ErrorDist.UNIFORM:
            return gen.uniform(-2.0, 2.0, size)
        if self is ErrorDist.STUDENT_T4:
            z = gen.standard_normal(size)
            c = gen.chisquare(4.0, size)
            return z / np.sqrt(c / 4.0)
        mean = np.where(gen.integers(0, 2, size) == 1, 5.0, -5.0)
        return mean + gen.standard_normal(size)

    @property
    def variance(self) -> float:
        return {
            ErrorDist.NORMAL: 1.0,
            ErrorDist.UNIFORM: 4.0 / 3.0,
            ErrorDist.STUDENT_T4: 2.0,
            ErrorDist.BIMODAL: 26.0,
        }[self]


@dataclass(frozen=True)
class PowerScenario:
    """Three strata, confounder Z, effect sizes (1, 1+delta, 1+2*delta)."""

    n: int = 200
    delta: float = 0.0
    error: ErrorDist = ErrorDist.NORMAL
    gamma: tuple = (1.0, -1.0, 1.0)

    def __post_init__(self):
        if self.delta < 0:
            raise ValidationError("delta must be >= 0")
        if self.n < 20:
            raise ValidationError("n must be >= 20")

    @property
    def beta_t(self) -> tuple:
        return (1.0, 1.0 + self.delta, 1.0 + 2.0 * self.delta)

    def draw_confounder(self, gen, s):
        if s < 2:
            return gen.standard_normal(self.n)
        return gen.uniform(-0.5, 0.5, self.n)


@dataclass(frozen=True)
class SensitivityScenario:
    """Quadratic confounding in both models; the analysis omits the square."""

    n: int = 200
    error: ErrorDist = ErrorDist.NORMAL
    beta2: tuple = (2.0, -2.0, 2.0)
    gamma0: tuple = (-0.5, 0.5, 0.5)
    gamma2: tuple = (2.0, -2.0, 2.0)
    expose_quadratic: bool = False

    def draw_confounder(self, gen, s):
        if s < 2:
            return gen.normal(0.0, 0.5, self.n)
        return gen.uniform(-2.0, 2.0, self.n)


def _draw_stratum(label, gen, z_draw, p_fn, y_fn, covariate_fn):
    for _ in range(REGEN_CAP):
        z = z_draw(gen)
        p = 1.0 / (1.0 + np.exp(-p_fn(z)))
        t = (gen.random(len(z)) < p).astype(int)
        if 2 <= t.sum() <= len(z) - 2:
            y = y_fn(z, t, gen)
            return Stratum(id=label, outcomes=y, treatment=t, covariates=covariate_fn(z))
    raise ValidationError(f"stratum {label}: degenerate scenario, group sizes < 2 "
                          f"after {REGEN_CAP} regenerations")


def generate_power_dataset(sc: PowerScenario, rng: RngStream) -> StratifiedDataset:
    gen = rng.generator
    strata = []
    for s in range(3):
        strata.append(
            _draw_stratum(
                f"s{s + 1}",
                gen,
                lambda g, s=s: sc.draw_confounder(g, s),
                lambda z, s=s: sc.gamma[s] * z,
                lambda z, t, g, s=s: 1.0 + sc.beta_t[s] * t + z + sc.error.sample(g, len(z)),
                lambda z: np.column_stack([np.ones(len(z)), z]),
            )
        )
    return StratifiedDataset(strata=tuple(strata))


def generate_sensitivity_dataset(sc: SensitivityScenario, rng: RngStream) -> StratifiedDataset:
    gen = rng.generator
    if sc.expose_quadratic:
        cov_fn = lambda z: np.column_stack([np.ones(len(z)), z, z**2])
    else:
        cov_fn = lambda z: np.column_stack([np.ones(len(z)), z])
    strata = []
    for s in range(3):
        strata.append(
            _draw_stratum(
                f"s{s + 1}",
                gen,
                lambda g, s=s: sc.draw_confounder(g, s),
                lambda z, s=s: sc.gamma0[s] + z + sc.gamma2[s] * z**2,
                lambda z, t, g, s=s: t + z + sc.beta2[s] * z**2 + sc.error.sample(g, len(z)),
                cov_fn,
            )
        )
    return StratifiedDataset(strata=tuple(strata))


METHODS = ("AUT", "AUT-T", "UU", "LRT")


@dataclass(frozen=True)
class ExperimentCell:
    scenario: str = "power"          # power | sensitivity
    method: str = "AUT"
    n: int = 200
    delta: float = 0.0
    error: ErrorDist = ErrorDist.NORMAL

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.scenario not in ("power", "sensitivity"):
            raise ValidationError(f"unknown scenario {self.scenario!r}")


def _data_stream(seed: int, cell: ExperimentCell, rep: int) -> RngStream:
    # keyed without delta or method so effect-size grids share random numbers
    scen = 0 if cell.scenario == "power" else 1
    err = list(ErrorDist).index(cell.error)
    return RngStream(seed, (10, scen, err, cell.n, rep))


def _one_replication(seed, cell: ExperimentCell, rep, cell_idx,
                     kernel_factor, ref_samples, alpha):
    data_rng = _data_stream(seed, cell, rep)
    if cell.scenario == "power":
        ds = generate_power_dataset(PowerScenario(n=cell.n, delta=cell.delta,
                                                  error=cell.error), data_rng)
    else:
        ds = generate_sensitivity_dataset(SensitivityScenario(n=cell.n, error=cell.error),
                                          data_rng)
    test_rng = RngStream(seed, (20, cell_idx, rep))
    m = kernel_factor * ds.total_n
    removed_frac = 0.0
    if cell.method == "LRT":
        rep_out = lrt_test(ds)
        stat = rep_out.h_stat
        p = rep_out.p_value
    elif cell.method == "UU":
        r = unadjusted_u_test(ds, rng=test_rng, kernel_samples=m, ref_samples=ref_samples,
                              alpha=alpha)
        stat, p = r.t_a, r.p_value
    else:
        trim = "overlap" if cell.method == "AUT-T" else "none"
        r = adjusted_u_test(ds, h=HFunction.ONE, trim=trim, rng=test_rng,
                            kernel_samples=m, ref_samples=ref_samples, alpha=alpha)
        stat, p = r.t_a, r.p_value
        if trim != "none":
            removed = [a["removed_treated"] + a["removed_control"]
                       for a in r.trim_audit["per_stratum"]]
            removed_frac = float(np.mean([rm / cell.n for rm in removed]))
    return stat, p, removed_frac


def _worker(args):
    seed, cell, rep, cell_idx, kernel_factor, ref_samples, alpha = args
    try:
        return (cell_idx, rep, *_one_replication(seed, cell, rep, cell_idx,
                                                 kernel_factor, ref_samples, alpha), None)
    except UhetError as exc:
        return (cell_idx, rep, None, None, None, f"{type(exc).__name__}: {exc}")


def run_experiment(
    cells,
    replications: int,
    rng: RngStream,
    alpha: float = 0.05,
    kernel_factor: int = 200,
    ref_samples: int = 2 * 10**4,
    jobs: int = 1,
):
    """Run every (cell, replication) and aggregate one result row per cell.

    Individual replication failures (e.g. separation) are counted and
    excluded; a cell is flagged failed when more than 10% of its
    replications error out.  Deterministic for a fixed seed regardless of
    ``jobs``.
    """
    cells = list(cells)
    if replications < 1:
        return []
    tasks = [
        (rng.seed, cell, rep, ci, kernel_factor, ref_samples, alpha)
        for ci, cell in enumerate(cells)
        for rep in range(replications)
    ]
    if jobs > 1 and tasks:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_worker, tasks, chunksize=8))
    else:
        results = [_worker(t) for t in tasks]

    rows = []
    for ci, cell in enumerate(cells):
        got = sorted(r for r in results if r[0] == ci)
        stats = [r[2] for r in got if r[5] is None]
        pvals = [r[3] for r in got if r[5] is None]
        fracs = [r[4] for r in got if r[5] is None]
        errors = [r[5] for r in got if r[5] is not None]
        n_ok = len(pvals)
        rows.append(
            {
                "scenario": cell.scenario,
                "method": cell.method,
                "n": cell.n,
                "delta": cell.delta,
                "error": cell.error.value,
                "alpha": alpha,
                "n_reps": replications,
                "n_ok": n_ok,
                "reject_rate": (float(np.mean([p <= alpha for p in pvals]))
                                if n_ok else float("nan")),
                "mean_stat": float(np.mean(stats)) if n_ok else float("nan"),
                "var_stat": float(np.var(stats, ddof=1)) if n_ok > 1 else float("nan"),
                "mean_removed_frac": float(np.mean(fracs)) if n_ok else float("nan"),
                "error_count": len(errors),
                "failed": len(errors) > 0.1 * replications,
                "p_values": [float(p) for p in pvals],
            }
        )
    return rows


TSV_COLUMNS = (
    "scenario", "method", "n", "delta", "error", "alpha", "n_reps", "n_ok",
    "reject_rate", "mean_stat", "var_stat", "mean_removed_frac",
    "error_count", "failed",
)


def table_to_tsv(rows) -> str:
    lines = ["\t".join(TSV_COLUMNS)]
    for row in rows:
        lines.append("\t".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                               for c in TSV_COLUMNS))
    return "\n".join(lines) + "\n"


def table_to_json(rows) -> str:
    return json.dumps(rows, indent=2, sort_keys=True)


def preset_cells(name: str, error: ErrorDist | None = None, n: int = 200):
    """Cells for the named study preset: validity, power, or sensitivity."""
    err = error or ErrorDist.NORMAL
    if name == "validity":
        return [ExperimentCell(scenario="power", method=m, n=n, delta=0.0, error=err)
                for m in ("AUT", "AUT-T", "UU", "LRT")]
    if name == "power":
        return [ExperimentCell(scenario="power", method=m, n=n, delta=d, error=err)
                for d in (0.0, 0.25, 0.5, 1.0)
                for m in ("AUT", "AUT-T", "LRT")]
    if name == "sensitivity":
        return [ExperimentCell(scenario="sensitivity", method=m, n=n, error=err)
                for m in ("AUT", "AUT-T", "LRT")]
    raise ValidationError(
        f"unknown preset {name!r}; available: validity, power, sensitivity"
    )
