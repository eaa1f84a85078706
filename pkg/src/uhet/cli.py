"""Command-line interface: ``test``, ``simulate``, and ``validate``.

Every stochastic command requires an explicit --seed (no silent time-based
seeding) and echoes it into its output artifact.  Exit codes: 0 success,
2 usage or validation problems, 3 numerical failures.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .data import HFunction, Schema, load_dataset, load_strata
from .errors import IngestionError, UhetError, ValidationError
from .inference import adjusted_u_test, lrt_test, unadjusted_u_test
from .numkit import RngStream
from .simgen import ErrorDist, preset_cells, run_experiment, table_to_json, table_to_tsv

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

H_CHOICES = {
    "one": HFunction.ONE,
    "treated": HFunction.TREATED,
    "control": HFunction.CONTROL,
    "overlap": HFunction.OVERLAP,
}


def _schema_args(p: argparse.ArgumentParser):
    p.add_argument("--input", required=True, help="CSV file with a header row")
    p.add_argument("--stratum-col", required=True, help="stratum label column")
    p.add_argument("--treatment-col", required=True, help="0/1 treatment column")
    p.add_argument("--outcome-col", required=True, help="outcome column")
    p.add_argument("--covariates", default="",
                   help="comma-separated covariate columns (may be empty)")
    p.add_argument("--delimiter", default=",", help="field delimiter (default comma)")


def _out_args(p: argparse.ArgumentParser):
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.add_argument("--format", choices=("json", "tsv"), default="json",
                   help="output format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uhet",
        description="Tests for treatment-effect heterogeneity across strata "
                    "in observational data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="run the heterogeneity test on a CSV dataset")
    _schema_args(t)
    t.add_argument("--h", choices=sorted(H_CHOICES), default="one",
                   help="target-population function")
    t.add_argument("--trim", choices=("none", "overlap", "hard", "both"),
                   default="overlap", help="propensity trimming policy")
    t.add_argument("--gamma", type=float, default=0.1,
                   help="hard-threshold gamma in (0, 0.5)")
    t.add_argument("--kernel-samples", type=int, default=None,
                   help="Monte Carlo kernel tuples (default 1000*N)")
    t.add_argument("--ref-samples", type=int, default=10**5,
                   help="reference-distribution draws")
    t.add_argument("--alpha", type=float, default=0.05, help="significance level")
    t.add_argument("--seed", type=int, required=True, help="RNG seed (mandatory)")
    t.add_argument("--with-lrt", action="store_true",
                   help="also report the Gail-Simon LRT")
    t.add_argument("--unadjusted", action="store_true",
                   help="run the unit-weight U test instead of the adjusted one")
    _out_args(t)

    s = sub.add_parser("simulate", help="run a simulation study preset")
    s.add_argument("--preset", required=True,
                   help="validity, power, or sensitivity")
    s.add_argument("--reps", type=int, default=500, help="replications per cell")
    s.add_argument("--error", choices=[e.value for e in ErrorDist], default="normal",
                   help="outcome error distribution")
    s.add_argument("--n", type=int, default=200, help="per-stratum sample size")
    s.add_argument("--kernel-factor", type=int, default=200,
                   help="kernel tuples per unit of N (desk default 200; paper 1000)")
    s.add_argument("--ref-samples", type=int, default=2 * 10**4,
                   help="reference draws per test (desk default; paper 1e5)")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.add_argument("--seed", type=int, required=True, help="RNG seed (mandatory)")
    _out_args(s)

    v = sub.add_parser("validate", help="summarize a CSV dataset without testing")
    _schema_args(v)
    _out_args(v)
    return parser


def _schema_from(args) -> Schema:
    covs = tuple(c.strip() for c in args.covariates.split(",") if c.strip())
    return Schema(stratum=args.stratum_col, treatment=args.treatment_col,
                  outcome=args.outcome_col, covariates=covs)


def _emit(text: str, out_path):
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cmd_test(args) -> int:
    ds = load_dataset(args.input, _schema_from(args), delimiter=args.delimiter)
    rng = RngStream(args.seed)
    if args.unadjusted:
        report = unadjusted_u_test(
            ds, rng=rng, kernel_samples=args.kernel_samples,
            ref_samples=args.ref_samples, alpha=args.alpha,
        )
    else:
        report = adjusted_u_test(
            ds, h=H_CHOICES[args.h], trim=args.trim, gamma=args.gamma, rng=rng,
            kernel_samples=args.kernel_samples, ref_samples=args.ref_samples,
            alpha=args.alpha,
        )
    payload = report.to_dict()
    if args.with_lrt:
        payload["lrt"] = lrt_test(ds).to_dict()
    _emit(json.dumps(payload, indent=2, sort_keys=True), args.out)
    print(f"T_a={report.t_a!r} p={report.p_value!r} "
          f"S={report.n_strata} N={report.n_total}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cells = preset_cells(args.preset, error=ErrorDist(args.error), n=args.n)
    rng = RngStream(args.seed)
    rows = run_experiment(
        cells, args.reps, rng, alpha=args.alpha, kernel_factor=args.kernel_factor,
        ref_samples=args.ref_samples, jobs=args.jobs,
    )
    payload = {"seed": args.seed, "preset": args.preset, "rows": rows}
    if args.format == "tsv":
        _emit(table_to_tsv(rows), args.out)
    else:
        _emit(json.dumps(payload, indent=2, sort_keys=True), args.out)
    return EXIT_OK


def _stratum_summary(s):
    tr, co = s.split_groups()
    def grp(rows):
        x = s.covariates[rows, 1:]
        y = s.outcomes[rows]
        return {
            "n": int(len(rows)),
            "outcome_mean": float(y.mean()),
            "outcome_sd": float(y.std(ddof=1)),
            "covariate_means": [float(v) for v in x.mean(axis=0)] if x.size else [],
            "covariate_sds": [float(v) for v in x.std(axis=0, ddof=1)] if x.size else [],
        }
    return {"stratum": s.id, "treated": grp(tr), "control": grp(co)}


def cmd_validate(args) -> int:
    strata = load_strata(args.input, _schema_from(args), delimiter=args.delimiter)
    summary = {
        "n_strata": len(strata),
        "n_total": sum(s.n for s in strata),
        "strata": [_stratum_summary(s) for s in strata],
    }
    if len(strata) < 2:
        summary["note"] = "S >= 2 required for testing"
    _emit(json.dumps(summary, indent=2, sort_keys=True), args.out)
    for s in summary["strata"]:
        print(f"{s['stratum']}: treated n={s['treated']['n']} "
              f"control n={s['control']['n']}")
    if "note" in summary:
        print(summary["note"])
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "test":
            return cmd_test(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        return cmd_validate(args)
    except (ValidationError, IngestionError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UhetError as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
