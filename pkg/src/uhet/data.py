"""Domain types and ingestion for stratified observational data.

A dataset is a list of mutually independent strata.  Each stratum holds
real-valued outcomes, binary treatment indicators, and a covariate matrix
whose first column is the intercept.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import IngestionError, ValidationError


class HFunction(enum.Enum):
    """Target-population function h(e) and its derivative in e.

    ONE targets the combined population (classical inverse probability
    weighting), TREATED the treated, CONTROL the control, and OVERLAP the
    overlap population with h(e) = e(1-e).
    """

    ONE = "one"
    TREATED = "treated"
    CONTROL = "control"
    OVERLAP = "overlap"

    def value_at(self, e):
        e = np.asarray(e, dtype=float)
        if self is HFunction.ONE:
            return np.ones_like(e)
        if self is HFunction.TREATED:
            return e
        if self is HFunction.CONTROL:
            return 1.0 - e
        return e * (1.0 - e)

    def deriv_at(self, e):
        e = np.asarray(e, dtype=float)
        if self is HFunction.ONE:
            return np.zeros_like(e)
        if self is HFunction.TREATED:
            return np.ones_like(e)
        if self is HFunction.CONTROL:
            return -np.ones_like(e)
        return 1.0 - 2.0 * e


@dataclass(frozen=True)
class Stratum:
    """One stratum: outcomes, treatment indicators, covariates.

    The covariate matrix is (n x d) with the intercept as first column.
    Immutable after construction; arrays are set non-writeable.
    """

    id: str
    outcomes: np.ndarray
    treatment: np.ndarray
    covariates: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.outcomes, dtype=float)
        t = np.asarray(self.treatment, dtype=int)
        x = np.atleast_2d(np.asarray(self.covariates, dtype=float))
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "treatment", t)
        object.__setattr__(self, "covariates", x)
        n = y.shape[0]
        if t.shape[0] != n or x.shape[0] != n:
            raise ValidationError(
                f"stratum {self.id!r}: outcomes, treatment and covariates "
                f"must share a row count"
            )
        if n < 4:
            raise ValidationError(f"stratum {self.id!r}: needs at least 4 subjects")
        if not np.isin(t, (0, 1)).all():
            raise ValidationError(f"stratum {self.id!r}: treatment must be 0/1")
        nt = int(t.sum())
        if nt < 2 or n - nt < 2:
            raise ValidationError(
                f"stratum {self.id!r}: each treatment group needs >= 2 subjects "
                f"(treated={nt}, control={n - nt})"
            )
        if not np.all(x[:, 0] == 1.0):
            raise ValidationError(
                f"stratum {self.id!r}: first covariate column must be the intercept"
            )
        if not (np.isfinite(y).all() and np.isfinite(x).all()):
            raise ValidationError(f"stratum {self.id!r}: non-finite values")
        for a in (y, t, x):
            a.setflags(write=False)

    @property
    def n(self) -> int:
        return self.outcomes.shape[0]

    @property
    def n_treated(self) -> int:
        return int(self.treatment.sum())

    @property
    def n_control(self) -> int:
        return self.n - self.n_treated

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    def split_groups(self):
        """Index partition (treated, control), each in original row order."""
        idx = np.arange(self.n)
        return idx[self.treatment == 1], idx[self.treatment == 0]

    def subset(self, rows) -> "Stratum":
        rows = np.asarray(rows, dtype=int)
        return Stratum(
            id=self.id,
            outcomes=self.outcomes[rows],
            treatment=self.treatment[rows],
            covariates=self.covariates[rows],
        )


@dataclass(frozen=True)
class StratifiedDataset:
    """Ordered collection of strata with unique ids."""

    strata: tuple = field(default_factory=tuple)

    def __post_init__(self):
        strata = tuple(self.strata)
        object.__setattr__(self, "strata", strata)
        if len(strata) < 2:
            raise ValidationError("a dataset needs at least 2 strata")
        ids = [s.id for s in strata]
        if len(set(ids)) != len(ids):
            raise ValidationError("stratum ids must be unique")

    @property
    def n_strata(self) -> int:
        return len(self.strata)

    @property
    def total_n(self) -> int:
        return sum(s.n for s in self.strata)

    def group_fractions(self):
        """Empirical fractions n_s^omega / N keyed by (stratum index, 't'|'c')."""
        n = self.total_n
        out = {}
        for i, s in enumerate(self.strata):
            out[(i, "t")] = s.n_treated / n
            out[(i, "c")] = s.n_control / n
        return out


@dataclass(frozen=True)
class Schema:
    """Column-role mapping for tabular ingestion."""

    stratum: str
    treatment: str
    outcome: str
    covariates: tuple = ()


def _parse_cell(raw, row, col, kind):
    try:
        v = float(raw)
    except (TypeError, ValueError):
        raise IngestionError(
            f"row {row}: cannot parse {kind} column {col!r} value {raw!r}", row=row
        )
    if not np.isfinite(v):
        raise IngestionError(f"row {row}: non-finite {kind} value in {col!r}", row=row)
    return v


def load_strata(source, schema: Schema, delimiter: str = ","):
    """Read a delimited text stream (or path) into a list of Stratum.

    Subjects are grouped by stratum label in order of first appearance and
    an intercept column is prepended to the covariates.  Any unparseable or
    missing cell raises IngestionError with the offending row index.
    """
    if isinstance(source, (str, bytes)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return load_strata(fh, schema, delimiter)
    reader = csv.DictReader(source, delimiter=delimiter)
    if reader.fieldnames is None:
        raise IngestionError("empty input: a header row is required")
    needed = [schema.stratum, schema.treatment, schema.outcome, *schema.covariates]
    missing = [c for c in needed if c not in reader.fieldnames]
    if missing:
        raise IngestionError(f"header is missing columns: {missing}")

    order = []
    rows = {}
    for i, rec in enumerate(reader, start=1):
        label = rec.get(schema.stratum)
        if label is None or label == "":
            raise IngestionError(f"row {i}: missing stratum label", row=i)
        t_raw = rec.get(schema.treatment)
        t = _parse_cell(t_raw, i, schema.treatment, "treatment")
        if t not in (0.0, 1.0):
            raise IngestionError(
                f"row {i}: treatment value {t_raw!r} is not 0/1", row=i
            )
        y = _parse_cell(rec.get(schema.outcome), i, schema.outcome, "outcome")
        x = [_parse_cell(rec.get(c), i, c, "covariate") for c in schema.covariates]
        if label not in rows:
            rows[label] = []
            order.append(label)
        rows[label].append((y, int(t), x))

    strata = []
    for label in order:
        ys, ts, xs = zip(*rows[label])
        x = np.column_stack([np.ones(len(ys)), np.asarray(xs, dtype=float).reshape(len(ys), -1)]) \
            if schema.covariates else np.ones((len(ys), 1))
        strata.append(Stratum(id=label, outcomes=np.asarray(ys), treatment=np.asarray(ts), covariates=x))
    return strata


def load_dataset(source, schema: Schema, delimiter: str = ",") -> StratifiedDataset:
    """Read a delimited text stream (or path) into a StratifiedDataset."""
    return StratifiedDataset(strata=tuple(load_strata(source, schema, delimiter)))


def save_dataset(ds: StratifiedDataset, sink, schema: Schema, delimiter: str = ",") -> None:
    """Write a dataset back to the tabular format; floats use repr so a
    reload round-trips bit-for-bit."""
    if isinstance(sink, (str, bytes)):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            save_dataset(ds, fh, schema, delimiter)
            return
    writer = csv.writer(sink, delimiter=delimiter)
    writer.writerow([schema.stratum, schema.treatment, schema.outcome, *schema.covariates])
    for s in ds.strata:
        for i in range(s.n):
            covs = [repr(float(v)) for v in s.covariates[i, 1:]]
            writer.writerow([s.id, int(s.treatment[i]), repr(float(s.outcomes[i])), *covs])


def dataset_to_csv_text(ds: StratifiedDataset, schema: Schema, delimiter: str = ",") -> str:
    buf = io.StringIO()
    save_dataset(ds, buf, schema, delimiter)
    return buf.getvalue()
