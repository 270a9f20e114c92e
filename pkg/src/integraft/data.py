"""Containers and preprocessing for multi-study right-censored data.

A *study* holds log observation times ``y``, event indicators ``delta``
(1 = event observed, 0 = right-censored), a covariate matrix ``x`` and a
vector of Kaplan-Meier jump weights aligned with the rows.  The weights
turn least squares on censored responses into a consistent estimator:
row ``i`` of a sorted study receives the jump of the Kaplan-Meier
estimate of the time distribution at ``y[i]``, which is zero for every
censored row.

All estimation code in this package assumes studies were built through
:meth:`Study.from_data` (sort, weight, validate) and then passed through
:func:`standardize` (weighted centering of ``y`` and the columns of
``x``, and scaling of each column to unit weighted second moment).
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataFormatError, DimensionError, ValidationError

# Maximum tolerated slack on sum(weights) <= 1.
_WEIGHT_SUM_SLACK = 1e-9
# Columns whose weighted standard deviation falls below this cannot be
# scaled to unit second moment and are rejected.
_MIN_COLUMN_SCALE = 1e-10


def sort_order(y: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Indices sorting a study by time, events before censored at ties.

    The ordering is stable, so rows with identical ``(y, delta)`` keep
    their input order.  Placing events first at tied times matches the
    convention under which the weight of a censored row tied with an
    event is zero.
    """
    # np.lexsort uses the last key as the primary one.
    return np.lexsort((1 - delta, y))


def km_weights(delta: np.ndarray) -> np.ndarray:
    """Kaplan-Meier jump weights for a study already in sorted order.

    For sorted data the weight of row ``i`` (0-based, ``n`` rows) is

        w[i] = delta[i] / (n - i) * prod_{j < i} ((n - j - 1) / (n - j)) ** delta[j]

    which equals the jump of the Kaplan-Meier estimate of the time
    distribution at the i-th order statistic, treating every row as a
    distinct time point.  Censored rows get weight zero, and the weights
    sum to one exactly when the last sorted row is an event.

    Parameters
    ----------
    delta : ndarray
        Event indicators in sorted-time order, values in {0, 1}.

    Returns
    -------
    ndarray
        Nonnegative weights, same length as ``delta``.
    """
    delta = np.asarray(delta, dtype=float)
    if delta.ndim != 1 or delta.size == 0:
        raise ValidationError("delta must be a nonempty 1-D array")
    if not np.all((delta == 0.0) | (delta == 1.0)):
        raise ValidationError("event indicators must be 0 or 1")
    n = delta.size
    pos = np.arange(n, dtype=float)
    # Survival factor contributed by row j: ((n-j-1)/(n-j)) ** delta[j].
    factors = np.where(delta > 0, (n - pos - 1.0) / (n - pos), 1.0)
    lead = np.concatenate(([1.0], np.cumprod(factors)[:-1]))
    return delta / (n - pos) * lead


@dataclass(frozen=True)
class Study:
    """One study: log times, event indicators, covariates, weights.

    Attributes
    ----------
    y : ndarray, shape (n,)
        Log observation times (log of event or censoring time).
    delta : ndarray, shape (n,)
        Event indicators, 1 for observed events and 0 for censored rows.
    x : ndarray, shape (n, p)
        Covariate matrix.
    weights : ndarray, shape (n,)
        Kaplan-Meier jump weights.  Zero wherever ``delta`` is zero,
        nonnegative, summing to at most 1.
    is_sorted : bool
        True when rows are in (time, events-first) order and ``weights``
        were computed in that order.  Pooled constructions may carry
        externally supplied weights with ``is_sorted=False``.
    x_center, x_scale : ndarray or None
        Per-column weighted centers/scales recorded by
        :func:`standardize`; ``None`` on raw studies.
    y_center : float
        Weighted center subtracted from ``y`` by :func:`standardize`.
    """

    y: np.ndarray
    delta: np.ndarray
    x: np.ndarray
    weights: np.ndarray
    is_sorted: bool = True
    x_center: np.ndarray | None = None
    x_scale: np.ndarray | None = None
    y_center: float = 0.0

    def __post_init__(self):
        y = np.ascontiguousarray(np.asarray(self.y, dtype=float))
        delta = np.ascontiguousarray(np.asarray(self.delta, dtype=float))
        x = np.ascontiguousarray(np.asarray(self.x, dtype=float))
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "weights", w)
        n = y.size
        if y.ndim != 1 or n == 0:
            raise ValidationError("y must be a nonempty 1-D array")
        if delta.shape != (n,) or w.shape != (n,):
            raise DimensionError("y, delta and weights must share one length")
        if x.ndim != 2 or x.shape[0] != n:
            raise DimensionError(f"x must be 2-D with {n} rows, got {x.shape}")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
            raise ValidationError("y and x must be finite")
        if not np.all((delta == 0.0) | (delta == 1.0)):
            raise ValidationError("event indicators must be 0 or 1")
        if np.any(w < 0.0) or not np.all(np.isfinite(w)):
            raise ValidationError("weights must be finite and nonnegative")
        if w.sum() > 1.0 + _WEIGHT_SUM_SLACK:
            raise ValidationError("weights must sum to at most 1")
        if np.any((delta == 0.0) & (w > 0.0)):
            raise ValidationError("censored rows must carry zero weight")
        if self.is_sorted and np.any(np.diff(y) < 0.0):
            raise ValidationError("is_sorted=True requires nondecreasing y")

    @classmethod
    def from_data(cls, y: np.ndarray, delta: np.ndarray, x: np.ndarray) -> "Study":
        """Sort rows, compute Kaplan-Meier weights, and validate.

        Raises
        ------
        ValidationError
            If the study has no events (all rows censored), leaving
            every weight zero.
        """
        y = np.asarray(y, dtype=float)
        delta = np.asarray(delta, dtype=float)
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim != 1 or y.size == 0:
            raise ValidationError("y must be a nonempty 1-D array")
        if delta.shape != y.shape:
            raise DimensionError("delta must match y in length")
        if x.shape[0] != y.size:
            raise DimensionError("x must have one row per observation")
        order = sort_order(y, delta)
        y, delta, x = y[order], delta[order], x[order]
        w = km_weights(delta)
        if w.sum() <= 0.0:
            raise ValidationError("study has no events: all rows are censored")
        return cls(y=y, delta=delta, x=x, weights=w, is_sorted=True)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def standardized(self) -> bool:
        return self.x_scale is not None


@dataclass(frozen=True)
class MultiStudy:
    """An ordered collection of studies sharing one covariate set."""

    studies: tuple[Study, ...]

    def __post_init__(self):
        studies = tuple(self.studies)
        object.__setattr__(self, "studies", studies)
        if len(studies) == 0:
            raise ValidationError("at least one study is required")
        p = studies[0].p
        for k, st in enumerate(studies):
            if st.p != p:
                raise DimensionError(
                    f"study {k + 1} has {st.p} covariates, expected {p}"
                )

    @property
    def n_studies(self) -> int:
        return len(self.studies)

    @property
    def p(self) -> int:
        return self.studies[0].p

    @property
    def n(self) -> int:
        return sum(st.n for st in self.studies)

    @property
    def standardized(self) -> bool:
        return all(st.standardized for st in self.studies)

    def subset(self, keep: list[np.ndarray]) -> "MultiStudy":
        """Rebuild from per-study row subsets (re-sorts and re-weights)."""
        if len(keep) != self.n_studies:
            raise DimensionError("one index array per study is required")
        parts = []
        for st, idx in zip(self.studies, keep):
            parts.append(Study.from_data(st.y[idx], st.delta[idx], st.x[idx]))
        return MultiStudy(tuple(parts))


def standardize(ms: MultiStudy) -> MultiStudy:
    """Weighted centering and scaling, per study.

    Centers ``y`` and every covariate column at its weighted mean
    (weights as in the estimation loss), which absorbs the per-study
    intercept, then scales each column so its weighted second moment is
    one.  Coefficients estimated on the result can be mapped back with
    :func:`backtransform_coef`.

    Raises
    ------
    ValidationError
        If some column has (numerically) zero weighted variance and
        cannot be scaled; the message lists the offending columns.
    """
    out = []
    for k, st in enumerate(ms.studies):
        if st.standardized:
            raise ValidationError(f"study {k + 1} is already standardized")
        w = st.weights
        wsum = w.sum()
        if wsum <= 0.0:
            raise ValidationError(f"study {k + 1} has zero total weight")
        y_center = float(np.dot(w, st.y) / wsum)
        x_center = (w @ st.x) / wsum
        xc = st.x - x_center
        # Weighted second moment of each centered column; the loss uses
        # n * w as the weight matrix, so the n cancels here.
        second = np.sqrt(xc.T ** 2 @ w)
        bad = np.flatnonzero(second < _MIN_COLUMN_SCALE)
        if bad.size:
            cols = ", ".join(f"x{j + 1}" for j in bad[:10])
            raise ValidationError(
                f"study {k + 1}: columns with zero weighted variance "
                f"cannot be standardized: {cols}"
            )
        out.append(
            Study(
                y=st.y - y_center,
                delta=st.delta,
                x=xc / second,
                weights=w,
                is_sorted=st.is_sorted,
                x_center=x_center,
                x_scale=second,
                y_center=y_center,
            )
        )
    return MultiStudy(tuple(out))


def backtransform_coef(ms: MultiStudy, coef: np.ndarray) -> np.ndarray:
    """Map coefficients from the standardized scale to the original one.

    ``coef`` has shape (p, n_studies) with column ``m`` fitted on
    standardized study ``m``.  Centering does not affect slopes, so only
    the column scales enter.
    """
    coef = np.asarray(coef, dtype=float)
    if coef.shape != (ms.p, ms.n_studies):
        raise DimensionError(
            f"coef must have shape {(ms.p, ms.n_studies)}, got {coef.shape}"
        )
    if not ms.standardized:
        raise ValidationError("backtransform requires a standardized MultiStudy")
    out = np.empty_like(coef)
    for m, st in enumerate(ms.studies):
        out[:, m] = coef[:, m] / st.x_scale
    return out


# ---------------------------------------------------------------------------
# CSV input/output.  Schema: header "time,status,x1,...,xp"; times are on
# the raw positive scale and are logged on load; status is 0 or 1.
# ---------------------------------------------------------------------------

_NAME_RE = re.compile(r"^x(\d+)$")


def _parse_header(fields: list[str], path: str, row: int) -> int:
    if len(fields) < 3 or fields[0] != "time" or fields[1] != "status":
        raise DataFormatError(
            "header must be 'time,status,x1,...,xp'", path=path, row=row
        )
    for j, name in enumerate(fields[2:], start=1):
        m = _NAME_RE.match(name)
        if not m or int(m.group(1)) != j:
            raise DataFormatError(
                f"covariate columns must be named x1..xp in order, got {name!r}",
                path=path,
                row=row,
            )
    return len(fields) - 2


def load_study_csv(path: str) -> Study:
    """Load one study from CSV (see module docstring for the schema).

    Lines starting with ``#`` are treated as comments.  Times must be
    strictly positive (they are logged), status must be 0 or 1, and all
    covariate cells must be finite numbers.
    """
    times, status, rows = [], [], []
    p = None
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        row_no = 0
        for fields in reader:
            row_no += 1
            if not fields or (fields[0].lstrip().startswith("#")):
                continue
            if p is None:
                p = _parse_header([f.strip() for f in fields], path, row_no)
                continue
            if len(fields) != p + 2:
                raise DataFormatError(
                    f"expected {p + 2} columns, got {len(fields)}",
                    path=path,
                    row=row_no,
                )
            try:
                vals = [float(f) for f in fields]
            except ValueError:
                raise DataFormatError("non-numeric value", path=path, row=row_no)
            if not all(math.isfinite(v) for v in vals):
                raise DataFormatError("non-finite value", path=path, row=row_no)
            t, s = vals[0], vals[1]
            if t <= 0.0:
                raise DataFormatError(
                    f"time must be strictly positive, got {t}", path=path, row=row_no
                )
            if s not in (0.0, 1.0):
                raise DataFormatError(
                    f"status must be 0 or 1, got {s}", path=path, row=row_no
                )
            times.append(math.log(t))
            status.append(s)
            rows.append(vals[2:])
    if p is None:
        raise DataFormatError("empty file: missing header", path=path)
    if not times:
        raise DataFormatError("no data rows", path=path)
    try:
        return Study.from_data(np.array(times), np.array(status), np.array(rows))
    except ValidationError as exc:
        raise ValidationError(f"{exc} [{path}]") from exc


def load_studies(paths: list[str]) -> MultiStudy:
    """Load several studies and check they share one covariate count."""
    if not paths:
        raise ValidationError("at least one data file is required")
    studies = [load_study_csv(p) for p in paths]
    p0 = studies[0].p
    for path, st in zip(paths, studies):
        if st.p != p0:
            raise DimensionError(
                f"{path} has {st.p} covariates, expected {p0} as in {paths[0]}"
            )
    return MultiStudy(tuple(studies))


def write_study_csv(path: str, study: Study, header_lines: list[str] | None = None):
    """Write a study back to the CSV schema (times exponentiated)."""
    with open(path, "w", newline="") as fh:
        for line in header_lines or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["time", "status"] + [f"x{j + 1}" for j in range(study.p)])
        for i in range(study.n):
            row = [repr(float(np.exp(study.y[i]))), str(int(study.delta[i]))]
            row += [repr(float(v)) for v in study.x[i]]
            writer.writerow(row)
