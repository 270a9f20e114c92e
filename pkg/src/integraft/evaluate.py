"""Selection metrics, two-sample logrank, prediction protocol, benchmarks.

Selection quality is counted over (covariate, study) pairs: a pair is a
true positive when both the fitted and the true coefficient are nonzero.
Prediction quality follows a split-and-stratify protocol: fit on a
training portion, split each held-out study at the median of its
predicted linear risk, and compare the two halves with a two-sample
logrank statistic (larger means better separation).

``run_benchmark`` drives repeated simulation replicates across settings
and methods and aggregates both kinds of metrics into tidy tables.
Failures of individual (setting, replicate, method) cells are captured
in a failures table instead of aborting the run.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .baselines import meta_fit, pooled_fit
from .data import MultiStudy, standardize
from .errors import ContractError, DimensionError, ValidationError
from .sim import SimConfig, gen_replicate, split_indices
from .solver import IndexSets, SolverOptions, fit
from .tuning import METHOD_CODES, TuneGrid, cross_validate

ALL_METHODS = ("meta", "pooled", "glasso", "gmcp", "gscad", "cmcp", "sgmcp")
# Spread below this means the linear predictor cannot rank the rows.
_FLAT_PREDICTOR = 1e-12


@dataclass(frozen=True)
class SelectionMetrics:
    """Counts over (covariate, study) pairs."""

    tp: int
    size: int
    true_size: int

    @property
    def fp(self) -> int:
        return self.size - self.tp

    @property
    def fn(self) -> int:
        return self.true_size - self.tp


def selection_metrics(coef: np.ndarray, beta_true: np.ndarray) -> SelectionMetrics:
    """Compare a fitted coefficient matrix against the truth.

    ``tp`` counts pairs nonzero in both, ``size`` pairs nonzero in the
    fit, ``true_size`` pairs nonzero in the truth.
    """
    coef = np.asarray(coef)
    beta_true = np.asarray(beta_true)
    if coef.shape != beta_true.shape:
        raise DimensionError(
            f"coef shape {coef.shape} does not match truth shape {beta_true.shape}"
        )
    sel = coef != 0.0
    tru = beta_true != 0.0
    return SelectionMetrics(
        tp=int(np.count_nonzero(sel & tru)),
        size=int(np.count_nonzero(sel)),
        true_size=int(np.count_nonzero(tru)),
    )


def logrank_stat(time_vals, event, group) -> float:
    """Two-sample logrank chi-square statistic (1 degree of freedom).

    At every distinct time with at least one event and at least two
    subjects still at risk, the observed minus hypergeometric-expected
    event count of the first group is accumulated along with the
    hypergeometric variance; the statistic is the squared sum over the
    variance sum.  Subjects censored at a time still count as at risk
    for the events at that same time.  Returns 0 when every admissible
    term has zero variance (then every observed-minus-expected term is
    zero as well).
    """
    t = np.asarray(time_vals, dtype=float)
    e = np.asarray(event, dtype=float)
    grp = np.asarray(group)
    if t.ndim != 1 or t.size == 0:
        raise ValidationError("time must be a nonempty 1-D array")
    if e.shape != t.shape or grp.shape != t.shape:
        raise ValidationError("time, event and group must share one length")
    if not np.all(np.isfinite(t)):
        raise ValidationError("times must be finite")
    if not np.all((e == 0.0) | (e == 1.0)):
        raise ValidationError("event indicators must be 0 or 1")
    labels = np.unique(grp)
    if labels.size != 2:
        raise ValidationError(f"exactly two groups are required, got {labels.size}")
    if e.sum() == 0.0:
        raise ValidationError("at least one event is required")
    g1 = (grp == labels[0]).astype(float)

    ut, inv = np.unique(t, return_inverse=True)
    d = np.bincount(inv, weights=e, minlength=ut.size)
    d1 = np.bincount(inv, weights=e * g1, minlength=ut.size)
    counts = np.bincount(inv, minlength=ut.size).astype(float)
    c1 = np.bincount(inv, weights=g1, minlength=ut.size)
    # Rows at risk at ut[k]: everyone whose time is >= ut[k].
    at_risk = t.size - np.concatenate(([0.0], np.cumsum(counts)[:-1]))
    at_risk1 = g1.sum() - np.concatenate(([0.0], np.cumsum(c1)[:-1]))
    keep = (d > 0.0) & (at_risk >= 2.0)
    if not np.any(keep):
        return 0.0
    n, n1, dk, d1k = at_risk[keep], at_risk1[keep], d[keep], d1[keep]
    oe = float(np.sum(d1k - dk * n1 / n))
    var = float(np.sum(n1 / n * (1.0 - n1 / n) * dk * (n - dk) / (n - 1.0)))
    if var == 0.0:
        return 0.0
    return oe * oe / var


@dataclass(frozen=True)
class PredictEval:
    """Per-study logrank separation of the median-split risk groups."""

    per_study: tuple
    degenerate: tuple

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_study))


def predict_eval(ms_test: MultiStudy, coef_original: np.ndarray) -> PredictEval:
    """Score original-scale coefficients on held-out studies.

    Each study's rows are ranked by their linear predictor and split
    into a low-risk and a high-risk half (the low half gets the extra
    row when the count is odd); the halves are compared with
    :func:`logrank_stat`.  A study whose predictor is constant, or
    whose split admits no valid logrank comparison, is flagged
    degenerate and scored 0.
    """
    if ms_test.standardized:
        raise ContractError("predict_eval expects raw (unstandardized) data")
    coef_original = np.asarray(coef_original, dtype=float)
    if coef_original.shape != (ms_test.p, ms_test.n_studies):
        raise DimensionError(
            f"coef must have shape {(ms_test.p, ms_test.n_studies)}, "
            f"got {coef_original.shape}"
        )
    stats, flags = [], []
    for m, st in enumerate(ms_test.studies):
        lp = st.x @ coef_original[:, m]
        if st.n < 2 or float(lp.max() - lp.min()) < _FLAT_PREDICTOR:
            stats.append(0.0)
            flags.append(True)
            continue
        order = np.argsort(lp, kind="stable")
        group = np.ones(st.n, dtype=np.int64)
        group[order[: math.ceil(st.n / 2)]] = 0
        try:
            stats.append(logrank_stat(st.y, st.delta, group))
            flags.append(False)
        except ValidationError:
            stats.append(0.0)
            flags.append(True)
    return PredictEval(per_study=tuple(stats), degenerate=tuple(flags))


@dataclass
class MethodFit:
    """A tuned and fitted model under any of the method codes."""

    method: str
    coef: np.ndarray
    coef_original: np.ndarray
    selected: IndexSets
    specs: tuple
    cv_table: pd.DataFrame


def fit_method(
    ms: MultiStudy,
    method: str,
    grid: TuneGrid | None = None,
    seed: int = 0,
    options: SolverOptions | None = None,
) -> MethodFit:
    """Tune by cross-validation and fit one method on raw data.

    ``method`` is one of ``meta``, ``pooled`` or the penalized codes
    ``glasso``, ``gmcp``, ``gscad``, ``cmcp``, ``sgmcp``.
    """
    if method == "meta":
        res = meta_fit(ms, grid=grid, seed=seed, options=options)
        return MethodFit(method, res.coef, res.coef_original, res.selected,
                         res.specs, res.cv_table)
    if method == "pooled":
        res = pooled_fit(ms, grid=grid, seed=seed, options=options)
        return MethodFit(method, res.coef, res.coef_original, res.selected,
                         res.specs, res.cv_table)
    if method not in METHOD_CODES:
        raise ValidationError(
            f"unknown method code {method!r}; expected one of {ALL_METHODS}"
        )
    best, table = cross_validate(ms, method, grid=grid, seed=seed, options=options)
    res = fit(standardize(ms), best, options=options)
    return MethodFit(method, res.coef, res.coef_original, res.selected,
                     (best,), table)


def repeated_split_eval(
    ms: MultiStudy,
    method: str,
    n_splits: int = 20,
    test_fraction: float = 0.25,
    seed: int = 0,
    grid: TuneGrid | None = None,
    options: SolverOptions | None = None,
) -> pd.DataFrame:
    """Repeated train/test prediction protocol on one dataset.

    Each split holds out ``test_fraction`` of every study's rows, fits
    the method on the rest (full cross-validation on the training
    portion) and scores the held-out rows with :func:`predict_eval`.
    Returns one row per (split, study) with the logrank statistic, plus
    the selected-model size of that split.
    """
    if n_splits < 1:
        raise ValidationError("n_splits must be at least 1")
    rows = []
    for s in range(n_splits):
        train_idx, test_idx = split_indices(ms, test_fraction, seed, split=s)
        mf = fit_method(ms.subset(train_idx), method, grid=grid, seed=seed,
                        options=options)
        pe = predict_eval(ms.subset(test_idx), mf.coef_original)
        size = int(np.count_nonzero(mf.coef_original))
        for m in range(ms.n_studies):
            rows.append(
                {
                    "method": method,
                    "split": s,
                    "study": m + 1,
                    "logrank": pe.per_study[m],
                    "degenerate": pe.degenerate[m],
                    "size": size,
                }
            )
    return pd.DataFrame(rows)


@dataclass
class BenchmarkResult:
    """Raw per-cell metrics, per-(setting, method) summary, failures."""

    raw: pd.DataFrame
    summary: pd.DataFrame
    failures: pd.DataFrame

    @property
    def n_failures(self) -> int:
        return len(self.failures)


def _bench_cell(config: SimConfig, methods, seed: int, replicate: int,
                grid, options):
    """All methods on one simulated replicate; never raises."""
    ms, truth = gen_replicate(config, seed, replicate)
    rows, fails = [], []
    for method in methods:
        start = time.perf_counter()
        try:
            mf = fit_method(ms, method, grid=grid, seed=seed, options=options)
            sm = selection_metrics(mf.coef_original, truth.beta)
            rows.append(
                {
                    "setting": config.name,
                    "replicate": replicate,
                    "method": method,
                    "tp": sm.tp,
                    "size": sm.size,
                    "fp": sm.fp,
                    "true_size": sm.true_size,
                    "seconds": time.perf_counter() - start,
                    "status": "ok",
                }
            )
        except Exception as exc:  # captured in the failures table
            rows.append(
                {
                    "setting": config.name,
                    "replicate": replicate,
                    "method": method,
                    "tp": np.nan,
                    "size": np.nan,
                    "fp": np.nan,
                    "true_size": np.nan,
                    "seconds": time.perf_counter() - start,
                    "status": "failed",
                }
            )
            fails.append(
                {
                    "setting": config.name,
                    "replicate": replicate,
                    "method": method,
                    "error": type(exc).__name__,
                    "message": str(exc),
                }
            )
    return rows, fails


def run_benchmark(
    configs,
    methods=ALL_METHODS,
    n_replicates: int = 50,
    seed: int = 0,
    grid: TuneGrid | None = None,
    options: SolverOptions | None = None,
    n_jobs: int = 1,
) -> BenchmarkResult:
    """Simulation benchmark over settings x replicates x methods.

    Replicate ``r`` of every setting uses the same generation seed pair
    ``(seed, r)``, so results are reproducible regardless of ``n_jobs``.
    Summary rows average the ok replicates of each (setting, method).
    """
    configs = list(configs)
    if not configs:
        raise ValidationError("at least one simulation setting is required")
    methods = tuple(methods)
    for m in methods:
        if m not in ALL_METHODS:
            raise ValidationError(
                f"unknown method code {m!r}; expected one of {ALL_METHODS}"
            )
    if n_replicates < 1:
        raise ValidationError("n_replicates must be at least 1")
    cells = Parallel(n_jobs=n_jobs)(
        delayed(_bench_cell)(cfg, methods, seed, r, grid, options)
        for cfg in configs
        for r in range(n_replicates)
    )
    rows, fails = [], []
    for cell_rows, cell_fails in cells:
        rows.extend(cell_rows)
        fails.extend(cell_fails)
    raw = pd.DataFrame(rows)
    failures = pd.DataFrame(
        fails, columns=["setting", "replicate", "method", "error", "message"]
    )
    ok = raw[raw["status"] == "ok"]
    if len(ok):
        summary = (
            ok.groupby(["setting", "method"], as_index=False)
            .agg(
                n_ok=("replicate", "size"),
                tp=("tp", "mean"),
                size=("size", "mean"),
                fp=("fp", "mean"),
                true_size=("true_size", "mean"),
                seconds=("seconds", "mean"),
            )
        )
    else:
        summary = pd.DataFrame(
            columns=["setting", "method", "n_ok", "tp", "size", "fp",
                     "true_size", "seconds"]
        )
    return BenchmarkResult(raw=raw, summary=summary, failures=failures)
