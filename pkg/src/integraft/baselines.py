"""Non-integrative baselines: per-study fits and full pooling.

``meta_fit`` tunes and fits a single-study concave fit (mcp base) on
each study separately and reports the columns side by side, so the
selection union is the concatenation of the per-study selections.

``pooled_fit`` stacks the studies into one pseudo-study with a shared
coefficient vector, asserting full homogeneity.  Kaplan-Meier weights
are computed per study *before* stacking, so the pooled loss is exactly
the multi-study loss with every study forced to one common column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data import MultiStudy, Study, standardize
from .errors import ContractError, ValidationError
from .penalty import PenaltySpec
from .solver import FitResult, IndexSets, SolverOptions, fit, fit_path
from .tuning import (
    TuneGrid,
    cross_validate,
    heldout_loss,
    lambda_max,
    make_folds,
    make_lambda_grid,
    make_spec,
)


@dataclass
class BaselineResult:
    """Fitted baseline with per-study columns on both scales."""

    coef: np.ndarray
    coef_original: np.ndarray
    selected: IndexSets
    specs: tuple
    cv_table: pd.DataFrame


def meta_fit(
    ms: MultiStudy,
    grid: TuneGrid | None = None,
    seed: int = 0,
    options: SolverOptions | None = None,
    folds: list | None = None,
) -> BaselineResult:
    """Tune and fit each study on its own; columns are independent."""
    if ms.standardized:
        raise ContractError("meta_fit expects raw (unstandardized) data")
    if folds is not None and len(folds) != ms.n_studies:
        raise ValidationError("folds must carry one label array per study")
    grid = grid or TuneGrid()
    options = options or SolverOptions()
    coef = np.zeros((ms.p, ms.n_studies))
    coef_orig = np.zeros((ms.p, ms.n_studies))
    specs = []
    tables = []
    for m, st in enumerate(ms.studies):
        sub = MultiStudy((st,))
        best, table = cross_validate(
            sub,
            "gmcp",
            grid=grid,
            seed=seed,
            options=options,
            folds=None if folds is None else [folds[m]],
        )
        res = fit(standardize(sub), best, options=options)
        coef[:, m] = res.coef[:, 0]
        coef_orig[:, m] = res.coef_original[:, 0]
        specs.append(best)
        table = table.assign(study=m + 1)
        tables.append(table)
    return BaselineResult(
        coef=coef,
        coef_original=coef_orig,
        selected=IndexSets.from_coef(coef_orig),
        specs=tuple(specs),
        cv_table=pd.concat(tables, ignore_index=True),
    )


def _pool(studies: list) -> Study:
    """Stack per-study rows; weights are rescaled so the pooled loss
    with one shared column equals the multi-study loss."""
    n = sum(st.n for st in studies)
    y = np.concatenate([st.y for st in studies])
    delta = np.concatenate([st.delta for st in studies])
    x = np.vstack([st.x for st in studies])
    w = np.concatenate([st.weights * (st.n / n) for st in studies])
    return Study(y=y, delta=delta, x=x, weights=w, is_sorted=False)


def pooled_fit(
    ms: MultiStudy,
    grid: TuneGrid | None = None,
    seed: int = 0,
    options: SolverOptions | None = None,
    folds: list | None = None,
) -> BaselineResult:
    """Tune and fit one shared coefficient vector on the stacked studies.

    Cross-validation folds are still drawn within each original study,
    training pools the per-study training rows (weights recomputed per
    study first), and the held-out loss is scored per study with the
    shared coefficients.
    """
    if ms.standardized:
        raise ContractError("pooled_fit expects raw (unstandardized) data")
    grid = grid or TuneGrid()
    options = options or SolverOptions()
    if folds is None:
        folds = make_folds(ms, grid.n_folds, seed)
    elif len(folds) != ms.n_studies:
        raise ValidationError("folds must carry one label array per study")

    pooled_full = standardize(MultiStudy((_pool(list(ms.studies)),)))
    fold_data = []
    for f in range(grid.n_folds):
        train_parts = [
            Study.from_data(st.y[lab != f], st.delta[lab != f], st.x[lab != f])
            for st, lab in zip(ms.studies, folds)
        ]
        train = standardize(MultiStudy((_pool(train_parts),)))
        val = [
            (st.y[lab == f], st.delta[lab == f], st.x[lab == f])
            for st, lab in zip(ms.studies, folds)
        ]
        fold_data.append((train, val))

    rows = []
    best = None
    for a in grid.a_values:
        if grid.lambdas is not None:
            lams = np.asarray(grid.lambdas, dtype=float)
        else:
            lams = make_lambda_grid(
                lambda_max(pooled_full, "gmcp", a=a), grid.n_lambda, grid.lambda_min_ratio
            )
        fold_losses = np.empty((grid.n_folds, lams.size))
        for f, (train, val) in enumerate(fold_data):
            specs = [make_spec("gmcp", lam, a=a) for lam in lams]
            results = fit_path(train, specs, options=options)
            for k, res in enumerate(results):
                shared = np.repeat(res.coef_original, ms.n_studies, axis=1)
                fold_losses[f, k] = heldout_loss(val, shared)
            for lam, lv in zip(lams, fold_losses[f]):
                rows.append(
                    {"method": "pooled", "a": a, "ratio": np.nan, "lam": lam,
                     "fold": f, "loss": lv}
                )
        means = fold_losses.mean(axis=0)
        k = int(np.argmin(means))
        if best is None or means[k] < best[0]:
            best = (float(means[k]), a, float(lams[k]))

    _, a_best, lam_best = best
    spec = make_spec("gmcp", lam_best, a=a_best)
    res = fit(pooled_full, spec, options=options)
    coef = np.repeat(res.coef, ms.n_studies, axis=1)
    coef_orig = np.repeat(res.coef_original, ms.n_studies, axis=1)
    return BaselineResult(
        coef=coef,
        coef_original=coef_orig,
        selected=IndexSets.from_coef(coef_orig),
        specs=(spec,),
        cv_table=pd.DataFrame(rows),
    )
