"""Regularization grids and cross-validation.

Methods are named by the short codes used throughout the command line:

    glasso  group lasso                     (one level)
    gmcp    group concave, mcp base         (level x concavity grid)
    gscad   group concave, scad base        (level x concavity grid)
    cmcp    composite, mcp inner and outer  (level x ratio x concavity)
    sgmcp   sparse group, mcp bases         (level x ratio x concavity)

Two-level methods are searched along a path for the dominant level (the
inner level for ``cmcp``, the group level for ``sgmcp``) crossed with a
small grid of secondary-to-dominant ratios.

The cross-validation criterion is the held-out weighted least squares
loss, with Kaplan-Meier weights recomputed on each held-out subsample
so no information leaks from the training split.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .data import MultiStudy, Study, standardize
from .errors import ContractError, ValidationError
from .penalty import PenaltySpec
from .solver import SolverOptions, fit_path, loss_gradient

METHOD_CODES = ("glasso", "gmcp", "gscad", "cmcp", "sgmcp")
_TWO_LEVEL = ("cmcp", "sgmcp")
_FOLD_KEY = 101  # stream tag for fold shuffling


@dataclass(frozen=True)
class TuneGrid:
    """Search-space controls for :func:`cross_validate`."""

    n_lambda: int = 100
    n_lambda_two: int = 10
    lambda_min_ratio: float = 0.05
    a_values: tuple = (1.8, 3.0, 6.0, 10.0)
    ratios: tuple = (0.1, 0.25, 0.5, 1.0, 2.0)
    n_folds: int = 5
    lambdas: tuple | None = None

    def __post_init__(self):
        if self.n_lambda < 1 or self.n_lambda_two < 1:
            raise ValidationError("grid lengths must be at least 1")
        if not (0.0 < self.lambda_min_ratio < 1.0):
            raise ValidationError("lambda_min_ratio must lie in (0, 1)")
        if self.n_folds < 2:
            raise ValidationError("cross-validation requires at least 2 folds")
        if len(self.a_values) == 0 or any(a <= 1.0 for a in self.a_values):
            raise ValidationError("a_values must be > 1")
        if len(self.ratios) == 0 or any(r <= 0.0 for r in self.ratios):
            raise ValidationError("ratios must be positive")
        if self.lambdas is not None:
            lams = tuple(float(v) for v in self.lambdas)
            if any(b >= a for a, b in zip(lams, lams[1:])) or any(
                v <= 0.0 for v in lams
            ):
                raise ValidationError("explicit lambdas must be positive, strictly decreasing")
            object.__setattr__(self, "lambdas", lams)


def make_spec(method: str, lam: float, a: float | None = None, ratio: float | None = None) -> PenaltySpec:
    """Build the PenaltySpec for a short method code at one grid point."""
    if method == "glasso":
        return PenaltySpec.group_lasso(lam)
    if method == "gmcp":
        return PenaltySpec.group_concave(lam, a=a, base="mcp")
    if method == "gscad":
        return PenaltySpec.group_concave(lam, a=a, base="scad")
    if method == "cmcp":
        ratio = 1.0 if ratio is None else ratio
        return PenaltySpec.composite(lam_inner=lam, lam_outer=ratio * lam, a=3.0 if a is None else a)
    if method == "sgmcp":
        ratio = 1.0 if ratio is None else ratio
        return PenaltySpec.sparse_group(lam_group=lam, lam_indiv=ratio * lam, a=3.0 if a is None else a)
    raise ValidationError(f"unknown method code {method!r}; expected one of {METHOD_CODES}")


def lambda_max(
    ms: MultiStudy,
    method: str,
    a: float | None = None,
    ratio: float = 1.0,
) -> float:
    """Smallest dominant level at which the all-zero fit is stationary.

    Computed on a standardized MultiStudy from the loss anti-gradient at
    zero, ``g[j, m] = (1/n) X_mj' W_m y_m``.  For the group penalties
    this is ``max_j ||g_j||_2``; the two-level methods use their own
    all-zero gates (closed form for ``cmcp``, bisection for ``sgmcp``).
    """
    if method not in METHOD_CODES:
        raise ValidationError(f"unknown method code {method!r}; expected one of {METHOD_CODES}")
    if not ms.standardized:
        raise ContractError("lambda_max requires a standardized MultiStudy")
    if ratio <= 0.0 or not np.isfinite(ratio):
        raise ValidationError("ratio must be positive")
    g = -loss_gradient(ms, np.zeros((ms.p, ms.n_studies)))
    row_norms = np.linalg.norm(g, axis=1)
    if method in ("glasso", "gmcp", "gscad"):
        return float(row_norms.max())
    if method == "cmcp":
        # All-zero rows persist iff |g_jm| <= lam_inner * lam_outer.
        return float(np.sqrt(np.abs(g).max() / ratio))
    # sgmcp: a zero row persists iff its soft-thresholded gradient
    # (at the individual level) has 2-norm at most the group level;
    # both sides are monotone in the level, so bisect.
    absg = np.abs(g)

    def kills(lam: float) -> bool:
        shrunk = np.maximum(absg - ratio * lam, 0.0)
        return bool(np.all(np.linalg.norm(shrunk, axis=1) <= lam))

    hi = float(row_norms.max())
    if hi == 0.0:
        return 0.0
    if not kills(hi):  # numerical safety; hi kills mathematically
        hi *= 1.0 + 1e-12
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if kills(mid):
            hi = mid
        else:
            lo = mid
    return hi


def make_lambda_grid(lam_max: float, length: int = 100, min_ratio: float = 0.05) -> np.ndarray:
    """Log-spaced decreasing grid from ``lam_max`` to ``min_ratio * lam_max``."""
    if not np.isfinite(lam_max) or lam_max <= 0.0:
        raise ValidationError("lam_max must be positive and finite")
    if length < 1:
        raise ValidationError("length must be at least 1")
    if not (0.0 < min_ratio < 1.0):
        raise ValidationError("min_ratio must lie in (0, 1)")
    if length == 1:
        return np.array([lam_max])
    return np.geomspace(lam_max, lam_max * min_ratio, length)


def make_folds(ms: MultiStudy, n_folds: int, seed: int) -> list:
    """Per-study fold labels: seeded shuffle, then round-robin.

    Every study contributes to every fold and within-study fold sizes
    differ by at most one.  Requires each study to have at least
    ``n_folds`` rows.
    """
    if n_folds < 2:
        raise ValidationError("n_folds must be at least 2")
    out = []
    for k, st in enumerate(ms.studies):
        if st.n < n_folds:
            raise ValidationError(
                f"study {k + 1} has {st.n} rows, fewer than {n_folds} folds"
            )
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=int(seed), spawn_key=(_FOLD_KEY, k)))
        )
        perm = rng.permutation(st.n)
        labels = np.empty(st.n, dtype=np.int64)
        labels[perm] = np.arange(st.n) % n_folds
        out.append(labels)
    return out


def heldout_loss(parts: list, coef_original: np.ndarray) -> float:
    """Weighted LS loss of original-scale coefficients on held-out data.

    ``parts`` holds one ``(y, delta, x)`` triple per study (log times,
    raw covariates).  Each part is re-sorted and re-weighted on its own,
    and centered at its own weighted means, so the criterion needs no
    intercept and no training-side information.
    """
    total = 0.0
    n_total = 0
    coef_original = np.asarray(coef_original, dtype=float)
    for m, (y, delta, x) in enumerate(parts):
        st = Study.from_data(y, delta, x)
        w = st.weights
        wsum = w.sum()
        r = (st.y - np.dot(w, st.y) / wsum) - (st.x - (w @ st.x) / wsum) @ coef_original[:, m]
        total += st.n * float(np.dot(w, r * r))
        n_total += st.n
    return total / (2.0 * n_total)


def _combo_lambdas(msf: MultiStudy, method: str, grid: TuneGrid, a, ratio) -> np.ndarray:
    if grid.lambdas is not None:
        return np.asarray(grid.lambdas, dtype=float)
    length = grid.n_lambda_two if method in _TWO_LEVEL else grid.n_lambda
    lmax = lambda_max(msf, method, a=a, ratio=1.0 if ratio is None else ratio)
    return make_lambda_grid(lmax, length, grid.lambda_min_ratio)


def _path_losses(train_ms, val_parts, method, lams, a, ratio, options):
    specs = [make_spec(method, lam, a=a, ratio=ratio) for lam in lams]
    results = fit_path(train_ms, specs, options=options)
    return [heldout_loss(val_parts, res.coef_original) for res in results]


def cross_validate(
    ms: MultiStudy,
    method: str,
    grid: TuneGrid | None = None,
    seed: int = 0,
    options: SolverOptions | None = None,
    folds: list | None = None,
    n_jobs: int = 1,
):
    """Pick a PenaltySpec by K-fold cross-validation.

    ``ms`` must be raw (unstandardized): each training split is
    re-sorted, re-weighted and re-standardized on its own.  Returns
    ``(best_spec, table)`` where the table has one row per grid point
    and fold; the winner minimizes the fold-mean loss, ties resolved in
    grid order (concavity, then ratio, then decreasing level).
    """
    if method not in METHOD_CODES:
        raise ValidationError(f"unknown method code {method!r}; expected one of {METHOD_CODES}")
    if ms.standardized:
        raise ContractError("cross_validate expects raw (unstandardized) data")
    grid = grid or TuneGrid()
    options = options or SolverOptions()
    if folds is None:
        folds = make_folds(ms, grid.n_folds, seed)
    elif len(folds) != ms.n_studies:
        raise ValidationError("folds must carry one label array per study")
    n_folds = grid.n_folds
    msf = standardize(ms)

    fold_data = []
    for f in range(n_folds):
        train = standardize(ms.subset([np.flatnonzero(lab != f) for lab in folds]))
        val = [
            (st.y[lab == f], st.delta[lab == f], st.x[lab == f])
            for st, lab in zip(ms.studies, folds)
        ]
        fold_data.append((train, val))

    a_grid = [None] if method == "glasso" else list(grid.a_values)
    ratio_grid = list(grid.ratios) if method in _TWO_LEVEL else [None]
    combos = [
        (a, ratio, _combo_lambdas(msf, method, grid, a, ratio))
        for a in a_grid
        for ratio in ratio_grid
    ]

    tasks = [
        (ci, f, combos[ci][0], combos[ci][1], combos[ci][2])
        for ci in range(len(combos))
        for f in range(n_folds)
    ]
    losses = Parallel(n_jobs=n_jobs)(
        delayed(_path_losses)(
            fold_data[f][0], fold_data[f][1], method, lams, a, ratio, options
        )
        for (ci, f, a, ratio, lams) in tasks
    )

    by_combo_fold = {}
    rows = []
    for (ci, f, a, ratio, lams), fold_losses in zip(tasks, losses):
        by_combo_fold[ci, f] = fold_losses
        for lam, lv in zip(lams, fold_losses):
            rows.append(
                {
                    "method": method,
                    "a": np.nan if a is None else a,
                    "ratio": np.nan if ratio is None else ratio,
                    "lam": lam,
                    "fold": f,
                    "loss": lv,
                }
            )
    table = pd.DataFrame(rows)

    best = None
    for ci, (a, ratio, lams) in enumerate(combos):
        per_fold = np.array([by_combo_fold[ci, f] for f in range(n_folds)])
        means = per_fold.mean(axis=0)
        k = int(np.argmin(means))
        if best is None or means[k] < best[0]:
            best = (float(means[k]), a, ratio, float(lams[k]))
    _, a_best, ratio_best, lam_best = best
    return make_spec(method, lam_best, a=a_best, ratio=ratio_best), table
