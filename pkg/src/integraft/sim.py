"""Synthetic multi-study survival data with controlled censoring.

Covariates are zero-mean unit-variance Gaussians with either an
autoregressive correlation (``ar(rho)``: corr(x_j, x_k) = rho^|j-k|) or
a short-banded one (``banded1``: 0.3 at lag 1; ``banded2``: 0.6, 0.3;
``banded3``: 0.6, 0.3, 0.15).  Log event times follow a linear model

    log T = intercept + x . beta + N(0, 1)

and log censoring times are uniform on a window calibrated analytically
so that the expected censoring fraction hits its target exactly.

Sparse truths come in two structures.  ``homogeneous``: all studies
share one support of ``n_important`` covariates (values drawn per study
unless ``shared_values``).  ``heterogeneous``: each study has
``n_important`` important covariates of which ``n_shared`` are common
to all studies and the rest are study-specific and pairwise disjoint.

Randomness is drawn from counter-based streams keyed by
``(seed, replicate, purpose, study)``, so any study's data is unchanged
when more studies or replicates are added.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.linalg import cholesky_banded

from .data import MultiStudy, Study, write_study_csv
from .errors import CalibrationError, ValidationError

SIGNAL_VARIANCES = {"low": 0.3125, "high": 1.25}
_BANDED_LEVELS = {1: (0.3,), 2: (0.6, 0.3), 3: (0.6, 0.3, 0.15)}

# Stream purposes (part of the on-disk reproducibility contract).
_P_SUPPORT, _P_VALUES, _P_COV, _P_NOISE, _P_CENSOR, _P_SPLIT = range(6)


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based generator for one (seed, key) pair."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Correlation:
    """Covariate correlation: ``kind`` is ``"ar"`` or ``"banded"``."""

    kind: str
    rho: float = 0.0
    band: tuple = ()

    def entry(self, lag: int) -> float:
        """Correlation between covariates ``lag`` positions apart."""
        lag = abs(int(lag))
        if lag == 0:
            return 1.0
        if self.kind == "ar":
            return float(self.rho ** lag)
        return float(self.band[lag - 1]) if lag <= len(self.band) else 0.0


def parse_correlation(text) -> Correlation:
    """Parse ``"ar(rho)"`` or ``"banded1|2|3"`` (Correlation passes through)."""
    if isinstance(text, Correlation):
        return text
    valid = "'ar(rho)' with |rho| < 1, or 'banded1', 'banded2', 'banded3'"
    if not isinstance(text, str):
        raise ValidationError(f"correlation must be a string; valid forms: {valid}")
    name = text.strip().lower()
    if name.startswith("ar(") and name.endswith(")"):
        try:
            rho = float(name[3:-1])
        except ValueError:
            raise ValidationError(f"invalid correlation {text!r}; valid forms: {valid}")
        if not (abs(rho) < 1.0):
            raise ValidationError(f"ar correlation requires |rho| < 1, got {rho}")
        return Correlation(kind="ar", rho=rho)
    if name.startswith("banded"):
        try:
            level = int(name[len("banded"):])
        except ValueError:
            raise ValidationError(f"invalid correlation {text!r}; valid forms: {valid}")
        if level not in _BANDED_LEVELS:
            raise ValidationError(f"banded level must be one of {sorted(_BANDED_LEVELS)}")
        return Correlation(kind="banded", band=_BANDED_LEVELS[level])
    raise ValidationError(f"invalid correlation {text!r}; valid forms: {valid}")


@dataclass(frozen=True)
class SimConfig:
    """One simulation setting.

    ``signal`` picks the variance of the nonzero coefficients
    (``low``: 0.3125, ``high``: 1.25).  ``name`` is an optional label
    used in benchmark tables; it defaults to
    ``structure:correlation:signal``.
    """

    n_studies: int = 3
    n_per_study: int = 100
    p: int = 1000
    correlation: object = "ar(0.5)"
    structure: str = "homogeneous"
    signal: str = "low"
    n_important: int = 20
    n_shared: int = 10
    target_censoring: float = 0.3
    intercept: float = 0.5
    shared_values: bool = False
    name: str = ""

    def __post_init__(self):
        if self.n_studies < 1:
            raise ValidationError("n_studies must be at least 1")
        if self.n_per_study < 2:
            raise ValidationError("n_per_study must be at least 2")
        if self.structure not in ("homogeneous", "heterogeneous"):
            raise ValidationError("structure must be homogeneous or heterogeneous")
        if self.signal not in SIGNAL_VARIANCES:
            raise ValidationError(f"signal must be one of {sorted(SIGNAL_VARIANCES)}")
        if not (0.0 < self.target_censoring < 1.0):
            raise ValidationError("target_censoring must lie in (0, 1)")
        if self.n_important < 1:
            raise ValidationError("n_important must be at least 1")
        corr = parse_correlation(self.correlation)
        object.__setattr__(self, "correlation", corr)
        if self.structure == "heterogeneous":
            if not (0 <= self.n_shared <= self.n_important):
                raise ValidationError("n_shared must lie in [0, n_important]")
            needed = self.n_shared + self.n_studies * (self.n_important - self.n_shared)
        else:
            needed = self.n_important
        if self.p < needed:
            raise ValidationError(
                f"p={self.p} is too small for the requested support ({needed})"
            )
        if not self.name:
            tag = (
                f"ar({corr.rho:g})" if corr.kind == "ar" else f"banded{len(corr.band)}"
            )
            object.__setattr__(
                self, "name", f"{self.structure}:{tag}:{self.signal}"
            )

    @property
    def signal_variance(self) -> float:
        return SIGNAL_VARIANCES[self.signal]


@dataclass(frozen=True)
class TruthSet:
    """True coefficients and the designed supports."""

    beta: np.ndarray
    support: tuple
    shared: frozenset

    @property
    def nonzero_pairs(self) -> int:
        return int(np.count_nonzero(self.beta))


def gen_covariates(n: int, p: int, correlation, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` rows of correlated standard Gaussian covariates."""
    corr = parse_correlation(correlation)
    if n < 1 or p < 1:
        raise ValidationError("n and p must be positive")
    if corr.kind == "ar":
        z = rng.standard_normal((n, p))
        x = np.empty((n, p))
        x[:, 0] = z[:, 0]
        scale = np.sqrt(1.0 - corr.rho ** 2)
        for j in range(1, p):
            x[:, j] = corr.rho * x[:, j - 1] + scale * z[:, j]
        return x
    b = len(corr.band)
    ab = np.zeros((b + 1, p))
    ab[0] = 1.0
    for k, val in enumerate(corr.band, start=1):
        ab[k, : p - k] = val
    try:
        lower = cholesky_banded(ab, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValidationError("correlation matrix is not positive definite") from exc
    z = rng.standard_normal((n, p))
    x = np.zeros((n, p))
    for k in range(b + 1):
        x[:, k:] += lower[k, : p - k] * z[:, : p - k]
    return x


def linpred_variance(beta_col: np.ndarray, correlation) -> float:
    """Population variance of ``x . beta`` under the given correlation."""
    corr = parse_correlation(correlation)
    idx = np.flatnonzero(beta_col)
    total = 0.0
    for ai, a in enumerate(idx):
        for b in idx[ai:]:
            c = corr.entry(b - a) * beta_col[a] * beta_col[b]
            total += c if a == b else 2.0 * c
    return float(total)


def gen_truth(config: SimConfig, seed: int, replicate: int = 0) -> TruthSet:
    """Draw supports and coefficient values for one replicate."""
    rng_support = rng_stream(seed, replicate, _P_SUPPORT, 0)
    p, n_st = config.p, config.n_studies
    beta = np.zeros((p, n_st))
    sd = np.sqrt(config.signal_variance)
    if config.structure == "homogeneous":
        support = np.sort(rng_support.choice(p, size=config.n_important, replace=False))
        shared_vals = None
        if config.shared_values:
            shared_vals = rng_stream(seed, replicate, _P_VALUES, 0).normal(
                0.0, sd, size=config.n_important
            )
        supports = []
        for m in range(n_st):
            vals = (
                shared_vals
                if shared_vals is not None
                else rng_stream(seed, replicate, _P_VALUES, m).normal(
                    0.0, sd, size=config.n_important
                )
            )
            beta[support, m] = vals
            supports.append(frozenset(support.tolist()))
        return TruthSet(beta=beta, support=tuple(supports), shared=frozenset(support.tolist()))
    n_spec = config.n_important - config.n_shared
    # Slice a full permutation so study m's support does not depend on
    # how many studies follow it.
    drawn = rng_support.permutation(p)
    shared = np.sort(drawn[: config.n_shared])
    supports = []
    for m in range(n_st):
        own = drawn[config.n_shared + m * n_spec : config.n_shared + (m + 1) * n_spec]
        idx = np.sort(np.concatenate([shared, own]))
        beta[idx, m] = rng_stream(seed, replicate, _P_VALUES, m).normal(
            0.0, sd, size=idx.size
        )
        supports.append(frozenset(idx.tolist()))
    return TruthSet(beta=beta, support=tuple(supports), shared=frozenset(shared.tolist()))


def _censor_fraction(u: float, mu: float, sigma: float, lo: float) -> float:
    """P(log C < log T) for log C ~ U(lo, u), log T ~ N(mu, sigma^2)."""
    za = (lo - mu) / sigma
    zb = (u - mu) / sigma
    tail = 1.0 - stats.norm.cdf(zb)
    mid = (mu - lo) * (stats.norm.cdf(zb) - stats.norm.cdf(za)) - sigma * (
        stats.norm.pdf(zb) - stats.norm.pdf(za)
    )
    return float(tail + mid / (u - lo))


def censoring_window(
    mu: float, sigma: float, target: float, max_iter: int = 200
) -> tuple:
    """Uniform window (lo, hi) for log censoring times hitting ``target``.

    ``lo`` is the 1st percentile of the log event time distribution;
    ``hi`` solves the expected censoring fraction by bisection on the
    analytic expression, which is decreasing in ``hi``.
    """
    if not (0.0 < target < 0.95):
        raise ValidationError("target censoring must lie in (0, 0.95)")
    lo = mu + sigma * stats.norm.ppf(0.01)
    hi = lo + sigma
    it = 0
    while _censor_fraction(hi, mu, sigma, lo) > target:
        hi = lo + 2.0 * (hi - lo)
        it += 1
        if it >= max_iter:
            raise CalibrationError("censoring calibration failed to bracket the target")
    left, right = lo + 1e-12 * sigma, hi
    for _ in range(max_iter):
        mid = 0.5 * (left + right)
        if _censor_fraction(mid, mu, sigma, lo) > target:
            left = mid
        else:
            right = mid
    return lo, right


def gen_responses(
    x: np.ndarray,
    beta_col: np.ndarray,
    intercept: float,
    target_censoring: float,
    noise_rng: np.random.Generator,
    censor_rng: np.random.Generator,
    linpred_var: float | None = None,
) -> tuple:
    """Log observation times and event indicators for one study.

    Passing ``target_censoring=0`` skips censoring entirely (all rows
    events).  ``linpred_var`` is the population variance of the linear
    predictor; when omitted, the empirical variance of ``x . beta`` is
    used for the calibration.
    """
    x = np.asarray(x, dtype=float)
    beta_col = np.asarray(beta_col, dtype=float)
    if x.ndim != 2 or beta_col.shape != (x.shape[1],):
        raise ValidationError("x must be (n, p) and beta_col must be (p,)")
    lp = x @ beta_col
    log_t = intercept + lp + noise_rng.standard_normal(x.shape[0])
    if target_censoring == 0.0:
        return log_t, np.ones(x.shape[0])
    var = float(np.var(lp)) if linpred_var is None else float(linpred_var)
    sigma = np.sqrt(1.0 + var)
    lo, hi = censoring_window(intercept, sigma, target_censoring)
    log_c = censor_rng.uniform(lo, hi, size=x.shape[0])
    y = np.minimum(log_t, log_c)
    delta = (log_t <= log_c).astype(float)
    return y, delta


def gen_replicate(config: SimConfig, seed: int, replicate: int = 0):
    """One full multi-study replicate: ``(MultiStudy, TruthSet)``."""
    truth = gen_truth(config, seed, replicate)
    studies = []
    for m in range(config.n_studies):
        x = gen_covariates(
            config.n_per_study,
            config.p,
            config.correlation,
            rng_stream(seed, replicate, _P_COV, m),
        )
        y, delta = gen_responses(
            x,
            truth.beta[:, m],
            config.intercept,
            config.target_censoring,
            rng_stream(seed, replicate, _P_NOISE, m),
            rng_stream(seed, replicate, _P_CENSOR, m),
            linpred_var=linpred_variance(truth.beta[:, m], config.correlation),
        )
        studies.append(Study.from_data(y, delta, x))
    return MultiStudy(tuple(studies)), truth


def split_indices(
    ms: MultiStudy, test_fraction: float, seed: int, split: int = 0
) -> tuple:
    """Per-study train/test row indices for one repeated split."""
    if not (0.0 < test_fraction < 1.0):
        raise ValidationError("test_fraction must lie in (0, 1)")
    train, test = [], []
    for m, st in enumerate(ms.studies):
        n_test = max(1, int(round(st.n * test_fraction)))
        if n_test >= st.n:
            raise ValidationError("test_fraction leaves no training rows")
        perm = rng_stream(seed, split, _P_SPLIT, m).permutation(st.n)
        test.append(np.sort(perm[:n_test]))
        train.append(np.sort(perm[n_test:]))
    return train, test


def write_replicate(
    prefix: str, ms: MultiStudy, truth: TruthSet | None = None, header_lines=None
) -> list:
    """Write one replicate to ``<prefix>_study<m>.csv`` (+ truth sidecar).

    Returns the list of paths written.  The sidecar lists the nonzero
    true coefficients as ``covariate,study,beta_true`` with 1-based
    indices.
    """
    paths = []
    for m, st in enumerate(ms.studies, start=1):
        path = f"{prefix}_study{m}.csv"
        write_study_csv(path, st, header_lines=header_lines)
        paths.append(path)
    if truth is not None:
        path = f"{prefix}_truth.csv"
        with open(path, "w") as fh:
            for line in header_lines or []:
                fh.write(f"# {line}\n")
            fh.write("covariate,study,beta_true\n")
            rows, cols = np.nonzero(truth.beta)
            for j, m in zip(rows, cols):
                fh.write(f"{j + 1},{m + 1},{float(truth.beta[j, m])!r}\n")
        paths.append(path)
    return paths
