"""Penalty functions, derivatives, proximal rules and row penalties.

Three base penalties on magnitudes ``t >= 0`` with level ``lam`` and
concavity parameter ``a``:

    lasso:  p(t) = lam * t
    mcp:    p'(t) = lam * max(0, 1 - t / (a * lam)),  a > 1
            p(t)  = lam * t - t^2 / (2 a)             for t <= a * lam
                    a * lam^2 / 2                     beyond
    scad:   p'(t) = lam                               for t <= lam
                    (a * lam - t)+ / (a - 1)          for t > lam,  a > 2
            p(t)  = lam * t                           for t <= lam
                    (2 a lam t - t^2 - lam^2) / (2 (a - 1))  mid
                    lam^2 (a + 1) / 2                 beyond

All three satisfy p'(0+) = lam; mcp and scad additionally flatten out
(p'(t) = 0 for t >= a * lam), which the selection methods rely on, so
the plain lasso base is only accepted where explicitly documented.

A :class:`PenaltySpec` names one of the four estimation methods and
carries exactly the parameters that method uses:

    group_lasso     lam * sum_j ||beta_j||_2
    group_concave   sum_j p(||beta_j||_2)             (mcp or scad)
    composite       sum_j p_out(sum_m p_in(|beta_jm|))
    sparse_group    sum_j p_grp(||beta_j||_2) + sum_jm p_ind(|beta_jm|)

where ``beta_j`` is the row of per-study coefficients of covariate j.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

BASES = ("lasso", "mcp", "scad")
METHODS = ("group_lasso", "group_concave", "composite", "sparse_group")
CONCAVE_BASES = ("mcp", "scad")


def _check_base_params(base: str, lam: float, a: float | None, *, context: str = ""):
    where = f" ({context})" if context else ""
    if base not in BASES:
        raise ValidationError(f"unknown penalty base {base!r}{where}")
    if not np.isfinite(lam) or lam < 0.0:
        raise ValidationError(f"lam must be finite and >= 0, got {lam}{where}")
    if base == "lasso":
        if a is not None:
            raise ValidationError(f"lasso admits no concavity parameter{where}")
        return
    if a is None or not np.isfinite(a):
        raise ValidationError(f"{base} requires a finite concavity parameter a{where}")
    if base == "mcp" and a <= 1.0:
        raise ValidationError(f"mcp requires a > 1, got {a}{where}")
    if base == "scad" and a <= 2.0:
        raise ValidationError(f"scad requires a > 2, got {a}{where}")


def penalty_value(t, base: str, lam: float, a: float | None = None):
    """Penalty value at magnitude ``t`` (scalar or array, ``t >= 0``)."""
    _check_base_params(base, lam, a)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValidationError("penalty_value expects nonnegative magnitudes")
    if base == "lasso":
        out = lam * t
    elif base == "mcp":
        out = np.where(t <= a * lam, lam * t - t * t / (2.0 * a), a * lam * lam / 2.0)
    else:  # scad
        mid = (2.0 * a * lam * t - t * t - lam * lam) / (2.0 * (a - 1.0))
        out = np.where(
            t <= lam, lam * t, np.where(t <= a * lam, mid, lam * lam * (a + 1.0) / 2.0)
        )
    return out if out.ndim else float(out)


def penalty_deriv(t, base: str, lam: float, a: float | None = None):
    """Derivative of the penalty at ``t > 0`` (right derivative at 0)."""
    _check_base_params(base, lam, a)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValidationError("penalty_deriv expects nonnegative magnitudes")
    if base == "lasso":
        out = np.full_like(t, lam)
    elif base == "mcp":
        out = np.maximum(lam - t / a, 0.0)
    else:  # scad
        out = np.where(t <= lam, lam, np.maximum(a * lam - t, 0.0) / (a - 1.0))
    return out if out.ndim else float(out)


def _check_step(step: float, base: str, a: float | None):
    if not np.isfinite(step) or step <= 0.0:
        raise ValidationError(f"step must be finite and > 0, got {step}")
    # The proximal objective 0.5 (u - v)^2 + step * p(|u|) is strictly
    # convex only under these bounds; beyond them the rule below would
    # not return a global minimizer.
    if base == "mcp" and a is not None and a <= step:
        raise ValidationError(f"mcp prox requires a > step ({a} <= {step})")
    if base == "scad" and a is not None and a <= 1.0 + step:
        raise ValidationError(f"scad prox requires a > 1 + step ({a} <= 1 + {step})")


def scalar_prox(v, step: float, base: str, lam: float, a: float | None = None):
    """Minimizer of ``0.5 (u - v)^2 + step * p(|u|)`` (scalar or array).

    Ties at region boundaries resolve to the shrunken branch, so the
    kill region is closed: ``|v| <= step * lam`` maps to exactly 0.
    """
    _check_base_params(base, lam, a)
    _check_step(step, base, a)
    v = np.asarray(v, dtype=float)
    t = np.abs(v)
    sgn = np.sign(v)
    soft = sgn * np.maximum(t - step * lam, 0.0)
    if base == "lasso":
        out = soft
    elif base == "mcp":
        mid = sgn * (t - step * lam) / (1.0 - step / a)
        out = np.where(t <= step * lam, 0.0, np.where(t <= a * lam, mid, v))
    else:  # scad
        mid = sgn * ((a - 1.0) * t - step * a * lam) / (a - 1.0 - step)
        out = np.where(
            t <= (1.0 + step) * lam, soft, np.where(t <= a * lam, mid, v)
        )
    return out if out.ndim else float(out)


def group_prox(v: np.ndarray, step: float, base: str, lam: float, a: float | None = None) -> np.ndarray:
    """Minimizer of ``0.5 ||u - v||^2 + step * p(||u||_2)`` over vectors.

    The solution is radial: the norm solves the scalar problem and the
    direction is inherited from ``v``.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValidationError("group_prox expects a 1-D vector")
    nrm = float(np.linalg.norm(v))
    if nrm == 0.0:
        _check_base_params(base, lam, a)
        _check_step(step, base, a)
        return np.zeros_like(v)
    c = scalar_prox(nrm, step, base, lam, a)
    return v * (c / nrm)


@dataclass(frozen=True)
class PenaltySpec:
    """One estimation method plus exactly the parameters it uses.

    Use the factory classmethods; the constructor validates that fields
    irrelevant to ``method`` are left unset.  ``a`` is shared by every
    concave slot of a spec.
    """

    method: str
    base: str = "mcp"
    base_inner: str | None = None
    lam: float | None = None
    lam_inner: float | None = None
    lam_outer: float | None = None
    lam_group: float | None = None
    lam_indiv: float | None = None
    a: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")
        set_fields = {
            name: getattr(self, name)
            for name in ("lam", "lam_inner", "lam_outer", "lam_group", "lam_indiv")
            if getattr(self, name) is not None
        }
        required = {
            "group_lasso": ("lam",),
            "group_concave": ("lam",),
            "composite": ("lam_inner", "lam_outer"),
            "sparse_group": ("lam_group", "lam_indiv"),
        }[self.method]
        if tuple(sorted(set_fields)) != tuple(sorted(required)):
            raise ValidationError(
                f"{self.method} uses exactly {required}, got {tuple(sorted(set_fields))}"
            )
        if self.method == "group_lasso":
            if self.base != "lasso" or self.base_inner is not None:
                raise ValidationError("group_lasso uses the lasso base only")
            _check_base_params("lasso", self.lam, self.a)
            return
        if self.method == "group_concave":
            if self.base not in CONCAVE_BASES:
                raise ValidationError("group_concave requires an mcp or scad base")
            if self.base_inner is not None:
                raise ValidationError("group_concave has a single penalty slot")
            _check_base_params(self.base, self.lam, self.a)
            return
        if self.method == "composite":
            if self.base not in CONCAVE_BASES:
                raise ValidationError("composite requires a concave outer base")
            inner = self.base_inner
            if inner not in BASES:
                raise ValidationError("composite requires an explicit inner base")
            _check_base_params(self.base, self.lam_outer, self.a, context="outer")
            _check_base_params(
                inner, self.lam_inner, self.a if inner != "lasso" else None,
                context="inner",
            )
            return
        # sparse_group
        if self.base not in CONCAVE_BASES or self.base_inner not in CONCAVE_BASES:
            raise ValidationError("sparse_group requires concave group and individual bases")
        _check_base_params(self.base, self.lam_group, self.a, context="group")
        _check_base_params(self.base_inner, self.lam_indiv, self.a, context="individual")

    # -- factories ----------------------------------------------------

    @classmethod
    def group_lasso(cls, lam: float) -> "PenaltySpec":
        return cls(method="group_lasso", base="lasso", lam=float(lam))

    @classmethod
    def group_concave(cls, lam: float, a: float | None = None, base: str = "mcp") -> "PenaltySpec":
        if a is None:
            a = 3.0 if base == "mcp" else 3.7
        return cls(method="group_concave", base=base, lam=float(lam), a=float(a))

    @classmethod
    def composite(
        cls,
        lam_inner: float,
        lam_outer: float,
        a: float = 3.0,
        base: str = "mcp",
        base_inner: str | None = None,
    ) -> "PenaltySpec":
        return cls(
            method="composite",
            base=base,
            base_inner=base if base_inner is None else base_inner,
            lam_inner=float(lam_inner),
            lam_outer=float(lam_outer),
            a=float(a),
        )

    @classmethod
    def sparse_group(
        cls,
        lam_group: float,
        lam_indiv: float,
        a: float = 3.0,
        base: str = "mcp",
        base_inner: str | None = None,
    ) -> "PenaltySpec":
        return cls(
            method="sparse_group",
            base=base,
            base_inner=base if base_inner is None else base_inner,
            lam_group=float(lam_group),
            lam_indiv=float(lam_indiv),
            a=float(a),
        )

    # -- derived quantities -------------------------------------------

    @property
    def dominant_lambda(self) -> float:
        """The level tuned along a path (secondary levels track a ratio)."""
        if self.method in ("group_lasso", "group_concave"):
            return self.lam
        if self.method == "composite":
            return self.lam_inner
        return self.lam_group

    def with_dominant(self, lam: float) -> "PenaltySpec":
        """Same spec with the dominant level replaced, ratio preserved."""
        if self.method in ("group_lasso", "group_concave"):
            return PenaltySpec(
                method=self.method, base=self.base, lam=float(lam), a=self.a
            )
        if self.method == "composite":
            ratio = self.lam_outer / self.lam_inner
            return PenaltySpec(
                method=self.method,
                base=self.base,
                base_inner=self.base_inner,
                lam_inner=float(lam),
                lam_outer=float(lam) * ratio,
                a=self.a,
            )
        ratio = self.lam_indiv / self.lam_group
        return PenaltySpec(
            method=self.method,
            base=self.base,
            base_inner=self.base_inner,
            lam_group=float(lam),
            lam_indiv=float(lam) * ratio,
            a=self.a,
        )

    @property
    def zero_gate(self) -> float:
        """Scale of the dual bound at an all-zero row, p'(0+) terms."""
        if self.method in ("group_lasso", "group_concave"):
            return self.lam
        if self.method == "composite":
            return self.lam_inner * self.lam_outer
        return self.lam_group + self.lam_indiv


def composite_value(spec: PenaltySpec, beta_row: np.ndarray) -> float:
    """Composite row penalty: outer penalty of summed inner penalties."""
    if spec.method != "composite":
        raise ValidationError("composite_value requires a composite spec")
    row = np.abs(np.asarray(beta_row, dtype=float))
    inner_a = spec.a if spec.base_inner != "lasso" else None
    inner = penalty_value(row, spec.base_inner, spec.lam_inner, inner_a)
    return float(penalty_value(np.sum(inner), spec.base, spec.lam_outer, spec.a))


def sparse_group_value(spec: PenaltySpec, beta_row: np.ndarray) -> float:
    """Sparse-group row penalty: group term plus individual terms."""
    if spec.method != "sparse_group":
        raise ValidationError("sparse_group_value requires a sparse_group spec")
    row = np.asarray(beta_row, dtype=float)
    grp = penalty_value(float(np.linalg.norm(row)), spec.base, spec.lam_group, spec.a)
    ind = penalty_value(np.abs(row), spec.base_inner, spec.lam_indiv, spec.a)
    return float(grp + np.sum(ind))


def row_penalty(spec: PenaltySpec, beta_row: np.ndarray) -> float:
    """Penalty contribution of one coefficient row under any method."""
    row = np.asarray(beta_row, dtype=float)
    if spec.method == "group_lasso":
        return float(penalty_value(float(np.linalg.norm(row)), "lasso", spec.lam))
    if spec.method == "group_concave":
        return float(
            penalty_value(float(np.linalg.norm(row)), spec.base, spec.lam, spec.a)
        )
    if spec.method == "composite":
        return composite_value(spec, row)
    return sparse_group_value(spec, row)


def total_penalty(spec: PenaltySpec, beta: np.ndarray) -> float:
    """Sum of row penalties over a (p, n_studies) coefficient matrix."""
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 2:
        raise ValidationError("total_penalty expects a 2-D coefficient matrix")
    norms = np.linalg.norm(beta, axis=1)
    if spec.method == "group_lasso":
        return float(np.sum(penalty_value(norms, "lasso", spec.lam)))
    if spec.method == "group_concave":
        return float(np.sum(penalty_value(norms, spec.base, spec.lam, spec.a)))
    if spec.method == "composite":
        inner_a = spec.a if spec.base_inner != "lasso" else None
        inner = penalty_value(np.abs(beta), spec.base_inner, spec.lam_inner, inner_a)
        return float(
            np.sum(penalty_value(inner.sum(axis=1), spec.base, spec.lam_outer, spec.a))
        )
    ind = penalty_value(np.abs(beta), spec.base_inner, spec.lam_indiv, spec.a)
    return float(
        np.sum(penalty_value(norms, spec.base, spec.lam_group, spec.a)) + np.sum(ind)
    )
