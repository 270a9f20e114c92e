import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from integraft import kernels
from integraft.errors import ValidationError
from integraft.penalty import (
    BASES,
    PenaltySpec,
    composite_value,
    group_prox,
    penalty_deriv,
    penalty_value,
    row_penalty,
    scalar_prox,
    sparse_group_value,
    total_penalty,
)

A_FOR = {"lasso": None, "mcp": 3.0, "scad": 3.7}
CODE_FOR = {"lasso": kernels.LASSO, "mcp": kernels.MCP, "scad": kernels.SCAD}


def prox_objective(u, v, step, base, lam, a):
    return 0.5 * (u - v) ** 2 + step * penalty_value(abs(u), base, lam, a)


def brute_prox(v, step, base, lam, a, half_width=2.0, grid=20001):
    """Grid-search oracle for the scalar proximal rule."""
    lo, hi = v - half_width, v + half_width
    us = np.linspace(min(lo, -0.5), max(hi, 0.5), grid)
    us = np.concatenate([us, [0.0, v]])  # always consider the kink and v
    vals = 0.5 * (us - v) ** 2 + step * penalty_value(np.abs(us), base, lam, a)
    return us[int(np.argmin(vals))]


class TestValueAndDeriv:
    def test_hand_values_mcp(self):
        lam, a = 1.0, 3.0
        assert penalty_value(1.5, "mcp", lam, a) == pytest.approx(1.125)
        assert penalty_value(3.0, "mcp", lam, a) == pytest.approx(1.5)
        assert penalty_value(40.0, "mcp", lam, a) == pytest.approx(1.5)
        assert penalty_deriv(0.0, "mcp", lam, a) == pytest.approx(1.0)
        assert penalty_deriv(1.5, "mcp", lam, a) == pytest.approx(0.5)
        assert penalty_deriv(3.0, "mcp", lam, a) == 0.0
        assert penalty_deriv(9.0, "mcp", lam, a) == 0.0

    def test_hand_values_scad(self):
        lam, a = 1.0, 3.7
        assert penalty_value(0.5, "scad", lam, a) == pytest.approx(0.5)
        assert penalty_value(2.0, "scad", lam, a) == pytest.approx(9.8 / 5.4)
        assert penalty_value(5.0, "scad", lam, a) == pytest.approx(2.35)
        assert penalty_deriv(0.5, "scad", lam, a) == pytest.approx(1.0)
        assert penalty_deriv(2.0, "scad", lam, a) == pytest.approx(1.7 / 2.7)
        assert penalty_deriv(4.0, "scad", lam, a) == 0.0

    def test_lasso_is_linear(self):
        assert penalty_value(2.5, "lasso", 0.8) == pytest.approx(2.0)
        assert penalty_deriv(7.0, "lasso", 0.8) == pytest.approx(0.8)

    def test_deriv_matches_finite_differences(self, rng):
        h = 1e-6
        for base in BASES:
            a = A_FOR[base]
            for lam in (0.3, 1.0, 2.5):
                kinks = [lam] if base == "lasso" else [lam, a * lam]
                t = rng.uniform(h, 4.0 * lam, size=500)
                away = np.all(
                    [np.abs(t - k) > 50 * h for k in kinks], axis=0
                )
                t = t[away]
                fd = (
                    penalty_value(t + h, base, lam, a)
                    - penalty_value(t - h, base, lam, a)
                ) / (2 * h)
                np.testing.assert_allclose(
                    penalty_deriv(t, base, lam, a), fd, atol=1e-6
                )

    @given(
        base=st.sampled_from(BASES),
        lam=st.floats(0.05, 3.0),
        t1=st.floats(0.0, 10.0),
        t2=st.floats(0.0, 10.0),
    )
    @settings(max_examples=300, deadline=None)
    def test_deriv_nonincreasing_and_bounded_by_lam(self, base, lam, t1, t2):
        a = A_FOR[base]
        lo, hi = sorted([t1, t2])
        d_lo = penalty_deriv(lo, base, lam, a)
        d_hi = penalty_deriv(hi, base, lam, a)
        assert d_lo + 1e-12 >= d_hi >= 0.0
        assert d_lo <= lam + 1e-12
        assert penalty_deriv(0.0, base, lam, a) == pytest.approx(lam)

    @given(
        base=st.sampled_from(("mcp", "scad")),
        lam=st.floats(0.05, 3.0),
        t=st.floats(0.0, 5.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_flat_beyond_a_lam(self, base, lam, t):
        a = A_FOR[base]
        cap = penalty_value(a * lam, base, lam, a)
        assert penalty_value(a * lam + t, base, lam, a) == pytest.approx(cap)
        # exactly at the kink, rounding of t/a can leave an ulp behind
        assert penalty_deriv(a * lam + t, base, lam, a) <= 1e-15 * lam

    def test_value_continuous_at_kinks(self):
        eps = 1e-9
        for base in ("mcp", "scad"):
            a, lam = A_FOR[base], 1.3
            for k in (lam, a * lam):
                lo = penalty_value(k - eps, base, lam, a)
                hi = penalty_value(k + eps, base, lam, a)
                assert abs(hi - lo) < 1e-7

    def test_parameter_validation(self):
        with pytest.raises(ValidationError):
            penalty_value(1.0, "mcp", 1.0, 1.0)  # a must exceed 1
        with pytest.raises(ValidationError):
            penalty_value(1.0, "scad", 1.0, 2.0)  # a must exceed 2
        with pytest.raises(ValidationError):
            penalty_value(1.0, "lasso", 1.0, 3.0)  # lasso takes no a
        with pytest.raises(ValidationError):
            penalty_value(1.0, "mcp", -0.1, 3.0)
        with pytest.raises(ValidationError):
            penalty_value(-1.0, "mcp", 1.0, 3.0)
        with pytest.raises(ValidationError):
            penalty_deriv(1.0, "ridge", 1.0)


class TestScalarProx:
    def test_kill_region_is_closed(self):
        for base in BASES:
            a = A_FOR[base]
            lam, step = 0.7, 1.0
            edge = step * lam if base != "scad" else step * lam
            assert scalar_prox(edge, step, base, lam, a) == 0.0
            assert scalar_prox(-edge, step, base, lam, a) == 0.0
            assert scalar_prox(edge * 1.0001, step, base, lam, a) != 0.0

    def test_identity_beyond_flat_region(self):
        for base in ("mcp", "scad"):
            a = A_FOR[base]
            v = a * 1.1 * 0.9  # just beyond a * lam with lam = 0.9
            assert scalar_prox(v + 1.0, 1.0, base, 0.9, a) == v + 1.0

    def test_odd_symmetry(self, rng):
        for base in BASES:
            a = A_FOR[base]
            for v in rng.normal(scale=2.0, size=50):
                assert scalar_prox(-v, 0.7, base, 1.1, a) == pytest.approx(
                    -scalar_prox(v, 0.7, base, 1.1, a)
                )

    def test_matches_brute_force(self, rng):
        for base in BASES:
            a = A_FOR[base]
            for step in (0.4, 1.0):
                for lam in (0.3, 1.0):
                    for v in rng.uniform(-4, 4, size=30):
                        u = scalar_prox(v, step, base, lam, a)
                        u0 = brute_prox(v, step, base, lam, a)
                        f = prox_objective(u, v, step, base, lam, a)
                        f0 = prox_objective(u0, v, step, base, lam, a)
                        assert f <= f0 + 1e-8

    def test_step_admissibility(self):
        with pytest.raises(ValidationError):
            scalar_prox(1.0, 3.0, "mcp", 1.0, 3.0)
        with pytest.raises(ValidationError):
            scalar_prox(1.0, 2.8, "scad", 1.0, 3.7)
        with pytest.raises(ValidationError):
            scalar_prox(1.0, 0.0, "lasso", 1.0)

    @given(
        base=st.sampled_from(BASES),
        v=st.floats(-6, 6),
        lam=st.floats(0.01, 2.0),
        step=st.floats(0.1, 0.99),
    )
    @settings(max_examples=300, deadline=None)
    def test_never_worse_than_endpoints(self, base, v, lam, step):
        a = A_FOR[base]
        u = scalar_prox(v, step, base, lam, a)
        fu = prox_objective(u, v, step, base, lam, a)
        assert fu <= prox_objective(0.0, v, step, base, lam, a) + 1e-12
        assert fu <= prox_objective(v, v, step, base, lam, a) + 1e-12
        assert abs(u) <= abs(v) + 1e-12  # shrinkage never expands


class TestGroupProx:
    def test_radial(self, rng):
        v = rng.normal(size=5)
        out = group_prox(v, 1.0, "mcp", 0.5, 3.0)
        c = scalar_prox(np.linalg.norm(v), 1.0, "mcp", 0.5, 3.0)
        np.testing.assert_allclose(out, v * c / np.linalg.norm(v), rtol=1e-14)

    def test_zero_vector(self):
        np.testing.assert_array_equal(
            group_prox(np.zeros(3), 1.0, "scad", 1.0, 3.7), np.zeros(3)
        )

    def test_kills_small_groups(self):
        v = np.array([0.1, -0.1])
        assert np.all(group_prox(v, 1.0, "mcp", 1.0, 3.0) == 0.0)

    def test_beats_grid_on_norm(self, rng):
        # the radial reduction is exact: compare against a dense norm grid
        v = rng.normal(size=3)
        nv = np.linalg.norm(v)
        cs = np.linspace(0, nv * 1.5, 30001)
        for base in BASES:
            a = A_FOR[base]
            vals = 0.5 * (cs - nv) ** 2 + penalty_value(cs, base, 0.8, a)
            best = cs[int(np.argmin(vals))]
            out = group_prox(v, 1.0, base, 0.8, a)
            assert np.linalg.norm(out) == pytest.approx(best, abs=1e-3)


class TestKernelAgreement:
    """The compiled kernels must match the reference implementations."""

    def test_pen_value_and_deriv(self, rng):
        for base in BASES:
            a = A_FOR[base] or 2.0  # kernels always receive a float
            code = CODE_FOR[base]
            for t in rng.uniform(0, 8, size=200):
                assert kernels.pen_value(t, code, 1.2, a) == pytest.approx(
                    penalty_value(t, base, 1.2, A_FOR[base]), abs=1e-14
                )
                assert kernels.pen_deriv(t, code, 1.2, a) == pytest.approx(
                    penalty_deriv(t, base, 1.2, A_FOR[base]), abs=1e-14
                )

    def test_scalar_prox(self, rng):
        for base in BASES:
            a = A_FOR[base] or 2.0
            code = CODE_FOR[base]
            for step in (0.3, 1.0):
                for v in rng.uniform(-6, 6, size=200):
                    assert kernels.scalar_prox(v, step, code, 0.9, a) == pytest.approx(
                        scalar_prox(v, step, base, 0.9, A_FOR[base]), abs=1e-14
                    )


class TestPenaltySpec:
    def test_factories_and_fields(self):
        s = PenaltySpec.group_lasso(0.5)
        assert (s.method, s.base, s.lam, s.a) == ("group_lasso", "lasso", 0.5, None)
        s = PenaltySpec.group_concave(0.5)
        assert (s.base, s.a) == ("mcp", 3.0)
        s = PenaltySpec.group_concave(0.5, base="scad")
        assert s.a == 3.7
        s = PenaltySpec.composite(lam_inner=0.4, lam_outer=0.2)
        assert (s.base, s.base_inner) == ("mcp", "mcp")
        s = PenaltySpec.sparse_group(lam_group=0.4, lam_indiv=0.1)
        assert (s.lam_group, s.lam_indiv) == (0.4, 0.1)

    def test_irrelevant_fields_rejected(self):
        with pytest.raises(ValidationError):
            PenaltySpec(method="group_lasso", base="lasso", lam=0.5, lam_inner=0.1)
        with pytest.raises(ValidationError):
            PenaltySpec(method="composite", base="mcp", base_inner="mcp",
                        lam=0.5, a=3.0)
        with pytest.raises(ValidationError):
            PenaltySpec(method="group_lasso", base="mcp", lam=0.5, a=3.0)
        with pytest.raises(ValidationError):
            PenaltySpec(method="group_concave", base="lasso", lam=0.5)
        with pytest.raises(ValidationError):
            PenaltySpec(method="sparse_group", base="mcp", base_inner="lasso",
                        lam_group=0.5, lam_indiv=0.1, a=3.0)

    def test_composite_lasso_inner_allowed(self):
        s = PenaltySpec.composite(lam_inner=0.4, lam_outer=0.2, base_inner="lasso")
        assert s.base_inner == "lasso"
        val = composite_value(s, np.array([0.5, -0.5]))
        # inner sums to 0.4, outer mcp at 0.4 with lam 0.2, a 3
        assert val == pytest.approx(0.2 * 0.4 - 0.4 ** 2 / 6.0)

    def test_dominant_lambda_and_with_dominant(self):
        s = PenaltySpec.composite(lam_inner=0.4, lam_outer=0.2, a=3.0)
        assert s.dominant_lambda == 0.4
        s2 = s.with_dominant(0.8)
        assert (s2.lam_inner, s2.lam_outer) == (0.8, 0.4)
        g = PenaltySpec.sparse_group(lam_group=0.6, lam_indiv=0.3, a=3.0)
        g2 = g.with_dominant(0.2)
        assert (g2.lam_group, g2.lam_indiv) == (0.2, pytest.approx(0.1))

    def test_zero_gate(self):
        assert PenaltySpec.group_lasso(0.5).zero_gate == 0.5
        assert PenaltySpec.composite(0.4, 0.2).zero_gate == pytest.approx(0.08)
        assert PenaltySpec.sparse_group(0.4, 0.1).zero_gate == pytest.approx(0.5)


class TestRowPenalties:
    def test_composite_worked_example(self):
        # inner mcp lam 1 a 3 at |1.5| twice: 2 * 1.125 = 2.25, then the
        # outer mcp with lam 1, a 3 at 2.25: 2.25 - 2.25^2 / 6 = 1.40625
        spec = PenaltySpec.composite(lam_inner=1.0, lam_outer=1.0, a=3.0)
        assert composite_value(spec, np.array([1.5, -1.5])) == pytest.approx(1.40625)
        # beyond the outer knee the row penalty saturates at a*lam^2/2
        assert composite_value(spec, np.array([40.0, -40.0])) == pytest.approx(1.5)

    def test_sparse_group_worked_example(self):
        # group mcp lam 1 a 3 at norm sqrt(2) plus two mcp terms at 1
        spec = PenaltySpec.sparse_group(lam_group=1.0, lam_indiv=1.0, a=3.0)
        want = (np.sqrt(2) - 2.0 / 6.0) + 2 * (1.0 - 1.0 / 6.0)
        assert sparse_group_value(spec, np.array([1.0, -1.0])) == pytest.approx(want)

    def test_total_matches_row_sum(self, rng):
        beta = rng.normal(size=(6, 3))
        specs = [
            PenaltySpec.group_lasso(0.4),
            PenaltySpec.group_concave(0.4, a=3.0),
            PenaltySpec.group_concave(0.4, base="scad", a=3.7),
            PenaltySpec.composite(0.4, 0.3, a=3.0),
            PenaltySpec.composite(0.4, 0.3, a=3.0, base_inner="lasso"),
            PenaltySpec.sparse_group(0.4, 0.2, a=3.0),
        ]
        for spec in specs:
            by_rows = sum(row_penalty(spec, beta[j]) for j in range(beta.shape[0]))
            assert total_penalty(spec, beta) == pytest.approx(by_rows, rel=1e-12)

    def test_zero_matrix_has_zero_penalty(self):
        beta = np.zeros((4, 2))
        for spec in (
            PenaltySpec.group_lasso(0.4),
            PenaltySpec.composite(0.4, 0.3),
            PenaltySpec.sparse_group(0.4, 0.2),
        ):
            assert total_penalty(spec, beta) == 0.0
