import numpy as np
import pytest
from scipy import stats

from integraft.data import load_studies
from integraft.errors import ValidationError
from integraft.sim import (
    SIGNAL_VARIANCES,
    Correlation,
    SimConfig,
    censoring_window,
    gen_covariates,
    gen_replicate,
    gen_responses,
    gen_truth,
    linpred_variance,
    parse_correlation,
    rng_stream,
    split_indices,
    write_replicate,
)


class TestRngStream:
    def test_deterministic(self):
        a = rng_stream(5, 1, 2, 3).standard_normal(10)
        b = rng_stream(5, 1, 2, 3).standard_normal(10)
        np.testing.assert_array_equal(a, b)

    def test_keys_give_distinct_streams(self):
        base = rng_stream(5, 1, 2, 3).standard_normal(10)
        for key in [(5, 1, 2, 4), (5, 1, 3, 3), (5, 2, 2, 3), (6, 1, 2, 3)]:
            other = rng_stream(*key).standard_normal(10)
            assert not np.array_equal(base, other)


class TestParseCorrelation:
    def test_ar_form(self):
        corr = parse_correlation("ar(0.5)")
        assert corr.kind == "ar"
        assert corr.rho == 0.5
        assert corr.entry(0) == 1.0
        assert corr.entry(2) == pytest.approx(0.25)
        assert corr.entry(-2) == pytest.approx(0.25)

    def test_banded_forms(self):
        assert parse_correlation("banded1").band == (0.3,)
        assert parse_correlation("banded2").band == (0.6, 0.3)
        c3 = parse_correlation("banded3")
        assert c3.band == (0.6, 0.3, 0.15)
        assert c3.entry(3) == 0.15
        assert c3.entry(4) == 0.0

    def test_passthrough_and_case(self):
        c = Correlation(kind="ar", rho=0.2)
        assert parse_correlation(c) is c
        assert parse_correlation("AR(0.3)").rho == 0.3
        assert parse_correlation(" Banded2 ").band == (0.6, 0.3)

    def test_invalid(self):
        for bad in ("ar(1.0)", "ar(x)", "banded9", "banded", "toeplitz", 7):
            with pytest.raises(ValidationError):
                parse_correlation(bad)


class TestGenCovariates:
    def test_ar_correlation_matches_target(self):
        rng = rng_stream(1, 0)
        x = gen_covariates(60000, 5, "ar(0.6)", rng)
        emp = np.corrcoef(x, rowvar=False)
        for i in range(5):
            for j in range(5):
                assert emp[i, j] == pytest.approx(0.6 ** abs(i - j), abs=0.02)

    def test_banded_correlation_matches_target(self):
        rng = rng_stream(2, 0)
        x = gen_covariates(60000, 6, "banded2", rng)
        emp = np.corrcoef(x, rowvar=False)
        want = {0: 1.0, 1: 0.6, 2: 0.3, 3: 0.0, 4: 0.0, 5: 0.0}
        for i in range(6):
            for j in range(6):
                assert emp[i, j] == pytest.approx(want[abs(i - j)], abs=0.02)

    def test_unit_marginals(self):
        rng = rng_stream(3, 0)
        x = gen_covariates(60000, 4, "banded3", rng)
        np.testing.assert_allclose(x.var(axis=0), 1.0, atol=0.03)
        np.testing.assert_allclose(x.mean(axis=0), 0.0, atol=0.03)

    def test_validation(self):
        rng = rng_stream(0, 0)
        with pytest.raises(ValidationError):
            gen_covariates(0, 3, "ar(0.5)", rng)


class TestGenTruth:
    def _cfg(self, **kw):
        base = dict(n_studies=3, n_per_study=50, p=60, correlation="ar(0.5)",
                    n_important=8, n_shared=4)
        base.update(kw)
        return SimConfig(**base)

    def test_homogeneous_support_shared(self):
        truth = gen_truth(self._cfg(structure="homogeneous"), seed=1)
        assert truth.beta.shape == (60, 3)
        for m in range(3):
            assert truth.support[m] == truth.shared
            assert len(truth.support[m]) == 8
            nz = frozenset(np.flatnonzero(truth.beta[:, m]).tolist())
            assert nz == truth.support[m]
        assert truth.nonzero_pairs == 24
        # values are independent across studies by default
        sub = truth.beta[sorted(truth.shared)]
        assert not np.allclose(sub[:, 0], sub[:, 1])

    def test_homogeneous_shared_values(self):
        truth = gen_truth(self._cfg(structure="homogeneous", shared_values=True), seed=1)
        sub = truth.beta[sorted(truth.shared)]
        np.testing.assert_array_equal(sub[:, 0], sub[:, 1])
        np.testing.assert_array_equal(sub[:, 0], sub[:, 2])

    def test_heterogeneous_overlap_structure(self):
        truth = gen_truth(self._cfg(structure="heterogeneous"), seed=2)
        supports = [set(s) for s in truth.support]
        shared = set(truth.shared)
        assert len(shared) == 4
        for m in range(3):
            assert len(supports[m]) == 8
            assert shared <= supports[m]
        for m in range(3):
            for k in range(m + 1, 3):
                assert supports[m] & supports[k] == shared
        union = set().union(*supports)
        assert len(union) == 4 + 3 * 4
        assert truth.nonzero_pairs == 24

    def test_signal_variance_scales_values(self):
        lo = gen_truth(self._cfg(signal="low"), seed=3)
        hi = gen_truth(self._cfg(signal="high"), seed=3)
        # same streams, scaled by the ratio of standard deviations
        ratio = np.sqrt(SIGNAL_VARIANCES["high"] / SIGNAL_VARIANCES["low"])
        np.testing.assert_allclose(hi.beta, lo.beta * ratio, rtol=1e-12)

    def test_replicates_differ(self):
        cfg = self._cfg()
        a = gen_truth(cfg, seed=1, replicate=0)
        b = gen_truth(cfg, seed=1, replicate=1)
        assert not np.array_equal(a.beta, b.beta)


class TestLinpredVariance:
    def test_matches_monte_carlo(self):
        p = 12
        beta = np.zeros(p)
        beta[[1, 2, 5, 9]] = [0.8, -0.4, 1.1, 0.3]
        for corr in ("ar(0.5)", "banded2"):
            want = linpred_variance(beta, corr)
            x = gen_covariates(400000, p, corr, rng_stream(9, 0))
            got = float(np.var(x @ beta))
            assert got == pytest.approx(want, rel=0.02)

    def test_zero_for_null_vector(self):
        assert linpred_variance(np.zeros(5), "ar(0.5)") == 0.0


class TestCensoringCalibration:
    def test_analytic_fraction_matches_monte_carlo(self):
        mu, sigma, target = 0.5, 1.4, 0.3
        lo, hi = censoring_window(mu, sigma, target)
        assert lo < hi
        rng = np.random.default_rng(0)
        log_t = rng.normal(mu, sigma, size=400000)
        log_c = rng.uniform(lo, hi, size=400000)
        frac = float(np.mean(log_c < log_t))
        assert frac == pytest.approx(target, abs=0.005)

    def test_lower_bound_is_first_percentile(self):
        lo, _ = censoring_window(0.0, 1.0, 0.25)
        assert lo == pytest.approx(stats.norm.ppf(0.01))

    def test_various_targets(self):
        for target in (0.1, 0.3, 0.6):
            lo, hi = censoring_window(1.0, 2.0, target)
            za = (lo - 1.0) / 2.0
            zb = (hi - 1.0) / 2.0
            frac = (1 - stats.norm.cdf(zb)) + (
                (1.0 - lo) * (stats.norm.cdf(zb) - stats.norm.cdf(za))
                - 2.0 * (stats.norm.pdf(zb) - stats.norm.pdf(za))
            ) / (hi - lo)
            assert frac == pytest.approx(target, abs=1e-9)

    def test_target_bounds(self):
        with pytest.raises(ValidationError):
            censoring_window(0.0, 1.0, 0.0)
        with pytest.raises(ValidationError):
            censoring_window(0.0, 1.0, 0.96)


class TestGenResponses:
    def test_no_censoring_mode(self):
        x = rng_stream(4, 0).standard_normal((50, 3))
        beta = np.array([1.0, 0.0, -0.5])
        y, delta = gen_responses(
            x, beta, 0.5, 0.0, rng_stream(4, 1), rng_stream(4, 2)
        )
        assert np.all(delta == 1.0)
        assert y.shape == (50,)

    def test_censoring_fraction_near_target(self):
        fracs = []
        for rep in range(30):
            x = rng_stream(5, rep, 0).standard_normal((200, 4))
            beta = np.array([0.7, 0.0, -0.7, 0.3])
            y, delta = gen_responses(
                x, beta, 0.5, 0.3,
                rng_stream(5, rep, 1), rng_stream(5, rep, 2),
                linpred_var=linpred_variance(beta, "ar(0.0)"),
            )
            fracs.append(1.0 - delta.mean())
        assert np.mean(fracs) == pytest.approx(0.3, abs=0.02)

    def test_shape_validation(self):
        with pytest.raises(ValidationError):
            gen_responses(np.zeros((5, 2)), np.zeros(3), 0.5, 0.3,
                          rng_stream(0, 0), rng_stream(0, 1))


class TestGenReplicate:
    CFG = dict(n_studies=3, n_per_study=40, p=25, correlation="banded1",
               n_important=4, n_shared=2)

    def test_shapes_and_study_invariance(self):
        cfg2 = SimConfig(structure="heterogeneous", **{**self.CFG, "n_studies": 2})
        cfg3 = SimConfig(structure="heterogeneous", **self.CFG)
        ms2, t2 = gen_replicate(cfg2, seed=8)
        ms3, t3 = gen_replicate(cfg3, seed=8)
        assert ms3.n_studies == 3 and ms3.p == 25
        # adding a study leaves earlier studies' data untouched
        for m in range(2):
            np.testing.assert_array_equal(ms2.studies[m].y, ms3.studies[m].y)
            np.testing.assert_array_equal(ms2.studies[m].x, ms3.studies[m].x)
        np.testing.assert_array_equal(t2.beta[:, :2], t3.beta[:, :2])

    def test_deterministic_and_replicate_sensitive(self):
        cfg = SimConfig(**self.CFG)
        a, _ = gen_replicate(cfg, seed=1, replicate=0)
        b, _ = gen_replicate(cfg, seed=1, replicate=0)
        c, _ = gen_replicate(cfg, seed=1, replicate=1)
        np.testing.assert_array_equal(a.studies[0].y, b.studies[0].y)
        assert not np.array_equal(a.studies[0].y, c.studies[0].y)

    def test_config_name_default(self):
        cfg = SimConfig(**self.CFG)
        assert cfg.name == "homogeneous:banded1:low"
        named = SimConfig(name="custom", **self.CFG)
        assert named.name == "custom"

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            SimConfig(structure="mixed")
        with pytest.raises(ValidationError):
            SimConfig(signal="medium")
        with pytest.raises(ValidationError):
            SimConfig(p=10, n_important=20)
        with pytest.raises(ValidationError):
            SimConfig(target_censoring=1.5)
        with pytest.raises(ValidationError):
            SimConfig(structure="heterogeneous", n_shared=30, n_important=20)


class TestSplitIndices:
    def test_partition(self):
        cfg = SimConfig(n_studies=2, n_per_study=41, p=10, n_important=3)
        ms, _ = gen_replicate(cfg, seed=0)
        train, test = split_indices(ms, 0.25, seed=0, split=0)
        for m, st in enumerate(ms.studies):
            merged = np.sort(np.concatenate([train[m], test[m]]))
            np.testing.assert_array_equal(merged, np.arange(st.n))
            assert test[m].size == round(st.n * 0.25)

    def test_split_key_changes_partition(self):
        cfg = SimConfig(n_studies=1, n_per_study=40, p=10, n_important=3)
        ms, _ = gen_replicate(cfg, seed=0)
        t0 = split_indices(ms, 0.25, seed=0, split=0)[1][0]
        t1 = split_indices(ms, 0.25, seed=0, split=1)[1][0]
        assert not np.array_equal(t0, t1)

    def test_fraction_validation(self):
        cfg = SimConfig(n_studies=1, n_per_study=10, p=10, n_important=3)
        ms, _ = gen_replicate(cfg, seed=0)
        with pytest.raises(ValidationError):
            split_indices(ms, 0.0, seed=0)


class TestWriteReplicate:
    def test_roundtrip_through_csv(self, tmp_path):
        cfg = SimConfig(n_studies=2, n_per_study=30, p=8, n_important=3)
        ms, truth = gen_replicate(cfg, seed=4)
        paths = write_replicate(str(tmp_path / "rep"), ms, truth, ["note"])
        assert len(paths) == 3
        back = load_studies(paths[:2])
        for st_w, st_r in zip(ms.studies, back.studies):
            np.testing.assert_allclose(st_r.y, st_w.y, atol=1e-12)
            np.testing.assert_array_equal(st_r.delta, st_w.delta)
            np.testing.assert_array_equal(st_r.x, st_w.x)
        sidecar = (tmp_path / "rep_truth.csv").read_text().splitlines()
        assert sidecar[0] == "# note"
        assert sidecar[1] == "covariate,study,beta_true"
        assert len(sidecar) == 2 + truth.nonzero_pairs
