import math

import numpy as np
import pytest
import scipy.stats

from uhet.errors import SingularDesignError, SingularMatrixError
from uhet.numkit import (
    RngStream,
    chi2_cdf,
    chi2_sf,
    cholesky_with_jitter,
    mvn_sample,
    normal_quantile,
    ols_fit,
)


class TestRngStream:
    def test_same_seed_same_output(self):
        a = RngStream(7).generator.random(5)
        b = RngStream(7).generator.random(5)
        assert np.array_equal(a, b)

    def test_substreams_reproducible_and_distinct(self):
        a = RngStream(7).substream(1, 2).generator.random(5)
        b = RngStream(7).substream(1, 2).generator.random(5)
        c = RngStream(7).substream(1, 3).generator.random(5)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_substream_does_not_touch_parent(self):
        r = RngStream(7)
        before = r.generator.bit_generator.state["state"]["state"]
        r.substream(4)
        after = r.generator.bit_generator.state["state"]["state"]
        assert before == after


class TestCholesky:
    def test_identity(self):
        l, jitter = cholesky_with_jitter(np.eye(3))
        assert jitter == 0.0
        assert np.array_equal(l, np.eye(3))

    def test_hand_case(self):
        m = np.array([[4.0, 2.0], [2.0, 3.0]])
        l, jitter = cholesky_with_jitter(m)
        assert jitter == 0.0
        assert np.allclose(l, [[2.0, 0.0], [1.0, np.sqrt(2.0)]])

    def test_rank_deficient_gets_jitter(self):
        m = np.array([[1.0, 1.0], [1.0, 1.0]])
        l, jitter = cholesky_with_jitter(m)
        assert 0.0 < jitter <= 1e-6
        assert np.allclose(l @ l.T, m + jitter * np.eye(2), atol=1e-12)

    def test_asymmetric_rejected(self):
        with pytest.raises(SingularMatrixError, match="symmetric"):
            cholesky_with_jitter(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_indefinite_rejected(self):
        with pytest.raises(SingularMatrixError):
            cholesky_with_jitter(np.array([[1.0, 0.0], [0.0, -1.0]]))


class TestMvn:
    def test_deterministic(self):
        cov = np.array([[2.0, 0.5], [0.5, 1.0]])
        a = mvn_sample(RngStream(3), cov, 10)
        b = mvn_sample(RngStream(3), cov, 10)
        assert np.array_equal(a, b)

    def test_covariance_recovered(self):
        cov = np.array([[2.0, 0.5], [0.5, 1.0]])
        draws = mvn_sample(RngStream(11), cov, 10**6)
        emp = np.cov(draws, rowvar=False)
        assert np.abs(emp - cov).max() < 0.02

    def test_count_positive(self):
        with pytest.raises(ValueError):
            mvn_sample(RngStream(1), np.eye(2), 0)


class TestChi2:
    def test_edge_values(self):
        assert chi2_sf(0.0, 1) == 1.0
        assert chi2_sf(0.0, 5) == 1.0
        with pytest.raises(ValueError):
            chi2_sf(-1.0, 1)
        with pytest.raises(ValueError):
            chi2_sf(1.0, 0)

    def test_df2_closed_form(self):
        for x in (0.1, 1.0, 2.0 * math.log(20.0), 10.0, 40.0):
            assert chi2_sf(x, 2) == pytest.approx(math.exp(-x / 2.0), rel=1e-12)

    def test_against_scipy(self):
        for df in (1, 2, 3, 5, 10, 30):
            for x in (0.01, 0.5, 1.0, 3.841458820694124, 7.3, df + 0.5, 3.0 * df):
                assert chi2_sf(x, df) == pytest.approx(
                    scipy.stats.chi2.sf(x, df), rel=1e-10, abs=1e-14
                )

    def test_cdf_complements_sf(self):
        for df in (1, 4, 9):
            for x in (0.2, 1.7, 8.0):
                assert chi2_cdf(x, df) + chi2_sf(x, df) == pytest.approx(1.0)

    def test_monotone_decreasing(self):
        xs = np.linspace(0.0, 30.0, 200)
        vals = [chi2_sf(float(x), 3) for x in xs]
        assert all(a >= b for a, b in zip(vals, vals[1:]))


class TestNormalQuantile:
    def test_hand_values(self):
        assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-10)
        assert normal_quantile(0.5) == pytest.approx(0.0, abs=1e-12)
        assert normal_quantile(0.025) == pytest.approx(-1.959963984540054, abs=1e-10)

    def test_against_scipy(self):
        for p in (1e-8, 0.001, 0.1, 0.3, 0.77, 0.99, 1 - 1e-8):
            assert normal_quantile(p) == pytest.approx(
                scipy.stats.norm.ppf(p), abs=1e-9
            )

    def test_domain(self):
        for p in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(ValueError):
                normal_quantile(p)


class TestOls:
    def test_exact_fit(self):
        x = np.column_stack([np.ones(4), [0.0, 1, 2, 3]])
        y = 2.0 + 3.0 * x[:, 1]
        coef, cov = ols_fit(x, y)
        assert np.allclose(coef, [2.0, 3.0])
        assert np.allclose(cov, 0.0, atol=1e-20)

    def test_against_qr_oracle(self, gen):
        x = np.column_stack([np.ones(50), gen.standard_normal((50, 2))])
        y = gen.standard_normal(50)
        coef, cov = ols_fit(x, y)
        q, r = np.linalg.qr(x)
        coef_qr = np.linalg.solve(r, q.T @ y)
        assert np.allclose(coef, coef_qr, atol=1e-10)
        resid = y - x @ coef_qr
        s2 = resid @ resid / (50 - 3)
        cov_qr = s2 * np.linalg.inv(r.T @ r)
        assert np.allclose(cov, cov_qr, rtol=1e-8)

    def test_rank_deficient(self):
        x = np.column_stack([np.ones(10), np.ones(10)])
        with pytest.raises(SingularDesignError):
            ols_fit(x, np.arange(10.0))

    def test_needs_more_rows_than_columns(self):
        with pytest.raises(SingularDesignError):
            ols_fit(np.eye(3), np.arange(3.0))
