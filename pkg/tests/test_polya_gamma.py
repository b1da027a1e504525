import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ks_2samp

from ingarch_bayes.polya_gamma import (
    pg_laplace_lhs_rhs,
    pg_mean,
    pg_mean_array,
    sample_pg,
    sample_pg_many,
)

# frozen: 0.5 * tanh(1)
PG_MEAN_2_2 = 0.38079707797788244


class TestPgMean:
    def test_limit_at_zero_tilt(self):
        assert pg_mean(1.0, 0.0) == 0.25

    def test_direct_tanh_value(self):
        assert pg_mean(2.0, 2.0) == pytest.approx(PG_MEAN_2_2, rel=1e-14)

    @given(b=st.floats(0.1, 50), c=st.floats(-20, 20))
    @settings(max_examples=200, deadline=None)
    def test_even_in_tilt(self, b, c):
        assert pg_mean(b, c) == pytest.approx(pg_mean(b, -c), rel=1e-12)

    def test_series_switch_is_continuous(self):
        # values just inside and outside the Taylor window agree closely
        lo, hi = pg_mean(3.0, 0.99e-4), pg_mean(3.0, 1.01e-4)
        assert lo == pytest.approx(hi, rel=1e-10)

    def test_array_matches_scalar(self):
        b = np.array([1.0, 2.5, 7.0])
        c = np.array([0.0, -3.0, 40.0])
        got = pg_mean_array(b, c)
        want = [pg_mean(bi, ci) for bi, ci in zip(b, c)]
        assert np.allclose(got, want, rtol=1e-12)

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            pg_mean(0.0, 1.0)


class TestSampler:
    def test_mean_matches_closed_form_unit_shape(self, rng):
        draws = sample_pg_many(1.0, 1.0, 100_000, rng)
        se = draws.std(ddof=1) / math.sqrt(draws.size)
        assert abs(draws.mean() - pg_mean(1.0, 1.0)) < 4.0 * se

    def test_mean_matches_closed_form_real_shape(self, rng):
        draws = sample_pg_many(3.5, 0.7, 100_000, rng)
        se = draws.std(ddof=1) / math.sqrt(draws.size)
        assert abs(draws.mean() - pg_mean(3.5, 0.7)) < 4.0 * se

    def test_additivity_in_shape(self, rng):
        # PG(2, c) should be indistinguishable from PG(1, c) + PG(1, c)
        c = 1.3
        direct = sample_pg_many(2.0, c, 10_000, rng)
        summed = sample_pg_many(1.0, c, 10_000, rng) \
            + sample_pg_many(1.0, c, 10_000, rng)
        assert ks_2samp(direct, summed).pvalue > 0.01

    def test_stochastically_decreasing_in_tilt(self, rng):
        means = [sample_pg_many(2.0, c, 100_000, rng).mean()
                 for c in (0.0, 1.0, 2.0, 4.0)]
        assert all(a > b for a, b in zip(means, means[1:]))

    def test_truncation_level_insensitive(self):
        # same seed shares the common gamma stream, isolating the tail terms
        d200 = sample_pg_many(3.5, 1.0, 100_000,
                              np.random.default_rng(5), terms=200)
        d300 = sample_pg_many(3.5, 1.0, 100_000,
                              np.random.default_rng(5), terms=300)
        assert abs(d200.mean() - d300.mean()) / d300.mean() < 1e-3

    def test_scalar_draw_positive(self, rng):
        for _ in range(50):
            assert sample_pg(2.0, 0.5, rng) > 0

    def test_deterministic_given_seed(self):
        a = sample_pg_many(2.0, 1.0, 1000, np.random.default_rng(7))
        b = sample_pg_many(2.0, 1.0, 1000, np.random.default_rng(7))
        assert np.array_equal(a, b)

    def test_rejects_bad_shape(self, rng):
        with pytest.raises(ValueError):
            sample_pg(-1.0, 0.0, rng)


class TestLaplaceIdentity:
    def test_zero_tilt_exact(self):
        res = pg_laplace_lhs_rhs(1.0, 2.0, 0.0, rng=np.random.default_rng(0),
                                 draws=1000)
        assert res.lhs == pytest.approx(0.25, rel=1e-14)
        assert res.rhs == pytest.approx(0.25, rel=1e-14)

    def test_agreement_within_mc_error(self, rng):
        res = pg_laplace_lhs_rhs(1.0, 2.0, 0.5, rng=rng)
        assert abs(res.rhs - res.lhs) < 3.0 * res.mc_se

    def test_zero_kappa_case(self, rng):
        # a = b/2 kills the exponential-tilt factor
        res = pg_laplace_lhs_rhs(1.0, 2.0, 1.0, rng=rng)
        assert abs(res.rhs - res.lhs) < 3.0 * res.mc_se
