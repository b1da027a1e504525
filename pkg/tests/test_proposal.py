import math

import numpy as np
import pytest
from scipy.optimize import brentq

from ingarch_bayes.errors import IllConditionedProposalError
from ingarch_bayes.model import CountSeries, Link, ModelSpec, ParamVector, \
    intensity_path, simulate
from ingarch_bayes.nb_approx import NbSchedule, build_schedule
from ingarch_bayes.proposal import GaussianPrior, GaussianProposal, \
    build_proposal, linearize, proposal_logpdf, sample_proposal

# frozen: -(3/2) log(2 pi) - 3/2
MVN_CONST_AT_ONES = -4.256815599614018


def _fd_design(spec, params, x, step=1e-5):
    """Central finite differences of log lam_t in the coefficients."""
    cols = []
    base = [params.alpha0, params.alpha1, params.beta1]
    for j in range(3):
        up = list(base)
        dn = list(base)
        up[j] += step
        dn[j] -= step
        lp = np.log(intensity_path(spec, ParamVector(*up, params.lambda0), x).lam)
        lm = np.log(intensity_path(spec, ParamVector(*dn, params.lambda0), x).lam)
        cols.append((lp - lm) / (2.0 * step))
    return np.column_stack(cols)


class TestLinearizeLogLinear:
    def test_plugin_design_rows(self, loglinear_spec, a1_params,
                                small_a1_series):
        lin = linearize(loglinear_spec, a1_params, small_a1_series)
        x = small_a1_series
        path = intensity_path(loglinear_spec, a1_params, x)
        prev_nu = np.concatenate(([math.log(a1_params.lambda0)], path.eta[:-1]))
        assert np.allclose(lin.design_rows[:, 0], 1.0)
        assert np.allclose(lin.design_rows[:, 1], prev_nu)
        assert np.allclose(lin.design_rows[:, 2],
                           np.log1p(x.values[:-1].astype(float)))
        assert np.allclose(lin.offsets, 0.0)

    def test_full_jacobian_matches_finite_differences(self, loglinear_spec,
                                                      a1_params,
                                                      small_a1_series):
        lin = linearize(loglinear_spec, a1_params, small_a1_series,
                        full_jacobian=True)
        fd = _fd_design(loglinear_spec, a1_params, small_a1_series)
        rel = np.abs(lin.design_rows - fd) / np.maximum(np.abs(fd), 1e-8)
        assert rel.max() < 1e-5

    def test_full_jacobian_expansion_consistency(self, loglinear_spec,
                                                 a1_params, small_a1_series):
        lin = linearize(loglinear_spec, a1_params, small_a1_series,
                        full_jacobian=True)
        path = intensity_path(loglinear_spec, a1_params, small_a1_series)
        recon = lin.offsets + lin.design_rows @ a1_params.theta
        assert np.max(np.abs(recon - path.eta)) < 1e-10


class TestLinearizeSoftplus:
    def test_no_memory_when_alpha1_zero(self, softplus_spec):
        x = CountSeries([2, 1, 3, 0, 5])
        p = ParamVector(0.4, 0.0, 0.3, 2.0)
        lin = linearize(softplus_spec, p, x)
        path = intensity_path(softplus_spec, p, x)
        prev_lam = np.concatenate(([p.lambda0], path.lam[:-1]))
        prev_x = x.values[:-1].astype(float)
        slope = 1.0 / (1.0 + np.exp(-path.eta))
        expected = slope[:, None] * np.column_stack(
            [np.ones(x.n), prev_lam, prev_x]) / path.lam[:, None]
        assert np.allclose(lin.design_rows, expected, rtol=1e-12)

    def test_matches_finite_differences(self, softplus_spec, b1_params,
                                        small_b1_series):
        lin = linearize(softplus_spec, b1_params, small_b1_series)
        fd = _fd_design(softplus_spec, b1_params, small_b1_series)
        rel = np.abs(lin.design_rows - fd) / np.maximum(np.abs(fd), 1e-12)
        assert rel.max() < 1e-5

    def test_expansion_point_consistency(self, softplus_spec, b1_params,
                                         small_b1_series):
        lin = linearize(softplus_spec, b1_params, small_b1_series)
        path = intensity_path(softplus_spec, b1_params, small_b1_series)
        recon = lin.offsets + lin.design_rows @ b1_params.theta
        assert np.max(np.abs(recon - np.log(path.lam))) < 1e-10

    def test_quadratic_residual_decay(self, softplus_spec, b1_params,
                                      small_b1_series, rng):
        lin = linearize(softplus_spec, b1_params, small_b1_series)

        def max_residual(delta, direction):
            theta = b1_params.theta + delta * direction
            p = ParamVector(*theta, b1_params.lambda0)
            lam = intensity_path(softplus_spec, p, small_b1_series).lam
            return np.max(np.abs(np.log(lam) - lin.offsets
                                 - lin.design_rows @ theta))

        for _ in range(5):
            v = rng.standard_normal(3)
            v /= np.linalg.norm(v)
            ratio = max_residual(1e-2, v) / max_residual(1e-3, v)
            assert 80.0 < ratio < 120.0


class TestBuildProposal:
    def test_no_data_recovers_prior(self, softplus_spec, b1_params):
        prior = GaussianPrior(np.array([0.1, -0.2, 0.3]),
                              np.diag([0.5, 1.0, 2.0]))
        lin = linearize(softplus_spec, b1_params, CountSeries([1]))
        sched = NbSchedule(np.empty(0), 0.01, np.empty(0), np.empty(0))
        prop = build_proposal(lin, sched, prior)
        assert np.allclose(prop.mean, prior.mean, atol=1e-12)
        assert np.allclose(prop.cov, prior.cov, rtol=1e-12)

    def test_single_row_hand_case(self):
        # J_1=(1,0,0), o=0, r=4, x=2, psi with wbar=1, b=0, B=I:
        # V = diag(1/2, 1, 1), mu = (kappa_bar/2, 0, 0)
        r1, x1 = 4.0, 2.0
        psi1 = brentq(lambda p: (r1 + x1) / (2.0 * p) * math.tanh(p / 2.0) - 1.0,
                      1e-6, 50.0)
        from ingarch_bayes.proposal import Linearization
        lin = Linearization(np.array([[1.0, 0.0, 0.0]]), np.zeros(1),
                            np.array([r1 * math.exp(psi1)]))
        sched = NbSchedule(np.array([r1]), 0.5, np.array([psi1]),
                           np.array([(x1 - r1) / 2.0]))
        prior = GaussianPrior(np.zeros(3), np.eye(3))
        prop = build_proposal(lin, sched, prior)
        kappa_bar = 1.0 * math.log(r1) + (x1 - r1) / 2.0
        assert np.allclose(prop.cov, np.diag([0.5, 1.0, 1.0]), atol=1e-12)
        assert prop.mean == pytest.approx([kappa_bar / 2.0, 0.0, 0.0],
                                          abs=1e-12)

    def test_plugin_mean_at_zero_psi(self):
        from ingarch_bayes.polya_gamma import pg_mean_array
        assert pg_mean_array(np.array([6.0]), np.array([0.0]))[0] \
            == pytest.approx(6.0 / 4.0)

    def test_deterministic_construction(self, loglinear_spec, a1_params,
                                        small_a1_series):
        prior = GaussianPrior(np.zeros(3), np.eye(3))
        path = intensity_path(loglinear_spec, a1_params, small_a1_series)
        sched = build_schedule(path, small_a1_series, 0.01)
        lin = linearize(loglinear_spec, a1_params, small_a1_series)
        p1 = build_proposal(lin, sched, prior)
        p2 = build_proposal(lin, sched, prior)
        assert np.array_equal(p1.mean, p2.mean)
        assert np.array_equal(p1.cov, p2.cov)

    def test_information_never_widens(self, loglinear_spec, a1_params,
                                      small_a1_series, rng):
        # appending data rows cannot increase V in the Loewner order
        prior = GaussianPrior(np.zeros(3), np.eye(3))
        x_long = small_a1_series
        x_short = CountSeries(x_long.values[:101])
        props = []
        for x in (x_short, x_long):
            path = intensity_path(loglinear_spec, a1_params, x)
            sched = build_schedule(path, x, 0.01)
            lin = linearize(loglinear_spec, a1_params, x)
            props.append(build_proposal(lin, sched, prior))
        for _ in range(10):
            v = rng.standard_normal(3)
            assert v @ props[1].cov @ v <= v @ props[0].cov @ v + 1e-12


class TestGaussianProposal:
    def test_logpdf_at_mode(self):
        prop = GaussianProposal(np.zeros(3), np.diag([2.0, 1.0, 0.5]))
        expected = -0.5 * (3 * math.log(2 * math.pi) + math.log(1.0))
        assert proposal_logpdf(prop, prop.mean) == pytest.approx(expected)

    def test_logpdf_constant(self):
        prop = GaussianProposal(np.zeros(3), np.eye(3))
        assert proposal_logpdf(prop, np.ones(3)) == pytest.approx(
            MVN_CONST_AT_ONES, rel=1e-14)

    def test_logpdf_difference_is_quadratic_form(self, rng):
        cov = np.array([[2.0, 0.3, 0.0], [0.3, 1.0, -0.2], [0.0, -0.2, 0.7]])
        prop = GaussianProposal(np.array([0.1, 0.2, 0.3]), cov)
        prec = np.linalg.inv(cov)
        for _ in range(5):
            t1, t2 = rng.standard_normal(3), rng.standard_normal(3)
            d1 = t1 - prop.mean
            d2 = t2 - prop.mean
            expected = -0.5 * (d1 @ prec @ d1 - d2 @ prec @ d2)
            got = proposal_logpdf(prop, t1) - proposal_logpdf(prop, t2)
            assert got == pytest.approx(expected, rel=1e-9)

    def test_sampler_moments(self, rng):
        cov = np.array([[1.0, 0.4, 0.1], [0.4, 2.0, -0.3], [0.1, -0.3, 0.5]])
        mean = np.array([1.0, -2.0, 0.5])
        prop = GaussianProposal(mean, cov)
        draws = np.array([sample_proposal(prop, rng) for _ in range(100_000)])
        se = np.sqrt(np.diag(cov) / draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - mean) < 4.0 * se)
        emp = np.cov(draws.T)
        rel = np.linalg.norm(emp - cov) / np.linalg.norm(cov)
        assert rel < 0.05

    def test_degenerate_covariance_rejected(self):
        with pytest.raises(IllConditionedProposalError):
            GaussianProposal(np.zeros(3), np.zeros((3, 3)))
