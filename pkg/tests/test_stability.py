import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from klstab.empirical import mixture_moments
from klstab.exceptions import ContractViolation, OutOfRegimeError
from klstab.gaussian import MultivariateGaussian, gaussian_kl
from klstab.random_instances import make_rng, perturbed_partner, random_gaussian, random_mixture, random_pair
from klstab.stability import (
    MomentSummary,
    expected_log_ratio,
    fit_loglog_slope,
    gaussian_mean_norm,
    log_ratio_coefficients,
    stability_bound,
    standard_prior_bound,
    tightness_instance,
)

from .conftest import e1, iso


class TestLogRatioCoefficients:
    def test_identical(self, rng):
        g = random_gaussian(3, rng)
        c = log_ratio_coefficients(g, g)
        assert c.a == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(c.b, 0.0, atol=1e-12)
        np.testing.assert_allclose(c.M, 0.0, atol=1e-12)

    def test_unit_shift(self):
        c = log_ratio_coefficients(iso([0.0, 0.0]), iso([0.2, 0.0]))
        assert c.a == pytest.approx(0.02, abs=1e-15)
        np.testing.assert_allclose(c.b, [-0.2, 0.0], atol=1e-15)
        np.testing.assert_allclose(c.M, 0.0, atol=1e-15)

    def test_matches_density_ratio(self, rng):
        for _ in range(20):
            n1, n2 = random_gaussian(3, rng), random_gaussian(3, rng)
            x = 2.0 * rng.standard_normal(3)
            want = multivariate_normal(n1.mean, n1.covariance).logpdf(x) - multivariate_normal(n2.mean, n2.covariance).logpdf(x)
            assert log_ratio_coefficients(n1, n2).evaluate(x) == pytest.approx(want, abs=1e-9)


class TestMoments:
    def test_validation(self):
        with pytest.raises(ContractViolation):
            MomentSummary(np.zeros(2), np.eye(2), 0.5, 3.0)
        with pytest.raises(ContractViolation):
            MomentSummary(np.ones(2), np.eye(2), 0.5, 2.0)
        with pytest.raises(ContractViolation):
            MomentSummary(np.zeros(2), np.eye(2), 1.5, 2.0)

    @pytest.mark.parametrize("d,closed", [(1, math.sqrt(2 / math.pi)), (2, math.sqrt(math.pi / 2)), (3, 2 * math.sqrt(2 / math.pi))])
    def test_mean_norm_of_standard_gaussian(self, d, closed):
        assert gaussian_mean_norm(MultivariateGaussian.standard(d)) == pytest.approx(closed, rel=1e-10)

    def test_mean_norm_of_point_mass_limit(self):
        g = MultivariateGaussian([3.0, 4.0], 1e-10 * np.eye(2))
        assert gaussian_mean_norm(g) == pytest.approx(5.0, rel=1e-8)

    def test_mean_norm_against_monte_carlo(self):
        r = make_rng(12)
        g = random_gaussian(3, r)
        norms = np.linalg.norm(np.random.default_rng(1).multivariate_normal(g.mean, g.covariance, 1_000_000), axis=1)
        se = norms.std(ddof=1) / 1000.0
        assert abs(gaussian_mean_norm(g) - norms.mean()) <= 4 * se


class TestExpectedLogRatio:
    def test_self_moments_give_kl(self, rng):
        for _ in range(10):
            n1, n2 = random_gaussian(3, rng), random_gaussian(3, rng)
            assert expected_log_ratio(MomentSummary.of_gaussian(n1), n1, n2) == pytest.approx(gaussian_kl(n1, n2), abs=1e-9)

    def test_tightness_triple(self):
        p, n1, n2 = iso(2 * e1(2)), iso([0.0, 0.0]), iso(0.2 * e1(2))
        val = expected_log_ratio(MomentSummary.of_gaussian(p), n1, n2)
        assert val == pytest.approx(-0.38, abs=1e-12)
        assert gaussian_kl(p, n2) - gaussian_kl(p, n1) == pytest.approx(1.62 - 2.0, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_exact_shift_identity(self, d, seed):
        r = make_rng(seed)
        p, n1, n2 = random_gaussian(d, r, mean_scale=2.0), random_gaussian(d, r), random_gaussian(d, r)
        sm = p.covariance + np.outer(p.mean, p.mean)
        m = MomentSummary(p.mean, sm, 0.0, float(np.trace(sm)))
        assert gaussian_kl(p, n2) - gaussian_kl(p, n1) == pytest.approx(expected_log_ratio(m, n1, n2), abs=1e-8)


class TestStabilityBound:
    def test_identical(self, rng):
        g = random_gaussian(2, rng)
        p = MomentSummary.of_gaussian(random_gaussian(2, rng))
        b = stability_bound(p, g, g)
        assert b.epsilon == 0.0
        assert b.total == 0.0
        assert all(getattr(b, k) == 0.0 for k in ("t1", "t21", "t22", "t3", "t4", "t5"))

    def test_tightness_triple_within_bound(self):
        p = MomentSummary.of_gaussian(iso(2 * e1(2)))
        b = stability_bound(p, iso([0.0, 0.0]), iso(0.2 * e1(2)))
        assert b.preconditions_ok
        assert 0.38 <= b.total

    def test_total_over_sqrt_eps_stays_bounded(self):
        ratios = []
        for eps in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6):
            inst = tightness_instance(2.0, eps, 2)
            b = stability_bound(MomentSummary.of_gaussian(inst.p), inst.n1, inst.n2)
            assert abs(inst.measured_gap()) <= b.total
            ratios.append(b.total / math.sqrt(eps))
        assert max(ratios) < 20.0
        assert ratios == sorted(ratios, reverse=True)

    def test_random_mixtures_sound(self):
        checked = 0
        for i in range(500):
            r = make_rng(1000 + i)
            d = int(r.integers(1, 4))
            n1, n2 = random_pair(d, float(r.uniform(1e-5, 0.08)), r)
            p = mixture_moments(random_mixture(d, r))
            b = stability_bound(p, n1, n2)
            if b.preconditions_ok:
                checked += 1
                assert abs(expected_log_ratio(p, n1, n2)) <= b.total
        assert checked > 400

    def test_ledger_reassembles_exactly(self, rng):
        n1, n2 = random_pair(3, 0.01, rng)
        b = stability_bound(MomentSummary.of_gaussian(random_gaussian(3, rng)), n1, n2)
        assert b.recompute_total() == b.total
        assert all(v >= 0 for k, v in b.to_dict().items() if isinstance(v, float))

    def test_exact_t1_differs_from_taylor_form(self, rng):
        n1, n2 = random_pair(2, 0.05, rng)
        b = stability_bound(MomentSummary.of_gaussian(random_gaussian(2, rng)), n1, n2)
        assert b.total != b.total_taylor
        assert b.t1 > math.sqrt(6 * 2 * b.epsilon)

    def test_out_of_regime(self):
        g = MultivariateGaussian.standard(1)
        p = MomentSummary.of_gaussian(g)
        with pytest.raises(OutOfRegimeError):
            stability_bound(p, iso([1.2]), g)
        with pytest.raises(OutOfRegimeError):
            stability_bound(p, iso([0.6]), g)  # eps = 0.18, 6 eps / d >= 1

    def test_json(self, rng):
        n1, n2 = random_pair(2, 0.01, rng)
        b = stability_bound(MomentSummary.of_gaussian(n1), n1, n2)
        data = json.loads(json.dumps(b.to_dict()))
        assert data["total"] == b.total
        assert set(data) >= {"t1", "t21", "t22", "t3", "t4", "t5", "f1", "f2", "f3", "f4", "f5", "preconditions_ok"}

    def test_dimension_mismatch(self):
        with pytest.raises(ContractViolation):
            stability_bound(MomentSummary.of_gaussian(MultivariateGaussian.standard(2)), MultivariateGaussian.standard(3), MultivariateGaussian.standard(3))


class TestStandardPrior:
    def test_zero_at_prior(self):
        g = MultivariateGaussian.standard(2)
        b = standard_prior_bound(g, MomentSummary.of_gaussian(iso([1.0, 1.0])))
        assert b.epsilon == 0.0
        assert b.total == 0.0

    def test_mean_envelope_attained(self):
        eps = 0.01
        n1 = iso(math.sqrt(2 * eps) * e1(2))
        assert gaussian_kl(n1, MultivariateGaussian.standard(2)) == pytest.approx(eps, abs=1e-15)
        assert np.linalg.norm(n1.mean) == pytest.approx(math.sqrt(2 * eps), abs=1e-15)

    def test_constants(self):
        p = MomentSummary.of_gaussian(iso([1.0, -2.0]))
        n1 = iso([0.1, 0.0])
        b = standard_prior_bound(n1, p)
        env = 1 / (1 - math.sqrt(6 * b.epsilon))
        assert b.f2 == 2.5
        assert b.f3 == pytest.approx(math.sqrt(2) * p.mean_norm_expectation)
        assert b.f4 == pytest.approx(2 * math.sqrt(3) * env * p.mean_norm_expectation)
        assert b.f5 == pytest.approx(math.sqrt(6) / 2 * env * p.sq_norm_expectation)

    def test_large_eps_flags_instead_of_raising(self):
        b = standard_prior_bound(iso([0.6, 0.0]), MomentSummary.of_gaussian(iso([0.0, 0.0])))
        assert not b.preconditions_ok

    def test_dominates_generic_ledger(self):
        std = MultivariateGaussian.standard(2)
        compared = 0
        for i in range(200):
            r = make_rng(500 + i)
            n1 = perturbed_partner(std, float(r.uniform(1e-5, 0.08)), r)
            p = mixture_moments(random_mixture(2, r))
            gen = stability_bound(p, n1, std)
            if gen.preconditions_ok:
                compared += 1
                assert standard_prior_bound(n1, p).total >= gen.total * (1 - 1e-12)
        assert compared > 150


class TestTightness:
    def test_reference_values(self):
        inst = tightness_instance(2.0, 0.02, 2)
        assert gaussian_kl(inst.n1, inst.n2) == pytest.approx(0.02, abs=1e-12)
        assert gaussian_kl(inst.p, inst.n1) == pytest.approx(2.0, abs=1e-12)
        assert gaussian_kl(inst.p, inst.n2) == pytest.approx(1.62, abs=1e-10)
        assert inst.predicted_gap == pytest.approx(0.38, abs=1e-12)
        assert inst.measured_gap() == pytest.approx(inst.predicted_gap, abs=1e-10)

    def test_sqrt_limit(self):
        c = 3.0
        inst = tightness_instance(c, 1e-10, 2)
        assert inst.predicted_gap / math.sqrt(1e-10) == pytest.approx(2 * math.sqrt(c), rel=1e-4)

    def test_slope(self):
        grid = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2]
        gaps = [tightness_instance(2.0, e, 2).measured_gap() for e in grid]
        assert fit_loglog_slope(grid, gaps) == pytest.approx(0.5, abs=0.02)

    def test_rotation_invariance(self, rng):
        base = tightness_instance(2.0, 0.01, 3)
        rotated = tightness_instance(2.0, 0.01, 3, direction=rng.standard_normal(3))
        assert rotated.measured_gap() == pytest.approx(base.measured_gap(), abs=1e-12)

    @pytest.mark.parametrize("args", [(0.0, 0.01, 2), (1.0, 0.1, 2), (1.0, 0.01, 0)])
    def test_domain(self, args):
        with pytest.raises(ContractViolation):
            tightness_instance(*args)
