import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from klstab.exceptions import ContractViolation, DomainError, UnsupportedSizeError
from klstab.scalar_lemmas import (
    extremal_log_sum_oracle,
    f_gap,
    log_sum_bound,
    pair_average_iterate,
    quadratic_minorant_gap,
)


class TestGapFunction:
    def test_minimum(self):
        assert f_gap(1.0) == 0.0

    def test_value_at_two(self):
        assert f_gap(2.0) == pytest.approx(1.0 - math.log(2.0), abs=1e-15)

    def test_midpoint_convexity(self):
        assert f_gap(0.75) <= 0.5 * (f_gap(0.5) + f_gap(1.0))

    @pytest.mark.parametrize("x", [0.0, -1.0, float("nan")])
    def test_domain(self, x):
        with pytest.raises(DomainError):
            f_gap(x)

    def test_positive_away_from_one(self):
        x = np.random.default_rng(1).uniform(1e-6, 50.0, size=100_000)
        vals = f_gap(x)
        assert np.all(vals[x != 1.0] > 0)

    @given(st.floats(1e-300, 1e300))
    def test_nonnegative(self, x):
        assert f_gap(x) >= 0.0


class TestQuadraticMinorant:
    def test_equality_at_one(self):
        assert quadratic_minorant_gap(1.0) == 0.0

    def test_right_endpoint(self):
        expected = 0.5 - math.log(1.5) - 0.25 / 3.0
        assert quadratic_minorant_gap(1.5) == pytest.approx(expected, abs=1e-15)
        assert quadratic_minorant_gap(1.5) == pytest.approx(0.011202, abs=1e-6)

    def test_grid(self):
        assert np.all(quadratic_minorant_gap(np.linspace(0.5, 1.5, 10_000)) >= -1e-12)

    @pytest.mark.parametrize("x", [0.49, 1.51, 3.0])
    def test_domain(self, x):
        with pytest.raises(DomainError):
            quadratic_minorant_gap(x)


class TestPairAveraging:
    def test_fixed_point(self):
        tr = pair_average_iterate([0.3, 0.3, 0.3])
        assert tr.converged
        assert len(tr.iterates) == 1

    def test_two_entries(self):
        tr = pair_average_iterate([1.0, 0.0], tol=1e-12)
        assert tr.converged
        np.testing.assert_allclose(tr.final, [math.sqrt(0.5)] * 2, atol=1e-12)

    def test_tie_break_is_lexicographic(self):
        tr = pair_average_iterate([0.0, 1.0, 1.0])
        np.testing.assert_allclose(tr.iterates[1] ** 2, [0.5, 0.5, 1.0])

    def test_needs_two_entries(self):
        with pytest.raises(ContractViolation):
            pair_average_iterate([1.0])

    def test_rejects_zero_vector(self):
        with pytest.raises(ContractViolation):
            pair_average_iterate([0.0, 0.0])

    def test_budget_exhaustion_is_not_an_error(self):
        tr = pair_average_iterate([1.0, 0.0, 0.2, 0.7], max_iter=2)
        assert not tr.converged
        assert tr.steps == 2

    def test_random_length_six_monotone(self):
        x0 = np.random.default_rng(4).uniform(0, 1, size=6)
        tr = pair_average_iterate(x0)
        phi, delta = np.array(tr.phi_values), np.array(tr.delta_values)
        assert np.all(np.diff(phi) <= 0)
        assert np.all(np.diff(delta) <= 1e-15)
        # drop in potential equals half the squared spread of the averaged pair
        np.testing.assert_allclose(phi[:-1] - phi[1:], delta, atol=1e-14)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0.0, 10.0), min_size=2, max_size=8).filter(lambda v: sum(x * x for x in v) > 1e-3))
    def test_conserves_sum_of_squares(self, x0):
        tr = pair_average_iterate(x0, tol=1e-10)
        c = sum(x * x for x in x0)
        for it in tr.iterates:
            assert float(np.sum(it * it)) == pytest.approx(c, rel=1e-9)
        assert np.all(np.diff(tr.phi_values) <= 1e-15 * max(1.0, tr.phi_values[0]))
        if tr.converged:
            assert np.max(np.abs(tr.final - math.sqrt(c / len(x0)))) <= math.sqrt(1e-10)


class TestLogSumBound:
    def test_single(self):
        assert log_sum_bound(1, 0.25) == pytest.approx(math.log(2.0), abs=1e-15)

    def test_pair(self):
        assert log_sum_bound(2, 0.25) == pytest.approx(-2.0 * math.log(1.0 - math.sqrt(0.125)), rel=1e-14)
        assert log_sum_bound(2, 0.25) == pytest.approx(0.8725293, abs=1e-7)

    def test_small_eps_limit(self):
        for n in (1, 3, 10):
            ratio = log_sum_bound(n, 1e-12) / math.sqrt(n * 1e-12)
            assert ratio == pytest.approx(1.0, abs=1e-5)

    @pytest.mark.parametrize("eps", [0.0, 0.5, 0.7, -0.1])
    def test_domain(self, eps):
        with pytest.raises(DomainError):
            log_sum_bound(3, eps)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 6), st.floats(1e-4, 0.49), st.integers(0, 1000))
    def test_bounds_random_feasible_points(self, n, eps, seed):
        r = np.random.default_rng(seed)
        y = r.standard_normal(n)
        y *= math.sqrt(eps) * r.uniform() ** (1 / n) / np.linalg.norm(y)
        assert abs(np.sum(np.log1p(y))) <= log_sum_bound(n, eps) + 1e-12


class TestExtremalOracle:
    def test_one_dimensional(self):
        res = extremal_log_sum_oracle(1, 0.25)
        assert res.min_value == pytest.approx(math.log(0.5))
        assert res.max_value == pytest.approx(math.log(1.5))
        np.testing.assert_allclose(res.argmin, [-0.5])
        np.testing.assert_allclose(res.argmax, [0.5])

    def test_equal_allocation_at_minimum(self):
        res = extremal_log_sum_oracle(3, 0.2)
        np.testing.assert_allclose(res.argmin, -math.sqrt(0.2 / 3), atol=1e-5)
        np.testing.assert_allclose(res.argmax, math.sqrt(0.2 / 3), atol=1e-5)

    @pytest.mark.parametrize("n,eps", [(2, 0.1), (4, 0.3), (6, 0.49), (5, 1e-3)])
    def test_matches_closed_form(self, n, eps):
        res = extremal_log_sum_oracle(n, eps)
        assert res.min_value == pytest.approx(n * math.log1p(-math.sqrt(eps / n)), abs=1e-6)
        assert res.max_value == pytest.approx(n * math.log1p(math.sqrt(eps / n)), abs=1e-6)
        assert abs(res.min_value) > res.max_value

    def test_rejects_large_n(self):
        with pytest.raises(UnsupportedSizeError):
            extremal_log_sum_oracle(7, 0.1)

    def test_unpacks(self):
        mn, mx, amin, amax = extremal_log_sum_oracle(2, 0.1)
        assert mn < 0 < mx
