import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from app.model.moments import (
    damage_predictor_moments,
    jaakkola_g,
    linear_predictor_moments,
    lognormal_moments,
    optimal_gamma,
    quadratic_bound_log1pexp,
)
from app.model.nodes import EdgeWeights, MomentPair
from app.utils.errors import InvalidArgumentError


class TestLognormalMoments(unittest.TestCase):
    def test_point_mass_at_one(self):
        moments = lognormal_moments(0.0, 0.0)
        self.assertAlmostEqual(moments.mean, 1.0)
        self.assertAlmostEqual(moments.second_moment, 1.0)

    def test_unit_log_variance(self):
        moments = lognormal_moments(0.0, 1.0)
        self.assertAlmostEqual(moments.mean, 1.64872, places=5)
        self.assertAlmostEqual(moments.second_moment, 7.38906, places=5)

    def test_point_mass_at_two(self):
        moments = lognormal_moments(np.log(2.0), 0.0)
        self.assertAlmostEqual(moments.mean, 2.0)
        self.assertAlmostEqual(moments.second_moment, 4.0)

    def test_matches_monte_carlo(self):
        rng = np.random.default_rng(7)
        x = np.exp(rng.normal(0.0, 1.0, size=1_000_000))
        moments = lognormal_moments(0.0, 1.0)
        self.assertLess(abs(x.mean() / moments.mean - 1.0), 0.01)
        self.assertLess(abs(np.mean(x * x) / moments.second_moment - 1.0), 0.05)

    def test_rejects_negative_sigma(self):
        with self.assertRaises(InvalidArgumentError):
            lognormal_moments(0.0, -0.1)

    def test_rejects_non_finite_mu(self):
        with self.assertRaises(InvalidArgumentError):
            lognormal_moments(np.nan, 1.0)

    @given(st.floats(-5, 5), st.floats(0, 3))
    def test_second_moment_dominates_squared_mean(self, mu, sigma):
        moments = lognormal_moments(mu, sigma)
        self.assertGreaterEqual(moments.second_moment, moments.mean**2 * (1.0 - 1e-12))

    def test_vectorized(self):
        moments = lognormal_moments(np.array([0.0, np.log(2.0)]), np.array([0.0, 0.0]))
        np.testing.assert_allclose(moments.mean, [1.0, 2.0])


class TestJaakkolaG(unittest.TestCase):
    def test_limit_at_zero(self):
        self.assertAlmostEqual(jaakkola_g(1e-6), 0.125, delta=1e-6)

    def test_value_at_one(self):
        self.assertAlmostEqual(jaakkola_g(1.0), 0.1155293, places=7)

    def test_asymptote(self):
        self.assertAlmostEqual(jaakkola_g(20.0) * 2.0 * 20.0, 0.5, places=6)

    def test_series_branch_is_continuous(self):
        below = jaakkola_g(0.999e-4)
        above = jaakkola_g(1.001e-4)
        self.assertAlmostEqual(below, above, places=10)

    def test_rejects_non_positive(self):
        with self.assertRaises(InvalidArgumentError):
            jaakkola_g(0.0)

    @given(st.floats(1e-6, 50), st.floats(1e-6, 50))
    def test_decreasing(self, a, b):
        if a < b:
            self.assertGreaterEqual(jaakkola_g(a), jaakkola_g(b) - 1e-15)


class TestQuadraticBound(unittest.TestCase):
    def test_tight_at_gamma(self):
        self.assertAlmostEqual(quadratic_bound_log1pexp(1.0, 1.0), np.log1p(np.e), places=6)

    def test_tight_at_minus_gamma(self):
        self.assertAlmostEqual(quadratic_bound_log1pexp(-1.0, 1.0), np.log1p(np.exp(-1.0)), places=6)

    def test_dominates_at_zero(self):
        value = quadratic_bound_log1pexp(0.0, 1.0)
        self.assertGreaterEqual(value, np.log(2.0))
        self.assertAlmostEqual(value, np.log1p(np.e) - 0.5 - jaakkola_g(1.0), places=10)

    @settings(max_examples=300)
    @given(st.floats(-30, 30), st.floats(1e-3, 30))
    def test_upper_bound(self, z, gamma):
        self.assertGreaterEqual(quadratic_bound_log1pexp(z, gamma), np.logaddexp(0.0, z) - 1e-9)


class TestLinearPredictorMoments(unittest.TestCase):
    def test_pure_noise(self):
        moments = linear_predictor_moments([], 1.0, 0.0)
        self.assertEqual((moments.mean, moments.second_moment), (0.0, 1.0))

    def test_binary_parent_matches_enumeration(self):
        moments = linear_predictor_moments([(2.0, MomentPair.bernoulli(0.5))], 0.0, 1.0)
        # z is 1 or 3 with equal probability
        self.assertAlmostEqual(moments.mean, 2.0)
        self.assertAlmostEqual(moments.second_moment, 0.5 * 1.0 + 0.5 * 9.0)

    def test_zero_weight_parents(self):
        parents = [(0.0, MomentPair(2.0, 5.0)), (0.0, MomentPair(1.0, 3.0))]
        moments = linear_predictor_moments(parents, 0.5, 1.5)
        self.assertAlmostEqual(moments.mean, 1.5)
        self.assertAlmostEqual(moments.second_moment, 0.25 + 2.25)

    def test_two_independent_parents_monte_carlo(self):
        rng = np.random.default_rng(3)
        n = 400_000
        x1 = np.exp(rng.normal(0.1, 0.3, n))
        x2 = np.exp(rng.normal(-0.2, 0.4, n))
        z = 1.5 * x1 - 0.7 * x2 + 0.4 * rng.standard_normal(n) + 0.3
        moments = linear_predictor_moments(
            [(1.5, lognormal_moments(0.1, 0.3)), (-0.7, lognormal_moments(-0.2, 0.4))], 0.4, 0.3
        )
        self.assertAlmostEqual(moments.mean, z.mean(), delta=5 * z.std() / np.sqrt(n))
        self.assertAlmostEqual(moments.second_moment, np.mean(z * z), delta=5 * np.std(z * z) / np.sqrt(n))

    def test_damage_predictor_uses_bd_weights(self):
        weights = EdgeWeights.zeros(w_f_bd=1.0, w_w_bd=2.0, w_0_bd=-1.0, w_eps_bd=0.5)
        moments = damage_predictor_moments(weights, MomentPair.constant(1.0), MomentPair.constant(2.0))
        self.assertAlmostEqual(moments.mean, 4.0)
        self.assertAlmostEqual(moments.second_moment, 16.25)


class TestOptimalGamma(unittest.TestCase):
    def test_square_root(self):
        self.assertAlmostEqual(optimal_gamma(9.0), 3.0)

    def test_floor(self):
        self.assertGreater(optimal_gamma(0.0), 0.0)


if __name__ == "__main__":
    unittest.main()
