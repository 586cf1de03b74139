import unittest

import numpy as np

from app.geodata.location_table import LocationRecord
from app.inference.updates import (
    e_step,
    refresh_gamma,
    update_continuous_posterior,
    update_gamma,
    update_q_bd,
)
from app.model.elbo import LocationBatch, discrete_node_bound, elbo_location, elbo_value
from app.model.moments import lognormal_moments
from app.model.nodes import Q_MAX, EdgeWeights, LocationPosterior, MomentPair, NodeKind
from tests.fixtures import random_batch, random_posterior, random_record, random_weights


def _replace(posterior: LocationPosterior, **changes) -> LocationPosterior:
    values = posterior.__dict__.copy()
    values.update(changes)
    return LocationPosterior(**values)


class TestUpdateGamma(unittest.TestCase):
    def test_pure_noise_logit(self):
        weights = EdgeWeights.zeros(w_eps_bd=1.0)
        self.assertAlmostEqual(update_gamma(MomentPair(1.0, 2.0), MomentPair(1.0, 2.0), weights), 1.0)

    def test_deterministic_logit(self):
        weights = EdgeWeights.zeros(w_0_bd=3.0)
        gamma = update_gamma(MomentPair(1.0, 1.0), MomentPair(1.0, 1.0), weights)
        self.assertAlmostEqual(gamma, 3.0)
        bound = discrete_node_bound(weights, MomentPair(1.0, 1.0), MomentPair(1.0, 1.0), 0.4, gamma)
        self.assertAlmostEqual(bound, 0.4 * 3.0 - np.logaddexp(0.0, 3.0), places=12)

    def test_never_decreases_bound(self):
        rng = np.random.default_rng(41)
        for _ in range(100):
            weights = random_weights(rng, scale=1.0)
            posterior = random_posterior(rng)
            flood = lognormal_moments(posterior.mu_f, posterior.sigma_f)
            wind = lognormal_moments(posterior.mu_w, posterior.sigma_w)
            before = discrete_node_bound(weights, flood, wind, posterior.q_bd, posterior.gamma_bd)
            after = discrete_node_bound(weights, flood, wind, posterior.q_bd, update_gamma(flood, wind, weights))
            self.assertGreaterEqual(after, before - 1e-12)

    def test_refresh_skips_pruned_locations(self):
        batch = random_batch(np.random.default_rng(3))
        refreshed = refresh_gamma(batch, random_weights(np.random.default_rng(4)))
        np.testing.assert_array_equal(
            refreshed.gamma_bd[~batch.has_bd], batch.posteriors.gamma_bd[~batch.has_bd]
        )


class TestUpdateQ(unittest.TestCase):
    def setUp(self):
        self.record = LocationRecord(row=0, col=0, y=0.8, a_w=0.1, a_f=0.2, has_footprint=True)
        self.posterior = LocationPosterior(q_bd=0.3, mu_w=0.0, sigma_w=0.5, mu_f=0.0, sigma_f=0.5, gamma_bd=1.0)

    def test_uncoupled_is_half(self):
        weights = EdgeWeights.zeros(w_f_y=0.7, w_0_y=-0.3)
        self.assertAlmostEqual(update_q_bd(self.record, self.posterior, weights), 0.5)

    def test_saturates(self):
        weights = EdgeWeights.zeros(w_0_bd=50.0)
        self.assertEqual(update_q_bd(self.record, self.posterior, weights), Q_MAX)

    def test_never_decreases_elbo(self):
        rng = np.random.default_rng(43)
        for _ in range(100):
            record = random_record(rng, observed=rng.random() < 0.8)
            posterior, weights = random_posterior(rng), random_weights(rng, scale=1.0)
            before = elbo_location(record, posterior, weights).total
            updated = _replace(posterior, q_bd=update_q_bd(record, posterior, weights))
            after = elbo_location(record, updated, weights).total
            self.assertGreaterEqual(after, before - 1e-10)


class TestUpdateContinuousPosterior(unittest.TestCase):
    def test_decoupled_node_returns_prior_conditional(self):
        weights = EdgeWeights.zeros(w_a_f=1.2, w_0_f=0.3, w_eps_f=0.6)
        record = LocationRecord(row=0, col=0, y=1.1, a_w=0.0, a_f=0.5, has_footprint=True)
        posterior = LocationPosterior(q_bd=0.5, mu_w=0.0, sigma_w=1.0, mu_f=-0.4, sigma_f=0.2, gamma_bd=1.0)
        mu, sigma = update_continuous_posterior(NodeKind.FLOOD, record, posterior, weights)
        self.assertAlmostEqual(mu, 1.2 * 0.5 + 0.3, places=6)
        self.assertAlmostEqual(sigma, 0.6, places=6)

    def test_tight_prior_dominates(self):
        rng = np.random.default_rng(47)
        weights = random_weights(rng).replace(w_eps_w=1e-3)
        record, posterior = random_record(rng), random_posterior(rng)
        mu, sigma = update_continuous_posterior(NodeKind.WIND, record, posterior, weights)
        self.assertAlmostEqual(mu, weights.prior_mean(NodeKind.WIND, record.a_w), delta=1e-3)
        self.assertAlmostEqual(sigma / 1e-3, 1.0, delta=0.05)

    def test_never_decreases_elbo(self):
        rng = np.random.default_rng(53)
        for case in range(100):
            node = NodeKind.FLOOD if case % 2 else NodeKind.WIND
            record = random_record(rng, observed=rng.random() < 0.8)
            posterior, weights = random_posterior(rng), random_weights(rng)
            before = elbo_location(record, posterior, weights).total
            mu, sigma = update_continuous_posterior(node, record, posterior, weights)
            changes = {"mu_f": mu, "sigma_f": sigma} if node is NodeKind.FLOOD else {"mu_w": mu, "sigma_w": sigma}
            after = elbo_location(record, _replace(posterior, **changes), weights).total
            self.assertGreaterEqual(after, before - 1e-10 * max(1.0, abs(before)), msg=f"case {case}")


class TestEStep(unittest.TestCase):
    def test_zero_coupling_gives_prior_conditionals(self):
        batch = random_batch(np.random.default_rng(59))
        result = e_step(batch, EdgeWeights.zeros())
        post = result.posteriors
        np.testing.assert_allclose(post.mu_w, 0.0, atol=1e-6)
        np.testing.assert_allclose(post.sigma_w, 1.0, atol=1e-6)
        np.testing.assert_allclose(post.mu_f, 0.0, atol=1e-6)
        np.testing.assert_allclose(post.sigma_f, 1.0, atol=1e-6)
        np.testing.assert_allclose(post.q_bd[batch.has_bd], 0.5)
        np.testing.assert_array_equal(post.q_bd[~batch.has_bd], 0.0)

    def test_more_sweeps_never_lower_the_bound(self):
        rng = np.random.default_rng(61)
        batch = random_batch(rng, n=30)
        weights = random_weights(rng, scale=1.0)
        values = [
            elbo_value(batch.with_posteriors(e_step(batch, weights, sweeps=k).posteriors), weights)
            for k in (1, 2, 5, 10)
        ]
        for earlier, later in zip(values, values[1:]):
            self.assertGreaterEqual(later, earlier - 1e-9 * max(1.0, abs(earlier)))
        self.assertGreaterEqual(values[0], elbo_value(batch, weights) - 1e-9)

    def test_duplicated_locations_get_identical_posteriors(self):
        rng = np.random.default_rng(67)
        batch = random_batch(rng, n=5)
        doubled = batch.take(np.r_[np.arange(5), np.arange(5)])
        post = e_step(doubled, random_weights(rng)).posteriors
        for name in ("q_bd", "mu_w", "sigma_w", "mu_f", "sigma_f", "gamma_bd"):
            values = getattr(post, name)
            np.testing.assert_array_equal(values[:5], values[5:])

    def test_orphan_wind_takes_prior_conditional(self):
        rng = np.random.default_rng(71)
        batch = random_batch(rng, n=20)
        weights = random_weights(rng)
        post = e_step(batch, weights).posteriors
        orphan = ~batch.has_bd
        np.testing.assert_allclose(post.mu_w[orphan], weights.prior_mean(NodeKind.WIND, batch.a_w[orphan]))
        np.testing.assert_allclose(post.sigma_w[orphan], abs(weights.w_eps_w))

    def test_rejects_zero_sweeps(self):
        batch = random_batch(np.random.default_rng(0), n=2)
        with self.assertRaises(ValueError):
            e_step(batch, EdgeWeights.zeros(), sweeps=0)


class TestSingleLocationBatch(unittest.TestCase):
    def test_from_pairs_uses_footprint(self):
        rng = np.random.default_rng(5)
        record = random_record(rng, footprint=False)
        batch = LocationBatch.from_pairs([(record, random_posterior(rng))])
        self.assertFalse(batch.has_bd[0])


if __name__ == "__main__":
    unittest.main()
