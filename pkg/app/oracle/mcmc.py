"""Metropolis-within-Gibbs sampler of the exact per-location posterior.

State per location is (u_F, u_W, x_BD) with u = log x. x_BD is drawn from its exact
conditional; u_F and u_W take Gaussian random-walk Metropolis steps whose scales adapt
towards 0.44 acceptance during burn-in. All locations are sampled in lockstep as arrays.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from app.geodata.location_table import LocationRecord
from app.model.elbo import LocationBatch
from app.model.moments import damage_predictor_moments, lognormal_moments, optimal_gamma
from app.model.nodes import Q_MAX, Q_MIN, EdgeWeights, NodeKind, PosteriorState
from app.oracle.generative import damage_log_probs, hazard_log_prior, observation_loglik
from app.utils.errors import InvalidArgumentError
from app.utils.logging_utils import setup_logging

logger = setup_logging(__name__)

TARGET_ACCEPTANCE = 0.44
ADAPT_WINDOW = 50
ACCEPTANCE_BOUNDS = (0.05, 0.95)
SIGMA_FLOOR = 1e-3


@dataclass(frozen=True)
class McmcEstimate:
    """Sample summaries of one location's posterior."""

    q_bd: float
    mu_w: float
    sigma_w: float
    mu_f: float
    sigma_f: float
    acceptance_w: float
    acceptance_f: float
    flagged: bool


@dataclass(frozen=True)
class McmcSummary:
    """Per-location sample summaries, one array entry per location."""

    q_bd: np.ndarray
    mu_w: np.ndarray
    sigma_w: np.ndarray
    mu_f: np.ndarray
    sigma_f: np.ndarray
    acceptance_w: np.ndarray
    acceptance_f: np.ndarray
    flagged: np.ndarray

    def estimate(self, index: int) -> McmcEstimate:
        return McmcEstimate(
            q_bd=float(self.q_bd[index]),
            mu_w=float(self.mu_w[index]),
            sigma_w=float(self.sigma_w[index]),
            mu_f=float(self.mu_f[index]),
            sigma_f=float(self.sigma_f[index]),
            acceptance_w=float(self.acceptance_w[index]),
            acceptance_f=float(self.acceptance_f[index]),
            flagged=bool(self.flagged[index]),
        )

    def to_posteriors(self, has_bd: np.ndarray, weights: EdgeWeights) -> PosteriorState:
        """Moment-matched variational state: lognormal fits of the u samples and mean of x_BD."""
        sigma_w = np.maximum(self.sigma_w, SIGMA_FLOOR)
        sigma_f = np.maximum(self.sigma_f, SIGMA_FLOOR)
        q = np.where(has_bd, np.clip(self.q_bd, Q_MIN, Q_MAX), 0.0)
        z = damage_predictor_moments(
            weights,
            lognormal_moments(self.mu_f, sigma_f, check=False),
            lognormal_moments(self.mu_w, sigma_w, check=False),
        )
        return PosteriorState(
            q_bd=q,
            mu_w=self.mu_w.copy(),
            sigma_w=sigma_w,
            mu_f=self.mu_f.copy(),
            sigma_f=sigma_f,
            gamma_bd=optimal_gamma(z.second_moment) * np.ones_like(q),
        )


def run_mcmc(
    batch: LocationBatch,
    weights: EdgeWeights,
    n_samples: int,
    burn_in: int,
    rng: np.random.Generator,
) -> McmcSummary:
    """
    Sample the exact posterior of every location in the batch.

    The batch's posteriors are ignored except as shape; chains start at the prior conditional.
    q_BD is the Rao-Blackwellized average of p(x_BD = 1 | u, y) over kept iterations.

    Args:
        batch (LocationBatch): Locations to sample.
        weights (EdgeWeights): Fixed model weights.
        n_samples (int): Total iterations per chain.
        burn_in (int): Leading iterations used for adaptation and then discarded.
        rng (np.random.Generator): Random stream for the whole call.

    Returns:
        McmcSummary: Posterior summaries and acceptance diagnostics.
    """
    if burn_in < 0 or n_samples <= burn_in:
        raise InvalidArgumentError(f"Need n_samples > burn_in >= 0, got {n_samples} and {burn_in}.")
    weights.check_noise_weights()
    w = weights
    n = len(batch)
    has_bd = batch.has_bd
    log_y = np.where(batch.has_obs, batch.log_y, np.nan)
    m_f = w.prior_mean(NodeKind.FLOOD, batch.a_f)
    m_w = w.prior_mean(NodeKind.WIND, batch.a_w)

    u_f = np.array(m_f, dtype=float)
    u_w = np.array(m_w, dtype=float)
    scale_f = np.full(n, abs(w.w_eps_f))
    scale_w = np.full(n, abs(w.w_eps_w))

    def link(uf, uw):
        return damage_log_probs(w.w_f_bd * np.exp(uf) + w.w_w_bd * np.exp(uw) + w.w_0_bd, w.w_eps_bd)

    def damage_term(log_probs, bd):
        return np.where(has_bd, np.where(bd == 1, log_probs[0], log_probs[1]), 0.0)

    log_probs = link(u_f, u_w)
    kept = n_samples - burn_in
    sums = np.zeros((3, n))
    squares = np.zeros((2, n))
    accepted = np.zeros((2, n))
    window = np.zeros((2, n))
    rounds = 0

    for iteration in range(n_samples):
        x_f = np.exp(u_f)
        l1 = log_probs[0] + observation_loglik(log_y, x_f, 1.0, w)
        l0 = log_probs[1] + observation_loglik(log_y, x_f, 0.0, w)
        p1 = np.where(has_bd, expit(l1 - l0), 0.0)
        bd = (rng.random(n) < p1).astype(np.int8)

        # Flood
        proposal = u_f + scale_f * rng.standard_normal(n)
        proposed_probs = link(proposal, u_w)
        current = hazard_log_prior(u_f, m_f, w.w_eps_f) + damage_term(log_probs, bd) + observation_loglik(
            log_y, x_f, bd, w
        )
        candidate = (
            hazard_log_prior(proposal, m_f, w.w_eps_f)
            + damage_term(proposed_probs, bd)
            + observation_loglik(log_y, np.exp(proposal), bd, w)
        )
        move_f = np.log(rng.random(n)) < candidate - current
        u_f = np.where(move_f, proposal, u_f)
        log_probs = tuple(np.where(move_f, new, old) for new, old in zip(proposed_probs, log_probs))

        # Wind
        proposal = u_w + scale_w * rng.standard_normal(n)
        proposed_probs = link(u_f, proposal)
        current = hazard_log_prior(u_w, m_w, w.w_eps_w) + damage_term(log_probs, bd)
        candidate = hazard_log_prior(proposal, m_w, w.w_eps_w) + damage_term(proposed_probs, bd)
        move_w = np.log(rng.random(n)) < candidate - current
        u_w = np.where(move_w, proposal, u_w)
        log_probs = tuple(np.where(move_w, new, old) for new, old in zip(proposed_probs, log_probs))

        if iteration < burn_in:
            window[0] += move_f
            window[1] += move_w
            if (iteration + 1) % ADAPT_WINDOW == 0:
                rounds += 1
                delta = min(0.5, 1.0 / np.sqrt(rounds))
                rate = window / ADAPT_WINDOW
                scale_f *= np.exp(np.where(rate[0] > TARGET_ACCEPTANCE, delta, -delta))
                scale_w *= np.exp(np.where(rate[1] > TARGET_ACCEPTANCE, delta, -delta))
                window[:] = 0.0
            continue

        # Rao-Blackwellized damage probability given the current hazards
        x_f = np.exp(u_f)
        l1 = log_probs[0] + observation_loglik(log_y, x_f, 1.0, w)
        l0 = log_probs[1] + observation_loglik(log_y, x_f, 0.0, w)
        sums[0] += np.where(has_bd, expit(l1 - l0), 0.0)
        sums[1] += u_f - m_f
        sums[2] += u_w - m_w
        squares[0] += np.square(u_f - m_f)
        squares[1] += np.square(u_w - m_w)
        accepted[0] += move_f
        accepted[1] += move_w

    mean_f = sums[1] / kept
    mean_w = sums[2] / kept
    acceptance = accepted / kept
    low, high = ACCEPTANCE_BOUNDS
    flagged = np.any((acceptance < low) | (acceptance > high), axis=0)
    if flagged.any():
        logger.warning(
            f"MCMC acceptance outside [{low}, {high}] at {int(flagged.sum())} of {n} locations."
        )
    return McmcSummary(
        q_bd=sums[0] / kept,
        mu_w=m_w + mean_w,
        sigma_w=np.sqrt(np.maximum(squares[1] / kept - np.square(mean_w), 0.0)),
        mu_f=m_f + mean_f,
        sigma_f=np.sqrt(np.maximum(squares[0] / kept - np.square(mean_f), 0.0)),
        acceptance_w=acceptance[1],
        acceptance_f=acceptance[0],
        flagged=flagged,
    )


def mcmc_posterior(
    record: LocationRecord,
    weights: EdgeWeights,
    n_samples: int,
    burn_in: int,
    rng: np.random.Generator,
    has_bd: Optional[bool] = None,
) -> McmcEstimate:
    """Sample one location's posterior; see run_mcmc."""
    batch = LocationBatch(
        y=[np.nan if record.y is None else record.y],
        a_w=[record.a_w],
        a_f=[record.a_f],
        has_bd=[record.has_footprint if has_bd is None else has_bd],
        posteriors=PosteriorState.empty(1),
    )
    return run_mcmc(batch, weights, n_samples, burn_in, rng).estimate(0)
