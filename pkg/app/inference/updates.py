"""Coordinate-ascent updates of the per-location posteriors.

Each update maximizes the ELBO over one block of a location's variational state with
everything else held fixed, so none of them can decrease the per-location bound.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit

from app.geodata.location_table import LocationRecord
from app.model.elbo import LocationBatch
from app.model.moments import damage_predictor_moments, jaakkola_g, lognormal_moments, optimal_gamma
from app.model.nodes import (
    Q_MAX,
    Q_MIN,
    EdgeWeights,
    LocationPosterior,
    MomentPair,
    NodeKind,
    PosteriorState,
)
from app.utils.errors import InvalidArgumentError
from app.utils.logging_utils import setup_logging

logger = setup_logging(__name__)

DEFAULT_SWEEPS = 3
MAX_NEWTON_STEPS = 25
MAX_HALVINGS = 40
# Largest move of mu or log(sigma) in one step
MAX_STEP = 2.0
# Gradient size below which a coordinate counts as converged
GRAD_TOL = 1e-9
# Smallest posterior log-standard deviation
SIGMA_FLOOR = 1e-8


@dataclass(frozen=True)
class EStepResult:
    """Updated posteriors plus line-search bookkeeping for one batch."""

    posteriors: PosteriorState
    line_search_failures: int
    flagged: np.ndarray


def update_gamma(flood: MomentPair, wind: MomentPair, weights: EdgeWeights):
    """Tightest bound parameter gamma = sqrt(E[z_BD^2])."""
    return optimal_gamma(damage_predictor_moments(weights, flood, wind).second_moment)


def refresh_gamma(batch: LocationBatch, weights: EdgeWeights) -> PosteriorState:
    post = batch.posteriors
    flood = lognormal_moments(post.mu_f, post.sigma_f, check=False)
    wind = lognormal_moments(post.mu_w, post.sigma_w, check=False)
    gamma = np.where(batch.has_bd, update_gamma(flood, wind, weights), post.gamma_bd)
    return post.with_values(gamma_bd=gamma)


def damage_logit(batch: LocationBatch, weights: EdgeWeights) -> np.ndarray:
    """
    Coefficient of q_BD in the bound-relaxed ELBO; the optimum is q_BD = sigmoid(logit).

    Collects q E[z] from the discrete bound and the linear-in-x_BD part of the
    observation term.
    """
    post = batch.posteriors
    flood = lognormal_moments(post.mu_f, post.sigma_f, check=False)
    wind = lognormal_moments(post.mu_w, post.sigma_w, check=False)
    logit = damage_predictor_moments(weights, flood, wind).mean
    r = batch.log_y - weights.w_0_y
    from_obs = (
        weights.w_bd_y
        * (2.0 * r - weights.w_bd_y - 2.0 * weights.w_f_y * flood.mean)
        / (2.0 * weights.w_eps_y * weights.w_eps_y)
    )
    return logit + np.where(batch.has_obs, from_obs, 0.0)


def update_q_batch(batch: LocationBatch, weights: EdgeWeights) -> PosteriorState:
    q = np.clip(expit(damage_logit(batch, weights)), Q_MIN, Q_MAX)
    return batch.posteriors.with_values(q_bd=np.where(batch.has_bd, q, 0.0))


def _hazard_coefficients(node: NodeKind, batch: LocationBatch, weights: EdgeWeights) -> Tuple[np.ndarray, ...]:
    """(m, v, A, B) of the local objective -[s^2 + (mu - m)^2]/(2v) + log s + A E[x] + B E[x^2]."""
    w = weights
    post = batch.posteriors
    q = batch.q_effective
    bd = batch.has_bd.astype(float)
    gamma = np.where(batch.has_bd, post.gamma_bd, 1.0)
    g = jaakkola_g(gamma, check=False)

    if node is NodeKind.FLOOD:
        other = lognormal_moments(post.mu_w, post.sigma_w, check=False).mean
        w_self, w_other, prior = w.w_f_bd, w.w_w_bd, batch.a_f
        obs = batch.has_obs.astype(float)
        var_y = w.w_eps_y * w.w_eps_y
        r = batch.log_y - w.w_0_y
        a_obs = obs * w.w_f_y * (r - w.w_bd_y * q) / var_y
        b_obs = -obs * w.w_f_y * w.w_f_y / (2.0 * var_y)
    elif node is NodeKind.WIND:
        other = lognormal_moments(post.mu_f, post.sigma_f, check=False).mean
        w_self, w_other, prior = w.w_w_bd, w.w_f_bd, batch.a_w
        a_obs = b_obs = 0.0
    else:
        raise InvalidArgumentError(f"{node.value} is not a lognormal hazard node.")

    a_bd = bd * (q * w_self - g * (2.0 * w.w_0_bd * w_self + 2.0 * w_self * w_other * other) - 0.5 * w_self)
    b_bd = -bd * g * w_self * w_self
    m = weights.prior_mean(node, prior)
    v = weights.noise_weight(node) ** 2
    return m, v, a_obs + a_bd, b_obs + b_bd


def _local_objective(mu, tau, m, v, a, b):
    with np.errstate(over="ignore", invalid="ignore"):
        var = np.exp(2.0 * tau)
        e = np.exp(mu + 0.5 * var)
        s = np.exp(2.0 * mu + 2.0 * var)
        return -(var + np.square(mu - m)) / (2.0 * v) + tau + a * e + b * s


def _derivatives(coordinate: str, mu, tau, m, v, a, b):
    var = np.exp(2.0 * tau)
    e = np.exp(mu + 0.5 * var)
    s = np.exp(2.0 * mu + 2.0 * var)
    if coordinate == "mu":
        first = -(mu - m) / v + a * e + 2.0 * b * s
        second = -1.0 / v + a * e + 4.0 * b * s
    else:
        first = -var / v + 1.0 + a * e * var + 4.0 * b * s * var
        second = -2.0 * var / v + a * e * var * (var + 2.0) + 4.0 * b * s * var * (4.0 * var + 2.0)
    return first, second


def _safeguarded_step(coordinate, mu, tau, m, v, a, b):
    """One Newton step on `coordinate` with halving until the local objective does not drop."""
    with np.errstate(over="ignore", invalid="ignore"):
        first, second = _derivatives(coordinate, mu, tau, m, v, a, b)
    usable = np.isfinite(first) & np.isfinite(second)
    newton = np.where(second < 0, -first / np.where(second < 0, second, -1.0), np.clip(first, -1.0, 1.0))
    step = np.clip(np.where(usable, newton, 0.0), -MAX_STEP, MAX_STEP)
    moving = usable & (np.abs(first) > GRAD_TOL)

    base = _local_objective(mu, tau, m, v, a, b)
    current = (mu if coordinate == "mu" else tau).copy()
    waiting = moving.copy()
    factor = 1.0
    for _ in range(MAX_HALVINGS):
        if not waiting.any():
            break
        trial = current + factor * step
        trial_mu = np.where(waiting, trial, mu) if coordinate == "mu" else mu
        trial_tau = np.where(waiting, trial, tau) if coordinate == "tau" else tau
        value = _local_objective(trial_mu, trial_tau, m, v, a, b)
        accept = waiting & np.isfinite(value) & (value >= base)
        current = np.where(accept, trial, current)
        waiting &= ~accept
        factor *= 0.5
    failed = (waiting & (np.abs(first) > 1e-6)) | ~usable
    converged = ~moving
    if coordinate == "mu":
        return current, tau, failed, converged
    return mu, current, failed, converged


def update_hazard_batch(
    node: NodeKind,
    batch: LocationBatch,
    weights: EdgeWeights,
    mask: Optional[np.ndarray] = None,
    max_steps: int = MAX_NEWTON_STEPS,
) -> Tuple[PosteriorState, np.ndarray]:
    """
    Maximize the ELBO over (mu, log sigma) of a hazard node by alternating safeguarded Newton steps.

    Each round works only on the locations still moving, so its cost shrinks as they converge.

    Args:
        node (NodeKind): WIND or FLOOD.
        batch (LocationBatch): Locations to update.
        weights (EdgeWeights): Current edge weights.
        mask (Optional[np.ndarray]): Locations to update; others are left untouched.
        max_steps (int): Newton rounds per coordinate.

    Returns:
        Tuple[PosteriorState, np.ndarray]: Updated posteriors and a mask of line-search failures.
    """
    n = len(batch)
    m, v, a, b = _hazard_coefficients(node, batch, weights)
    m, a, b = (np.broadcast_to(np.asarray(c, dtype=float), (n,)) for c in (m, a, b))
    mu, sigma = batch.posteriors.hazard(node)
    mu = np.asarray(mu, dtype=float).copy()
    tau = np.log(sigma)
    pending = np.arange(n) if mask is None else np.flatnonzero(mask)
    failed = np.zeros(n, dtype=bool)
    for _ in range(max_steps):
        if pending.size == 0:
            break
        args = (m[pending], v, a[pending], b[pending])
        mu_p, tau_p, failed_mu, done_mu = _safeguarded_step("mu", mu[pending], tau[pending], *args)
        mu_p, tau_p, failed_tau, done_tau = _safeguarded_step("tau", mu_p, tau_p, *args)
        mu[pending], tau[pending] = mu_p, tau_p
        stopped = failed_mu | failed_tau
        failed[pending[stopped]] = True
        pending = pending[~(done_mu & done_tau) & ~stopped]
    sigma = np.maximum(np.exp(tau), SIGMA_FLOOR)
    return batch.posteriors.with_hazard(node, mu, sigma), failed


def orphan_wind_update(
    batch: LocationBatch, weights: EdgeWeights, mask: Optional[np.ndarray] = None
) -> PosteriorState:
    """Closed-form optimum for W where it has no child: the prior conditional (m, |w_eps|)."""
    mu, sigma = batch.posteriors.hazard(NodeKind.WIND)
    m = weights.prior_mean(NodeKind.WIND, batch.a_w)
    mask = np.ones(len(batch), dtype=bool) if mask is None else mask
    mu = np.where(mask, m, mu)
    sigma = np.where(mask, abs(weights.w_eps_w), sigma)
    return batch.posteriors.with_hazard(NodeKind.WIND, mu, sigma)


def _sweep(batch: LocationBatch, weights: EdgeWeights) -> Tuple[LocationBatch, np.ndarray]:
    """One pass of gamma, q_BD, (mu_F, sigma_F), (mu_W, sigma_W); W takes its closed form where it has no child."""
    orphan = ~batch.has_bd
    batch = batch.with_posteriors(refresh_gamma(batch, weights))
    batch = batch.with_posteriors(update_q_batch(batch, weights))
    posteriors, failed_f = update_hazard_batch(NodeKind.FLOOD, batch, weights)
    batch = batch.with_posteriors(posteriors)
    mask = batch.has_bd if orphan.any() else None
    posteriors, failed_w = update_hazard_batch(NodeKind.WIND, batch, weights, mask=mask)
    batch = batch.with_posteriors(posteriors)
    if orphan.any():
        batch = batch.with_posteriors(orphan_wind_update(batch, weights, orphan))
    return batch, failed_f | failed_w


def e_step(batch: LocationBatch, weights: EdgeWeights, sweeps: int = DEFAULT_SWEEPS) -> EStepResult:
    """
    Coordinate ascent over a batch: gamma, q_BD, (mu_F, sigma_F), (mu_W, sigma_W) per sweep.

    The first sweep covers every location. Without a damage node F couples only to its prior
    and y, and W to nothing, so one sweep leaves those locations at their optimum; the later
    sweeps run on the damage locations alone. A final gamma refresh leaves every bound tight
    for the M-step.

    Args:
        batch (LocationBatch): Active locations with their current posteriors.
        weights (EdgeWeights): Current edge weights (read only).
        sweeps (int): Number of passes over the damage locations.

    Returns:
        EStepResult: New posteriors and line-search failure counts.
    """
    if sweeps < 1:
        raise InvalidArgumentError(f"sweeps must be >= 1, got {sweeps}.")
    weights.check_noise_weights()
    batch, flagged = _sweep(batch, weights)
    damage = np.flatnonzero(batch.has_bd)
    if sweeps > 1 and damage.size:
        sub = batch if damage.size == len(batch) else batch.take(damage)
        for _ in range(sweeps - 1):
            sub, failed = _sweep(sub, weights)
            flagged[damage] |= failed
        if damage.size == len(batch):
            batch = sub
        else:
            posteriors = batch.posteriors.copy()
            posteriors.put(damage, sub.posteriors)
            batch = batch.with_posteriors(posteriors)
    posteriors = refresh_gamma(batch, weights)
    failures = int(np.count_nonzero(flagged))
    if failures:
        logger.warning(f"Line search kept the previous value at {failures} of {len(batch)} locations.")
    return EStepResult(posteriors=posteriors, line_search_failures=failures, flagged=flagged)


def _single(record: LocationRecord, posterior: LocationPosterior, has_bd: Optional[bool]) -> LocationBatch:
    has_bd = record.has_footprint if has_bd is None else has_bd
    return LocationBatch.from_pairs([(record, posterior)], has_bd=[has_bd])


def update_q_bd(
    record: LocationRecord, posterior: LocationPosterior, weights: EdgeWeights, has_bd: Optional[bool] = None
) -> float:
    """Closed-form coordinate update of q_BD at one location, clamped to [1e-6, 1 - 1e-6]."""
    batch = _single(record, posterior, True if has_bd is None else has_bd)
    return float(update_q_batch(batch, weights).q_bd[0])


def update_continuous_posterior(
    node: NodeKind,
    record: LocationRecord,
    posterior: LocationPosterior,
    weights: EdgeWeights,
    has_bd: Optional[bool] = None,
) -> Tuple[float, float]:
    """
    ELBO-maximizing (mu, sigma) of one hazard node at one location.

    Returns:
        Tuple[float, float]: New (mu, sigma); the previous values when the line search fails.
    """
    batch = _single(record, posterior, has_bd)
    posteriors, failed = update_hazard_batch(node, batch, weights)
    if failed[0]:
        logger.warning(f"Line search failed for {node.value} at cell ({record.row}, {record.col}).")
    mu, sigma = posteriors.hazard(node)
    return float(mu[0]), float(sigma[0])
