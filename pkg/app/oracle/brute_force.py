from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit, logsumexp

from app.geodata.location_table import LocationRecord
from app.model.nodes import EdgeWeights, NodeKind
from app.oracle.generative import damage_log_probs, hazard_log_prior, observation_loglik
from app.utils.errors import InvalidArgumentError, NumericalError

MAX_GRID_SIZE = 200
# Half-width of the grid in prior standard deviations
GRID_HALF_WIDTH = 8.0
MAX_BOUNDARY_MASS = 0.01


@dataclass(frozen=True)
class BruteForcePosterior:
    """Posterior summaries from exhaustive integration on a (u_F, u_W) grid."""

    q_bd: float
    mu_w: float
    sigma_w: float
    mu_f: float
    sigma_f: float
    boundary_mass: float
    grid_size: int


def brute_force_posterior(
    record: LocationRecord,
    weights: EdgeWeights,
    grid_size: int = 100,
    has_bd: Optional[bool] = None,
) -> BruteForcePosterior:
    """
    Exact posterior of one location on a log-space grid.

    Each of u_F = log x_F and u_W = log x_W spans its prior mean +/- 8 prior standard
    deviations; x_BD is summed out exactly with the damage noise integrated by quadrature.

    Args:
        record (LocationRecord): The location's data.
        weights (EdgeWeights): Fixed model weights.
        grid_size (int): Points per continuous dimension, 2..200.
        has_bd (Optional[bool]): Whether the damage node exists; defaults to the footprint flag.

    Returns:
        BruteForcePosterior: Posterior q_BD and the mean and std of u_W and u_F.

    Raises:
        NumericalError: If more than 1% of the mass sits on the outer ring of the grid.
    """
    if not 2 <= grid_size <= MAX_GRID_SIZE:
        raise InvalidArgumentError(f"grid_size must lie in [2, {MAX_GRID_SIZE}], got {grid_size}.")
    weights.check_noise_weights()
    w = weights
    has_bd = record.has_footprint if has_bd is None else has_bd
    log_y = np.nan if record.y is None else np.log(record.y)

    m_f = w.prior_mean(NodeKind.FLOOD, record.a_f)
    m_w = w.prior_mean(NodeKind.WIND, record.a_w)
    u_f = np.linspace(m_f - GRID_HALF_WIDTH * abs(w.w_eps_f), m_f + GRID_HALF_WIDTH * abs(w.w_eps_f), grid_size)
    u_w = np.linspace(m_w - GRID_HALF_WIDTH * abs(w.w_eps_w), m_w + GRID_HALF_WIDTH * abs(w.w_eps_w), grid_size)
    uf, uw = np.meshgrid(u_f, u_w, indexing="ij")
    x_f = np.exp(uf)

    log_prior = hazard_log_prior(uf, m_f, w.w_eps_f) + hazard_log_prior(uw, m_w, w.w_eps_w)
    if has_bd:
        log_p1, log_p0 = damage_log_probs(w.w_f_bd * x_f + w.w_w_bd * np.exp(uw) + w.w_0_bd, w.w_eps_bd)
        l1 = log_p1 + observation_loglik(log_y, x_f, 1.0, w)
        l0 = log_p0 + observation_loglik(log_y, x_f, 0.0, w)
        log_joint = log_prior + np.logaddexp(l1, l0)
        damage_given_u = expit(l1 - l0)
    else:
        log_joint = log_prior + observation_loglik(log_y, x_f, 0.0, w)
        damage_given_u = np.zeros_like(uf)

    mass = np.exp(log_joint - logsumexp(log_joint))
    ring = np.ones_like(mass, dtype=bool)
    ring[1:-1, 1:-1] = False
    boundary_mass = float(mass[ring].sum())
    if boundary_mass > MAX_BOUNDARY_MASS:
        raise NumericalError(
            f"{boundary_mass:.3%} of the posterior mass lies on the grid boundary; the grid is too coarse."
        )

    mu_f = float(np.sum(mass * uf))
    mu_w = float(np.sum(mass * uw))
    return BruteForcePosterior(
        q_bd=float(np.sum(mass * damage_given_u)),
        mu_w=mu_w,
        sigma_w=float(np.sqrt(max(np.sum(mass * np.square(uw - mu_w)), 0.0))),
        mu_f=mu_f,
        sigma_f=float(np.sqrt(max(np.sum(mass * np.square(uf - mu_f)), 0.0))),
        boundary_mass=boundary_mass,
        grid_size=grid_size,
    )
