"""Random instances shared by the model, inference and oracle tests."""

import numpy as np

from app.geodata.location_table import LocationRecord
from app.model.elbo import LocationBatch
from app.model.nodes import EdgeWeights, LocationPosterior, PosteriorState


def random_weights(rng: np.random.Generator, scale: float = 0.5) -> EdgeWeights:
    """Moderate weights with noise weights bounded away from zero."""
    values = dict(zip(EdgeWeights.field_names(), rng.uniform(-scale, scale, size=14)))
    values.update(
        w_eps_w=rng.uniform(0.3, 1.0),
        w_eps_f=rng.uniform(0.3, 1.0),
        w_eps_bd=rng.uniform(0.1, 1.0),
        w_eps_y=rng.uniform(0.5, 1.2),
        w_a_w=rng.uniform(0.5, 1.5),
        w_a_f=rng.uniform(0.5, 1.5),
    )
    return EdgeWeights(**values)


def random_record(rng: np.random.Generator, observed: bool = True, footprint: bool = True) -> LocationRecord:
    return LocationRecord(
        row=0,
        col=0,
        y=float(np.exp(rng.normal(-0.5, 0.5))) if observed else None,
        a_w=float(rng.normal(-0.3, 0.3)),
        a_f=float(rng.normal(-0.3, 0.3)),
        has_footprint=footprint,
    )


def random_posterior(rng: np.random.Generator) -> LocationPosterior:
    return LocationPosterior(
        q_bd=float(rng.uniform(0.05, 0.95)),
        mu_w=float(rng.normal(-0.3, 0.3)),
        sigma_w=float(rng.uniform(0.1, 0.6)),
        mu_f=float(rng.normal(-0.3, 0.3)),
        sigma_f=float(rng.uniform(0.1, 0.6)),
        gamma_bd=float(rng.uniform(0.5, 3.0)),
    )


def random_batch(rng: np.random.Generator, n: int = 12) -> LocationBatch:
    """Batch mixing damage nodes, pruned locations and missing observations."""
    has_bd = rng.random(n) < 0.6
    has_obs = rng.random(n) < 0.8
    q = np.where(has_bd, rng.uniform(0.05, 0.95, n), 0.0)
    posteriors = PosteriorState(
        q_bd=q,
        mu_w=rng.normal(-0.3, 0.3, n),
        sigma_w=rng.uniform(0.1, 0.6, n),
        mu_f=rng.normal(-0.3, 0.3, n),
        sigma_f=rng.uniform(0.1, 0.6, n),
        gamma_bd=rng.uniform(0.5, 3.0, n),
    )
    return LocationBatch(
        y=np.where(has_obs, np.exp(rng.normal(-0.5, 0.5, n)), np.nan),
        a_w=rng.normal(-0.3, 0.3, n),
        a_f=rng.normal(-0.3, 0.3, n),
        has_bd=has_bd,
        posteriors=posteriors,
    )
