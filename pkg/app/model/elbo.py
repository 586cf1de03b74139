"""Per-location variational lower bound and its gradient with respect to the edge weights.

Every term is vectorized over locations. Locations without a damage node carry q_bd = 0,
which removes BD from y's parent set and zeroes the discrete bound and Bernoulli entropy.
Locations without an observation carry y = NaN and drop the observation term.
"""

from dataclasses import dataclass, fields
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.special import xlogy

from app.geodata.location_table import LocationRecord, LocationTable
from app.model.moments import (
    damage_predictor_moments,
    expected_bound,
    jaakkola_g,
    lognormal_moments,
)
from app.model.nodes import (
    ArrayLike,
    EdgeWeights,
    LocationPosterior,
    MomentPair,
    NodeKind,
    PosteriorState,
)
from app.utils.errors import InvalidArgumentError
from app.utils.validate_input import require_open_probability, require_positive

HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)

# E_q[log q] of the two lognormal factors contributes -log(2 pi e) beyond entropy_term
ENTROPY_CONSTANT = -np.log(2.0 * np.pi * np.e)

# Noise parents need no posterior of their own; their net constant is zero
NOISE_CONSTANT = 0.0


@dataclass
class LocationBatch:
    """Aligned observations, priors, graph variant and posteriors for a set of locations."""

    y: np.ndarray
    a_w: np.ndarray
    a_f: np.ndarray
    has_bd: np.ndarray
    posteriors: PosteriorState

    def __post_init__(self) -> None:
        self.y = np.asarray(self.y, dtype=float)
        self.a_w = np.asarray(self.a_w, dtype=float)
        self.a_f = np.asarray(self.a_f, dtype=float)
        self.has_bd = np.asarray(self.has_bd, dtype=bool)

    def __len__(self) -> int:
        return int(self.y.shape[0])

    @property
    def has_obs(self) -> np.ndarray:
        return ~np.isnan(self.y)

    @property
    def log_y(self) -> np.ndarray:
        """log y where observed, 0 elsewhere."""
        return np.log(np.where(self.has_obs, self.y, 1.0))

    @property
    def q_effective(self) -> np.ndarray:
        return np.where(self.has_bd, self.posteriors.q_bd, 0.0)

    @classmethod
    def from_table(
        cls,
        table: LocationTable,
        posteriors: PosteriorState,
        has_bd: Optional[np.ndarray] = None,
        indices: Optional[np.ndarray] = None,
    ) -> "LocationBatch":
        """Batch over `indices` of the table (all rows when None); posteriors are indexed alike."""
        has_bd = table.footprint if has_bd is None else np.asarray(has_bd, dtype=bool)
        if indices is None:
            return cls(table.y, table.a_w, table.a_f, has_bd, posteriors)
        return cls(
            table.y[indices],
            table.a_w[indices],
            table.a_f[indices],
            has_bd[indices],
            posteriors.take(indices),
        )

    @classmethod
    def from_pairs(
        cls,
        pairs: Sequence[Tuple[LocationRecord, LocationPosterior]],
        has_bd: Optional[Sequence[bool]] = None,
    ) -> "LocationBatch":
        if not pairs:
            raise InvalidArgumentError("A batch needs at least one location.")
        records = [record for record, _ in pairs]
        if has_bd is None:
            has_bd = [record.has_footprint for record in records]
        return cls(
            y=[np.nan if r.y is None else r.y for r in records],
            a_w=[r.a_w for r in records],
            a_f=[r.a_f for r in records],
            has_bd=has_bd,
            posteriors=PosteriorState.from_locations(posterior for _, posterior in pairs),
        )

    def take(self, indices: np.ndarray) -> "LocationBatch":
        return LocationBatch(
            self.y[indices], self.a_w[indices], self.a_f[indices], self.has_bd[indices], self.posteriors.take(indices)
        )

    def with_posteriors(self, posteriors: PosteriorState) -> "LocationBatch":
        return LocationBatch(self.y, self.a_w, self.a_f, self.has_bd, posteriors)


@dataclass(frozen=True)
class ElboBreakdown:
    """
    Decomposition of the lower bound.

    total = obs_term + continuous_terms + discrete_term_bound - entropy_term. The dropped
    constants are excluded from `total`; `exact_total` adds them back.
    """

    obs_term: ArrayLike
    continuous_terms: ArrayLike
    discrete_term_bound: ArrayLike
    entropy_term: ArrayLike
    dropped_constants: ArrayLike
    total: ArrayLike

    @property
    def exact_total(self) -> ArrayLike:
        return self.total - self.dropped_constants

    def location(self, index: int) -> "ElboBreakdown":
        return ElboBreakdown(**{f.name: float(np.asarray(getattr(self, f.name))[index]) for f in fields(self)})


@dataclass(frozen=True)
class WeightGradient:
    """Partial derivatives of the ELBO, one per EdgeWeights field."""

    w_a_w: float
    w_eps_w: float
    w_0_w: float
    w_a_f: float
    w_eps_f: float
    w_0_f: float
    w_f_bd: float
    w_w_bd: float
    w_eps_bd: float
    w_0_bd: float
    w_f_y: float
    w_bd_y: float
    w_eps_y: float
    w_0_y: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in EdgeWeights.field_names()], dtype=float)

    @classmethod
    def from_array(cls, values: Iterable[float]) -> "WeightGradient":
        return cls(**dict(zip(EdgeWeights.field_names(), (float(v) for v in values))))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.as_array())))


def obs_loglik_term(
    y: ArrayLike, weights: EdgeWeights, flood: MomentPair, damage: MomentPair, check: bool = True
) -> ArrayLike:
    """
    Expected lognormal log-density of the DPM observation given its parents x_F and x_BD.

    Args:
        y (ArrayLike): Observed DPM value, > 0.
        weights (EdgeWeights): Current edge weights.
        flood (MomentPair): Posterior moments of x_F.
        damage (MomentPair): Posterior moments of x_BD; (0, 0) removes BD from the parents.
        check (bool): Validate y.

    Returns:
        ArrayLike: E_q[log p(y | x_F, x_BD)].
    """
    if check:
        y = require_positive(y, "y")
        weights.check_noise_weights()
    log_y = np.log(y)
    value = _obs_from_log(log_y, weights, flood, damage.mean, damage.second_moment)
    return value if np.ndim(value) else float(value)


def _obs_from_log(
    log_y: ArrayLike, weights: EdgeWeights, flood: MomentPair, q: ArrayLike, q_second: ArrayLike
) -> ArrayLike:
    w_f, w_bd, w_eps = weights.w_f_y, weights.w_bd_y, weights.w_eps_y
    r = log_y - weights.w_0_y
    s1 = w_f * flood.mean + w_bd * q
    s2 = w_f * w_f * flood.second_moment + w_bd * w_bd * q_second + 2.0 * w_f * w_bd * flood.mean * q
    quadratic = np.square(r) - 2.0 * r * s1 + s2
    return -log_y - np.log(abs(w_eps)) - HALF_LOG_2PI - quadratic / (2.0 * w_eps * w_eps)


def continuous_node_term(
    node: NodeKind,
    weights: EdgeWeights,
    prior: ArrayLike,
    posterior: Tuple[ArrayLike, ArrayLike],
    check: bool = True,
) -> ArrayLike:
    """
    Expected log-density of a lognormal hazard node given its prior map.

    Args:
        node (NodeKind): WIND or FLOOD.
        weights (EdgeWeights): Current edge weights.
        prior (ArrayLike): Log-scale prior a_i.
        posterior (Tuple[ArrayLike, ArrayLike]): (mu_i, sigma_i) of the lognormal posterior.
        check (bool): Validate sigma.

    Returns:
        ArrayLike: -mu - log|w_eps| - log(2 pi)/2 - [sigma^2 + (mu - m)^2] / (2 w_eps^2).
    """
    mu, sigma = posterior
    if check:
        sigma = require_positive(sigma, "sigma")
        weights.check_noise_weights()
    w_eps = weights.noise_weight(node)
    m = weights.prior_mean(node, prior)
    value = -mu - np.log(abs(w_eps)) - HALF_LOG_2PI - (np.square(sigma) + np.square(mu - m)) / (2.0 * w_eps * w_eps)
    return value if np.ndim(value) else float(value)


def discrete_node_bound(
    weights: EdgeWeights,
    flood: MomentPair,
    wind: MomentPair,
    q_bd: ArrayLike,
    gamma: ArrayLike,
    check: bool = True,
) -> ArrayLike:
    """
    Lower bound of E_q[log p(x_BD | x_F, x_W)] = q E[z] - E[log(1 + e^z)].

    Args:
        weights (EdgeWeights): Current edge weights.
        flood (MomentPair): Posterior moments of x_F.
        wind (MomentPair): Posterior moments of x_W.
        q_bd (ArrayLike): Posterior damage probability in (0, 1).
        gamma (ArrayLike): Bound parameter, > 0.
        check (bool): Validate q_bd and gamma.

    Returns:
        ArrayLike: q E[z] - [g(gamma)(E[z^2] - gamma^2) + (E[z] - gamma)/2 + log(1 + e^gamma)].
    """
    if check:
        q_bd = require_open_probability(q_bd, "q_bd")
        gamma = require_positive(gamma, "gamma")
    z = damage_predictor_moments(weights, flood, wind)
    value = q_bd * z.mean - expected_bound(z.mean, z.second_moment, gamma)
    return value if np.ndim(value) else float(value)


def entropy_term(posterior: LocationPosterior, has_bd: bool = True) -> float:
    """
    Variable part of E_q[log q] for one location.

    The lognormal factors' constant -log(2 pi e) is reported in ElboBreakdown.dropped_constants.
    """
    q = posterior.q_bd if has_bd else 0.0
    return float(
        _entropy(q, posterior.mu_w, posterior.sigma_w, posterior.mu_f, posterior.sigma_f)
    )


def _entropy(q: ArrayLike, mu_w: ArrayLike, sigma_w: ArrayLike, mu_f: ArrayLike, sigma_f: ArrayLike) -> ArrayLike:
    bernoulli = xlogy(q, q) + xlogy(1.0 - q, 1.0 - q)
    return bernoulli - (mu_w + np.log(sigma_w)) - (mu_f + np.log(sigma_f))


def elbo_terms(batch: LocationBatch, weights: EdgeWeights) -> ElboBreakdown:
    """
    Vectorized ElboBreakdown of every location in the batch.

    Returns:
        ElboBreakdown: Fields are arrays with one entry per location.
    """
    weights.check_noise_weights()
    post = batch.posteriors
    flood = lognormal_moments(post.mu_f, post.sigma_f, check=False)
    wind = lognormal_moments(post.mu_w, post.sigma_w, check=False)
    q = batch.q_effective
    has_obs = batch.has_obs

    obs = np.where(has_obs, _obs_from_log(batch.log_y, weights, flood, q, q), 0.0)
    continuous = continuous_node_term(
        NodeKind.WIND, weights, batch.a_w, (post.mu_w, post.sigma_w), check=False
    ) + continuous_node_term(NodeKind.FLOOD, weights, batch.a_f, (post.mu_f, post.sigma_f), check=False)

    z = damage_predictor_moments(weights, flood, wind)
    gamma = np.where(batch.has_bd, post.gamma_bd, 1.0)
    discrete = np.where(batch.has_bd, q * z.mean - expected_bound(z.mean, z.second_moment, gamma), 0.0)

    entropy = _entropy(q, post.mu_w, post.sigma_w, post.mu_f, post.sigma_f)
    constants = np.full(len(batch), NOISE_CONSTANT + ENTROPY_CONSTANT)
    total = obs + continuous + discrete - entropy
    return ElboBreakdown(
        obs_term=obs,
        continuous_terms=continuous,
        discrete_term_bound=discrete,
        entropy_term=entropy,
        dropped_constants=constants,
        total=total,
    )


def elbo_location(
    record: LocationRecord,
    posterior: LocationPosterior,
    weights: EdgeWeights,
    has_bd: Optional[bool] = None,
) -> ElboBreakdown:
    """
    ElboBreakdown of a single location.

    Args:
        record (LocationRecord): The location's data.
        posterior (LocationPosterior): Its variational state.
        weights (EdgeWeights): Current edge weights.
        has_bd (Optional[bool]): Whether the damage node exists; defaults to the footprint flag.

    Returns:
        ElboBreakdown: Scalar breakdown.
    """
    has_bd = record.has_footprint if has_bd is None else has_bd
    posterior.validate(has_bd=has_bd)
    if record.y is not None and not record.y > 0:
        raise InvalidArgumentError(f"y must be > 0, got {record.y!r}.")
    batch = LocationBatch.from_pairs([(record, posterior)], has_bd=[has_bd])
    return elbo_terms(batch, weights).location(0)


def elbo_value(batch: LocationBatch, weights: EdgeWeights, exact: bool = False) -> float:
    """Summed bound over the batch; `exact` adds the dropped constants back."""
    terms = elbo_terms(batch, weights)
    return float(np.sum(terms.exact_total if exact else terms.total))


def elbo_gradient(
    batch: LocationBatch, weights: EdgeWeights, total_count: Optional[int] = None
) -> WeightGradient:
    """
    Analytic gradient of the summed batch ELBO with respect to every edge weight.

    Posteriors and bound parameters are held fixed.

    Args:
        batch (LocationBatch): Nonempty batch of locations.
        weights (EdgeWeights): Point of evaluation.
        total_count (Optional[int]): Dataset size N; the gradient is scaled by N/m when given.

    Returns:
        WeightGradient: The (possibly scaled) gradient.
    """
    if len(batch) == 0:
        raise InvalidArgumentError("Cannot take the gradient over an empty batch.")
    w = weights.check_noise_weights()
    post = batch.posteriors
    flood = lognormal_moments(post.mu_f, post.sigma_f, check=False)
    wind = lognormal_moments(post.mu_w, post.sigma_w, check=False)
    e_f, s_f, e_w, s_w = flood.mean, flood.second_moment, wind.mean, wind.second_moment
    q = batch.q_effective
    obs_mask = batch.has_obs.astype(float)
    bd_mask = batch.has_bd.astype(float)

    # Observation
    var_y = w.w_eps_y * w.w_eps_y
    r = batch.log_y - w.w_0_y
    s1 = w.w_f_y * e_f + w.w_bd_y * q
    s2 = w.w_f_y * w.w_f_y * s_f + w.w_bd_y * w.w_bd_y * q + 2.0 * w.w_f_y * w.w_bd_y * e_f * q
    quadratic = np.square(r) - 2.0 * r * s1 + s2
    d_f_y = obs_mask * (r * e_f - w.w_f_y * s_f - w.w_bd_y * e_f * q) / var_y
    d_bd_y = obs_mask * q * (r - w.w_bd_y - w.w_f_y * e_f) / var_y
    d_0_y = obs_mask * (r - s1) / var_y
    d_eps_y = obs_mask * (-1.0 / w.w_eps_y + quadratic / (var_y * w.w_eps_y))

    # Hazard nodes
    hazard = {}
    for node, prior, mu, sigma in (
        (NodeKind.WIND, batch.a_w, post.mu_w, post.sigma_w),
        (NodeKind.FLOOD, batch.a_f, post.mu_f, post.sigma_f),
    ):
        w_eps = w.noise_weight(node)
        residual = mu - w.prior_mean(node, prior)
        spread = np.square(sigma) + np.square(residual)
        hazard[node] = (
            residual * prior / (w_eps * w_eps),
            -1.0 / w_eps + spread / (w_eps * w_eps * w_eps),
            residual / (w_eps * w_eps),
        )

    # Damage node: d/dtheta = (q - 1/2) dE[z] - g(gamma) dE[z^2]
    z = damage_predictor_moments(w, flood, wind)
    g = jaakkola_g(np.where(batch.has_bd, post.gamma_bd, 1.0), check=False)
    lead = bd_mask * (q - 0.5)
    curv = bd_mask * g
    d_f_bd = lead * e_f - curv * (2.0 * w.w_f_bd * s_f + 2.0 * w.w_0_bd * e_f + 2.0 * w.w_w_bd * e_f * e_w)
    d_w_bd = lead * e_w - curv * (2.0 * w.w_w_bd * s_w + 2.0 * w.w_0_bd * e_w + 2.0 * w.w_f_bd * e_f * e_w)
    d_eps_bd = -curv * 2.0 * w.w_eps_bd
    d_0_bd = lead - curv * 2.0 * z.mean

    scale = 1.0 if total_count is None else total_count / len(batch)
    partials = {
        "w_a_w": hazard[NodeKind.WIND][0],
        "w_eps_w": hazard[NodeKind.WIND][1],
        "w_0_w": hazard[NodeKind.WIND][2],
        "w_a_f": hazard[NodeKind.FLOOD][0],
        "w_eps_f": hazard[NodeKind.FLOOD][1],
        "w_0_f": hazard[NodeKind.FLOOD][2],
        "w_f_bd": d_f_bd,
        "w_w_bd": d_w_bd,
        "w_eps_bd": d_eps_bd,
        "w_0_bd": d_0_bd,
        "w_f_y": d_f_y,
        "w_bd_y": d_bd_y,
        "w_eps_y": d_eps_y,
        "w_0_y": d_0_y,
    }
    return WeightGradient(**{name: scale * float(np.sum(value)) for name, value in partials.items()})
