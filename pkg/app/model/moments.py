"""Moment propagation and the logistic quadratic bound.

All functions accept scalars or numpy arrays and broadcast elementwise.
"""

from typing import Sequence, Tuple

import numpy as np

from app.model.nodes import GAMMA_FLOOR, ArrayLike, EdgeWeights, MomentPair
from app.utils.validate_input import require_finite, require_nonnegative, require_positive

# Below this gamma the series 1/8 - gamma^2/96 replaces tanh(gamma/2)/(4 gamma)
_G_SERIES_CUTOFF = 1e-4


def lognormal_moments(mu: ArrayLike, sigma: ArrayLike, check: bool = True) -> MomentPair:
    """
    First two raw moments of x with log x ~ N(mu, sigma^2).

    E[x^2] is evaluated as exp(2 mu + 2 sigma^2), which equals
    (exp(sigma^2) - 1) exp(2 mu + sigma^2) + exp(sigma^2 + 2 mu).

    Args:
        mu (ArrayLike): Log-mean.
        sigma (ArrayLike): Log-standard deviation, >= 0.
        check (bool): Validate the inputs. Hot loops pass False.

    Returns:
        MomentPair: (exp(mu + sigma^2/2), exp(2 mu + 2 sigma^2)).
    """
    if check:
        mu = require_finite(mu, "mu")
        sigma = require_nonnegative(sigma, "sigma")
    variance = np.square(sigma)
    return MomentPair(np.exp(mu + 0.5 * variance), np.exp(2.0 * mu + 2.0 * variance))


def jaakkola_g(gamma: ArrayLike, check: bool = True) -> ArrayLike:
    """
    Curvature g(gamma) = (sigmoid(gamma) - 1/2) / (2 gamma) of the logistic quadratic bound.

    Continuous at 0 with limit 1/8 and strictly decreasing on (0, inf).

    Args:
        gamma (ArrayLike): Bound parameter, > 0.
        check (bool): Validate the input.

    Returns:
        ArrayLike: g(gamma), same shape as gamma.
    """
    if check:
        gamma = require_positive(gamma, "gamma")
    gamma = np.asarray(gamma, dtype=float)
    small = gamma < _G_SERIES_CUTOFF
    safe = np.where(small, 1.0, gamma)
    value = np.where(small, 0.125 - np.square(gamma) / 96.0, np.tanh(0.5 * safe) / (4.0 * safe))
    return value if value.ndim else float(value)


def quadratic_bound_log1pexp(z: ArrayLike, gamma: ArrayLike, check: bool = True) -> ArrayLike:
    """
    Quadratic upper bound of log(1 + e^z), tight at |z| = gamma.

    Args:
        z (ArrayLike): Argument of the softplus.
        gamma (ArrayLike): Bound parameter, > 0.
        check (bool): Validate the inputs.

    Returns:
        ArrayLike: g(gamma)(z^2 - gamma^2) + (z - gamma)/2 + log(1 + e^gamma).
    """
    if check:
        z = require_finite(z, "z")
        gamma = require_positive(gamma, "gamma")
    return expected_bound(z, np.square(z), gamma)


def expected_bound(ez: ArrayLike, ez2: ArrayLike, gamma: ArrayLike) -> ArrayLike:
    """Expectation of the quadratic bound when z has moments (ez, ez2)."""
    gamma = np.asarray(gamma, dtype=float)
    value = (
        jaakkola_g(gamma, check=False) * (ez2 - np.square(gamma))
        + 0.5 * (ez - gamma)
        + np.logaddexp(0.0, gamma)
    )
    return value if np.ndim(value) else float(value)


def linear_predictor_moments(
    parents: Sequence[Tuple[float, MomentPair]], w_eps: float, w_0: float
) -> MomentPair:
    """
    Moments of z = sum_k w_k x_k + w_eps eps + w_0 for independent parents and eps ~ N(0, 1).

    Args:
        parents (Sequence[Tuple[float, MomentPair]]): (weight, moments) per parent.
        w_eps (float): Noise weight.
        w_0 (float): Leak weight.

    Returns:
        MomentPair: (E[z], E[z^2]).
    """
    weighted_means = [w * moments.mean for w, moments in parents]
    linear = sum(weighted_means) if weighted_means else 0.0
    squares = sum(w * w * moments.second_moment for w, moments in parents) if parents else 0.0
    # sum over r != s of w_r w_s E[x_r] E[x_s]
    cross = np.square(linear) - sum(np.square(m) for m in weighted_means) if weighted_means else 0.0
    mean = linear + w_0
    second = squares + w_eps * w_eps + w_0 * w_0 + 2.0 * w_0 * linear + cross
    return MomentPair(mean, second)


def damage_predictor_moments(weights: EdgeWeights, flood: MomentPair, wind: MomentPair) -> MomentPair:
    """Moments of the damage node's logit z_BD under the mean-field posterior."""
    return linear_predictor_moments(
        [(weights.w_f_bd, flood), (weights.w_w_bd, wind)], weights.w_eps_bd, weights.w_0_bd
    )


def optimal_gamma(ez2: ArrayLike) -> ArrayLike:
    """Tightest bound parameter sqrt(E[z^2]), floored away from zero."""
    gamma = np.sqrt(np.maximum(ez2, GAMMA_FLOOR**2))
    return gamma if np.ndim(gamma) else float(gamma)
