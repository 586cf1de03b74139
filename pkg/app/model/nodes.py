"""Node and parameter types of the hurricane damage chain.

The graph is fixed: wind (W) and flood (F) are lognormal roots driven by their
prior maps, building damage (BD) is a binary child of W and F, and the DPM
observation y is a lognormal child of F and BD. Every node also has a standard
normal noise parent and the constant leak parent.
"""

from dataclasses import asdict, dataclass, fields, replace
from enum import Enum
from typing import Any, Dict, Iterable, Optional, Union

import numpy as np

from app.utils.errors import InvalidArgumentError

ArrayLike = Union[float, np.ndarray]

# Bounds applied by the E-step to q_BD
Q_MIN = 1e-6
Q_MAX = 1.0 - 1e-6

# Smallest gamma handed to the logistic bound
GAMMA_FLOOR = 1e-8


class NodeKind(str, Enum):
    WIND = "Wind"
    FLOOD = "Flood"
    BUILDING_DAMAGE = "BuildingDamage"
    OBSERVATION = "Observation"
    NOISE = "Noise"
    LEAK = "Leak"


# Noise weights that set a lognormal node's standard deviation (|w_eps| enters log terms)
NOISE_SCALE_FIELDS = ("w_eps_w", "w_eps_f", "w_eps_y")


@dataclass(frozen=True)
class MomentPair:
    """First and second raw moments E[x], E[x^2] of a (possibly vectorized) variable."""

    mean: ArrayLike
    second_moment: ArrayLike

    @property
    def variance(self) -> ArrayLike:
        return self.second_moment - self.mean**2

    @staticmethod
    def bernoulli(q: ArrayLike) -> "MomentPair":
        """Moments of a 0/1 variable with success probability q (E[x^2] = E[x] = q)."""
        return MomentPair(q, q)

    @staticmethod
    def constant(value: ArrayLike) -> "MomentPair":
        return MomentPair(value, value * value)


@dataclass(frozen=True)
class EdgeWeights:
    """Global causal coefficients shared by all locations.

    Naming is w_<parent>_<child>: `a` is the prior map, `eps` the noise parent,
    `0` the leak node. The noise weights set conditional standard deviations; zero
    values are accepted for forward sampling but rejected by inference.
    """

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

    def __post_init__(self) -> None:
        for name in self.field_names():
            value = getattr(self, name)
            if not np.isfinite(value):
                raise InvalidArgumentError(f"Edge weight '{name}' must be finite, got {value!r}.")

    def check_noise_weights(self) -> "EdgeWeights":
        """Raise unless the conditional standard deviations of W, F and y are nonzero."""
        for name in NOISE_SCALE_FIELDS:
            if getattr(self, name) == 0:
                raise InvalidArgumentError(f"Edge weight '{name}' sets a standard deviation and must be nonzero.")
        return self

    @classmethod
    def field_names(cls) -> tuple:
        return tuple(f.name for f in fields(cls))

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in self.field_names()], dtype=float)

    @classmethod
    def from_array(cls, values: Iterable[float]) -> "EdgeWeights":
        values = [float(v) for v in values]
        names = cls.field_names()
        if len(values) != len(names):
            raise InvalidArgumentError(f"Expected {len(names)} edge weights, got {len(values)}.")
        return cls(**dict(zip(names, values)))

    def to_dict(self) -> Dict[str, float]:
        return {key: float(value) for key, value in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EdgeWeights":
        missing = set(cls.field_names()) - set(data)
        if missing:
            raise InvalidArgumentError(f"Missing edge weights: {sorted(missing)}.")
        return cls(**{name: float(data[name]) for name in cls.field_names()})

    def replace(self, **changes: float) -> "EdgeWeights":
        return replace(self, **changes)

    @classmethod
    def zeros(cls, **overrides: float) -> "EdgeWeights":
        """All-zero couplings with unit noise weights; convenient decoupled model."""
        base = {name: 0.0 for name in cls.field_names()}
        base.update({"w_eps_w": 1.0, "w_eps_f": 1.0, "w_eps_y": 1.0})
        base.update(overrides)
        return cls(**base)

    def prior_mean(self, node: NodeKind, prior: ArrayLike) -> ArrayLike:
        """Conditional log-mean w_a * a + w_0 of a hazard node."""
        if node is NodeKind.WIND:
            return self.w_a_w * prior + self.w_0_w
        if node is NodeKind.FLOOD:
            return self.w_a_f * prior + self.w_0_f
        raise InvalidArgumentError(f"{node.value} has no prior map.")

    def noise_weight(self, node: NodeKind) -> float:
        return {
            NodeKind.WIND: self.w_eps_w,
            NodeKind.FLOOD: self.w_eps_f,
            NodeKind.BUILDING_DAMAGE: self.w_eps_bd,
            NodeKind.OBSERVATION: self.w_eps_y,
        }[node]


@dataclass(frozen=True)
class LocationPosterior:
    """Mean-field variational state of one location."""

    q_bd: float
    mu_w: float
    sigma_w: float
    mu_f: float
    sigma_f: float
    gamma_bd: float

    def validate(self, has_bd: bool = True) -> None:
        if has_bd and not 0.0 < self.q_bd < 1.0:
            raise InvalidArgumentError(f"q_bd must lie in (0, 1), got {self.q_bd!r}.")
        if not (self.sigma_w > 0 and self.sigma_f > 0):
            raise InvalidArgumentError("Posterior log-standard deviations must be > 0.")
        if not self.gamma_bd > 0:
            raise InvalidArgumentError(f"gamma_bd must be > 0, got {self.gamma_bd!r}.")
        for name in ("mu_w", "mu_f"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidArgumentError(f"{name} must be finite.")

    def hazard(self, node: NodeKind) -> tuple:
        if node is NodeKind.WIND:
            return self.mu_w, self.sigma_w
        if node is NodeKind.FLOOD:
            return self.mu_f, self.sigma_f
        raise InvalidArgumentError(f"{node.value} is not a lognormal hazard node.")


POSTERIOR_FIELDS = ("q_bd", "mu_w", "sigma_w", "mu_f", "sigma_f", "gamma_bd")


@dataclass
class PosteriorState:
    """Column store of LocationPosterior values for many locations.

    q_bd is held at 0 where a location has no damage node.
    """

    q_bd: np.ndarray
    mu_w: np.ndarray
    sigma_w: np.ndarray
    mu_f: np.ndarray
    sigma_f: np.ndarray
    gamma_bd: np.ndarray

    def __len__(self) -> int:
        return int(self.q_bd.shape[0])

    @classmethod
    def from_locations(cls, posteriors: Iterable[LocationPosterior]) -> "PosteriorState":
        posteriors = list(posteriors)
        return cls(
            **{
                name: np.array([getattr(p, name) for p in posteriors], dtype=float)
                for name in POSTERIOR_FIELDS
            }
        )

    @classmethod
    def empty(cls, n: int) -> "PosteriorState":
        return cls(**{name: np.zeros(n) for name in POSTERIOR_FIELDS})

    def location(self, index: int) -> LocationPosterior:
        return LocationPosterior(**{name: float(getattr(self, name)[index]) for name in POSTERIOR_FIELDS})

    def take(self, indices: np.ndarray) -> "PosteriorState":
        return PosteriorState(**{name: getattr(self, name)[indices].copy() for name in POSTERIOR_FIELDS})

    def put(self, indices: np.ndarray, other: "PosteriorState") -> None:
        for name in POSTERIOR_FIELDS:
            getattr(self, name)[indices] = getattr(other, name)

    def copy(self) -> "PosteriorState":
        return PosteriorState(**{name: getattr(self, name).copy() for name in POSTERIOR_FIELDS})

    def with_values(self, **changes: np.ndarray) -> "PosteriorState":
        return replace(self, **changes)

    def hazard(self, node: NodeKind) -> tuple:
        if node is NodeKind.WIND:
            return self.mu_w, self.sigma_w
        if node is NodeKind.FLOOD:
            return self.mu_f, self.sigma_f
        raise InvalidArgumentError(f"{node.value} is not a lognormal hazard node.")

    def with_hazard(self, node: NodeKind, mu: np.ndarray, sigma: np.ndarray) -> "PosteriorState":
        if node is NodeKind.WIND:
            return replace(self, mu_w=mu, sigma_w=sigma)
        return replace(self, mu_f=mu, sigma_f=sigma)

    def validate(self, has_bd: Optional[np.ndarray] = None) -> None:
        has_bd = np.ones(len(self), dtype=bool) if has_bd is None else has_bd
        q = self.q_bd[has_bd]
        if np.any((q <= 0) | (q >= 1)):
            raise InvalidArgumentError("q_bd must lie in (0, 1) wherever the damage node exists.")
        if np.any(self.sigma_w <= 0) or np.any(self.sigma_f <= 0) or np.any(self.gamma_bd <= 0):
            raise InvalidArgumentError("sigma_w, sigma_f and gamma_bd must be > 0.")
        if not (np.all(np.isfinite(self.mu_w)) and np.all(np.isfinite(self.mu_f))):
            raise InvalidArgumentError("Posterior log-means must be finite.")
