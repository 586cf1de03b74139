"""Forward model of the damage chain and synthetic scenarios with known ground truth."""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import log_expit, logsumexp

from app.geodata.ascii_grid import DEFAULT_NODATA, GridRaster
from app.geodata.location_table import NO_LABEL, LocationTable
from app.model.nodes import ArrayLike, EdgeWeights
from app.utils.errors import InvalidArgumentError
from app.utils.logging_utils import setup_logging

logger = setup_logging(__name__)

HERMITE_ORDER = 32
_NODES, _WEIGHTS = hermegauss(HERMITE_ORDER)
# log of the Gauss-Hermite weights normalized to a standard normal expectation
_LOG_WEIGHTS = np.log(_WEIGHTS) - 0.5 * np.log(2.0 * np.pi)

SCENARIO_CELLSIZE = 20.0
PRIOR_BASE = -0.7
BUMP_COUNT = 4
BUMP_AMPLITUDE = (0.6, 1.6)
BUMP_RADIUS = (0.05, 0.15)


def default_weight_spec() -> EdgeWeights:
    """
    Ground-truth weights of synthetic scenarios.

    Damage is driven mostly by wind while flood dominates the DPM, so a raw DPM threshold
    flags flooded but undamaged cells. The damage base rate is a few percent.
    """
    return EdgeWeights(
        w_a_w=1.0,
        w_eps_w=0.25,
        w_0_w=0.0,
        w_a_f=1.0,
        w_eps_f=0.3,
        w_0_f=0.0,
        w_f_bd=1.0,
        w_w_bd=2.5,
        w_eps_bd=0.5,
        w_0_bd=-6.0,
        w_f_y=1.0,
        w_bd_y=1.0,
        w_eps_y=0.5,
        w_0_y=-1.0,
    )


def damage_log_probs(z_mean: ArrayLike, w_eps_bd: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    log p(x_BD = 1 | x) and log p(x_BD = 0 | x) with the damage noise integrated out.

    p(x_BD = 1 | x) = E_eps[sigmoid(z_mean + w_eps_bd eps)], evaluated by Gauss-Hermite quadrature.

    Args:
        z_mean (ArrayLike): w_FBD x_F + w_WBD x_W + w_0BD.
        w_eps_bd (float): Damage noise weight.

    Returns:
        Tuple[np.ndarray, np.ndarray]: (log p1, log p0), shaped like z_mean.
    """
    z = np.asarray(z_mean, dtype=float)[..., None] + w_eps_bd * _NODES
    log_p1 = logsumexp(log_expit(z) + _LOG_WEIGHTS, axis=-1)
    log_p0 = logsumexp(log_expit(-z) + _LOG_WEIGHTS, axis=-1)
    return log_p1, log_p0


def observation_loglik(log_y: ArrayLike, x_f: ArrayLike, x_bd: ArrayLike, weights: EdgeWeights) -> np.ndarray:
    """log p(y | x_F, x_BD) of the lognormal observation; 0 where log_y is NaN."""
    log_y = np.asarray(log_y, dtype=float)
    w = weights
    mean = w.w_f_y * x_f + w.w_bd_y * x_bd + w.w_0_y
    value = -log_y - np.log(abs(w.w_eps_y)) - 0.5 * np.log(2.0 * np.pi) - np.square(log_y - mean) / (
        2.0 * w.w_eps_y * w.w_eps_y
    )
    return np.where(np.isnan(log_y), 0.0, value)


def hazard_log_prior(u: ArrayLike, mean: ArrayLike, w_eps: float) -> np.ndarray:
    """log N(u; mean, w_eps^2) for u = log x."""
    return -np.log(abs(w_eps)) - 0.5 * np.log(2.0 * np.pi) - np.square(u - mean) / (2.0 * w_eps * w_eps)


@dataclass(frozen=True)
class ForwardSample:
    x_w: np.ndarray
    x_f: np.ndarray
    x_bd: np.ndarray
    y: np.ndarray


def sample_forward(
    weights: EdgeWeights,
    a_w: ArrayLike,
    a_f: ArrayLike,
    rng: np.random.Generator,
    has_bd: Optional[ArrayLike] = None,
) -> ForwardSample:
    """
    Draw (x_W, x_F, x_BD, y) from the causal chain for every prior pair.

    Locations with has_bd False have no building, so x_BD is 0 there.

    Args:
        weights (EdgeWeights): Generating weights; zero noise weights give a deterministic chain.
        a_w (ArrayLike): Log-scale wind priors.
        a_f (ArrayLike): Log-scale flood priors.
        rng (np.random.Generator): Random stream.
        has_bd (Optional[ArrayLike]): Building presence per location (default all True).

    Returns:
        ForwardSample: Arrays shaped like the priors.
    """
    a_w, a_f = np.broadcast_arrays(np.asarray(a_w, dtype=float), np.asarray(a_f, dtype=float))
    shape = a_w.shape
    has_bd = np.ones(shape, dtype=bool) if has_bd is None else np.broadcast_to(np.asarray(has_bd, dtype=bool), shape)
    w = weights

    x_w = np.exp(w.w_a_w * a_w + w.w_eps_w * rng.standard_normal(shape) + w.w_0_w)
    x_f = np.exp(w.w_a_f * a_f + w.w_eps_f * rng.standard_normal(shape) + w.w_0_f)
    z = w.w_f_bd * x_f + w.w_w_bd * x_w + w.w_eps_bd * rng.standard_normal(shape) + w.w_0_bd
    # u < sigmoid(z) written as log u < log_expit(z) to keep saturation exact
    x_bd = ((np.log(rng.random(shape)) < log_expit(z)) & has_bd).astype(np.int8)
    y = np.exp(w.w_f_y * x_f + w.w_bd_y * x_bd + w.w_eps_y * rng.standard_normal(shape) + w.w_0_y)
    return ForwardSample(x_w=x_w, x_f=x_f, x_bd=x_bd, y=y)


def grid_shape(n_cells: int) -> Tuple[int, int]:
    """(nrows, ncols) with nrows the largest divisor of n_cells not above its square root."""
    nrows = max(d for d in range(1, int(np.sqrt(n_cells)) + 1) if n_cells % d == 0)
    return nrows, n_cells // nrows


def prior_field(nrows: int, ncols: int, rng: np.random.Generator, bumps: int = BUMP_COUNT) -> np.ndarray:
    """Smooth log-scale hazard field: a flat base plus radial Gaussian bumps on the unit square."""
    x = (np.arange(ncols) + 0.5) / ncols
    y = (np.arange(nrows) + 0.5) / nrows
    xx, yy = np.meshgrid(x, y)
    field = np.full((nrows, ncols), PRIOR_BASE)
    for _ in range(bumps):
        cx, cy = rng.random(2)
        amplitude = rng.uniform(*BUMP_AMPLITUDE)
        radius = rng.uniform(*BUMP_RADIUS)
        field += amplitude * np.exp(-(np.square(xx - cx) + np.square(yy - cy)) / (2.0 * radius * radius))
    return field


@dataclass(frozen=True)
class SyntheticScenario:
    """Synthetic region with known weights and latents; labels are the true x_BD on footprint cells."""

    true_weights: EdgeWeights
    location_table: LocationTable
    latents: ForwardSample
    levels: np.ndarray
    seed: int
    footprint_fraction: float

    @property
    def damage_rate(self) -> float:
        footprint = self.location_table.footprint
        return float(self.latents.x_bd[footprint].mean()) if footprint.any() else 0.0

    def rasters(self) -> Dict[str, GridRaster]:
        """Scenario layers on the scenario grid, in physical (not log) units."""
        table = self.location_table
        return {
            "dpm": table.to_raster(table.y),
            "flood": table.to_raster(np.exp(table.a_f)),
            "wind": table.to_raster(np.exp(table.a_w)),
            "footprint": table.to_raster(table.footprint.astype(float)),
        }

    def labels_frame(self) -> pd.DataFrame:
        """One labeled building at the center of every footprint cell."""
        table = self.location_table
        keep = self.levels >= 0
        lon, lat = table.grid.cell_center(table.row[keep], table.col[keep])
        return pd.DataFrame({"lat": lat, "lon": lon, "level": self.levels[keep]}, columns=["lat", "lon", "level"])


def make_scenario(
    n_cells: int,
    footprint_fraction: float,
    weight_spec: Optional[EdgeWeights] = None,
    seed: int = 0,
) -> SyntheticScenario:
    """
    Build a reproducible synthetic scenario.

    Prior fields are radial-bump mixtures, footprints are Bernoulli(footprint_fraction),
    latents and DPM values come from sample_forward. Damaged buildings get field level 3 or 4,
    undamaged ones 0 to 2.

    Args:
        n_cells (int): Number of grid cells, >= 1.
        footprint_fraction (float): Probability that a cell holds a building, in [0, 1].
        weight_spec (Optional[EdgeWeights]): Generating weights (default_weight_spec() when None).
        seed (int): Root seed; every random stream is derived from it.

    Returns:
        SyntheticScenario: Scenario with a labeled location table on its grid.
    """
    if n_cells < 1:
        raise InvalidArgumentError(f"n_cells must be >= 1, got {n_cells}.")
    if not 0.0 <= footprint_fraction <= 1.0:
        raise InvalidArgumentError(f"footprint_fraction must lie in [0, 1], got {footprint_fraction}.")
    weights = weight_spec or default_weight_spec()
    field_rng, footprint_rng, latent_rng, label_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)
    )

    nrows, ncols = grid_shape(n_cells)
    a_f = prior_field(nrows, ncols, field_rng).ravel()
    a_w = prior_field(nrows, ncols, field_rng).ravel()
    footprint = footprint_rng.random(n_cells) < footprint_fraction
    latents = sample_forward(weights, a_w, a_f, latent_rng, has_bd=footprint)

    levels = np.where(
        latents.x_bd == 1, label_rng.integers(3, 5, size=n_cells), label_rng.integers(0, 3, size=n_cells)
    )
    levels = np.where(footprint, levels, -1)
    rows, cols = np.divmod(np.arange(n_cells), ncols)
    grid = GridRaster(
        ncols=ncols,
        nrows=nrows,
        xllcorner=0.0,
        yllcorner=0.0,
        cellsize=SCENARIO_CELLSIZE,
        nodata_value=DEFAULT_NODATA,
        values=np.full(n_cells, DEFAULT_NODATA),
    )
    table = LocationTable(
        row=rows,
        col=cols,
        y=latents.y,
        a_w=a_w,
        a_f=a_f,
        footprint=footprint,
        label=np.where(footprint, latents.x_bd, NO_LABEL),
        grid=grid,
    )
    scenario = SyntheticScenario(
        true_weights=weights,
        location_table=table,
        latents=latents,
        levels=levels,
        seed=seed,
        footprint_fraction=footprint_fraction,
    )
    logger.info(
        f"Scenario seed={seed}: {nrows}x{ncols} cells, {int(footprint.sum())} footprints, "
        f"damage rate {scenario.damage_rate:.3f}."
    )
    return scenario
