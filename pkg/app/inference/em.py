"""EM driver: coordinate E-steps on posteriors, stochastic gradient M-steps on edge weights."""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, TextIO, Tuple

import numpy as np
from scipy.special import logit

from app.geodata.location_table import LocationTable
from app.inference.batching import epoch_batches
from app.inference.pruning import PruneResult, prune
from app.inference.updates import DEFAULT_SWEEPS, e_step
from app.model.elbo import LocationBatch, elbo_gradient, elbo_terms, elbo_value
from app.model.moments import damage_predictor_moments, lognormal_moments, optimal_gamma
from app.model.nodes import NOISE_SCALE_FIELDS, EdgeWeights, NodeKind, PosteriorState
from app.oracle.mcmc import run_mcmc
from app.utils.datetime_handler import Stopwatch
from app.utils.errors import InvalidArgumentError, NumericalError
from app.utils.logging_utils import setup_logging

logger = setup_logging(__name__)

NOISE_WEIGHT_FLOOR = 1e-3
INITIAL_SIGMA = 0.5
M_STEP_HALVINGS = 10
DEFAULT_RHO = 0.05
DEFAULT_BATCH_SIZE = 256

# Hazards can only raise the damage logit, and flood can only raise the DPM
NONNEGATIVE_FIELDS = ("w_f_bd", "w_w_bd", "w_f_y")
# Smallest shift of log y caused by damage; keeps x_BD = 1 meaning "damaged"
MIN_DAMAGE_SHIFT = 0.05

INITIAL_DAMAGE_RATE = 0.05
MIN_REGRESSION_CELLS = 10
MIN_INITIAL_NOISE = 0.05


class Schedule(str, Enum):
    CONSTANT = "constant"
    INV_SQRT = "inv_sqrt"


class Method(str, Enum):
    VI = "vi"
    MCMC = "mcmc"


@dataclass(frozen=True)
class OptimizerConfig:
    """
    Settings of one EM fit.

    rho scales the mean per-location gradient: the M-step divides the N/m-scaled batch
    gradient by N, so one rho works for any dataset and batch size. At 0.05 the stiffest
    blocks (hazard noise weights, curvature about 2 / w_eps^2) stay stable down to
    w_eps near 0.2; backtracking covers the rest. The damage block is much flatter, so it
    needs many M-steps per epoch: batch_size defaults to 256 and is capped at the number of
    active locations. None means full-batch. The preconditioner is the identity; any other
    value is rejected.
    """

    rho: float = DEFAULT_RHO
    batch_size: Optional[int] = DEFAULT_BATCH_SIZE
    max_epochs: int = 200
    elbo_rel_tol: float = 1e-5
    seed: int = 0
    schedule: Schedule = Schedule.CONSTANT
    e_step_sweeps: int = DEFAULT_SWEEPS
    prune: bool = True
    method: Method = Method.VI
    m_step_backtracking: bool = True
    mcmc_samples: int = 300
    mcmc_burn_in: int = 150
    preconditioner: str = "identity"

    def __post_init__(self) -> None:
        object.__setattr__(self, "schedule", Schedule(self.schedule))
        object.__setattr__(self, "method", Method(self.method))
        if not self.rho >= 0:
            raise InvalidArgumentError(f"rho must be >= 0, got {self.rho}.")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidArgumentError(f"batch_size must be >= 1, got {self.batch_size}.")
        if self.max_epochs < 1:
            raise InvalidArgumentError(f"max_epochs must be >= 1, got {self.max_epochs}.")
        if not self.elbo_rel_tol > 0:
            raise InvalidArgumentError(f"elbo_rel_tol must be > 0, got {self.elbo_rel_tol}.")
        if self.preconditioner != "identity":
            raise InvalidArgumentError("Only the identity preconditioner is supported.")

    def learning_rate(self, step: int) -> float:
        """rho_t for the 1-based M-step counter t."""
        if self.schedule is Schedule.INV_SQRT:
            return self.rho / np.sqrt(step)
        return self.rho

    def effective_batch_size(self, active_count: int) -> int:
        if self.batch_size is None:
            return active_count
        return min(self.batch_size, active_count)


@dataclass
class FitResult:
    """
    Outcome of run_em.

    `posteriors`, `has_bd` and `active` are aligned; `active` indexes the table rows.
    `elbo_history` holds (epoch, full-data ELBO) with epoch 0 the initial state.
    """

    weights: EdgeWeights
    posteriors: PosteriorState
    active: np.ndarray
    has_bd: np.ndarray
    elbo_history: List[Tuple[int, float]]
    wall_time_seconds: float
    pruned_count: int
    epochs_run: int
    converged: bool
    line_search_failures: int = 0
    epoch_seconds: List[float] = field(default_factory=list)
    vlb: float = float("nan")
    batch_size: int = 0

    @property
    def final_elbo(self) -> float:
        return self.elbo_history[-1][1]

    def table_values(self, values: np.ndarray, size: int) -> np.ndarray:
        """Scatter per-active-location values to table rows; removed rows get NaN."""
        out = np.full(size, np.nan)
        out[self.active] = values
        return out

    def q_bd_for_table(self, size: int) -> np.ndarray:
        return self.table_values(np.where(self.has_bd, self.posteriors.q_bd, 0.0), size)


def _observation_fit(flood_mean: np.ndarray, log_y: np.ndarray) -> Tuple[float, float, float]:
    """(slope >= 0, intercept, residual std) of log y against the flood mean; unit noise without data."""
    if log_y.size == 0:
        return 0.0, 0.0, 1.0
    slope = 0.0
    if log_y.size >= 3 and np.ptp(flood_mean) > 0:
        slope = max(float(np.polyfit(flood_mean, log_y, 1)[0]), 0.0)
    residual = log_y - slope * flood_mean
    intercept = float(np.mean(residual))
    return slope, intercept, max(float(np.std(residual - intercept)), MIN_INITIAL_NOISE)


def initialize_weights(data: LocationBatch, rng: np.random.Generator) -> EdgeWeights:
    """
    Starting weights for EM.

    Hazard nodes start prior-consistent: w_a = 1, w_eps = 0.5 and a leak drawn from
    Uniform(-0.1, 0.1). The observation weights come from a least-squares fit of log y on the
    prior flood mean, over observed locations without a damage node when there are at least
    MIN_REGRESSION_CELLS of them and over every observed location otherwise. The damage shift
    w_bd_y starts at one residual standard deviation, the hazard-to-damage couplings at
    Uniform(0, 0.1) and the damage leak at a 5% base rate.

    Args:
        data (LocationBatch): Active locations.
        rng (np.random.Generator): Random stream for the small random weights.

    Returns:
        EdgeWeights: Feasible starting weights.
    """
    w_0_w, w_0_f = rng.uniform(-0.1, 0.1, size=2)
    w_f_bd, w_w_bd = rng.uniform(0.0, 0.1, size=2)
    flood_mean = np.exp(data.a_f + w_0_f + 0.5 * INITIAL_SIGMA**2)
    observed = data.has_obs
    clean = observed & ~data.has_bd
    rows = clean if np.count_nonzero(clean) >= MIN_REGRESSION_CELLS else observed
    w_f_y, w_0_y, w_eps_y = _observation_fit(flood_mean[rows], data.log_y[rows])
    logger.debug(f"Observation fit on {int(np.count_nonzero(rows))} locations: slope {w_f_y:.4f}, noise {w_eps_y:.4f}.")
    return EdgeWeights(
        w_a_w=1.0,
        w_eps_w=INITIAL_SIGMA,
        w_0_w=float(w_0_w),
        w_a_f=1.0,
        w_eps_f=INITIAL_SIGMA,
        w_0_f=float(w_0_f),
        w_f_bd=float(w_f_bd),
        w_w_bd=float(w_w_bd),
        w_eps_bd=INITIAL_SIGMA,
        w_0_bd=float(logit(INITIAL_DAMAGE_RATE)),
        w_f_y=w_f_y,
        w_bd_y=max(w_eps_y, MIN_DAMAGE_SHIFT),
        w_eps_y=w_eps_y,
        w_0_y=w_0_y,
    )


def initialize_posteriors(batch_like: LocationBatch, weights: EdgeWeights) -> PosteriorState:
    """q_BD = 0.5 (0 without a damage node), hazards at the prior conditional with sigma 0.5."""
    n = len(batch_like)
    mu_w = np.asarray(weights.prior_mean(NodeKind.WIND, batch_like.a_w), dtype=float) * np.ones(n)
    mu_f = np.asarray(weights.prior_mean(NodeKind.FLOOD, batch_like.a_f), dtype=float) * np.ones(n)
    sigma = np.full(n, INITIAL_SIGMA)
    z = damage_predictor_moments(
        weights, lognormal_moments(mu_f, sigma, check=False), lognormal_moments(mu_w, sigma, check=False)
    )
    return PosteriorState(
        q_bd=np.where(batch_like.has_bd, 0.5, 0.0),
        mu_w=mu_w,
        sigma_w=sigma.copy(),
        mu_f=mu_f,
        sigma_f=sigma.copy(),
        gamma_bd=optimal_gamma(z.second_moment) * np.ones(n),
    )


def project_weights(weights: EdgeWeights) -> EdgeWeights:
    """
    Nearest feasible weights.

    |w_eps| >= 1e-3 for W, F and y; w_FBD, w_WBD and w_Fy >= 0; w_BDy >= MIN_DAMAGE_SHIFT.
    """
    values = weights.as_array()
    names = EdgeWeights.field_names()
    for name in NOISE_SCALE_FIELDS:
        i = names.index(name)
        if abs(values[i]) < NOISE_WEIGHT_FLOOR:
            values[i] = NOISE_WEIGHT_FLOOR if values[i] >= 0 else -NOISE_WEIGHT_FLOOR
    for name in NONNEGATIVE_FIELDS:
        i = names.index(name)
        values[i] = max(values[i], 0.0)
    i = names.index("w_bd_y")
    values[i] = max(values[i], MIN_DAMAGE_SHIFT)
    return EdgeWeights.from_array(values)


def m_step(
    batch: LocationBatch,
    weights: EdgeWeights,
    config: OptimizerConfig,
    step: int = 1,
    total_count: Optional[int] = None,
) -> EdgeWeights:
    """
    One projected ascent step w + rho_t grad / N with the identity preconditioner.

    The gradient is the N/m-scaled batch gradient, so dividing by N makes rho independent
    of the dataset size. The candidate goes through project_weights. With backtracking the
    step is halved until the batch ELBO does not drop, and skipped if it never stops dropping.

    Raises:
        NumericalError: If the gradient is not finite.
    """
    n = len(batch) if total_count is None else total_count
    gradient = elbo_gradient(batch, weights, total_count=n)
    if not gradient.is_finite():
        raise NumericalError(f"Non-finite ELBO gradient at M-step {step}: {gradient}.")
    rho = config.learning_rate(step)
    direction = gradient.as_array() / n
    if rho == 0 or not np.any(direction):
        return weights

    start = weights.as_array()
    if not config.m_step_backtracking:
        return project_weights(EdgeWeights.from_array(start + rho * direction))

    baseline = elbo_value(batch, weights)
    for _ in range(M_STEP_HALVINGS):
        candidate = project_weights(EdgeWeights.from_array(start + rho * direction))
        value = elbo_value(batch, candidate)
        if np.isfinite(value) and value >= baseline:
            return candidate
        rho *= 0.5
    logger.debug(f"M-step {step} found no ascent within {M_STEP_HALVINGS} halvings; weights kept.")
    return weights


def mcmc_e_step(
    batch: LocationBatch, weights: EdgeWeights, config: OptimizerConfig, rng: np.random.Generator
) -> PosteriorState:
    """Replace the coordinate E-step by moment matching to MCMC samples of the exact posterior."""
    summary = run_mcmc(batch, weights, config.mcmc_samples, config.mcmc_burn_in, rng)
    return summary.to_posteriors(batch.has_bd, weights)


def run_em(
    table: LocationTable,
    config: OptimizerConfig,
    initial_weights: Optional[EdgeWeights] = None,
    progress: Optional[TextIO] = None,
    pruning: Optional[PruneResult] = None,
) -> FitResult:
    """
    Fit edge weights and posteriors by alternating E-steps and M-steps over mini-batches.

    The full-data ELBO is recorded after every epoch; the fit stops when its relative change
    over an epoch falls below elbo_rel_tol or after max_epochs. Single-threaded runs are
    deterministic given the seed. A batch size above the number of active locations falls
    back to full batch.

    Args:
        table (LocationTable): Locations to fit.
        config (OptimizerConfig): Optimizer settings.
        initial_weights (Optional[EdgeWeights]): Starting weights, projected onto the feasible set;
            initialize_weights when None.
        progress (Optional[TextIO]): Stream receiving "epoch<TAB>elbo<TAB>seconds" lines.
        pruning (Optional[PruneResult]): Precomputed pruning; computed from config.prune when None.

    Returns:
        FitResult: Learned weights, posteriors and history.
    """
    watch = Stopwatch()
    pruning = pruning or prune(table, enabled=config.prune)
    active = pruning.active
    if active.size == 0:
        raise InvalidArgumentError("No active locations to fit.")
    batch_size = config.effective_batch_size(len(active))
    if config.batch_size is not None and config.batch_size > len(active):
        logger.info(f"Batch size {config.batch_size} exceeds the {len(active)} active locations; using full batch.")

    init_rng, batch_rng, sample_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(3)
    )
    data = LocationBatch.from_table(table.subset(active), PosteriorState.empty(len(active)), pruning.has_bd)
    if initial_weights is None:
        initial_weights = initialize_weights(data, init_rng)
    weights = project_weights(initial_weights.check_noise_weights())
    data = data.with_posteriors(initialize_posteriors(data, weights))
    positions = np.arange(len(active))

    history = [(0, elbo_value(data, weights))]
    epoch_seconds: List[float] = []
    failures = 0
    step = 0
    converged = False
    logger.info(
        f"EM start: {len(active)} active locations, {pruning.damage_node_count} damage nodes, "
        f"batch {batch_size}, method {config.method.value}."
    )

    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        lap = Stopwatch()
        for indices in epoch_batches(positions, batch_size, batch_rng):
            sub = data.take(indices)
            if config.method is Method.MCMC:
                sub = sub.with_posteriors(mcmc_e_step(sub, weights, config, sample_rng))
            else:
                result = e_step(sub, weights, sweeps=config.e_step_sweeps)
                failures += result.line_search_failures
                sub = sub.with_posteriors(result.posteriors)
            data.posteriors.put(indices, sub.posteriors)
            step += 1
            weights = m_step(sub, weights, config, step=step, total_count=len(active))

        value = elbo_value(data, weights)
        if not np.isfinite(value):
            raise NumericalError(f"Full-data ELBO became non-finite at epoch {epoch}.")
        previous = history[-1][1]
        history.append((epoch, value))
        epoch_seconds.append(lap.elapsed())
        if progress is not None:
            progress.write(f"{epoch}\t{value:.10g}\t{watch.elapsed():.6f}\n")
            progress.flush()
        logger.debug(f"Epoch {epoch}: ELBO {value:.6f}.")
        if abs(value - previous) <= config.elbo_rel_tol * max(abs(previous), 1.0):
            converged = True
            break

    terms = elbo_terms(data, weights)
    fit = FitResult(
        weights=weights,
        posteriors=data.posteriors,
        active=active,
        has_bd=pruning.has_bd,
        elbo_history=history,
        wall_time_seconds=watch.elapsed(),
        pruned_count=pruning.pruned_count,
        epochs_run=epoch,
        converged=converged,
        line_search_failures=failures,
        epoch_seconds=epoch_seconds,
        vlb=float(np.mean(terms.exact_total)),
        batch_size=batch_size,
    )
    logger.info(
        f"EM finished after {fit.epochs_run} epochs in {fit.wall_time_seconds:.2f}s "
        f"(converged={converged}, ELBO {fit.final_elbo:.6f}, VLB {fit.vlb:.6f})."
    )
    return fit
