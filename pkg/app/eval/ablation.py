"""Inference method, pruning and batch-size ablations on a labeled scenario."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.eval.metrics import summarize_scores
from app.geodata.location_table import LocationTable
from app.inference.em import FitResult, Method, OptimizerConfig, run_em
from app.oracle.generative import SyntheticScenario
from app.utils.config import Config
from app.utils.errors import DataError
from app.utils.logging_utils import setup_logging

logger = setup_logging(__name__)

REPORT_COLUMNS = ["method", "batch_size", "auc", "vlb", "tpr", "tnr", "seconds"]
MCMC_VLB_NOTE = "MCMC vlb: the VI bound at lognormal and Bernoulli fits to the sample moments."


@dataclass(frozen=True)
class AblationConfig:
    """One report row: inference method, pruning switch and batch size (None = full batch)."""

    method: Method = Method.VI
    prune: bool = True
    batch_size: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method(self.method))

    @property
    def label(self) -> str:
        return f"{self.method.value.upper()} {'Local' if self.prune else 'Full'}"

    def optimizer(self, base: OptimizerConfig) -> OptimizerConfig:
        return replace(base, method=self.method, prune=self.prune, batch_size=self.batch_size)


def default_ablation_configs(batch_sizes: Sequence[Optional[int]] = (None,)) -> List[AblationConfig]:
    """{VI, MCMC} x {Full, Local} for every batch size."""
    return [
        AblationConfig(method=method, prune=pruned, batch_size=size)
        for size in batch_sizes
        for method in (Method.VI, Method.MCMC)
        for pruned in (False, True)
    ]


def fit_scores(table: LocationTable, fit: FitResult) -> np.ndarray:
    """q_BD per table row; rows without a damage node or outside the model score 0."""
    return np.nan_to_num(fit.q_bd_for_table(len(table)), nan=0.0)


def _run_row(table: LocationTable, config: AblationConfig, base: OptimizerConfig) -> dict:
    fit = run_em(table, config.optimizer(base))
    labeled = table.has_label
    summary, _ = summarize_scores(config.label, fit_scores(table, fit)[labeled], table.label[labeled])
    row = {
        "method": config.label,
        "batch_size": fit.batch_size,
        "auc": summary.auc,
        "vlb": fit.vlb,
        "tpr": summary.tpr,
        "tnr": summary.tnr,
        "seconds": fit.wall_time_seconds,
    }
    logger.info(f"Ablation row {row['method']} batch {row['batch_size']}: AUC {summary.auc:.4f}, VLB {fit.vlb:.4f}.")
    return row


def ablation_report(
    scenario: Union[SyntheticScenario, LocationTable],
    configs: Iterable[AblationConfig],
    base: Optional[OptimizerConfig] = None,
    threads: Optional[int] = None,
) -> pd.DataFrame:
    """
    Fit every config on the same labeled locations and tabulate AUC, VLB and wall time.

    Every row is fitted from the same seed in `base`, so identical configs give identical
    metrics. `vlb` is the mean per-location ELBO with constants at the fitted weights; for MCMC
    rows the posteriors entering it are lognormal and Bernoulli fits to the sample moments, so
    both methods are scored by the same bound. `batch_size` is the size actually used.

    Rows run on a thread pool when more than one thread is configured; wall times are then
    measured under contention.

    Args:
        scenario (Union[SyntheticScenario, LocationTable]): Labeled locations.
        configs (Iterable[AblationConfig]): Rows to run, in report order.
        base (Optional[OptimizerConfig]): Settings shared by every row.
        threads (Optional[int]): Worker count; defaults to Config.THREADS.

    Returns:
        pd.DataFrame: One row per config with REPORT_COLUMNS.

    Raises:
        DataError: If the locations carry no labels of both classes.
    """
    table = scenario.location_table if isinstance(scenario, SyntheticScenario) else scenario
    labels = table.label[table.has_label]
    if labels.size == 0 or labels.min() == labels.max():
        raise DataError("Ablation needs labeled locations of both classes.")
    base = base or OptimizerConfig()
    configs = list(configs)
    threads = Config.THREADS if threads is None else max(1, threads)

    if threads > 1 and len(configs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda config: _run_row(table, config, base), configs))
    else:
        rows = [_run_row(table, config, base) for config in configs]
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)
