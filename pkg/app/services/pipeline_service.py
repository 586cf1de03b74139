from typing import Dict, List, Optional, TextIO

import numpy as np
import pandas as pd

from app.eval.ablation import ablation_report, default_ablation_configs
from app.eval.baselines import PriorLayer, dpm_baseline_scores, prior_baseline_scores
from app.eval.metrics import ScoreSummary, summarize_scores
from app.geodata.ascii_grid import read_ascii_grid
from app.geodata.labels import join_labels
from app.geodata.location_table import LocationTable, build_location_table
from app.geodata.resample import ResampleMethod, resample_to_grid
from app.inference.em import FitResult, run_em
from app.inference.pruning import prune
from app.model.moments import lognormal_moments
from app.model.nodes import POSTERIOR_FIELDS
from app.oracle.generative import SyntheticScenario, make_scenario
from app.services.artifact_store import TABLE_SUFFIX, ArtifactStore
from app.utils.errors import DataError
from app.utils.logging_utils import setup_logging
from app.utils.run_config import INPUT_LAYERS, RunConfig

logger = setup_logging(__name__)

POSTERIOR_TABLE = "posteriors"
LOCATIONS_TABLE = "locations"
POSTERIOR_COLUMNS = ["row", "col", "variant", "has_bd", *POSTERIOR_FIELDS, "mean_w", "mean_f"]
METRICS_COLUMNS = ["name", "auc", "threshold", "tpr", "tnr", "count"]


class PipelineService:
    """Runs the simulate, infer, evaluate and ablate stages against one output directory."""

    def __init__(self, store: ArtifactStore) -> None:
        """
        Initialize the PipelineService.

        Args:
            store (ArtifactStore): Where artifacts are written and read back.
        """
        self.store = store

    def simulate(self, config: RunConfig) -> SyntheticScenario:
        """
        Write a synthetic scenario: the four input rasters, field labels, the labeled location
        table and a manifest with the true weights and seed.
        """
        scenario = make_scenario(config.n_cells, config.footprint_fraction, seed=config.seed)
        for name, raster in scenario.rasters().items():
            self.store.store_raster(name, raster)
        self.store.store_table("labels", scenario.labels_frame())
        self.store.store_location_table(LOCATIONS_TABLE, scenario.location_table)
        self.store.store_manifest(
            "scenario",
            {
                "seed": config.seed,
                "n_cells": config.n_cells,
                "footprint_fraction": config.footprint_fraction,
                "damage_rate": scenario.damage_rate,
                "true_weights": scenario.true_weights.to_dict(),
            },
        )
        return scenario

    def load_table(self, config: RunConfig, with_labels: bool = False) -> LocationTable:
        """
        Read the input rasters, align them to the DPM grid and build the location table.

        Flood and wind layers use the configured resampling method; the footprint uses nearest.

        Raises:
            DataError: On missing or malformed inputs.
        """
        config.check_inputs(with_labels=with_labels)
        layers = {layer: read_ascii_grid(config.input_path(layer)) for layer in INPUT_LAYERS}
        dpm = layers["dpm"]
        for layer, method in (("flood", config.resample), ("wind", config.resample), ("footprint", ResampleMethod.NEAREST)):
            if not layers[layer].same_geometry(dpm):
                logger.info(f"Resampling the {layer} layer onto the DPM grid ({ResampleMethod(method).value}).")
                layers[layer] = resample_to_grid(layers[layer], dpm, method)
        table = build_location_table(dpm, layers["flood"], layers["wind"], layers["footprint"])
        if with_labels:
            table, _ = join_labels(table, config.labels_path())
        return table

    def infer(self, config: RunConfig, progress: Optional[TextIO] = None) -> FitResult:
        """
        Fit the model and write the damage and hazard maps, the posterior table, the ELBO
        history and a fit manifest.
        """
        table = self.load_table(config)
        optimizer = config.optimizer()
        pruning = prune(table, enabled=optimizer.prune)
        fit = run_em(table, optimizer, progress=progress, pruning=pruning)
        n = len(table)

        posterior = {name: fit.table_values(getattr(fit.posteriors, name), n) for name in POSTERIOR_FIELDS}
        posterior["q_bd"] = fit.q_bd_for_table(n)
        mean_w = lognormal_moments(posterior["mu_w"], posterior["sigma_w"], check=False).mean
        mean_f = lognormal_moments(posterior["mu_f"], posterior["sigma_f"], check=False).mean
        has_bd = np.zeros(n, dtype=np.int8)
        has_bd[fit.active] = fit.has_bd

        self.store.store_raster("q_bd", table.to_raster(posterior["q_bd"]))
        self.store.store_raster("wind_mean", table.to_raster(mean_w))
        self.store.store_raster("flood_mean", table.to_raster(mean_f))
        frame = pd.DataFrame(
            {
                "row": table.row,
                "col": table.col,
                "variant": pruning.variants,
                "has_bd": has_bd,
                **posterior,
                "mean_w": mean_w,
                "mean_f": mean_f,
            },
            columns=POSTERIOR_COLUMNS,
        )
        self.store.store_table(POSTERIOR_TABLE, frame)

        seconds = np.r_[0.0, np.cumsum(fit.epoch_seconds)]
        history = pd.DataFrame(fit.elbo_history, columns=["epoch", "elbo"])
        history["seconds"] = seconds[: len(history)]
        self.store.store_table("elbo_history", history)
        self.store.store_manifest(
            "fit",
            {
                "seed": config.seed,
                "method": optimizer.method.value,
                "prune": optimizer.prune,
                "batch_size": optimizer.batch_size,
                "weights": fit.weights.to_dict(),
                "epochs_run": fit.epochs_run,
                "converged": fit.converged,
                "final_elbo": fit.final_elbo,
                "vlb": fit.vlb,
                "pruned_count": fit.pruned_count,
                "graph_variants": pruning.counts(),
                "line_search_failures": fit.line_search_failures,
                "wall_time_seconds": fit.wall_time_seconds,
            },
        )
        return fit

    def _model_scores(self, table: LocationTable) -> np.ndarray:
        posteriors = self.store.load_table(POSTERIOR_TABLE)
        missing = [column for column in ("row", "col", "q_bd") if column not in posteriors.columns]
        if missing:
            raise DataError(f"Posterior table is missing columns {missing}; run infer first.", str(self.store.path(POSTERIOR_TABLE)))
        grid = np.full(table.grid.shape, np.nan)
        grid[posteriors["row"].to_numpy(dtype=np.int64), posteriors["col"].to_numpy(dtype=np.int64)] = posteriors[
            "q_bd"
        ].to_numpy(dtype=float)
        return np.nan_to_num(grid[table.row, table.col], nan=0.0)

    def evaluate(self, config: RunConfig) -> List[ScoreSummary]:
        """
        Score the inferred damage map and the label-free baselines against the field labels.

        Writes one summary row per score set plus a ROC curve CSV for each.

        Raises:
            DataError: If labels are missing or hold a single class.
        """
        if not config.labels_path().is_file():
            raise DataError("Evaluation needs field labels.", str(config.labels_path()))
        table = self.load_table(config, with_labels=True)
        labeled = table.has_label
        labels = table.label[labeled]
        if labels.size == 0 or labels.min() == labels.max():
            raise DataError("Labels must cover both damaged and undamaged cells.", str(config.labels_path()))

        score_sets = {
            "model": self._model_scores(table),
            "dpm": dpm_baseline_scores(table),
            "flood_prior": prior_baseline_scores(table, PriorLayer.FLOOD),
            "wind_prior": prior_baseline_scores(table, PriorLayer.WIND),
        }
        summaries = []
        for name, scores in score_sets.items():
            summary, curve = summarize_scores(name, scores[labeled], labels)
            self.store.store_table(f"roc_{name}", curve.to_frame())
            summaries.append(summary)
            logger.info(f"{name}: AUC {summary.auc:.4f}, TPR {summary.tpr:.4f}, TNR {summary.tnr:.4f}.")
        self.store.store_table("metrics", pd.DataFrame([s.to_dict() for s in summaries], columns=METRICS_COLUMNS))
        return summaries

    def ablate(self, config: RunConfig) -> pd.DataFrame:
        """
        Run {VI, MCMC} x {Full, Local} over the configured batch sizes and write the report.

        Uses the configured inputs and labels when a DPM path is set, then the labeled location
        table a previous simulate left in the output directory, otherwise a synthetic scenario
        built from the seed.
        """
        locations = self.store.path(LOCATIONS_TABLE + TABLE_SUFFIX)
        if config.dpm:
            source = self.load_table(config, with_labels=True)
        elif locations.is_file():
            logger.info(f"Ablation runs on the simulated location table {locations}.")
            source = self.store.load_location_table(LOCATIONS_TABLE)
        else:
            source = make_scenario(config.n_cells, config.footprint_fraction, seed=config.seed)
        report = ablation_report(source, default_ablation_configs(config.ablation_batch_sizes), config.optimizer())
        self.store.store_table("ablation", report)
        return report

    def verify(self) -> Dict[str, str]:
        return {path.name: str(path) for path in self.store.verify()}
