"""Label-free comparison scores that do not use the causal model."""

from enum import Enum

import numpy as np

from app.geodata.location_table import LocationTable
from app.utils.errors import InvalidArgumentError


class PriorLayer(str, Enum):
    FLOOD = "flood"
    WIND = "wind"


def min_max_scale(values: np.ndarray) -> np.ndarray:
    """Map values onto [0, 1]; constant input maps to all zeros. NaN stays NaN."""
    values = np.asarray(values, dtype=float)
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return np.full(values.shape, np.nan)
    low, high = finite.min(), finite.max()
    if high == low:
        return np.where(np.isnan(values), np.nan, 0.0)
    return (values - low) / (high - low)


def dpm_baseline_scores(table: LocationTable) -> np.ndarray:
    """
    Min-max normalized DPM value per table row, monotone in the raw observation.

    Rows without an observation score 0, the lowest possible value.
    """
    if len(table) == 0:
        raise InvalidArgumentError("The location table is empty.")
    scores = min_max_scale(table.y)
    return np.where(np.isnan(scores), 0.0, scores)


def prior_baseline_scores(table: LocationTable, layer: PriorLayer = PriorLayer.FLOOD) -> np.ndarray:
    """Min-max normalized prior hazard intensity (flood or wind) used directly as a damage score."""
    if len(table) == 0:
        raise InvalidArgumentError("The location table is empty.")
    layer = PriorLayer(layer)
    return min_max_scale(table.a_f if layer is PriorLayer.FLOOD else table.a_w)
