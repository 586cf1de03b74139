import numpy as np

# DPM floor relative to the smallest positive observation
FLOOR_FRACTION = 1e-3

# Field damage levels at or above this value count as severe damage / destruction
SEVERE_DAMAGE_LEVEL = 3


class DataCleaner:
    """Clean and standardize raster cell values before they enter the location table."""

    @staticmethod
    def floor_value(values: np.ndarray) -> float:
        """
        Compute the positive floor delta for a layer.

        Args:
            values (np.ndarray): Valid (non-NODATA) cell values of one layer.

        Returns:
            float: FLOOR_FRACTION times the smallest positive value, or FLOOR_FRACTION
            when the layer has no positive value at all.
        """
        positive = values[values > 0]
        if positive.size == 0:
            return FLOOR_FRACTION
        return float(FLOOR_FRACTION * positive.min())

    @staticmethod
    def floor_observations(values: np.ndarray) -> np.ndarray:
        """
        Replace non-positive DPM values by the layer floor so that log y is defined.

        Args:
            values (np.ndarray): Valid DPM values.

        Returns:
            np.ndarray: Strictly positive copy of the values.
        """
        values = np.asarray(values, dtype=float)
        delta = DataCleaner.floor_value(values)
        return np.where(values > 0, values, delta)

    @staticmethod
    def log_intensity(values: np.ndarray) -> np.ndarray:
        """
        Convert a physical hazard intensity layer to the log-scale prior a_i.

        Args:
            values (np.ndarray): Valid prior intensities (wind speed, flood depth, ...).

        Returns:
            np.ndarray: log(max(value, delta)) with the layer's own floor delta.
        """
        values = np.asarray(values, dtype=float)
        delta = DataCleaner.floor_value(values)
        return np.log(np.maximum(values, delta))

    @staticmethod
    def binarize_level(levels: np.ndarray) -> np.ndarray:
        """
        Collapse five-level field damage grades to the binary damage label.

        Args:
            levels (np.ndarray): Integer damage levels in 0..4.

        Returns:
            np.ndarray: int8 array, 1 where level >= SEVERE_DAMAGE_LEVEL else 0.
        """
        return (np.asarray(levels) >= SEVERE_DAMAGE_LEVEL).astype(np.int8)
