from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from app.geodata.ascii_grid import GridRaster
from app.utils.data_cleaner import DataCleaner
from app.utils.errors import DataError
from app.utils.logging_utils import setup_logging

logger = setup_logging(__name__)

TABLE_COLUMNS = ["row", "col", "y", "a_w", "a_f", "footprint", "label"]

# Stored label value for "no label"
NO_LABEL = -1


@dataclass(frozen=True)
class LocationRecord:
    """One grid cell: observation, log-scale priors, footprint flag and optional label."""

    row: int
    col: int
    y: Optional[float]
    a_w: float
    a_f: float
    has_footprint: bool
    label: Optional[int] = None

    @property
    def has_observation(self) -> bool:
        return self.y is not None


@dataclass
class LocationTable:
    """
    Column store of LocationRecords aligned to one grid.

    `y` is NaN where a cell has no observation; `label` is NO_LABEL where absent.
    """

    row: np.ndarray
    col: np.ndarray
    y: np.ndarray
    a_w: np.ndarray
    a_f: np.ndarray
    footprint: np.ndarray
    label: np.ndarray
    grid: Optional[GridRaster] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.row = np.asarray(self.row, dtype=np.int64)
        self.col = np.asarray(self.col, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=float)
        self.a_w = np.asarray(self.a_w, dtype=float)
        self.a_f = np.asarray(self.a_f, dtype=float)
        self.footprint = np.asarray(self.footprint, dtype=bool)
        self.label = np.asarray(self.label, dtype=np.int8)
        lengths = {len(getattr(self, name)) for name in ("row", "col", "y", "a_w", "a_f", "footprint", "label")}
        if len(lengths) != 1:
            raise DataError("Location table columns have different lengths.")
        observed = self.y[~np.isnan(self.y)]
        if np.any(observed <= 0):
            raise DataError("Observations must be > 0 after flooring.")
        if not (np.all(np.isfinite(self.a_w)) and np.all(np.isfinite(self.a_f))):
            raise DataError("Prior maps must be finite in every record.")

    def __len__(self) -> int:
        return int(self.row.shape[0])

    @classmethod
    def from_records(cls, records, grid: Optional[GridRaster] = None) -> "LocationTable":
        records = list(records)
        return cls(
            row=[r.row for r in records],
            col=[r.col for r in records],
            y=[np.nan if r.y is None else r.y for r in records],
            a_w=[r.a_w for r in records],
            a_f=[r.a_f for r in records],
            footprint=[r.has_footprint for r in records],
            label=[NO_LABEL if r.label is None else r.label for r in records],
            grid=grid,
        )

    @property
    def has_observation(self) -> np.ndarray:
        return ~np.isnan(self.y)

    @property
    def has_label(self) -> np.ndarray:
        return self.label != NO_LABEL

    def record(self, index: int) -> LocationRecord:
        y = self.y[index]
        label = int(self.label[index])
        return LocationRecord(
            row=int(self.row[index]),
            col=int(self.col[index]),
            y=None if np.isnan(y) else float(y),
            a_w=float(self.a_w[index]),
            a_f=float(self.a_f[index]),
            has_footprint=bool(self.footprint[index]),
            label=None if label == NO_LABEL else label,
        )

    def subset(self, selection: np.ndarray) -> "LocationTable":
        """Rows picked by a boolean mask or an index array."""
        return LocationTable(
            row=self.row[selection],
            col=self.col[selection],
            y=self.y[selection],
            a_w=self.a_w[selection],
            a_f=self.a_f[selection],
            footprint=self.footprint[selection],
            label=self.label[selection],
            grid=self.grid,
        )

    def with_labels(self, label: np.ndarray) -> "LocationTable":
        table = self.subset(np.arange(len(self)))
        table.label = np.asarray(label, dtype=np.int8)
        return table

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "row": self.row,
                "col": self.col,
                "y": self.y,
                "a_w": self.a_w,
                "a_f": self.a_f,
                "footprint": self.footprint.astype(np.int8),
                "label": self.label,
            },
            columns=TABLE_COLUMNS,
        )

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g", na_rep="")

    @classmethod
    def from_csv(cls, path: Union[str, Path], grid: Optional[GridRaster] = None) -> "LocationTable":
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise DataError(f"Cannot read location table: {e}", str(path))
        missing = [column for column in TABLE_COLUMNS if column not in frame.columns]
        if missing:
            raise DataError(f"Location table is missing columns {missing}.", str(path), 1)
        return cls(
            row=frame["row"].to_numpy(),
            col=frame["col"].to_numpy(),
            y=frame["y"].to_numpy(dtype=float),
            a_w=frame["a_w"].to_numpy(dtype=float),
            a_f=frame["a_f"].to_numpy(dtype=float),
            footprint=frame["footprint"].to_numpy() != 0,
            label=frame["label"].fillna(NO_LABEL).to_numpy(),
            grid=grid,
        )

    def to_raster(self, values: np.ndarray, template: Optional[GridRaster] = None) -> GridRaster:
        """Scatter per-record values onto the table's grid; cells without a record are NODATA."""
        template = template or self.grid
        if template is None:
            raise DataError("Location table carries no grid geometry to rasterize onto.")
        out = np.full(template.shape, template.nodata_value, dtype=float)
        out[self.row, self.col] = values
        return GridRaster.like(template, out)


def build_location_table(
    dpm: GridRaster,
    flood: GridRaster,
    wind: GridRaster,
    footprint: GridRaster,
    labels_csv: Optional[Union[str, Path]] = None,
) -> LocationTable:
    """
    Assemble one record per DPM cell where the DPM and both priors hold data.

    DPM values <= 0 are floored at 1e-3 times the smallest positive DPM value. Priors are
    ingested as a = log(max(value, delta)) with their own per-layer floor. Footprint cells
    holding NODATA count as no footprint.

    Args:
        dpm (GridRaster): Damage proxy map; defines the grid.
        flood (GridRaster): Flood prior intensity, resampled to the DPM grid.
        wind (GridRaster): Wind prior intensity, resampled to the DPM grid.
        footprint (GridRaster): Building footprint mask (> 0 means footprint).
        labels_csv (Optional[Union[str, Path]]): Field labels to join.

    Returns:
        LocationTable: The aligned table.

    Raises:
        DataError: If any layer's geometry differs from the DPM grid.
    """
    for name, layer in (("flood", flood), ("wind", wind), ("footprint", footprint)):
        if not layer.same_geometry(dpm):
            raise DataError(f"The {name} layer is not on the DPM grid; resample it first.")

    usable = dpm.valid_mask() & flood.valid_mask() & wind.valid_mask()
    rows, cols = np.nonzero(usable)

    y = dpm.values[dpm.valid_mask()]
    y = DataCleaner.floor_observations(y) if y.size else y
    y_grid = np.full(dpm.shape, np.nan)
    y_grid[dpm.valid_mask()] = y

    a_grids = []
    for layer in (wind, flood):
        mask = layer.valid_mask()
        grid = np.full(layer.shape, np.nan)
        if mask.any():
            grid[mask] = DataCleaner.log_intensity(layer.values[mask])
        a_grids.append(grid)

    has_footprint = footprint.valid_mask() & (np.nan_to_num(footprint.values) > 0)
    table = LocationTable(
        row=rows,
        col=cols,
        y=y_grid[rows, cols],
        a_w=a_grids[0][rows, cols],
        a_f=a_grids[1][rows, cols],
        footprint=has_footprint[rows, cols],
        label=np.full(rows.shape, NO_LABEL, dtype=np.int8),
        grid=GridRaster.like(dpm, np.full(dpm.shape, dpm.nodata_value)),
    )
    logger.info(
        f"Built location table with {len(table)} of {dpm.ncols * dpm.nrows} cells, "
        f"{int(table.footprint.sum())} with footprints."
    )
    if labels_csv is not None:
        from app.geodata.labels import join_labels

        table, _ = join_labels(table, labels_csv)
    return table
