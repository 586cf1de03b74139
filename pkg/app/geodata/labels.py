from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
import pandas as pd

from app.geodata.location_table import NO_LABEL, LocationTable
from app.utils.data_cleaner import DataCleaner
from app.utils.errors import DataError
from app.utils.logging_utils import setup_logging

logger = setup_logging(__name__)

LABEL_COLUMNS = ["lat", "lon", "level"]
MAX_LEVEL = 4


@dataclass(frozen=True)
class LabelJoinReport:
    """Counts of field labels by outcome."""

    total: int
    joined_cells: int
    out_of_extent: int
    off_footprint: int

    @property
    def dropped(self) -> int:
        return self.out_of_extent + self.off_footprint


def read_labels_csv(path: Union[str, Path]) -> pd.DataFrame:
    """
    Read a building-level labels CSV with header lat,lon,level.

    Raises:
        DataError: On missing columns, non-numeric coordinates or levels outside 0..4.
            Line numbers count the header as line 1.
    """
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"Cannot read labels: {e}", str(path))
    frame.columns = [str(column).strip().lower() for column in frame.columns]
    missing = [column for column in LABEL_COLUMNS if column not in frame.columns]
    if missing:
        raise DataError(f"Labels CSV is missing columns {missing}.", str(path), 1)

    numeric = frame[LABEL_COLUMNS].apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1).to_numpy()
    level = numeric["level"].to_numpy()
    bad |= ~np.isnan(level) & ((level != np.round(level)) | (level < 0) | (level > MAX_LEVEL))
    if bad.any():
        line = int(np.argmax(bad)) + 2
        raise DataError("Label rows need numeric lat/lon and an integer level in 0..4.", str(path), line)
    numeric["level"] = numeric["level"].astype(np.int64)
    return numeric


def join_labels(table: LocationTable, labels_csv: Union[str, Path, pd.DataFrame]) -> Tuple[LocationTable, LabelJoinReport]:
    """
    Attach binary damage labels to the cells containing each labeled building.

    Buildings sharing a cell aggregate by maximum level, then levels >= 3 become label 1.
    Labels outside the grid, on cells without a record, or on cells without a footprint are
    counted and dropped.

    Args:
        table (LocationTable): Table with grid geometry.
        labels_csv (Union[str, Path, pd.DataFrame]): Path to the CSV, or an already read frame.

    Returns:
        Tuple[LocationTable, LabelJoinReport]: Labeled table (copy) and join counts.
    """
    if table.grid is None:
        raise DataError("Location table carries no grid geometry; cannot join labels.")
    frame = labels_csv if isinstance(labels_csv, pd.DataFrame) else read_labels_csv(labels_csv)

    grid = table.grid
    row, col, inside = grid.locate(frame["lon"].to_numpy(dtype=float), frame["lat"].to_numpy(dtype=float))
    cell_of_record = np.full(grid.shape, -1, dtype=np.int64)
    cell_of_record[table.row, table.col] = np.arange(len(table))

    record = np.full(len(frame), -1, dtype=np.int64)
    record[inside] = cell_of_record[row[inside], col[inside]]
    out_of_extent = int(np.count_nonzero(record < 0))
    on_record = record >= 0
    on_footprint = on_record.copy()
    on_footprint[on_record] = table.footprint[record[on_record]]
    off_footprint = int(np.count_nonzero(on_record & ~on_footprint))

    max_level = (
        pd.DataFrame({"record": record[on_footprint], "level": frame["level"].to_numpy()[on_footprint]})
        .groupby("record")["level"]
        .max()
    )
    label = np.full(len(table), NO_LABEL, dtype=np.int8)
    label[max_level.index.to_numpy(dtype=np.int64)] = DataCleaner.binarize_level(max_level.to_numpy(dtype=np.int64))

    report = LabelJoinReport(
        total=len(frame),
        joined_cells=int(max_level.shape[0]),
        out_of_extent=out_of_extent,
        off_footprint=off_footprint,
    )
    if report.dropped:
        logger.warning(
            f"Dropped {report.dropped} of {report.total} labels "
            f"({report.out_of_extent} outside the grid, {report.off_footprint} off-footprint)."
        )
    logger.info(f"Joined labels onto {report.joined_cells} cells.")
    return table.with_labels(label), report
