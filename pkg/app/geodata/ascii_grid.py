import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from app.utils.errors import DataError, InvalidArgumentError
from app.utils.logging_utils import setup_logging

logger = setup_logging(__name__)

DEFAULT_NODATA = -9999.0

_INT_KEYS = ("ncols", "nrows")
_FLOAT_KEYS = ("xllcorner", "xllcenter", "yllcorner", "yllcenter", "cellsize", "nodata_value")


@dataclass
class GridRaster:
    """
    Raster layer in ESRI ASCII grid geometry.

    `values` has shape (nrows, ncols); row 0 is the northernmost row, as in the file.
    Cells equal to `nodata_value` (or NaN) carry no data.
    """

    ncols: int
    nrows: int
    xllcorner: float
    yllcorner: float
    cellsize: float
    nodata_value: float
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.ncols < 1 or self.nrows < 1:
            raise InvalidArgumentError("A raster needs at least one row and one column.")
        if not (math.isfinite(self.cellsize) and self.cellsize > 0):
            raise InvalidArgumentError(f"cellsize must be > 0, got {self.cellsize!r}.")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.size != self.ncols * self.nrows:
            raise InvalidArgumentError(
                f"Raster has {self.values.size} values, expected {self.nrows}x{self.ncols}."
            )
        self.values = self.values.reshape(self.nrows, self.ncols)

    @classmethod
    def like(cls, template: "GridRaster", values: np.ndarray, nodata_value: Optional[float] = None) -> "GridRaster":
        """New raster with the geometry of `template` and the given values."""
        return cls(
            ncols=template.ncols,
            nrows=template.nrows,
            xllcorner=template.xllcorner,
            yllcorner=template.yllcorner,
            cellsize=template.cellsize,
            nodata_value=template.nodata_value if nodata_value is None else nodata_value,
            values=values,
        )

    @property
    def shape(self) -> Tuple[int, int]:
        return self.nrows, self.ncols

    @property
    def xmax(self) -> float:
        return self.xllcorner + self.ncols * self.cellsize

    @property
    def ymax(self) -> float:
        return self.yllcorner + self.nrows * self.cellsize

    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.values) & (self.values != self.nodata_value)

    def same_geometry(self, other: "GridRaster") -> bool:
        return (
            self.ncols == other.ncols
            and self.nrows == other.nrows
            and self.xllcorner == other.xllcorner
            and self.yllcorner == other.yllcorner
            and self.cellsize == other.cellsize
        )

    def overlaps(self, other: "GridRaster") -> bool:
        return (
            self.xllcorner < other.xmax
            and other.xllcorner < self.xmax
            and self.yllcorner < other.ymax
            and other.yllcorner < self.ymax
        )

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """(x, y) coordinates of every cell center, each of shape (nrows, ncols)."""
        cols = np.arange(self.ncols)
        rows = np.arange(self.nrows)
        x = self.xllcorner + (cols + 0.5) * self.cellsize
        y = self.ymax - (rows + 0.5) * self.cellsize
        return np.meshgrid(x, y)

    def cell_center(self, row: int, col: int) -> Tuple[float, float]:
        return (
            self.xllcorner + (col + 0.5) * self.cellsize,
            self.ymax - (row + 0.5) * self.cellsize,
        )

    def locate(self, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Map coordinates to containing cells.

        Args:
            x (np.ndarray): Easting / longitude values.
            y (np.ndarray): Northing / latitude values.

        Returns:
            Tuple[np.ndarray, np.ndarray, np.ndarray]: (row, col, inside) where row and col
            are only meaningful where `inside` is True.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        col = np.floor((x - self.xllcorner) / self.cellsize).astype(np.int64)
        row = np.floor((self.ymax - y) / self.cellsize).astype(np.int64)
        inside = (col >= 0) & (col < self.ncols) & (row >= 0) & (row < self.nrows)
        return row, col, inside


def _header_value(key: str, token: str, path: str, line: int) -> Union[int, float]:
    try:
        if key in _INT_KEYS:
            return int(token)
        return float(token)
    except ValueError:
        raise DataError(f"Invalid value {token!r} for header key {key.upper()}.", path, line)


def read_ascii_grid(path: Union[str, Path]) -> GridRaster:
    """
    Read an ESRI ASCII grid.

    Header keys are case-insensitive; XLLCENTER/YLLCENTER are accepted in place of the
    corner keys and NODATA_VALUE defaults to -9999 when absent.

    Args:
        path (Union[str, Path]): File to read.

    Returns:
        GridRaster: Parsed raster.

    Raises:
        DataError: On a malformed header, a non-numeric token or a value count mismatch.
    """
    path = str(path)
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as e:
        raise DataError(f"Cannot read raster: {e}", path)

    header: Dict[str, Union[int, float]] = {}
    index = 0
    while index < len(lines):
        tokens = lines[index].split()
        if not tokens:
            index += 1
            continue
        key = tokens[0].lower()
        if key not in _INT_KEYS + _FLOAT_KEYS:
            break
        if len(tokens) != 2:
            raise DataError(f"Header line for {key.upper()} must hold exactly one value.", path, index + 1)
        if key in header:
            raise DataError(f"Duplicate header key {key.upper()}.", path, index + 1)
        header[key] = _header_value(key, tokens[1], path, index + 1)
        index += 1

    for required in ("ncols", "nrows", "cellsize"):
        if required not in header:
            raise DataError(f"Missing header key {required.upper()}.", path, index + 1)
    ncols, nrows, cellsize = int(header["ncols"]), int(header["nrows"]), float(header["cellsize"])
    if ncols < 1 or nrows < 1 or not cellsize > 0:
        raise DataError("NCOLS and NROWS must be >= 1 and CELLSIZE > 0.", path)

    corners = []
    for axis in ("x", "y"):
        corner, center = header.get(f"{axis}llcorner"), header.get(f"{axis}llcenter")
        if (corner is None) == (center is None):
            raise DataError(f"Exactly one of {axis.upper()}LLCORNER / {axis.upper()}LLCENTER is required.", path)
        corners.append(float(corner) if corner is not None else float(center) - 0.5 * cellsize)

    rows = []
    for number in range(index, len(lines)):
        tokens = lines[number].split()
        if not tokens:
            continue
        try:
            rows.append(np.array(tokens, dtype=float))
        except ValueError:
            bad = next(token for token in tokens if not _is_number(token))
            raise DataError(f"Non-numeric token {bad!r} in raster body.", path, number + 1)

    values = np.concatenate(rows) if rows else np.empty(0)
    if values.size != ncols * nrows:
        raise DataError(f"Raster body holds {values.size} values, header declares {nrows}x{ncols}.", path, len(lines))

    raster = GridRaster(
        ncols=ncols,
        nrows=nrows,
        xllcorner=corners[0],
        yllcorner=corners[1],
        cellsize=cellsize,
        nodata_value=float(header.get("nodata_value", DEFAULT_NODATA)),
        values=values,
    )
    logger.debug(f"Read {nrows}x{ncols} raster from {path}.")
    return raster


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def write_ascii_grid(raster: GridRaster, path: Union[str, Path]) -> None:
    """
    Write a raster as ESRI ASCII grid with 17 significant digits, so reading it back is exact.

    NaN cells are written as the raster's NODATA value.
    """
    values = np.where(np.isfinite(raster.values), raster.values, raster.nodata_value)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"NCOLS {raster.ncols}\n")
        handle.write(f"NROWS {raster.nrows}\n")
        handle.write(f"XLLCORNER {float(raster.xllcorner)!r}\n")
        handle.write(f"YLLCORNER {float(raster.yllcorner)!r}\n")
        handle.write(f"CELLSIZE {float(raster.cellsize)!r}\n")
        handle.write(f"NODATA_VALUE {float(raster.nodata_value)!r}\n")
        np.savetxt(handle, values, fmt="%.17g", delimiter=" ")
    logger.debug(f"Wrote {raster.nrows}x{raster.ncols} raster to {path}.")
