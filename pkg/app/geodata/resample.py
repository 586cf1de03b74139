from enum import Enum
from typing import Union

import numpy as np

from app.geodata.ascii_grid import GridRaster
from app.utils.errors import DataError, InvalidArgumentError
from app.utils.logging_utils import setup_logging

logger = setup_logging(__name__)


class ResampleMethod(str, Enum):
    NEAREST = "nearest"
    BILINEAR = "bilinear"


def resample_to_grid(
    src: GridRaster, target: GridRaster, method: Union[str, ResampleMethod] = ResampleMethod.NEAREST
) -> GridRaster:
    """
    Resample `src` onto the geometry of `target`.

    Each target cell is evaluated at its center. Centers outside the source extent become
    NODATA. Nearest takes the containing source cell. Bilinear interpolates between the
    surrounding source centers, clamping at the outer half-cell ring, and yields NODATA
    when any neighbor with positive weight is NODATA.

    Args:
        src (GridRaster): Layer to resample.
        target (GridRaster): Grid whose geometry (and NODATA value) the output takes.
        method (Union[str, ResampleMethod]): "nearest" or "bilinear".

    Returns:
        GridRaster: Resampled layer on the target geometry.

    Raises:
        DataError: If the two extents do not overlap.
    """
    try:
        method = ResampleMethod(method)
    except ValueError:
        raise InvalidArgumentError(f"Unknown resampling method {method!r}.")
    if not src.overlaps(target):
        raise DataError("Source and target raster extents are disjoint.")

    if src.same_geometry(target) and method is ResampleMethod.NEAREST:
        values = np.where(src.valid_mask(), src.values, target.nodata_value)
        return GridRaster.like(target, values)

    x, y = target.cell_centers()
    row, col, inside = src.locate(x, y)
    valid = src.valid_mask()
    out = np.full(target.shape, target.nodata_value, dtype=float)

    if method is ResampleMethod.NEAREST:
        r, c = row[inside], col[inside]
        picked = valid[r, c]
        cells = np.where(inside)
        out[cells[0][picked], cells[1][picked]] = src.values[r[picked], c[picked]]
    else:
        out[inside] = _bilinear(src, valid, x[inside], y[inside], target.nodata_value)

    logger.debug(
        f"Resampled {src.nrows}x{src.ncols} -> {target.nrows}x{target.ncols} ({method.value}), "
        f"{int(np.count_nonzero(out != target.nodata_value))} valid cells."
    )
    return GridRaster.like(target, out)


def _bilinear(src: GridRaster, valid: np.ndarray, x: np.ndarray, y: np.ndarray, nodata: float) -> np.ndarray:
    # Fractional index relative to source cell centers
    col_f = np.clip((x - src.xllcorner) / src.cellsize - 0.5, 0.0, src.ncols - 1)
    row_f = np.clip((src.ymax - y) / src.cellsize - 0.5, 0.0, src.nrows - 1)
    c0 = np.minimum(np.floor(col_f).astype(np.int64), max(src.ncols - 2, 0))
    r0 = np.minimum(np.floor(row_f).astype(np.int64), max(src.nrows - 2, 0))
    c1 = np.minimum(c0 + 1, src.ncols - 1)
    r1 = np.minimum(r0 + 1, src.nrows - 1)
    fx = col_f - c0
    fy = row_f - r0

    corners = (
        (r0, c0, (1.0 - fy) * (1.0 - fx)),
        (r0, c1, (1.0 - fy) * fx),
        (r1, c0, fy * (1.0 - fx)),
        (r1, c1, fy * fx),
    )
    total = np.zeros_like(x)
    blocked = np.zeros(x.shape, dtype=bool)
    for r, c, weight in corners:
        contributes = weight > 0
        blocked |= contributes & ~valid[r, c]
        total += np.where(contributes & valid[r, c], weight * src.values[r, c], 0.0)
    return np.where(blocked, nodata, total)
