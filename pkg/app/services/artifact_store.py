from pathlib import Path
from typing import Any, Dict, List, Optional, Set, Union

import pandas as pd

from app.geodata.ascii_grid import GridRaster, read_ascii_grid, write_ascii_grid
from app.geodata.location_table import LocationTable
from app.utils.errors import DataError
from app.utils.logging_utils import setup_logging
from app.utils.serialization_utils import read_json, write_json

logger = setup_logging(__name__)

RASTER_SUFFIX = ".asc"
TABLE_SUFFIX = ".csv"
MANIFEST_SUFFIX = ".json"


class ArtifactStore:
    """Reads and writes the run artifacts (rasters, CSV tables, JSON manifests) of one directory."""

    def __init__(self, directory: Union[str, Path]) -> None:
        """
        Initialize the ArtifactStore.

        Args:
            directory (Union[str, Path]): Output directory; created if absent.
        """
        self.directory = Path(directory)
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise DataError(f"Cannot create output directory: {e}", str(self.directory))
        self.written: List[Path] = []
        self.location_tables: Set[Path] = set()
        logger.debug(f"ArtifactStore initialized at {self.directory}.")

    def path(self, filename: str) -> Path:
        return self.directory / filename

    def _record(self, path: Path) -> Path:
        if path not in self.written:
            self.written.append(path)
        return path

    def store_raster(self, name: str, raster: GridRaster) -> Path:
        path = self.path(name + RASTER_SUFFIX)
        write_ascii_grid(raster, path)
        logger.info(f"Raster '{name}' written to {path}.")
        return self._record(path)

    def load_raster(self, name: str) -> GridRaster:
        return read_ascii_grid(self.path(name + RASTER_SUFFIX))

    def store_table(self, name: str, frame: pd.DataFrame) -> Path:
        """Write a CSV with round-trip float precision and empty cells for NaN."""
        path = self.path(name + TABLE_SUFFIX)
        frame.to_csv(path, index=False, float_format="%.17g", na_rep="")
        logger.info(f"Table '{name}' ({len(frame)} rows) written to {path}.")
        return self._record(path)

    def load_table(self, name: str) -> pd.DataFrame:
        path = self.path(name + TABLE_SUFFIX)
        try:
            return pd.read_csv(path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise DataError(f"Cannot read table: {e}", str(path))

    def store_location_table(self, name: str, table: LocationTable) -> Path:
        """Write a location table as `row,col,y,a_w,a_f,footprint,label`."""
        path = self.path(name + TABLE_SUFFIX)
        table.to_csv(path)
        logger.info(f"Location table '{name}' ({len(table)} rows) written to {path}.")
        self.location_tables.add(path)
        return self._record(path)

    def load_location_table(self, name: str, grid: Optional[GridRaster] = None) -> LocationTable:
        return LocationTable.from_csv(self.path(name + TABLE_SUFFIX), grid)

    def store_manifest(self, name: str, data: Dict[str, Any]) -> Path:
        path = self.path(name + MANIFEST_SUFFIX)
        write_json(path, data)
        logger.info(f"Manifest '{name}' written to {path}.")
        return self._record(path)

    def load_manifest(self, name: str) -> Dict[str, Any]:
        path = self.path(name + MANIFEST_SUFFIX)
        try:
            return read_json(path)
        except (OSError, ValueError) as e:
            raise DataError(f"Cannot read manifest: {e}", str(path))

    def verify(self) -> List[Path]:
        """
        Parse back every artifact written through this store.

        Returns:
            List[Path]: The verified paths, in write order.

        Raises:
            DataError: If any artifact is missing or fails to parse.
        """
        for path in self.written:
            if not path.is_file():
                raise DataError("Declared output was not written.", str(path))
            name = path.stem
            if path.suffix == RASTER_SUFFIX:
                self.load_raster(name)
            elif path in self.location_tables:
                self.load_location_table(name)
            elif path.suffix == TABLE_SUFFIX:
                self.load_table(name)
            else:
                self.load_manifest(name)
        logger.info(f"Verified {len(self.written)} artifacts in {self.directory}.")
        return list(self.written)
