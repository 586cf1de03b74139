import os
import tempfile
import unittest

import numpy as np
import pandas as pd

from app.geodata.ascii_grid import DEFAULT_NODATA, GridRaster, read_ascii_grid, write_ascii_grid
from app.geodata.labels import join_labels, read_labels_csv
from app.geodata.location_table import NO_LABEL, LocationTable, build_location_table
from app.geodata.resample import resample_to_grid
from app.utils.errors import DataError, InvalidArgumentError

ND = DEFAULT_NODATA


def _raster(values, cellsize=10.0, xll=0.0, yll=0.0) -> GridRaster:
    values = np.asarray(values, dtype=float)
    return GridRaster(
        ncols=values.shape[1],
        nrows=values.shape[0],
        xllcorner=xll,
        yllcorner=yll,
        cellsize=cellsize,
        nodata_value=ND,
        values=values,
    )


class GridFileTestCase(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.dir = self._tmp.name

    def write_text(self, name: str, text: str) -> str:
        path = os.path.join(self.dir, name)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
        return path


class TestAsciiGrid(GridFileTestCase):
    def test_single_cell(self):
        path = os.path.join(self.dir, "one.asc")
        write_ascii_grid(_raster([[42.0]]), path)
        raster = read_ascii_grid(path)
        self.assertEqual(raster.shape, (1, 1))
        self.assertEqual(raster.values[0, 0], 42.0)

    def test_nan_written_as_nodata(self):
        path = os.path.join(self.dir, "nan.asc")
        write_ascii_grid(_raster([[1.0, np.nan]]), path)
        raster = read_ascii_grid(path)
        self.assertEqual(raster.values[0, 1], ND)
        np.testing.assert_array_equal(raster.valid_mask(), [[True, False]])

    def test_random_values_are_exact(self):
        values = np.random.default_rng(0).normal(size=(7, 5)) * 1e3
        path = os.path.join(self.dir, "random.asc")
        original = _raster(values, cellsize=0.1, xll=-90.123456789, yll=29.5)
        write_ascii_grid(original, path)
        raster = read_ascii_grid(path)
        np.testing.assert_array_equal(raster.values, values)
        self.assertTrue(raster.same_geometry(original))

    def test_lowercase_header_and_center_keys(self):
        path = self.write_text(
            "center.asc", "ncols 2\nnrows 1\nxllcenter 10\nyllcenter 20\ncellsize 2\n3 4\n"
        )
        raster = read_ascii_grid(path)
        self.assertEqual((raster.xllcorner, raster.yllcorner), (9.0, 19.0))
        self.assertEqual(raster.nodata_value, ND)

    def test_non_numeric_token_reports_line(self):
        path = self.write_text(
            "bad.asc",
            "NCOLS 3\nNROWS 2\nXLLCORNER 0\nYLLCORNER 0\nCELLSIZE 1\nNODATA_VALUE -9999\n1 2 3\n1 2 x\n",
        )
        with self.assertRaises(DataError) as context:
            read_ascii_grid(path)
        self.assertEqual(context.exception.line, 8)
        self.assertIn("'x'", str(context.exception))

    def test_missing_header_key(self):
        path = self.write_text("nohead.asc", "NCOLS 1\nXLLCORNER 0\nYLLCORNER 0\nCELLSIZE 1\n5\n")
        with self.assertRaises(DataError):
            read_ascii_grid(path)

    def test_value_count_mismatch(self):
        path = self.write_text("short.asc", "NCOLS 2\nNROWS 2\nXLLCORNER 0\nYLLCORNER 0\nCELLSIZE 1\n1 2 3\n")
        with self.assertRaises(DataError):
            read_ascii_grid(path)

    def test_missing_file(self):
        with self.assertRaises(DataError):
            read_ascii_grid(os.path.join(self.dir, "absent.asc"))

    def test_locate(self):
        raster = _raster(np.zeros((2, 3)))
        row, col, inside = raster.locate(np.array([5.0, 25.0, 35.0]), np.array([15.0, 5.0, 5.0]))
        np.testing.assert_array_equal(row[inside], [0, 1])
        np.testing.assert_array_equal(col[inside], [0, 2])
        np.testing.assert_array_equal(inside, [True, True, False])


class TestResample(unittest.TestCase):
    def test_identity(self):
        src = _raster(np.arange(12.0).reshape(3, 4))
        for method in ("nearest", "bilinear"):
            np.testing.assert_array_equal(resample_to_grid(src, src, method).values, src.values)

    def test_constant_field(self):
        src = _raster(np.full((2, 2), 5.0))
        target = _raster(np.zeros((4, 4)), cellsize=5.0)
        np.testing.assert_allclose(resample_to_grid(src, target, "bilinear").values, 5.0)
        np.testing.assert_array_equal(resample_to_grid(src, target, "nearest").values, 5.0)

    def test_bilinear_ramp(self):
        src = _raster([[0.0, 1.0, 2.0]], cellsize=1.0)
        target = _raster(np.zeros((1, 6)), cellsize=0.5)
        out = resample_to_grid(src, target, "bilinear").values.ravel()
        np.testing.assert_allclose(out, [0.0, 0.25, 0.75, 1.25, 1.75, 2.0])

    def test_nodata_neighbor_blocks_bilinear(self):
        src = _raster([[1.0, ND], [1.0, 1.0]])
        target = _raster(np.zeros((4, 4)), cellsize=5.0)
        out = resample_to_grid(src, target, "bilinear").values
        self.assertEqual(out[0, 3], ND)
        self.assertEqual(out[3, 0], 1.0)

    def test_outside_source_is_nodata(self):
        src = _raster([[1.0]])
        target = _raster(np.zeros((1, 2)))
        out = resample_to_grid(src, target, "nearest").values
        self.assertEqual(out[0, 0], 1.0)
        self.assertEqual(out[0, 1], ND)

    def test_disjoint_extents(self):
        with self.assertRaises(DataError):
            resample_to_grid(_raster([[1.0]]), _raster([[1.0]], xll=100.0))

    def test_unknown_method(self):
        with self.assertRaises(InvalidArgumentError):
            resample_to_grid(_raster([[1.0]]), _raster([[1.0]]), "cubic")


def _layers():
    dpm = _raster([[0.5, ND], [0.0, 2.0]])
    flood = _raster([[0.0, 1.0], [2.0, 3.0]])
    wind = _raster([[1.0, 1.0], [1.0, ND]])
    footprint = _raster([[1.0, 0.0], [ND, 1.0]])
    return dpm, flood, wind, footprint


class TestLocationTable(GridFileTestCase):
    def test_build(self):
        table = build_location_table(*_layers())
        self.assertEqual(len(table), 2)
        np.testing.assert_array_equal(table.row, [0, 1])
        np.testing.assert_array_equal(table.col, [0, 0])
        np.testing.assert_allclose(table.y, [0.5, 5e-4])
        np.testing.assert_allclose(table.a_f, [np.log(1e-3), np.log(2.0)])
        np.testing.assert_allclose(table.a_w, [0.0, 0.0])
        np.testing.assert_array_equal(table.footprint, [True, False])
        np.testing.assert_array_equal(table.label, [NO_LABEL, NO_LABEL])

    def test_geometry_mismatch(self):
        dpm, flood, wind, footprint = _layers()
        with self.assertRaises(DataError):
            build_location_table(dpm, _raster(np.ones((2, 2)), cellsize=5.0), wind, footprint)

    def test_csv_round_trip(self):
        table = LocationTable(
            row=[0, 1], col=[2, 3], y=[0.25, np.nan], a_w=[0.1, -0.2], a_f=[0.3, 0.4],
            footprint=[True, False], label=[1, NO_LABEL],
        )
        path = os.path.join(self.dir, "table.csv")
        table.to_csv(path)
        loaded = LocationTable.from_csv(path)
        np.testing.assert_array_equal(loaded.y, table.y)
        np.testing.assert_array_equal(loaded.label, table.label)
        np.testing.assert_array_equal(loaded.footprint, table.footprint)

    def test_rejects_non_positive_observation(self):
        with self.assertRaises(DataError):
            LocationTable(row=[0], col=[0], y=[0.0], a_w=[0.0], a_f=[0.0], footprint=[True], label=[NO_LABEL])

    def test_to_raster(self):
        table = build_location_table(*_layers())
        raster = table.to_raster(np.array([0.2, 0.8]))
        self.assertEqual(raster.values[0, 0], 0.2)
        self.assertEqual(raster.values[1, 0], 0.8)
        self.assertEqual(raster.values[1, 1], ND)


class TestLabels(GridFileTestCase):
    def test_join(self):
        table = build_location_table(*_layers())
        labels = pd.DataFrame(
            {
                "lat": [15.0, 15.0, 5.0, 15.0, 15.0],
                "lon": [5.0, 5.0, 5.0, 15.0, 100.0],
                "level": [2, 4, 3, 1, 0],
            }
        )
        labeled, report = join_labels(table, labels)
        np.testing.assert_array_equal(labeled.label, [1, NO_LABEL])
        self.assertEqual(report.total, 5)
        self.assertEqual(report.joined_cells, 1)
        self.assertEqual(report.out_of_extent, 2)
        self.assertEqual(report.off_footprint, 1)
        self.assertEqual(report.dropped, 3)
        np.testing.assert_array_equal(table.label, [NO_LABEL, NO_LABEL])

    def test_low_levels_are_undamaged(self):
        table = build_location_table(*_layers())
        labeled, _ = join_labels(table, pd.DataFrame({"lat": [15.0], "lon": [5.0], "level": [2]}))
        self.assertEqual(labeled.label[0], 0)

    def test_read_reports_bad_row(self):
        path = self.write_text("labels.csv", "lat,lon,level\n1,2,0\n1,2,4\n1,2,7\n")
        with self.assertRaises(DataError) as context:
            read_labels_csv(path)
        self.assertEqual(context.exception.line, 4)

    def test_read_missing_column(self):
        path = self.write_text("labels.csv", "lat,lon\n1,2\n")
        with self.assertRaises(DataError):
            read_labels_csv(path)

    def test_build_with_labels_path(self):
        path = self.write_text("labels.csv", "lat,lon,level\n15,5,3\n")
        table = build_location_table(*_layers(), labels_csv=path)
        np.testing.assert_array_equal(table.label, [1, NO_LABEL])


if __name__ == "__main__":
    unittest.main()
