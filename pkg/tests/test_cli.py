import io
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pandas as pd

from app.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, build_parser, main
from app.eval.ablation import MCMC_VLB_NOTE, REPORT_COLUMNS
from app.utils.config import Config
from app.utils.errors import NumericalError

FAST = ["--set", "n_cells=400", "--set", "max_epochs=3"]


def _run(argv):
    """Run the CLI, returning (exit code, stdout)."""
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue()


class TestExitCodes(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.out = self._tmp.name

    def test_missing_command(self):
        self.assertEqual(_run([])[0], EXIT_USAGE)

    def test_unknown_command(self):
        self.assertEqual(_run(["train"])[0], EXIT_USAGE)

    def test_unknown_config_key(self):
        self.assertEqual(_run(["simulate", "--out", self.out, "--set", "colour=red"])[0], EXIT_USAGE)

    def test_malformed_set(self):
        self.assertEqual(_run(["simulate", "--out", self.out, "--set", "n_cells"])[0], EXIT_USAGE)

    def test_missing_config_file(self):
        self.assertEqual(_run(["simulate", "--config", str(Path(self.out) / "absent.conf")])[0], EXIT_USAGE)

    def test_invalid_optimizer_setting(self):
        code, _ = _run(["simulate", "--out", self.out, *FAST])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(_run(["infer", "--out", self.out, "--set", "rho=-1"])[0], EXIT_USAGE)

    def test_missing_inputs(self):
        self.assertEqual(_run(["infer", "--out", self.out])[0], EXIT_DATA)

    def test_evaluate_without_labels(self):
        self.assertEqual(_run(["evaluate", "--out", self.out])[0], EXIT_DATA)

    def test_numerical_failure(self):
        with patch("app.cli.run", side_effect=NumericalError("ELBO became non-finite")):
            self.assertEqual(_run(["infer", "--out", self.out])[0], EXIT_NUMERIC)

    def test_parser_options(self):
        args = build_parser().parse_args(["infer", "--method", "mcmc", "--batch-size", "32", "--no-prune"])
        self.assertEqual((args.command, args.method, args.batch_size, args.no_prune), ("infer", "mcmc", 32, True))

    def test_ablate_prints_vlb_note(self):
        report = pd.DataFrame([{"method": "MCMC Local", "batch_size": 10, "auc": 0.7, "vlb": -1.0,
                                "tpr": 0.6, "tnr": 0.7, "seconds": 0.1}], columns=REPORT_COLUMNS)
        with patch("app.services.pipeline_service.PipelineService.ablate", return_value=report):
            code, printed = _run(["ablate", "--out", self.out])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("MCMC Local", printed)
        self.assertEqual(printed.splitlines()[-1], MCMC_VLB_NOTE)


class TestPipelineRun(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.root = Path(self._tmp.name)

    def run_stages(self, name: str) -> Path:
        out = str(self.root / name)
        self.assertEqual(_run(["simulate", "--out", out, "--seed", "11", *FAST])[0], EXIT_OK)
        code, progress = _run(["infer", "--out", out, "--seed", "11", *FAST])
        self.assertEqual(code, EXIT_OK)
        epochs = [int(line.split("\t")[0]) for line in progress.splitlines()]
        self.assertEqual(epochs, list(range(1, len(epochs) + 1)))
        return Path(out)

    def test_simulate_infer_evaluate(self):
        """The three stages chain through the output directory."""
        out = self.run_stages("run")
        code, printed = _run(["evaluate", "--out", str(out), "--seed", "11", *FAST])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("model\tauc=", printed)
        metrics = pd.read_csv(out / "metrics.csv")
        self.assertEqual(list(metrics["name"]), ["model", "dpm", "flood_prior", "wind_prior"])

    def test_same_seed_gives_identical_posteriors(self):
        first = self.run_stages("first")
        second = self.run_stages("second")
        self.assertEqual((first / "posteriors.csv").read_bytes(), (second / "posteriors.csv").read_bytes())
        self.assertEqual((first / "q_bd.asc").read_bytes(), (second / "q_bd.asc").read_bytes())

    def test_config_file(self):
        conf = self.root / "run.conf"
        conf.write_text(f"out={self.root / 'from_conf'}\nn_cells=60\nseed=4\n", encoding="utf-8")
        self.assertEqual(_run(["simulate", "--config", str(conf)])[0], EXIT_OK)
        self.assertTrue((self.root / "from_conf" / "dpm.asc").is_file())


@unittest.skipUnless(Config.RUN_SLOW_TESTS, "set RUN_SLOW_TESTS=true to run")
class TestAblationRun(unittest.TestCase):
    def test_ablate(self):
        with tempfile.TemporaryDirectory() as out:
            code, printed = _run(
                ["ablate", "--out", out, "--set", "n_cells=900", "--set", "max_epochs=20",
                 "--set", "ablation_batch_sizes=full,100"]
            )
            self.assertEqual(code, EXIT_OK)
            report = pd.read_csv(Path(out) / "ablation.csv")
        self.assertEqual(list(report.columns), REPORT_COLUMNS)
        self.assertEqual(len(report), 8)
        self.assertEqual(
            list(report["method"]), ["VI Full", "VI Local", "MCMC Full", "MCMC Local"] * 2
        )
        self.assertEqual(set(report["batch_size"].iloc[4:]), {100})
        self.assertTrue(np.all(report["batch_size"].iloc[:4] > 100))
        for column in ("auc", "vlb", "tpr", "tnr", "seconds"):
            self.assertTrue(np.all(np.isfinite(report[column])), msg=column)
        self.assertTrue(np.all((report["auc"] >= 0.0) & (report["auc"] <= 1.0)))
        vi = report[report["method"].str.startswith("VI")]
        self.assertTrue(np.all(vi["auc"] > 0.5))
        self.assertIn("MCMC Local", printed)
        self.assertIn(MCMC_VLB_NOTE, printed)


if __name__ == "__main__":
    unittest.main()
