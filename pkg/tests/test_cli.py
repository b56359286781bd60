import os
import json
import tempfile
import unittest
from unittest.mock import patch
from contextlib import redirect_stdout
from io import StringIO

from tangentcones import cli
from tangentcones.config import load_metric_config
from tangentcones.discrete_space import FiniteMetricSpace
from tangentcones.utils import load_input, save_output

import numpy as np


class TestCli(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def main(self, *argv):
        stdout = StringIO()
        with redirect_stdout(stdout):
            status = cli.main(list(argv))
        return status, stdout.getvalue()

    def test_example(self):
        status, output = self.main("example", "--name", "B", "--out-dir", self.tmp.name)

        self.assertEqual(status, 0)
        self.assertEqual(json.loads(output)["metric"], "B")
        self.assertEqual(load_metric_config(os.path.join(self.tmp.name, "B.cfg")).name, "B")

    def test_sample(self):
        status, _ = self.main(
            "sample", "--metric", "flat", "--region", "0.5", "1.5", "--n", "50", "--seed", "2",
            "--out-dir", self.tmp.name,
        )
        table = load_input(os.path.join(self.tmp.name, "cloud.csv"))

        self.assertEqual(status, 0)
        self.assertEqual(len(table), 50)
        self.assertEqual(list(table.columns), ["r", "s", "xi_w", "xi_x", "xi_y", "xi_z"])

    def test_ball(self):
        status, output = self.main(
            "ball", "--metric", "flat", "--region", "0.5", "1.5", "--center", "1.0", "1.5",
            "--radius", "0.4", "--n", "300", "--rescale", "--out-dir", self.tmp.name,
        )
        space = load_input(os.path.join(self.tmp.name, "ball.dm"))

        self.assertEqual(status, 0)
        self.assertEqual(space.n, json.loads(output)["points"])
        self.assertLessEqual(space.distances[0].max(), 1.0 + 1e-12)

    def test_gh(self):
        rng = np.random.default_rng(0)
        for name in ("x.dm", "y.dm"):
            points = rng.uniform(size=(8, 2))
            D = np.linalg.norm(points[:, None] - points[None], axis=-1)
            save_output(os.path.join(self.tmp.name, name), FiniteMetricSpace(D))
        status, output = self.main(
            "gh", os.path.join(self.tmp.name, "x.dm"), os.path.join(self.tmp.name, "y.dm"),
            "--restarts", "2", "--iters", "100", "--out-dir", self.tmp.name,
        )
        report = json.loads(output)

        self.assertEqual(status, 0)
        self.assertLessEqual(report["lower"], report["upper"])
        self.assertTrue(os.path.exists(os.path.join(self.tmp.name, "gh.json")))

    @patch("tangentcones.cli.run_experiment")
    def test_experiment_options(self, mock_run_experiment):
        mock_run_experiment.return_value = {"summary": {"exponent": 0.6}}
        status, output = self.main(
            "holder-cones", "--scales", "0.1,0.05", "--fiber-n", "300", "--seed", "4", "--label", "sharp",
        )
        spec, out_dir, seed, jobs = mock_run_experiment.call_args[0]

        self.assertEqual(status, 0)
        self.assertEqual(json.loads(output), {"exponent": 0.6})
        self.assertEqual((spec.name, spec.kind), ("sharp", "holder-cones"))
        self.assertEqual(spec.params["scales"], (0.1, 0.05))
        self.assertEqual(spec.params["fiber_n"], 300)
        self.assertEqual((out_dir, seed, jobs), ("out", 4, 1))

    @patch("tangentcones.cli.run_config")
    def test_run(self, mock_run_config):
        mock_run_config.return_value = {"experiments": {"ricci": {"outputs": ["ricci.csv"]}}}
        status, output = self.main("run", "run.cfg", "--jobs", "3")

        self.assertEqual(status, 0)
        mock_run_config.assert_called_once_with("run.cfg", None, None, 3)
        self.assertEqual(json.loads(output), {"ricci": ["ricci.csv"]})

    def test_rejected_input(self):
        path = os.path.join(self.tmp.name, "bad.cfg")
        with open(path, "w") as f:
            f.write("[experiment.x]\nkind = magic\n")
        with self.assertLogs("tangentcones.cli", level="ERROR"):
            status, _ = self.main("run", path)

        self.assertEqual(status, 1)

    def test_unknown_verb(self):
        with self.assertRaises(SystemExit):
            with redirect_stdout(StringIO()):
                cli.build_parser().parse_args(["warp"])


if __name__ == '__main__':
    unittest.main()
