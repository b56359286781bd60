import os
import json
import hashlib
import tempfile
import unittest
from unittest.mock import patch, Mock
from numpy.testing import assert_allclose

from tangentcones import experiments
from tangentcones.config import ExperimentSpec, experiment_params, write_metric_config
from tangentcones.errors import PopulationError
from tangentcones.example_spaces import build_named_metric

import numpy as np


class TestFitHolder(unittest.TestCase):

    def setUp(self):
        self.gaps = np.geomspace(0.01, 0.2, 6)

    def test_power_law(self):
        fit = experiments.fit_holder(self.gaps, 2.0 * self.gaps ** 0.6)

        self.assertAlmostEqual(fit.exponent, 0.6)
        self.assertAlmostEqual(fit.intercept, np.log(2.0))
        self.assertLess(fit.residual, 1e-10)
        assert_allclose(fit.interval, (0.6, 0.6), atol=1e-8)
        self.assertAlmostEqual(fit.theorem_exponent, 1.0 / 22.0)
        self.assertEqual(list(fit.points.columns), ["log_gap", "log_value"])

    def test_scale_equivariance(self):
        values = self.gaps ** 0.4 * (1.0 + 0.05 * np.sin(10 * self.gaps))
        fit = experiments.fit_holder(self.gaps, values)
        scaled = experiments.fit_holder(self.gaps, 7.0 * values)

        self.assertAlmostEqual(scaled.exponent, fit.exponent)
        self.assertAlmostEqual(scaled.intercept, fit.intercept + np.log(7.0))

    def test_floor_subtracted(self):
        fit = experiments.fit_holder(self.gaps, self.gaps ** 0.5 + 0.01, noise_floor=0.01)

        self.assertAlmostEqual(fit.exponent, 0.5)
        self.assertEqual(fit.noise_floor, 0.01)

    def test_floor_kept(self):
        fit = experiments.fit_holder(self.gaps, self.gaps ** 0.5, noise_floor=1.0, subtract_floor=False)

        self.assertAlmostEqual(fit.exponent, 0.5)

    def test_zero_gap_skipped(self):
        gaps = np.concatenate([[0.0], self.gaps])
        fit = experiments.fit_holder(gaps, np.concatenate([[0.0], self.gaps ** 0.7]))

        self.assertAlmostEqual(fit.exponent, 0.7)
        self.assertEqual(len(fit.points), 6)

    def test_no_signal(self):
        with self.assertRaises(PopulationError):
            experiments.fit_holder(self.gaps, np.full(6, 0.01), noise_floor=0.02)

    def test_few_points_warn(self):
        with self.assertLogs("tangentcones.experiments", level="WARNING"):
            experiments.fit_holder(self.gaps[:3], self.gaps[:3] ** 0.5)

    def test_bootstrap_seeded(self):
        rng = np.random.default_rng(0)
        values = self.gaps ** 0.5 * np.exp(0.1 * rng.standard_normal(6))
        first = experiments.fit_holder(self.gaps, values, seed=4)
        second = experiments.fit_holder(self.gaps, values, seed=4)

        self.assertEqual(first.interval, second.interval)
        self.assertLessEqual(first.interval[0], first.interval[1])

    def test_theorem_exponent(self):
        self.assertAlmostEqual(experiments.theorem_exponent(5), 1.0 / 22.0)
        self.assertAlmostEqual(experiments.theorem_exponent(2), 0.1)


class TestSweepConfig(unittest.TestCase):

    def test_pairs(self):
        config = experiments.SweepConfig(centre=0.5, gaps=(0.2, 0.1))
        pairs = config.pairs()

        self.assertEqual(pairs[0], (0.0, 0.5, 0.5))
        self.assertEqual([gap for gap, _, _ in pairs], [0.0, 0.1, 0.2])
        for gap, s, t in pairs:
            self.assertAlmostEqual(t - s, gap)

    def test_margin(self):
        for centre, gaps in ((0.15, (0.2,)), (0.85, (0.2,)), (0.5, (0.9,))):
            with self.subTest(centre=centre, gaps=gaps):
                with self.assertRaises(ValueError):
                    experiments.SweepConfig(centre=centre, gaps=gaps).validate()

    def test_radii(self):
        with self.assertRaises(ValueError):
            experiments.SweepConfig(radii=(0.0,)).validate()


class TestBallSweep(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        config = experiments.SweepConfig(
            metric="flat", centre=1.0, gaps=(0.1, 0.2), radii=(0.1,), length=2.0, delta=0.1,
            n=600, k=15, restarts=1, iters=50, net_size=16, seed=3,
        )
        cls.result = experiments.holder_ball_sweep(config)

    def test_table(self):
        table = self.result.table

        self.assertEqual(list(table.columns), experiments.BALL_COLUMNS)
        self.assertEqual(len(table), 3)
        self.assertTrue(np.all(table["lower"] <= table["upper"]))
        self.assertTrue(np.all(table["points_s"] >= 1))

    def test_identity_row(self):
        row = self.result.table.iloc[0]

        self.assertEqual(row["gap"], 0.0)
        self.assertEqual(row["upper"], 0.0)

    def test_summary(self):
        summary = self.result.summary

        self.assertAlmostEqual(summary["theorem_exponent"], 1.0 / 22.0)
        self.assertGreaterEqual(summary["noise_floor"], 0.0)

    def test_example_a(self):
        config = experiments.SweepConfig(
            metric="A-limit", centre=0.75, gaps=(0.1, 0.2), radii=(0.05,), length=1.0, delta=0.1,
            n=400, k=12, restarts=1, iters=30, net_size=12, seed=2,
        )
        result = experiments.holder_ball_sweep(config)
        table = result.table

        self.assertEqual(len(table), 3)
        self.assertEqual(table["upper"].iloc[0], 0.0)
        self.assertTrue(np.all(np.isfinite(table["upper"])))
        self.assertTrue(np.all(table["lower"] <= table["upper"]))
        self.assertGreaterEqual(result.summary["noise_floor"], 0.0)

    def test_ray_ball(self):
        ball = experiments.ray_ball(build_named_metric("flat"), 1.0, 0.1, n=400, k=15, seed=1)

        self.assertEqual(ball.labels[0], 0)
        self.assertLessEqual(ball.distances[0].max(), 1.0 + 1e-12)
        self.assertEqual(ball.provenance["radius"], 0.1)


class TestConeSweep(unittest.TestCase):

    budget = dict(fiber_n=150, n=60, k=10, restarts=1, iters=30, net_size=12)

    def test_constant_fiber(self):
        W = build_named_metric("round")
        with self.assertLogs("tangentcones.experiments", level="WARNING"):
            result = experiments.holder_cone_sweep(W, 1.0, [0.1, 0.05], **self.budget)

        self.assertTrue(np.all(result.table["identity"] == 0.0))
        self.assertTrue(np.all(result.table["upper"] == 0.0))
        self.assertEqual(result.summary["noise_floor"], 0.0)
        self.assertLessEqual(result.table["upper"].max(), result.summary["noise_floor"])
        self.assertIsNone(result.fit)
        self.assertIsNone(result.summary["target"])

    def test_example_b(self):
        W = build_named_metric("B")
        result = experiments.holder_cone_sweep(W, 1.0, [0.1, 0.05], **self.budget)
        table = result.table

        self.assertEqual(list(table.columns), experiments.CONE_COLUMNS)
        self.assertEqual(table["upper"].iloc[0], 0.0)
        self.assertTrue(np.all(table["upper"] <= table["identity"] + 1e-12))
        self.assertTrue(np.all(table["lower"] <= table["upper"]))
        self.assertTrue(np.all(table["fiber_lower"] >= 0.0))
        self.assertAlmostEqual(result.summary["target"], 0.6)
        self.assertAlmostEqual(result.summary["forbidden"], 0.7)

    def test_noise_floor_below_signal(self):
        result = experiments.holder_cone_sweep(build_named_metric("B"), 1.0, [0.1, 0.05], **self.budget)
        largest = result.table.set_index("scale").loc[0.1, "identity"]

        self.assertGreaterEqual(result.summary["noise_floor"], 0.0)
        self.assertLess(result.summary["noise_floor"], largest)

    def test_example_b_exponent(self):
        result = experiments.holder_cone_sweep(
            build_named_metric("B"), 1.0, fiber_n=600, n=200, k=12, restarts=1, iters=30, net_size=12,
        )

        self.assertIsNotNone(result.fit)
        self.assertGreaterEqual(result.fit.exponent, 0.5)
        self.assertLessEqual(result.fit.exponent, 0.7)

    def test_invalid_scales(self):
        with self.assertRaises(ValueError):
            experiments.holder_cone_sweep(build_named_metric("B"), 1.0, [0.1, -0.1], **self.budget)


class TestReifenberg(unittest.TestCase):

    budget = dict(n=60, fiber_n=60, k=10, restarts=1, iters=30, net_size=12)

    def test_flat_smooth_anchor(self):
        table = experiments.reifenberg_check(build_named_metric("flat"), (1.0, np.pi / 2), [0.05, 0.1], **self.budget)

        self.assertEqual(list(table.columns), experiments.REIFENBERG_COLUMNS)
        self.assertTrue(np.all(table["anchor"] == "smooth"))
        self.assertTrue(np.all(table["identity"] < 0.1))
        self.assertTrue(np.all(table["upper"] <= 0.1))

    def test_flat_ray_anchor(self):
        table = experiments.reifenberg_check(build_named_metric("flat"), (1.0, 0.0), [0.05, 0.1], **self.budget)

        self.assertTrue(np.all(table["anchor"] == "ray"))
        self.assertTrue(np.all(table["identity"] == 0.0))

    def test_singular_ray_anchor(self):
        table = experiments.reifenberg_check(build_named_metric("B"), (1.1, 0.0), [0.05, 0.1], **self.budget)

        self.assertTrue(np.all(table["identity"] > 0.0))
        self.assertEqual(table["upper"].iloc[0], table["upper"].iloc[1])


class TestRunConfig(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write(self, text, name="run.cfg"):
        path = os.path.join(self.tmp.name, name)
        with open(path, "w") as f:
            f.write(text)
        return path

    def test_empty(self):
        text = "[run]\nseed = 3\n"
        out_dir = os.path.join(self.tmp.name, "out")
        manifest = experiments.run_config(self.write(text), out_dir=out_dir)

        self.assertEqual(os.listdir(out_dir), ["manifest.json"])
        self.assertEqual(manifest["seed"], 3)
        self.assertEqual(manifest["experiments"], {})
        self.assertEqual(manifest["config_sha256"], hashlib.sha256(text.encode()).hexdigest())
        with open(os.path.join(out_dir, "manifest.json")) as f:
            self.assertEqual(json.load(f)["config"], "run.cfg")

    def test_seed_override(self):
        manifest = experiments.run_config(self.write("[run]\nseed = 3\n"), self.tmp.name, seed=9)

        self.assertEqual(manifest["seed"], 9)

    def test_rerun_identical(self):
        path = self.write("[experiment.ricci]\nkind = curvature\nmetric = flat\ngrid = 5\n")
        contents = []
        for label in ("first", "second"):
            out_dir = os.path.join(self.tmp.name, label)
            manifest = experiments.run_config(path, out_dir=out_dir)
            with open(os.path.join(out_dir, "ricci.csv"), "rb") as f:
                contents.append(f.read())

        self.assertEqual(contents[0], contents[1])
        self.assertEqual(manifest["experiments"]["ricci"]["outputs"], ["ricci.csv"])

    def test_metric_file(self):
        metric_path = os.path.join(self.tmp.name, "a.cfg")
        write_metric_config(metric_path, "A")
        path = self.write(f"[experiment.ricci]\nkind = curvature\nmetric_file = {metric_path}\ngrid = 4\n")
        manifest = experiments.run_config(path, out_dir=self.tmp.name)

        self.assertEqual(manifest["experiments"]["ricci"]["summary"]["points"], 16)
        self.assertTrue(os.path.exists(os.path.join(self.tmp.name, "ricci.csv")))

    def test_dispatch(self):
        runner = Mock(return_value=(["x.csv"], {"slope": 1.0}))
        params = experiment_params("heat")
        with patch.dict(experiments.RUNNERS, {"heat": runner}):
            entry = experiments.run_experiment(ExperimentSpec("diffusion", "heat", params), self.tmp.name, 5, 2)

        runner.assert_called_once_with("diffusion", params, self.tmp.name, 5, 2)
        self.assertEqual(entry["outputs"], ["x.csv"])
        self.assertEqual(entry["kind"], "heat")

    def test_versions(self):
        self.assertEqual(
            sorted(experiments.versions()),
            ["joblib", "matplotlib", "numpy", "pandas", "python", "scikit-learn", "scipy"],
        )


if __name__ == '__main__':
    unittest.main()
