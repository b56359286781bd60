import os
import hashlib
import tempfile
import unittest

from tangentcones import config
from tangentcones.errors import ConfigError
from tangentcones.example_spaces import EXAMPLE_A_CONSTANTS, EXAMPLE_B_CONSTANTS


class ConfigTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write(self, text, name="test.cfg"):
        path = os.path.join(self.tmp.name, name)
        with open(path, "w") as f:
            f.write(text)
        return path


class TestMetricConfig(ConfigTestCase):

    def test_overrides(self):
        spec = config.load_metric_config(self.write("[metric]\nname = B\ndelta = 0.3\nN = 4\n"))

        self.assertEqual(spec.name, "B")
        self.assertEqual(spec.constants, {"delta": 0.3, "N": 4})
        self.assertIsInstance(spec.constants["N"], int)

    def test_round_trip(self):
        for name, constants in (("A", EXAMPLE_A_CONSTANTS), ("B", EXAMPLE_B_CONSTANTS), ("flat", {})):
            with self.subTest(name=name):
                path = os.path.join(self.tmp.name, f"{name}.cfg")
                config.write_metric_config(path, name)
                spec = config.load_metric_config(path)

                self.assertEqual(spec.name, name)
                self.assertEqual(spec.constants, constants)

    def test_unknown_constant(self):
        path = self.write("[metric]\nname = A\ndelta = 0.2\n")
        with self.assertRaises(ConfigError) as context:
            config.load_metric_config(path)

        self.assertEqual(context.exception.line, 3)
        self.assertIn(f"{path}:3", str(context.exception))

    def test_constants_of_flat(self):
        with self.assertRaises(ConfigError):
            config.load_metric_config(self.write("[metric]\nname = flat\na0 = 1.0\n"))

    def test_bad_name(self):
        for text in ("[metric]\na0 = 1.0\n", "[metric]\nname = C\n"):
            with self.subTest(text=text):
                with self.assertRaises(ConfigError):
                    config.load_metric_config(self.write(text))

    def test_extra_section(self):
        with self.assertRaises(ConfigError) as context:
            config.load_metric_config(self.write("[metric]\nname = A\n\n[other]\nx = 1\n"))

        self.assertEqual(context.exception.line, 4)

    def test_bad_value(self):
        with self.assertRaises(ConfigError) as context:
            config.load_metric_config(self.write("[metric]\nname = A\n\na0 = half\n"))

        self.assertEqual(context.exception.line, 4)

    def test_write_invalid_name(self):
        with self.assertRaises(ValueError):
            config.write_metric_config(os.path.join(self.tmp.name, "x.cfg"), "C")


class TestRunConfig(ConfigTestCase):

    def test_defaults(self):
        text = "[experiment.sharpness]\nkind = holder-cones\n"
        run = config.load_run_config(self.write(text))

        self.assertEqual((run.seed, run.jobs, run.out_dir), (0, 1, "out"))
        self.assertEqual(run.digest, hashlib.sha256(text.encode()).hexdigest())
        self.assertEqual(len(run.experiments), 1)
        experiment = run.experiments[0]
        self.assertEqual((experiment.name, experiment.kind), ("sharpness", "holder-cones"))
        self.assertEqual(experiment.params, config.EXPERIMENT_SCHEMAS["holder-cones"])

    def test_parsed_values(self):
        text = (
            "[run]\nseed = 7\njobs = 2\nout_dir = results\n\n"
            "[experiment.balls]\nkind = holder-balls\ngaps = 0.1, 0.2\nn = 500\ncentre = 0.4\n"
        )
        run = config.load_run_config(self.write(text))
        params = run.experiments[0].params

        self.assertEqual((run.seed, run.jobs, run.out_dir), (7, 2, "results"))
        self.assertEqual(params["gaps"], (0.1, 0.2))
        self.assertEqual(params["n"], 500)
        self.assertEqual(params["centre"], 0.4)
        self.assertEqual(params["metric"], "A-limit")

    def test_order_kept(self):
        text = "[experiment.b]\nkind = heat\n\n[experiment.a]\nkind = cutlocus\n"
        run = config.load_run_config(self.write(text))

        self.assertEqual([experiment.name for experiment in run.experiments], ["b", "a"])

    def test_empty(self):
        run = config.load_run_config(self.write(""))

        self.assertEqual(run.experiments, [])

    def test_schema_violations(self):
        cases = {
            "[run]\nseed = 1\n\n[experiment.x]\nkind = magic\n": 5,
            "[experiment.x]\nkind = heat\nwarp = 2\n": 3,
            "[experiment.x]\nkind = heat\n\n\neps = fast\n": 5,
            "[experiment.x]\nkind = heat\nmetric = C\n": 3,
            "[experiment.x]\nmetric = flat\n": 1,
            "[run]\nseed = 0\n[results]\nx = 1\n": 3,
            "[run]\njobs = 0\n": 2,
            "[run]\nseed = 1\nthis line has no delimiter\n": 3,
            "[run]\nseed = 1\nseed = 2\n": 3,
        }
        for text, line in cases.items():
            with self.subTest(text=text):
                with self.assertRaises(ConfigError) as context:
                    config.load_run_config(self.write(text))
                self.assertEqual(context.exception.line, line)

    def test_shipped_run_file(self):
        filepath = os.path.join(os.path.dirname(__file__), "..", "configs", "paper.ini")
        run = config.load_run_config(filepath)
        kinds = {experiment.kind for experiment in run.experiments}

        self.assertEqual(kinds, set(config.EXPERIMENT_SCHEMAS))
        self.assertEqual(run.seed, 0)
        cones = next(e for e in run.experiments if e.kind == "holder-cones")
        self.assertEqual(cones.params["metric"], "B")
        self.assertEqual(cones.params["fiber_n"], 2000)
        balls = next(e for e in run.experiments if e.kind == "holder-balls")
        self.assertEqual(balls.params["radii"], (0.05,))
        self.assertEqual(balls.params["metric"], "A-limit")

    def test_default_section_rejected(self):
        with self.assertRaises(ConfigError):
            config.load_run_config(self.write("[DEFAULT]\nseed = 1\n"))


class TestExperimentParams(unittest.TestCase):

    def test_typed_values(self):
        params = config.experiment_params("reifenberg", {"radii": [0.1, 0.2], "n": 50})

        self.assertEqual(params["radii"], (0.1, 0.2))
        self.assertEqual(params["n"], 50)

    def test_string_values(self):
        params = config.experiment_params("cutlocus", {"radii": "0.1 0.2 0.4", "eps": "0.02"})

        self.assertEqual(params["radii"], (0.1, 0.2, 0.4))
        self.assertEqual(params["eps"], 0.02)

    def test_unknown(self):
        for kind, values in (("magic", {}), ("heat", {"warp": 1}), ("heat", {"warp": "1"})):
            with self.subTest(kind=kind, values=values):
                with self.assertRaises(ConfigError):
                    config.experiment_params(kind, values)

    def test_parse_value(self):
        cases = [
            (1.0, "2.5", 2.5),
            (1, "3", 3),
            ("A", " B ", "B"),
            ((0.1,), "0.1,0.2 , 0.3", (0.1, 0.2, 0.3)),
            (False, "yes", True),
        ]
        for default, value, expected in cases:
            with self.subTest(value=value):
                self.assertEqual(config.parse_value(default, value), expected)


if __name__ == '__main__':
    unittest.main()
