import unittest
from numpy.testing import assert_allclose, assert_array_equal

from tangentcones import example_spaces, profiles
from tangentcones.errors import DomainError, InfeasibleCutoffError

import numpy as np


class TestBounds(unittest.TestCase):

    def test_log_log_bound_derivatives(self):
        bound = example_spaces.LogLogBound(10.0, 0.05)
        s = np.linspace(0.1, 1.5, 15)
        h = 1e-5
        values = bound.antiderivative(s)
        plus = bound.antiderivative(s + h)
        minus = bound.antiderivative(s - h)

        assert_allclose(values.d1, (plus.value - minus.value) / (2 * h), rtol=1e-6)
        assert_allclose(values.d2, (plus.d1 - minus.d1) / (2 * h), rtol=1e-5, atol=1e-6)

    def test_constant_bound(self):
        bound = example_spaces.ConstantBound(3.0)

        assert_array_equal(bound.antiderivative(np.array([0.0, 2.0])).value, [0.0, 6.0])


class TestCutoff(unittest.TestCase):

    def test_constant_bound_cutoff(self):
        cutoff = example_spaces.build_cutoff(example_spaces.ConstantBound(10.0), (0.0, 2.0), (1.0, 2.0))
        s = np.linspace(-0.5, 2.5, 301)
        psi = cutoff.evaluate(s)

        self.assertLessEqual(np.max(np.abs(psi.d1)), 10.0)
        assert_array_equal(psi.value[s <= 0], 0.0)
        assert_array_equal(psi.value[(s >= 1) & (s <= 2)], 1.0)
        self.assertTrue(np.all(np.diff(psi.value[(s > 0) & (s < 1)]) >= 0))

    def test_continuity_at_plateau(self):
        cutoff = example_spaces.build_cutoff(example_spaces.ConstantBound(10.0), (0.0, 2.0), (1.0, 2.0))
        psi = cutoff.evaluate(np.array([1.0 - 1e-7, 1.0]))

        assert_allclose(psi.value[0], psi.value[1], atol=1e-6)
        assert_allclose(psi.d1[0], 0.0, atol=1e-6)

    def test_too_short(self):
        with self.assertRaises(InfeasibleCutoffError):
            example_spaces.build_cutoff(example_spaces.ConstantBound(1.0), (0.0, 1.0), (0.5, 1.0))

    def test_plateau_outside_support(self):
        with self.assertRaises(ValueError):
            example_spaces.build_cutoff(example_spaces.ConstantBound(10.0), (0.0, 1.0), (0.5, 1.5))

    def test_example_a_slope_bound(self):
        bound = example_spaces.LogLogBound(10.0, 0.05)
        cutoff = example_spaces.build_cutoff(bound, (0.1, np.pi - 0.1), (0.4, np.pi - 0.4))
        s = np.linspace(0.11, np.pi - 0.11, 500)

        self.assertTrue(np.all(np.abs(cutoff.evaluate(s).d1) <= np.abs(bound.antiderivative(s).d1) + 1e-12))

    def test_example_a_transition_scales(self):
        example_spaces.build_example_A(t0=0.1)

        with self.assertRaises(InfeasibleCutoffError):
            example_spaces.build_example_A(t0=0.3)


class TestExampleA(unittest.TestCase):

    def test_constant_angle_gives_constant_cones(self):
        W = example_spaces.build_example_A(theta=profiles.ConstantAngle(0.4))
        fiber = example_spaces.tangent_cone_fiber(W, np.linspace(0.05, 1.5, 20))

        assert_allclose(fiber, fiber[:, :1] * np.ones((1, 20)))

    def test_cones_vary_along_ray(self):
        W = example_spaces.build_example_A()
        fiber = example_spaces.tangent_cone_fiber(W, np.array([0.3, 0.75]))

        self.assertGreater(np.max(np.abs(fiber[:, 0] - fiber[:, 1])), 1e-3)

    def test_fiber_independent_of_transition_scale_on_plateau(self):
        r, s = np.meshgrid(np.linspace(0.1, 1.5, 12), np.linspace(0.4, np.pi - 0.4, 12))
        first = example_spaces.build_example_A(t0=0.05).fiber.evaluate(r, s)
        second = example_spaces.build_example_A(t0=0.1).fiber.evaluate(r, s)

        assert_allclose(first.m, second.m)

    def test_limit_space(self):
        W = example_spaces.build_example_A(t0=0.0)
        fiber = W.fiber.evaluate(np.array([0.75]), np.array([0.01]))

        assert_allclose(fiber.m[:, 0], W.fiber.ray_values(np.array([0.75]))[:, 0])
        self.assertEqual(W.constants["t0"], 0.0)

    def test_constraints_exact(self):
        W = example_spaces.build_example_A()
        r, s = np.meshgrid(np.linspace(0.1, 1.5, 30), np.linspace(0.02, np.pi - 0.02, 30))
        volume, cross = W.fiber.constraint_residuals(r, s)

        self.assertLessEqual(volume, 1e-12)
        self.assertLessEqual(cross, 1e-12)

    def test_negative_scale(self):
        with self.assertRaises(DomainError):
            example_spaces.build_example_A(t0=-0.1)


class TestExampleB(unittest.TestCase):

    def test_bands(self):
        bands = example_spaces.example_b_bands(1.0, 3)

        self.assertEqual(len(bands), 3)
        for band in bands:
            with self.subTest(band=band):
                self.assertLess(band.support[0], band.plateau[0])
                self.assertLess(band.plateau[1], band.support[1])
        for upper, lower in zip(bands, bands[1:]):
            self.assertAlmostEqual(upper.support[0], lower.support[1])

    def test_transition_scale(self):
        W = example_spaces.build_example_B()

        assert_allclose(W.constants["t0"], np.exp(-12.0))

    def test_no_bands(self):
        W = example_spaces.build_example_B(N=0)
        fiber = W.fiber.evaluate(np.array([0.9, 1.0, 1.1]), np.array([0.01, 0.5, 2.0]))

        self.assertEqual(W.fiber.terms, ())
        assert_allclose(fiber.m, -2.0)

    def test_no_bands_constant_cone_fiber(self):
        W = example_spaces.build_example_B(N=0)
        cones = example_spaces.tangent_cone_fiber(W, [0.9, 1.0, 1.1])

        assert_allclose(cones, cones[:, :1] * np.ones_like(cones), atol=1e-15)

    def test_parameter_ranges(self):
        for kwargs in ({"delta": 0.0}, {"delta": 0.5}, {"N": -1}):
            with self.subTest(**kwargs):
                with self.assertRaises(DomainError):
                    example_spaces.build_example_B(**kwargs)

    def test_limit_curve_exponent(self):
        curve = example_spaces.limit_fiber_curve(example_spaces.build_example_B(delta=0.2))
        fit = example_spaces.holder_exponent(curve)

        self.assertGreaterEqual(fit.exponent, 0.55)
        self.assertLessEqual(fit.exponent, 0.65)

    def test_holder_quotient(self):
        curve = example_spaces.limit_fiber_curve(example_spaces.build_example_B(delta=0.2))
        sharp = example_spaces.holder_quotient(curve, 0.6)
        steep = example_spaces.holder_quotient(curve, 0.7)

        self.assertLess(np.max(sharp) / np.min(sharp), 1.5)
        self.assertGreater(steep[-1], 1.5 * steep[0])


class TestNamedMetrics(unittest.TestCase):

    def test_names(self):
        for name, expected in (("A", "A"), ("A-limit", "A"), ("B", "B"), ("flat", "flat"), ("round", "round")):
            with self.subTest(name=name):
                self.assertEqual(example_spaces.build_named_metric(name).name, expected)

    def test_invalid_name(self):
        with self.assertRaises(ValueError):
            example_spaces.build_named_metric("C")

    def test_constants_forwarded(self):
        W = example_spaces.build_named_metric("A", {"c": 0.02})

        self.assertEqual(W.constants["c"], 0.02)


if __name__ == '__main__':
    unittest.main()
