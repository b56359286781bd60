import unittest
from numpy.testing import assert_allclose, assert_array_equal

from tangentcones import profiles
from tangentcones.errors import DomainError

import numpy as np


class SineCutoff:
    """Smooth test cutoff psi(s) = 0.5 + 0.4 sin s."""

    def evaluate(self, s):
        s = np.asarray(s, dtype=float)
        return profiles.Derivatives(0.5 + 0.4 * np.sin(s), 0.4 * np.cos(s), -0.4 * np.sin(s))


def central_differences(function, x, h):
    first = (function(x + h) - function(x - h)) / (2 * h)
    second = (function(x + h) - 2 * function(x) + function(x - h)) / h ** 2
    return first, second


class TestSmoothMin(unittest.TestCase):

    def setUp(self):
        self.x = np.array([0.3, 0.5, 0.9])

    def pieces(self, x):
        return (
            np.stack([1 + x, 2 - x ** 2]),
            np.stack([np.ones_like(x), -2 * x]),
            np.stack([np.zeros_like(x), -2 * np.ones_like(x)]),
        )

    def test_single_piece(self):
        value, d1, d2 = profiles.smooth_min(
            np.array([[2.0, 3.0]]), np.array([[1.0, 1.0]]), np.array([[0.5, 0.5]])
        )

        assert_allclose(value, [2.0, 3.0])
        assert_allclose(d1, [1.0, 1.0])
        assert_allclose(d2, [0.5, 0.5])

    def test_equal_pieces(self):
        values = np.array([[1.5], [1.5]])
        value, _, _ = profiles.smooth_min(values, np.zeros_like(values), np.zeros_like(values), 10.0)

        assert_allclose(value, 1.5 * 2 ** (-1 / 10))

    def test_infinite_piece_inactive(self):
        value, d1, d2 = profiles.smooth_min(
            np.array([[2.0], [np.inf]]), np.array([[1.0], [0.0]]), np.array([[0.0], [0.0]])
        )

        assert_allclose(value, [2.0])
        assert_allclose(d1, [1.0])
        assert_allclose(d2, [0.0])

    def test_below_minimum(self):
        value, _, _ = profiles.smooth_min(*self.pieces(self.x), 50.0)

        self.assertTrue(np.all(value <= np.minimum(1 + self.x, 2 - self.x ** 2)))

    def test_derivatives(self):
        def value(x):
            return profiles.smooth_min(*self.pieces(x), 20.0).value

        _, d1, d2 = profiles.smooth_min(*self.pieces(self.x), 20.0)
        numeric_d1, _ = central_differences(value, self.x, 1e-6)
        _, numeric_d2 = central_differences(value, self.x, 1e-4)

        assert_allclose(d1, numeric_d1, rtol=1e-6, atol=1e-9)
        assert_allclose(d2, numeric_d2, rtol=1e-4, atol=1e-6)

    def test_nonpositive_piece(self):
        with self.assertRaises(DomainError):
            profiles.smooth_min(np.array([[1.0], [-1.0]]), np.zeros((2, 1)), np.zeros((2, 1)))


class TestRadialProfile(unittest.TestCase):

    def setUp(self):
        self.profile = profiles.RadialProfile("exampleA", a0=0.5, a1=0.1, r0=0.05, t0=0.05)

    def test_linear_near_tip(self):
        r = np.linspace(0.001, 0.05 / 4, 20)

        assert_allclose(self.profile.value(r), 0.5 * r, rtol=1e-4)

    def test_log_piece(self):
        r = np.linspace(0.1, 1.0, 20)
        ell = -np.log(0.05 * r)
        expected = 0.5 * r * (1 - 0.1 / np.log(ell)) + self.profile.kappa

        assert_allclose(self.profile.value(r), expected, rtol=1e-6)

    def test_linear_tail(self):
        r = np.linspace(2.0, 5.0, 20)

        assert_allclose(self.profile.value(r), 0.25 * r + self.profile.tail_offset, rtol=1e-8)

    def test_concave_and_positive(self):
        r = np.linspace(0.025, 2.0, 400)
        value, d1, d2 = self.profile.evaluate(r)

        self.assertTrue(np.all(value > 0))
        self.assertTrue(np.all(d2 <= 1e-12))
        self.assertTrue(np.all(np.abs(d1) <= 2 * 0.5))

    def test_derivatives(self):
        r = np.array([0.3, 0.75, 2.5])
        _, d1, d2 = self.profile.evaluate(r)
        numeric_d1, _ = central_differences(self.profile.value, r, 1e-6)
        _, numeric_d2 = central_differences(self.profile.value, r, 1e-4)

        assert_allclose(d1, numeric_d1, rtol=1e-5, atol=1e-8)
        assert_allclose(d2, numeric_d2, rtol=1e-4, atol=1e-6)

    def test_limit_profile(self):
        limit = profiles.RadialProfile("exampleA", a0=0.5, a1=0.1, r0=0.05, t0=0.0)
        r = np.array([0.001, 0.01, 0.5])
        ell = -np.log(0.05 * r)

        self.assertEqual(limit.kappa, 0.0)
        assert_allclose(limit.value(r), 0.5 * r * (1 - 0.1 / np.log(ell)), rtol=1e-6)

    def test_example_b(self):
        profile = profiles.RadialProfile("exampleB", delta=0.2, width=1e-3)
        x = np.concatenate([-np.geomspace(0.2, 0.002, 30), np.geomspace(0.002, 0.2, 30)])
        value, d1, d2 = profile.evaluate(1.0 + x)

        with self.subTest(check="peak"):
            assert_allclose(profile.value(np.array([1.0])), [2.0])
        with self.subTest(check="slope"):
            self.assertTrue(np.all(np.abs(d1) / value <= np.abs(x) ** 0.2))
        with self.subTest(check="concavity"):
            self.assertTrue(np.all(d2 / value < -0.2 * 1.2 / (2 * np.abs(x) ** 0.8)))
        with self.subTest(check="symmetry"):
            assert_allclose(value, value[::-1])

    def test_cone_and_constant(self):
        r = np.array([0.5, 2.0])

        assert_array_equal(profiles.RadialProfile("cone", a0=1.0).value(r), r)
        assert_array_equal(profiles.RadialProfile("constant", a0=1.0).d1(r), [0.0, 0.0])

    def test_custom(self):
        profile = profiles.RadialProfile(
            "custom", function=lambda r: (r ** 2, 2 * r, 2 * np.ones_like(r))
        )

        assert_array_equal(profile.d2(np.array([3.0])), [2.0])

    def test_invalid_mode(self):
        with self.assertRaises(ValueError):
            profiles.RadialProfile("exampleC")

    def test_nonpositive_radius(self):
        for r in (0.0, -1.0):
            with self.subTest(r=r):
                with self.assertRaises(DomainError):
                    self.profile.evaluate(np.array([r]))


class TestAngularProfile(unittest.TestCase):

    def setUp(self):
        self.profile = profiles.AngularProfile("exampleA", b1=0.05, s0=0.05, t0=0.05)

    def test_sine_near_rays(self):
        s = np.linspace(0.001, 0.05 / 8, 10)

        assert_allclose(self.profile.value(s), np.sin(s), rtol=1e-6)
        assert_allclose(self.profile.value(np.pi - s), np.sin(s), rtol=1e-6)

    def test_lifted_piece(self):
        s = np.linspace(0.2, np.pi - 0.2, 30)
        ell = -np.log(0.05 * np.sin(s))
        expected = np.sin(s) * (1 - 0.05 / np.log(ell)) + self.profile.b0

        assert_allclose(self.profile.value(s), expected, rtol=1e-6)

    def test_offset(self):
        x = 0.05 / 3
        ell = -np.log(0.05 * np.sin(x))

        assert_allclose(self.profile.b0, np.sin(x) * 0.05 / np.log(ell))

    def test_transition_bounds(self):
        s = np.linspace(0.05 / 4, np.pi - 0.05 / 4, 500)
        value, d1, d2 = self.profile.evaluate(s)

        self.assertTrue(np.all(value > 0))
        self.assertTrue(np.all(np.abs(d1) <= 2))
        self.assertTrue(np.all(d2 <= -value / 2))

    def test_derivatives(self):
        s = np.array([0.3, 1.2, 2.9])
        _, d1, d2 = self.profile.evaluate(s)
        numeric_d1, _ = central_differences(self.profile.value, s, 1e-6)
        _, numeric_d2 = central_differences(self.profile.value, s, 1e-4)

        assert_allclose(d1, numeric_d1, rtol=1e-5, atol=1e-8)
        assert_allclose(d2, numeric_d2, rtol=1e-4, atol=1e-6)

    def test_singular_angles(self):
        for s in (0.0, np.pi, 4.0):
            with self.subTest(s=s):
                with self.assertRaises(DomainError):
                    self.profile.evaluate(np.array([s]))


class TestAngles(unittest.TestCase):

    def test_bump_vanishes_outside(self):
        bump = profiles.BumpAngle(0.3, 0.5, 1.0)
        value, d1, d2 = bump.evaluate(np.array([0.2, 0.5, 1.0, 1.5]))

        assert_array_equal(value, np.zeros(4))
        assert_array_equal(d1, np.zeros(4))
        assert_array_equal(d2, np.zeros(4))

    def test_bump_peak(self):
        bump = profiles.BumpAngle(0.3, 0.5, 1.0, offset=0.1)

        assert_allclose(bump.evaluate(np.array([0.75])).value, [0.4])

    def test_bump_derivatives(self):
        bump = profiles.BumpAngle(0.3, 0.5, 1.0)
        r = np.array([0.6, 0.75, 0.9])
        _, d1, d2 = bump.evaluate(r)
        numeric_d1, _ = central_differences(lambda x: bump.evaluate(x).value, r, 1e-6)
        _, numeric_d2 = central_differences(lambda x: bump.evaluate(x).value, r, 1e-4)

        assert_allclose(d1, numeric_d1, rtol=1e-5, atol=1e-8)
        assert_allclose(d2, numeric_d2, rtol=1e-4, atol=1e-5)

    def test_holder_unsmoothed(self):
        angle = profiles.HolderAngle(3.0, 0.6, 1.0, 0.0)
        x = np.array([-0.01, 0.04])

        assert_allclose(angle.evaluate(1.0 + x).value, 3.0 * np.sign(x) * np.abs(x) ** 0.6)

    def test_holder_crossing(self):
        angle = profiles.HolderAngle(3.0, 0.6, 1.0, 0.0)
        with np.errstate(all="raise"):
            value, d1, d2 = angle.evaluate(np.array([0.99, 1.0, 1.01]))

        assert_array_equal(value[1], 0.0)
        self.assertEqual(d1[1], np.inf)
        self.assertEqual(d2[1], 0.0)

    def test_holder_smoothed_derivatives(self):
        angle = profiles.HolderAngle(3.0, 0.6, 1.0, 0.05)
        r = np.array([0.9, 0.99, 1.0, 1.03])
        _, d1, d2 = angle.evaluate(r)
        numeric_d1, _ = central_differences(lambda x: angle.evaluate(x).value, r, 1e-6)
        _, numeric_d2 = central_differences(lambda x: angle.evaluate(x).value, r, 1e-4)

        assert_allclose(d1, numeric_d1, rtol=1e-5, atol=1e-8)
        assert_allclose(d2, numeric_d2, rtol=1e-4, atol=1e-4)


class TestCircleCurve(unittest.TestCase):

    def setUp(self):
        self.curve = profiles.CircleCurve(0.01, profiles.BumpAngle(0.3, 0.5, 1.0))
        self.r = np.linspace(0.3, 1.2, 200)

    def test_identities(self):
        value, _, _ = self.curve.evaluate(self.r)

        assert_allclose(value.sum(axis=0), 0.0, atol=1e-12)
        assert_allclose((value ** 2).sum(axis=0), 0.01, atol=1e-12)

    def test_slope_bound(self):
        _, d1, _ = self.curve.evaluate(self.r)
        slope = self.curve.theta.evaluate(self.r).d1

        self.assertTrue(np.all(np.abs(d1) <= self.curve.radius * np.abs(slope) + 1e-15))

    def test_constant_angle(self):
        curve = profiles.CircleCurve(0.01, profiles.ConstantAngle(0.2))
        value, d1, d2 = curve.evaluate(self.r)

        assert_allclose(value, value[:, :1] * np.ones_like(value))
        assert_array_equal(d1, np.zeros_like(d1))
        assert_array_equal(d2, np.zeros_like(d2))


    def test_holder_curve_crossing(self):
        curve = profiles.CircleCurve(0.01, profiles.HolderAngle(3.0, 0.6, 1.0, 0.0))
        with np.errstate(all="raise"):
            value, d1, d2 = curve.evaluate(np.array([0.99, 1.0, 1.01]))

        self.assertTrue(np.all(np.isfinite(value)))
        self.assertFalse(np.any(np.isnan(d1)))
        self.assertFalse(np.any(np.isnan(d2)))
        self.assertEqual(d1[0, 1], 0.0)


class TestMetricFunctions(unittest.TestCase):

    def setUp(self):
        curve = profiles.CircleCurve(0.05, profiles.BumpAngle(0.5, 0.5, 1.5))
        self.functions = profiles.MetricFunctions(((SineCutoff(), curve),), offset=0.3)
        r, s = np.meshgrid(np.linspace(0.4, 1.6, 10), np.linspace(0.2, 2.9, 10))
        self.r, self.s = r.ravel(), s.ravel()

    def test_constraints(self):
        volume, cross = self.functions.constraint_residuals(self.r, self.s)

        self.assertLessEqual(volume, 1e-10)
        self.assertLessEqual(cross, 1e-10)

    def test_offset(self):
        fiber = self.functions.evaluate(self.r, self.s)

        assert_allclose(fiber.m.sum(axis=0), -0.9, atol=1e-12)

    def test_mixed_derivative(self):
        fiber = self.functions.evaluate(np.array([0.8]), np.array([1.0]))
        plus = self.functions.evaluate(np.array([0.8]), np.array([1.0 + 1e-5])).m_r
        minus = self.functions.evaluate(np.array([0.8]), np.array([1.0 - 1e-5])).m_r

        assert_allclose(fiber.m_rs, (plus - minus) / 2e-5, rtol=1e-6, atol=1e-9)

    def test_ray_values(self):
        r = np.array([0.75])
        expected = self.functions.terms[0][1].evaluate(r).value - 0.3

        assert_allclose(self.functions.ray_values(r), expected)

    def test_empty(self):
        fiber = profiles.MetricFunctions().evaluate(np.array([1.0]), np.array([1.0]))

        assert_array_equal(fiber.m, np.zeros((3, 1)))

    def test_bad_offset(self):
        with self.assertRaises(ValueError):
            profiles.MetricFunctions(offset=[1.0, 2.0]).offset_vector


if __name__ == '__main__':
    unittest.main()
