import math
import sys
import unittest
from pathlib import Path

import numpy as np
from scipy import integrate

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from bumps import ConstantFunction, bump, bump_family  # noqa: E402


class BumpTests(unittest.TestCase):
    def test_peak_and_support(self):
        f = bump(0.5, width=2.0, amplitude=3.0)
        self.assertAlmostEqual(float(f(np.array([[0.5]]))[0]), 3.0, places=12)
        self.assertEqual(float(f(np.array([[2.5]]))[0]), 0.0)
        self.assertEqual(f.support_radius, 2.5)

    def test_gradient_matches_finite_differences(self):
        f = bump((0.0, 0.0), width=1.5)
        x = np.array([[0.3, -0.4]])
        h = 1e-6
        for axis in range(2):
            step = np.zeros((1, 2))
            step[0, axis] = h
            numeric = (f(x + step)[0] - f(x - step)[0]) / (2 * h)
            self.assertAlmostEqual(f.gradient(x)[0, axis], numeric, places=7)

    def test_integral_matches_a_fine_sum(self):
        f = bump(0.0, width=1.0)
        x = np.linspace(-1.0, 1.0, 200001)
        reference = float(integrate.trapezoid(f(x[:, None]), x))
        self.assertAlmostEqual(f.integral(), reference, places=8)

    def test_family_shapes(self):
        family = bump_family(2, 3)
        self.assertEqual(len(family), 3)
        self.assertEqual([g.d for g in family], [2, 2, 2])
        self.assertEqual(family[0].center, (-0.5, 0.0))


class ConstantFunctionTests(unittest.TestCase):
    def test_values_and_gradient(self):
        g = ConstantFunction(2, 4.0)
        pts = np.zeros((5, 2))
        np.testing.assert_array_equal(g(pts), np.full(5, 4.0))
        np.testing.assert_array_equal(g.gradient(pts), np.zeros((5, 2)))
        self.assertIsNone(g.support_radius)
        self.assertTrue(math.isclose(g.sup_norm, 4.0))


if __name__ == "__main__":
    unittest.main()
