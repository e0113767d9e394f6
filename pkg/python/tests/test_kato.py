import math
import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from errors import ConfigError, DomainError, FitError  # noqa: E402
from kato import (  # noqa: E402
    build_field,
    constant_field,
    gaussian_bump_field,
    kato_check,
    kato_modulus,
    load_table_field,
    local_kato_integral,
    power_singularity_field,
    sinusoidal_field,
    user_table_field,
    zero_field,
)
from stable_core import StableParams  # noqa: E402


class DriftFieldTests(unittest.TestCase):
    def test_constant_field_broadcasts(self):
        field_ = constant_field(0.5)
        np.testing.assert_allclose(field_(np.array([0.0, 1.0, -3.0])), [0.5, 0.5, 0.5])

    def test_zero_constant_collapses_to_zero_field(self):
        self.assertTrue(constant_field(0.0).is_zero)

    def test_sinusoidal_values(self):
        field_ = sinusoidal_field(0.5, 2.0)
        self.assertAlmostEqual(float(field_(np.array([0.25]))[0]), 0.5 * math.sin(0.5), places=14)

    def test_power_singularity_admissibility(self):
        params = StableParams(1, 1.5)
        power_singularity_field(1.0, 0.25).check_admissible(params)
        with self.assertRaises(DomainError):
            power_singularity_field(1.0, 0.6).check_admissible(params)

    def test_regularized_field_is_capped(self):
        field_ = power_singularity_field(1.0, 0.25).regularized(0.01)
        value = float(field_.magnitude(np.array([[1e-4]]))[0])
        self.assertAlmostEqual(value, 0.01 ** -0.25, places=10)
        self.assertTrue(np.all(np.isfinite(field_(np.array([[0.0]])))))

    def test_sum_of_fields(self):
        total = constant_field(0.5) + sinusoidal_field(0.5, 1.0)
        self.assertEqual(total.kind, "sum")
        self.assertAlmostEqual(float(total(np.array([0.0]))[0]), 0.5, places=14)

    def test_dimension_mismatch_is_rejected(self):
        with self.assertRaises(DomainError):
            constant_field([0.5, 0.0]).check_admissible(StableParams(1, 1.5))


class BuildFieldTests(unittest.TestCase):
    def test_unknown_kind_is_a_config_error(self):
        with self.assertRaises(ConfigError):
            build_field("vortex", 1, {})

    def test_builds_each_kind(self):
        options = {"value": [0.5], "amplitude": 0.5, "frequency": 1.0, "width": 1.0, "center": [0.0], "gamma": 0.25}
        for kind in ("zero", "constant", "sinusoidal", "gaussian_bump", "power_singularity"):
            with self.subTest(kind=kind):
                self.assertEqual(build_field(kind, 1, options).kind, kind)

    def test_user_table_from_csv(self):
        temp_dir = tempfile.TemporaryDirectory()
        self.addCleanup(temp_dir.cleanup)
        path = Path(temp_dir.name) / "drift.csv"
        path.write_text("# x, b\n-1,0.2\n0,-0.3\n1,-0.3\n", encoding="utf-8")
        field_ = build_field("user_table", 1, {"table": str(path)})
        np.testing.assert_allclose(field_(np.array([-0.5, 0.5, 2.0])), [0.2, -0.3, 0.0])

    def test_unreadable_table_is_a_config_error(self):
        with self.assertRaises(ConfigError):
            load_table_field(Path("/nonexistent/drift.csv"))


class KatoModulusTests(unittest.TestCase):
    def setUp(self):
        self.params = StableParams(1, 1.5)

    def test_constant_field_has_closed_form_integral(self):
        c, r = 0.5, 0.3
        expected = 2.0 * c * r ** 0.5 / 0.5
        value = local_kato_integral(constant_field(c), self.params, 0.0, r)
        self.assertLess(abs(value - expected) / expected, 1e-8)

    def test_table_field_integral_is_exact(self):
        field_ = user_table_field([-1.0, 1.0], [0.4])
        expected = 2.0 * 0.4 * 0.5 ** 0.5 / 0.5
        self.assertAlmostEqual(local_kato_integral(field_, self.params, 0.0, 0.5), expected, places=12)

    def test_zero_field_has_zero_modulus(self):
        self.assertEqual(kato_modulus(zero_field(1), self.params, 0.5).value, 0.0)

    def test_non_positive_radius_is_rejected(self):
        with self.assertRaises(DomainError):
            local_kato_integral(constant_field(0.5), self.params, 0.0, 0.0)

    def test_decay_curve_for_constant_field(self):
        curve = kato_check(constant_field(0.5), self.params, [1.0, 0.1, 0.01, 0.001])
        self.assertTrue(curve.decaying)
        self.assertAlmostEqual(curve.decay_fit, 0.5, places=6)

    def test_fit_needs_three_radii(self):
        with self.assertRaises(FitError):
            kato_check(constant_field(0.5), self.params, [1.0, 0.1])

    def test_singular_field_integral_at_core(self):
        # 2 int_0^r rho^{-gamma} rho^{alpha - 2} d rho
        r = 0.1
        value = local_kato_integral(power_singularity_field(1.0, 0.4), self.params, 0.0, r)
        self.assertLess(abs(value - 20.0 * r ** 0.1) / (20.0 * r ** 0.1), 1e-6)

    def test_shell_through_an_off_centre_core(self):
        field_ = power_singularity_field(1.0, 0.4)
        near = local_kato_integral(field_, self.params, -0.025, 0.1)
        self.assertTrue(math.isfinite(near))
        self.assertLess(near, local_kato_integral(field_, self.params, 0.0, 0.1))

    def test_singular_field_decay_exponent(self):
        curve = kato_check(power_singularity_field(1.0, 0.4), self.params, [0.1, 0.01, 0.001])
        self.assertAlmostEqual(curve.decay_fit, 0.1, delta=0.01)
        self.assertTrue(np.all(np.diff(curve.modulus) <= 0.0))

    def test_modulus_is_homogeneous(self):
        field_ = sinusoidal_field(0.5, 1.0)
        base = kato_modulus(field_, self.params, 0.2).value
        self.assertLess(abs(kato_modulus(field_.scaled(3.0), self.params, 0.2).value - 3.0 * base), 1e-8 * base)

    def test_modulus_is_subadditive(self):
        first, second = constant_field(0.5), gaussian_bump_field(1.0, 0.5)
        r = 0.2
        total = kato_modulus(first + second, self.params, r).value
        parts = kato_modulus(first, self.params, r).value + kato_modulus(second, self.params, r).value
        self.assertLessEqual(total, parts * (1.0 + 1e-8))

    def test_bounded_plus_integrable_field_decays(self):
        curve = kato_check(constant_field(0.5) + gaussian_bump_field(1.0, 0.5), self.params, [1.0, 0.1, 0.01, 0.001])
        self.assertTrue(curve.decaying)


if __name__ == "__main__":
    unittest.main()
