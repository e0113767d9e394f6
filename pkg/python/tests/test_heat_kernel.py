import sys
import unittest
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from bumps import bump  # noqa: E402
from errors import CompositionDepthError, DomainError  # noqa: E402
from heat_kernel import (  # noqa: E402
    SpaceTimeGrid,
    comparability_check,
    compose,
    duhamel_residual,
    extend_semigroup,
    free_comparability,
    free_table,
    full_kernel_matrix,
    generator_check,
    interior_relative_error,
    kernel_resolvent,
    kernel_rows,
    perturbation_term,
    series_sum,
    simpson_weights,
    translated_density,
)
from kato import constant_field, zero_field  # noqa: E402
from resolvent import apply_resolvent  # noqa: E402
from stable_core import StableParams, density, density_gradient  # noqa: E402

PARAMS = StableParams(1, 1.5)


def small_grid(**overrides) -> SpaceTimeGrid:
    values = dict(d=1, half_width=6.0, spacing=0.1, horizon=0.48, steps=24)
    values.update(overrides)
    return SpaceTimeGrid(**values)


class SpaceTimeGridTests(unittest.TestCase):
    def test_mesh_layout(self):
        grid = small_grid()
        self.assertEqual(grid.nodes_per_axis, 121)
        self.assertAlmostEqual(grid.time_step, 0.02, places=15)
        self.assertAlmostEqual(float(grid.times[-1]), 0.48, places=12)
        self.assertEqual(grid.node_index([0.0]), (60,))
        self.assertAlmostEqual(float(np.sum(grid.trapezoid_weights())), 12.0, places=12)

    def test_spacing_must_divide_the_box(self):
        with self.assertRaises(DomainError):
            SpaceTimeGrid(d=1, half_width=1.0, spacing=0.3)

    def test_point_outside_box_is_rejected(self):
        with self.assertRaises(DomainError):
            small_grid().node_index([7.0])

    def test_tail_bound_is_enforced(self):
        grid = SpaceTimeGrid(d=1, half_width=1.0, spacing=0.1, horizon=1.0, steps=10)
        with self.assertRaises(DomainError):
            grid.check(PARAMS)

    def test_small_grid_passes_its_tail_bound(self):
        grid = small_grid()
        grid.check(PARAMS)
        self.assertLess(grid.box_tail_mass(PARAMS, grid.horizon), grid.tail_bound)

    def test_refined_halves_spacing(self):
        self.assertAlmostEqual(small_grid().refined().spacing, 0.05, places=15)


class SimpsonWeightTests(unittest.TestCase):
    def test_weights_integrate_constants(self):
        for j in range(1, 8):
            with self.subTest(j=j):
                self.assertAlmostEqual(float(np.sum(simpson_weights(j, 0.1))), 0.1 * j, places=12)

    def test_weights_integrate_cubics(self):
        dt = 0.1
        for j in (2, 3, 5, 6):
            with self.subTest(j=j):
                nodes = dt * np.arange(j + 1)
                value = float(simpson_weights(j, dt) @ nodes ** 3)
                self.assertAlmostEqual(value, (j * dt) ** 4 / 4.0, places=12)


class ZeroDriftSeriesTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.grid = small_grid()
        cls.kernel = series_sum(zero_field(1), PARAMS, cls.grid)

    def test_terms_vanish_and_range_is_the_horizon(self):
        for term in self.kernel.terms[1:]:
            self.assertEqual(float(np.max(np.abs(term.values))), 0.0)
        self.assertAlmostEqual(self.kernel.t0_estimate, 0.48, places=12)
        self.assertEqual(self.kernel.observed_ratio, 0.0)

    def test_sum_is_the_free_density(self):
        for t in (0.08, 0.24, 0.48):
            with self.subTest(t=t):
                expected = density(PARAMS, t, self.grid.axis)
                np.testing.assert_allclose(self.kernel.table(t)[0], expected, rtol=1e-10, atol=0.0)

    def test_row_sums_are_one(self):
        deviation = np.abs(self.kernel.row_sums[:, self.kernel.certified] - 1.0)
        self.assertLess(float(np.max(deviation)), 1e-3)

    def test_uncertified_slice_is_rejected(self):
        with self.assertRaises(DomainError):
            kernel_rows(self.kernel, 0.02)

    def test_extension_depth_is_enforced(self):
        with self.assertRaises(CompositionDepthError):
            extend_semigroup(self.kernel, 0.96, composition_depth=0)

    def test_extension_target_must_be_on_the_mesh(self):
        with self.assertRaises(DomainError):
            extend_semigroup(self.kernel, 0.955)

    def test_comparability_matches_the_free_constant(self):
        report = comparability_check(self.kernel)
        self.assertGreater(report.min_value, 0.0)
        self.assertAlmostEqual(report.c_hat / free_comparability(self.kernel), 1.0, places=8)

    def test_duhamel_residual_vanishes(self):
        self.assertEqual(duhamel_residual(self.kernel, zero_field(1)).max_residual, 0.0)

    def test_kernel_resolvent_matches_free_resolvent(self):
        g = bump(0.0, width=1.0)
        resolved = kernel_resolvent(self.kernel, 2.0, g)
        expected = apply_resolvent(PARAMS, 2.0, g, [0.0])
        self.assertLess(abs(resolved.at([0.0]) - expected), resolved.truncation([0.0]) + 1e-2)

    def test_kernel_resolvent_rejects_non_positive_lambda(self):
        with self.assertRaises(DomainError):
            kernel_resolvent(self.kernel, 0.0, bump(0.0))

    def test_generator_has_no_drift_part(self):
        f = bump(0.0, width=1.0)
        report = generator_check(self.kernel, zero_field(1), f, f)
        self.assertEqual(report.drift_part, 0.0)
        self.assertLess(report.target, 0.0)
        self.assertEqual(report.a_values.shape, (3,))

    def test_generator_needs_a_long_enough_range(self):
        kernel = series_sum(zero_field(1), PARAMS, small_grid(horizon=0.16, steps=8))
        f = bump(0.0, width=1.0)
        with self.assertRaises(DomainError):
            generator_check(kernel, zero_field(1), f, f)


def desk_grid() -> SpaceTimeGrid:
    return SpaceTimeGrid(d=1, half_width=10.0, spacing=0.05, horizon=0.5, steps=50)


class ConstantDriftSeriesTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.grid = desk_grid()
        cls.field = constant_field(0.5)
        cls.kernel = series_sum(cls.field, PARAMS, cls.grid)

    def test_whole_horizon_is_certified(self):
        self.assertGreaterEqual(self.kernel.t0_estimate, 0.5 - 1e-9)
        self.assertLess(self.kernel.observed_ratio, 0.5)
        self.assertGreater(self.kernel.orders, 1)

    def test_sum_is_the_translated_density(self):
        mask = self.grid.interior_mask(0.5)
        for t in (0.1, 0.2, 0.3, 0.4, 0.5):
            with self.subTest(t=t):
                reference = translated_density(PARAMS, self.grid, t, [0.0], [0.5 * t])
                self.assertLess(interior_relative_error(self.kernel.table(t)[0], reference, mask), 1e-3)

    def test_first_order_term_is_a_shifted_gradient(self):
        mask = self.grid.interior_mask(0.5)
        for t in (0.1, 0.3, 0.5):
            with self.subTest(t=t):
                expected = -t * 0.5 * density_gradient(PARAMS, t, self.grid.axis)
                term = self.kernel.terms[1].row(t, [0.0])
                gap = np.max(np.abs(term[mask] - expected[mask])) / np.max(np.abs(expected[mask]))
                self.assertLess(gap, 1e-3)

    def test_terms_come_from_the_recursion(self):
        order_one = perturbation_term(free_table(PARAMS, self.grid), self.field)
        np.testing.assert_allclose(order_one.values, self.kernel.terms[1].values, rtol=0.0, atol=1e-12)

    def test_row_sums_are_one(self):
        deviation = np.abs(self.kernel.row_sums[:, self.kernel.certified] - 1.0)
        self.assertLess(float(np.max(deviation)), 1e-3)

    def test_extension_past_the_horizon_is_translated(self):
        table = extend_semigroup(self.kernel, 1.0)
        reference = translated_density(PARAMS, self.grid, 1.0, [0.0], [0.5])
        error = interior_relative_error(table.row(1.0, [0.0]), reference, self.grid.interior_mask(0.25))
        self.assertLess(error, 5e-3)

    def test_duhamel_residual_is_small(self):
        self.assertLess(duhamel_residual(self.kernel, self.field).max_residual, 1e-3)

    def test_summary_reports_orders(self):
        summary = self.kernel.summary()
        self.assertEqual(summary["orders"], self.kernel.orders)
        self.assertEqual(len(summary["term_sup_norms"]), self.kernel.orders + 1)


class FreeExtensionTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.grid = desk_grid()
        cls.kernel = series_sum(zero_field(1), PARAMS, cls.grid)
        cls.mask = cls.grid.interior_mask(0.25)

    def test_extension_matches_the_free_density(self):
        table = extend_semigroup(self.kernel, 1.0)
        self.assertEqual(len(table.pieces), 2)
        reference = density(PARAMS, 1.0, self.grid.axis)
        self.assertLess(interior_relative_error(table.row(1.0, [0.0]), reference, self.mask), 1e-3)

    def test_composition_orders_agree(self):
        size = self.grid.size
        whole = extend_semigroup(self.kernel, 1.0).values[:, 0].reshape(size, size)
        later = extend_semigroup(self.kernel, 0.75).values[:, 0].reshape(size, size)
        split = compose(full_kernel_matrix(self.kernel, 0.25), later, self.grid)
        row = self.grid.node_index([0.0])[0]
        self.assertLess(interior_relative_error(split[row], whole[row], self.mask.reshape(-1)), 5e-3)


if __name__ == "__main__":
    unittest.main()
