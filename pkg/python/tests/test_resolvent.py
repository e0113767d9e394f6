import math
import sys
import unittest
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from bumps import ConstantFunction, bump  # noqa: E402
from errors import DomainError, ThresholdNotFoundError  # noqa: E402
from kato import constant_field, sinusoidal_field, zero_field  # noqa: E402
from resolvent import (  # noqa: E402
    DEFAULT_LAMBDA_GRID,
    ResolventImage,
    ResolventKernel,
    apply_resolvent,
    contraction_integral,
    drift_apply,
    drift_resolvent_bound,
    gradient_kato_constant,
    lambda0_estimate,
    neumann_resolvent,
    resolvent_gradient,
    resolvent_kernel,
    resolvent_quadrature,
    spectral_resolvent,
    translated_resolvent,
)
from stable_core import StableParams  # noqa: E402


class ResolventKernelTests(unittest.TestCase):
    def setUp(self):
        self.line = StableParams(1, 1.5)

    def test_profile_matches_quadrature(self):
        for x in (0.0, 0.3, 2.0, 15.0):
            with self.subTest(x=x):
                direct = resolvent_quadrature(self.line, 1.0, x)
                self.assertLess(abs(resolvent_kernel(self.line, 1.0, x) - direct) / direct, 1e-4)

    def test_scaling_in_lambda(self):
        lam, x = 3.0, 0.7
        scaled = lam ** (1.0 / 1.5 - 1.0) * resolvent_kernel(self.line, 1.0, lam ** (1.0 / 1.5) * x)
        self.assertAlmostEqual(resolvent_kernel(self.line, lam, x), scaled, delta=1e-12)

    def test_mass_is_inverse_lambda(self):
        self.assertLess(abs(ResolventKernel(self.line, 2.0).mass() - 0.5), 1e-4)

    def test_singular_at_origin_above_the_critical_dimension(self):
        self.assertEqual(resolvent_kernel(StableParams(2, 1.5), 1.0, [0.0, 0.0]), math.inf)

    def test_gradient_is_undefined_at_origin(self):
        with self.assertRaises(DomainError):
            ResolventKernel(self.line, 1.0).gradient(0.0)

    def test_gradient_matches_central_differences(self):
        h = 1e-3
        for x in (0.3, 1.0, 3.0):
            with self.subTest(x=x):
                difference = (resolvent_kernel(self.line, 1.0, x + h) - resolvent_kernel(self.line, 1.0, x - h)) / (2 * h)
                gradient = float(np.asarray(resolvent_gradient(self.line, 1.0, x)).reshape(-1)[0])
                self.assertLess(abs(gradient - difference) / abs(difference), 1e-4)

    def test_lambda_must_be_positive(self):
        with self.assertRaises(DomainError):
            resolvent_kernel(self.line, 0.0, 1.0)


class ApplyResolventTests(unittest.TestCase):
    def setUp(self):
        self.line = StableParams(1, 1.5)

    def test_constant_function(self):
        value = apply_resolvent(self.line, 2.0, ConstantFunction(1, 1.0), [0.3])
        self.assertLess(abs(value - 0.5), 1e-4)

    def test_bump_agrees_with_spectral_solution(self):
        g = bump(0.0, width=1.0)
        grid, spectral = spectral_resolvent(self.line, 1.0, g)
        for x in (0.0, 0.5, 3.0):
            with self.subTest(x=x):
                self.assertLess(abs(apply_resolvent(self.line, 1.0, g, [x]) - np.interp(x, grid, spectral)), 1e-4)


class ContractionThresholdTests(unittest.TestCase):
    def setUp(self):
        self.line = StableParams(1, 1.5)

    def test_zero_field_takes_the_smallest_lambda(self):
        self.assertEqual(lambda0_estimate(zero_field(1), self.line), DEFAULT_LAMBDA_GRID[0])
        self.assertEqual(contraction_integral(zero_field(1), self.line, 1.0, [0.0]), 0.0)

    def test_threshold_is_the_first_contracting_lambda(self):
        field_ = constant_field(0.5)
        lam0 = lambda0_estimate(field_, self.line)
        self.assertGreater(lam0, DEFAULT_LAMBDA_GRID[0])
        self.assertLessEqual(contraction_integral(field_, self.line, lam0, [0.0]), 0.5)
        previous = lam0 / 2.0 ** (1.0 / 8.0)
        self.assertGreater(contraction_integral(field_, self.line, previous, [0.0]), 0.5)

    def test_threshold_scales_with_the_cube_of_the_drift(self):
        # the contraction integral of a constant field is c K lambda^{-1/3} at alpha = 3/2
        thresholds = [lambda0_estimate(constant_field(c), self.line) for c in (0.5, 1.0, 2.0)]
        for low, high in zip(thresholds, thresholds[1:]):
            with self.subTest(low=low):
                self.assertLessEqual(abs(math.log2(high / low) - 3.0), 1.0 / 8.0 + 1e-9)

    def test_threshold_outside_grid(self):
        with self.assertRaises(ThresholdNotFoundError):
            lambda0_estimate(constant_field(1e4), self.line, lambda_grid=[1.0, 2.0])

    def test_grid_must_increase(self):
        with self.assertRaises(DomainError):
            lambda0_estimate(constant_field(0.5), self.line, lambda_grid=[2.0, 1.0])

    def test_drift_bound_for_constant_field(self):
        bound = drift_resolvent_bound(constant_field(0.5), self.line, 2.0, probe=np.array([[0.0]]))
        self.assertLess(abs(bound - 0.25), 1e-4)


class DriftOperatorTests(unittest.TestCase):
    def setUp(self):
        self.line = StableParams(1, 1.5)
        self.image = ResolventImage(self.line, 1.0, bump(0.0, width=1.0))

    def test_zero_field_annihilates(self):
        self.assertEqual(drift_apply(zero_field(1), self.image, [0.5]), 0.0)

    def test_constant_field_scales_the_derivative(self):
        h = 1e-3
        difference = (self.image([0.5 + h])[0] - self.image([0.5 - h])[0]) / (2 * h)
        value = drift_apply(constant_field(0.5), self.image, [0.5])
        self.assertLess(abs(value - 0.5 * difference) / abs(0.5 * difference), 1e-4)

    def test_sinusoidal_field_is_evaluated_at_the_point(self):
        x = 0.5
        gradient = float(self.image.gradient([x])[0, 0])
        self.assertAlmostEqual(drift_apply(sinusoidal_field(1.0, 1.0), self.image, [x]), math.sin(x) * gradient, places=12)

    def test_gradient_kato_constant_of_a_constant_field(self):
        # local part 4 c r^{1/2}, outer part 0.8 c r^{1/2} at t = r^{3/2}
        report = gradient_kato_constant(constant_field(0.5), self.line)
        self.assertEqual(report.times, [0.1, 1.0, 10.0])
        for ratio in report.ratios:
            self.assertAlmostEqual(ratio, 1.2, delta=1e-6)
        self.assertAlmostEqual(report.constant, 1.2, delta=1e-6)


class NeumannSeriesTests(unittest.TestCase):
    def setUp(self):
        self.line = StableParams(1, 1.5)
        self.g = bump(0.0, width=1.0)

    def test_zero_drift_is_a_single_term(self):
        state = neumann_resolvent(zero_field(1), self.line, 1.0, self.g, [0.0, 0.5])
        self.assertEqual(state.terms.shape[0], 1)
        for i, x in enumerate((0.0, 0.5)):
            with self.subTest(x=x):
                self.assertLess(abs(state.value[i] - apply_resolvent(self.line, 1.0, self.g, [x])), 1e-4)

    def test_constant_drift_matches_translated_oracle(self):
        field_ = constant_field(0.5)
        lam0 = lambda0_estimate(field_, self.line)
        lam = 2.0 * lam0
        state = neumann_resolvent(field_, self.line, lam, self.g, [0.0], lambda0=lam0)
        self.assertLess(state.ratio, 0.9)
        oracle = translated_resolvent(self.line, lam, 0.5, self.g, 0.0)
        self.assertLess(abs(state.value[0] - oracle), state.remainder_bound + 1e-4)

    def test_terms_contract_at_twice_the_threshold(self):
        field_ = constant_field(0.5)
        lam0 = lambda0_estimate(field_, self.line)
        state = neumann_resolvent(field_, self.line, 2.0 * lam0, self.g, [0.0], lambda0=lam0)
        self.assertGreater(state.terms.shape[0], 2)
        self.assertLessEqual(state.ratio, 0.55)
        self.assertLessEqual(state.contraction_factor, 0.55)

    def test_lambda_at_threshold_is_rejected(self):
        with self.assertRaises(DomainError):
            neumann_resolvent(constant_field(0.5), self.line, 1.0, self.g, [0.0], lambda0=1.0)

    def test_trace_rows_accumulate(self):
        state = neumann_resolvent(constant_field(0.5), self.line, 4.0, self.g, [0.0])
        rows = state.trace_rows()
        self.assertEqual(len(rows), state.terms.shape[0])
        self.assertAlmostEqual(rows[-1][-1], float(state.value[0]), places=12)


if __name__ == "__main__":
    unittest.main()
