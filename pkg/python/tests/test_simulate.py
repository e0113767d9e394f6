import math
import sys
import unittest
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from bumps import ConstantFunction  # noqa: E402
from errors import DomainError, HorizonError, InsufficientSampleError  # noqa: E402
from heat_kernel import SpaceTimeGrid, series_sum  # noqa: E402
from kato import constant_field, power_singularity_field, sinusoidal_field, zero_field  # noqa: E402
from simulate import (  # noqa: E402
    SimConfig,
    coupled_weak_errors,
    empirical_density,
    empirical_resolvent,
    euler_paths,
    free_cdf,
    kernel_cdf,
    kernel_chain_paths,
    ks_against_kernel,
    levy_system_check,
    noise_increments,
    path_stream,
    reconstruct_noise,
    sample_stable_increment,
)
from stable_core import StableParams, tail_mass  # noqa: E402

LINE = StableParams(1, 1.5)


class SimConfigTests(unittest.TestCase):
    def test_horizon_must_be_a_multiple_of_dt(self):
        with self.assertRaises(DomainError):
            SimConfig(LINE, zero_field(1), dt=0.03, horizon=0.1)

    def test_x0_dimension(self):
        with self.assertRaises(DomainError):
            SimConfig(LINE, zero_field(1), x0=(0.0, 0.0))

    def test_singular_drift_needs_a_radius(self):
        config = SimConfig(LINE, power_singularity_field(1.0, 0.25), dt=0.1, horizon=1.0)
        with self.assertRaises(DomainError):
            config.effective_field()

    def test_singular_drift_is_capped(self):
        config = SimConfig(LINE, power_singularity_field(1.0, 0.25), dt=0.1, horizon=1.0, regularization_radius=0.01)
        self.assertTrue(np.all(np.isfinite(config.effective_field()(np.array([[0.0]])))))


class SamplerTests(unittest.TestCase):
    def test_streams_are_keyed_by_path(self):
        a = path_stream(7, 3).random(4)
        b = path_stream(7, 3).random(4)
        c = path_stream(7, 4).random(4)
        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, c))

    def test_characteristic_function(self):
        n = 10 ** 6
        frequencies = np.linspace(0.1, 3.0, 20)
        for d in (1, 2):
            for alpha in (1.2, 1.5, 1.8):
                with self.subTest(d=d, alpha=alpha):
                    params = StableParams(d, alpha)
                    samples = sample_stable_increment(params, 0.5, path_stream(11, d), n)
                    self.assertEqual(samples.shape, (n, d))
                    worst = max(abs(float(np.mean(np.cos(xi * samples[:, 0]))) - math.exp(-0.5 * xi ** alpha))
                                for xi in frequencies)
                    self.assertLess(worst, 3.0 / math.sqrt(n))

    def test_single_draw_shape(self):
        self.assertEqual(sample_stable_increment(LINE, 0.1, path_stream(1, 0)).shape, (1,))


class EulerTests(unittest.TestCase):
    def test_reproducible_across_threads(self):
        config = SimConfig(LINE, sinusoidal_field(0.5, 1.0), dt=0.1, horizon=0.5, n_paths=3000, seed=5)
        one = euler_paths(config)
        two = euler_paths(SimConfig(LINE, sinusoidal_field(0.5, 1.0), dt=0.1, horizon=0.5, n_paths=3000, seed=5,
                                    threads=2))
        np.testing.assert_array_equal(one.states, two.states)

    def test_noise_is_recovered_from_states(self):
        field_ = sinusoidal_field(0.5, 1.0)
        paths = euler_paths(SimConfig(LINE, field_, dt=0.05, horizon=0.5, n_paths=50, seed=2))
        np.testing.assert_allclose(noise_increments(paths, field_), paths.increments, atol=1e-12)
        record = paths.record(0)
        np.testing.assert_allclose(reconstruct_noise(record, field_)[1:], np.cumsum(record.increments, axis=0),
                                   atol=1e-12)

    def test_zero_drift_final_law(self):
        paths = euler_paths(SimConfig(LINE, zero_field(1), dt=0.1, horizon=1.0, n_paths=4000, seed=3))
        result = ks_against_kernel(paths.final()[:, 0], free_cdf(LINE, 1.0))
        self.assertGreater(result["pvalue"], 1e-3)

    def test_constant_drift_final_law_is_shifted(self):
        paths = euler_paths(SimConfig(LINE, constant_field(0.5), dt=0.1, horizon=1.0, n_paths=4000, seed=4))
        result = ks_against_kernel(paths.final()[:, 0], free_cdf(LINE, 1.0, shift=0.5))
        self.assertGreater(result["pvalue"], 1e-3)

    def test_coupled_levels_agree_for_constant_drift(self):
        config = SimConfig(LINE, constant_field(0.5), dt=0.1, horizon=0.4, n_paths=200, seed=8)
        study = coupled_weak_errors(config, lambda x: np.cos(x[:, 0]), levels=2)
        self.assertEqual(study.steps, [4, 8, 16])
        self.assertLess(max(study.differences), 1e-10)

    def test_weak_error_shrinks_under_a_smooth_drift(self):
        config = SimConfig(LINE, sinusoidal_field(1.0, 1.0), x0=(0.5,), dt=0.2, horizon=0.8, n_paths=4000, seed=21)
        study = coupled_weak_errors(config, lambda x: np.cos(x[:, 0]), levels=3)
        self.assertEqual(study.steps, [4, 8, 16, 32])
        self.assertTrue(study.decreasing, study.differences)


class LevySystemTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.paths = euler_paths(SimConfig(LINE, zero_field(1), dt=0.02, horizon=1.0, n_paths=100_000, seed=9))
        cls.unit = levy_system_check(cls.paths, LINE, 1.0)

    def test_tail_count_matches_the_levy_measure(self):
        self.assertAlmostEqual(self.unit.expected, 0.398941, delta=1e-6)
        self.assertLess(abs(self.unit.extrapolated_z), 3.0)

    def test_single_step_count_overstates_jumps(self):
        # P(|Y_dt| >= rho) exceeds dt nu(|z| >= rho) at second order in dt
        self.assertGreater(self.unit.observed, self.unit.extrapolated)

    def test_counts_are_poisson(self):
        self.assertGreaterEqual(self.unit.dispersion, 0.9)
        self.assertLessEqual(self.unit.dispersion, 1.1)

    def test_quadrupled_threshold_divides_the_count_by_eight(self):
        far = levy_system_check(self.paths, LINE, 4.0)
        self.assertAlmostEqual(far.expected / self.unit.expected, 0.125, places=12)
        gap = far.extrapolated - self.unit.extrapolated / 8.0
        sigma = math.hypot(far.extrapolated_std_error, self.unit.extrapolated_std_error / 8.0)
        self.assertLess(abs(gap), 3.0 * sigma)


class JumpStatisticsTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.paths = euler_paths(SimConfig(LINE, zero_field(1), dt=0.01, horizon=1.0, n_paths=4000, seed=9))

    def test_rho_below_threshold_is_rejected(self):
        with self.assertRaises(DomainError):
            levy_system_check(self.paths, LINE, 0.5)

    def test_too_few_paths(self):
        paths = euler_paths(SimConfig(LINE, zero_field(1), dt=0.01, horizon=0.1, n_paths=10, seed=1))
        with self.assertRaises(InsufficientSampleError):
            levy_system_check(paths, LINE, 1.0)

    def test_empirical_resolvent_of_constant(self):
        result = empirical_resolvent(self.paths, 2.0, ConstantFunction(1, 1.0))
        self.assertAlmostEqual(result.value, (1.0 - math.exp(-2.0)) / 2.0, delta=1e-4)
        self.assertAlmostEqual(result.std_error, 0.0, delta=1e-15)

    def test_short_horizon_is_refused_for_tight_tolerance(self):
        with self.assertRaises(HorizonError):
            empirical_resolvent(self.paths, 2.0, ConstantFunction(1, 1.0), tolerance=0.01)

    def test_histogram_counts_every_sample(self):
        histogram = empirical_density(self.paths.final()[:, 0], bins=50)
        self.assertEqual(int(histogram.counts.sum()), len(self.paths))


class FreeCdfTests(unittest.TestCase):
    def test_symmetry_and_tails(self):
        cdf = free_cdf(LINE, 1.0)
        self.assertAlmostEqual(float(cdf(0.0)[0]), 0.5, places=12)
        inside = float(cdf(2.0)[0] - cdf(-2.0)[0])
        self.assertAlmostEqual(inside, 1.0 - tail_mass(LINE, 1.0, 2.0), delta=1e-5)


class KernelChainTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        grid = SpaceTimeGrid(d=1, half_width=6.0, spacing=0.1, horizon=0.48, steps=24)
        cls.kernel = series_sum(zero_field(1), LINE, grid)

    def test_chain_follows_the_free_law(self):
        config = SimConfig(LINE, zero_field(1), dt=0.08, horizon=0.48, n_paths=2000, seed=6)
        paths = kernel_chain_paths(self.kernel, config)
        self.assertEqual(paths.method, "kernel_chain")
        result = ks_against_kernel(paths.final()[:, 0], free_cdf(LINE, 0.48))
        self.assertGreater(result["pvalue"], 1e-3)

    def test_chain_under_constant_drift_is_the_shifted_law(self):
        grid = SpaceTimeGrid(d=1, half_width=8.0, spacing=0.1, horizon=0.48, steps=24)
        kernel = series_sum(constant_field(0.5), LINE, grid)
        config = SimConfig(LINE, constant_field(0.5), dt=0.08, horizon=0.48, n_paths=2000, seed=17)
        paths = kernel_chain_paths(kernel, config)
        result = ks_against_kernel(paths.final()[:, 0], free_cdf(LINE, 0.48, shift=0.24))
        self.assertGreater(result["pvalue"], 1e-3)

    def test_dt_must_be_on_the_kernel_mesh(self):
        config = SimConfig(LINE, zero_field(1), dt=0.05, horizon=0.5, n_paths=10)
        with self.assertRaises(DomainError):
            kernel_chain_paths(self.kernel, config)

    def test_kernel_cdf_matches_free_cdf(self):
        kernel_law = kernel_cdf(self.kernel, 0.48, 0.0)
        free_law = free_cdf(LINE, 0.48)
        points = np.array([-3.0, -0.5, 0.0, 0.7, 2.5])
        np.testing.assert_allclose(kernel_law(points), free_law(points), atol=2e-3)


if __name__ == "__main__":
    unittest.main()
