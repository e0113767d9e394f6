import json
import math
import sys
import tempfile
import unittest
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from bumps import bump  # noqa: E402
from config import parse_config  # noqa: E402
from errors import FitError, InsufficientSampleError  # noqa: E402
from kato import sinusoidal_field, zero_field  # noqa: E402
from simulate import SimConfig, kernel_chain_paths  # noqa: E402
from stable_core import StableParams  # noqa: E402
from validate import (  # noqa: E402
    CheckRecord,
    ValidationReport,
    _Inconclusive,
    _measure,
    build_kernel,
    cross_validate,
    drift_gradient_gap,
    noise_uniqueness_probe,
    run_identity_suite,
)

SMALL_RUN = """
[grid]
half_width = 6.0
spacing = 0.1
horizon = 0.48
steps = 24

[resolvent]
lambda = 2.0
test_functions = 1

[simulation]
dt = 0.08
horizon = 0.8
n_paths = 500
seed = 4242
"""


class IdentitySuiteTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.config = parse_config(SMALL_RUN)
        cls.kernel = build_kernel(zero_field(1), cls.config)

    def test_zero_drift_passes_the_identities(self):
        report = run_identity_suite(zero_field(1), self.config, kernel=self.kernel)
        for name in ("normalization", "positivity", "chapman_kolmogorov", "duhamel_residual", "comparability",
                     "free_comparability", "comparability_refinement"):
            with self.subTest(check=name):
                self.assertTrue(report.check(name).passed)
        self.assertAlmostEqual(report.constants["t0"], 0.48, places=12)
        self.assertTrue(math.isfinite(report.check("comparability").tolerance))
        self.assertLess(report.constants["c2"], 1.1)
        self.assertLess(report.constants["c3"], 0.1)
        times = report.constants["long_time_times"]
        for target in (0.96, 1.92):
            self.assertTrue(any(abs(t - target) < 1e-9 for t in times), times)
        self.assertIn("generator", [c.name for c in report.checks])

    def test_injected_fault_is_reported(self):
        report = run_identity_suite(zero_field(1), self.config, inject_fault=True, kernel=self.kernel)
        self.assertFalse(report.passed)
        self.assertFalse(report.check("positivity").passed)
        comparability = report.check("comparability")
        self.assertFalse(comparability.passed)
        self.assertTrue(math.isinf(comparability.value))
        self.assertNotIn("c2", report.constants)

    def test_report_is_saved_as_json_and_text(self):
        report = run_identity_suite(zero_field(1), self.config, kernel=self.kernel)
        temp_dir = tempfile.TemporaryDirectory()
        self.addCleanup(temp_dir.cleanup)
        json_path, text_path = report.save(Path(temp_dir.name))
        self.assertEqual(json_path.name, "report_identity.json")
        payload = json.loads(json_path.read_text(encoding="utf-8"))
        self.assertEqual(payload["suite"], "identity")
        self.assertEqual(payload["schema_version"], 2)
        self.assertEqual(payload["verdict"], report.verdict)
        self.assertIn("overall:", text_path.read_text(encoding="utf-8"))

    def test_numerical_failure_names_the_check(self):
        def compute():
            raise FitError("no fit", slices=1)

        with self.assertRaises(FitError) as caught:
            _measure("long_time", 1.0, compute)
        self.assertIn("long_time", str(caught.exception))
        self.assertEqual(caught.exception.context["check"], "long_time")

    def test_without_composition_the_fit_stops_at_t0(self):
        config = parse_config(SMALL_RUN + "\n[solver]\ncomposition_depth = 0\n")
        report = run_identity_suite(zero_field(1), config, kernel=self.kernel, refine=False)
        self.assertAlmostEqual(max(report.constants["long_time_times"]), 0.48, places=9)
        self.assertNotIn("comparability_refinement", [c.name for c in report.checks])

    def test_inconclusive_check_withholds_the_pass(self):
        def compute():
            raise _Inconclusive("limits are not monotone", 0.3, {"limits": [0.1, 0.3, 0.2]})

        record = _measure("generator", 0.05, compute)
        self.assertEqual(record.status, "inconclusive")
        self.assertEqual(record.detail["reason"], "limits are not monotone")
        report = ValidationReport("identity", [record, CheckRecord("normalization", 0.0, 1e-3, True, 0.0)])
        self.assertEqual(report.verdict, "inconclusive")
        self.assertFalse(report.passed)
        self.assertEqual(report.failures, [])
        self.assertEqual(report.counts(), {"pass": 1, "fail": 0, "skip": 0, "inconclusive": 1})
        self.assertIn("overall: inconclusive", report.render_table())


class CrossValidationTests(unittest.TestCase):
    def test_deterministic_methods_agree_for_zero_drift(self):
        config = parse_config(SMALL_RUN)
        report = cross_validate(zero_field(1), config)
        self.assertEqual(report.constants["lambda"], 2.0)
        for name in ("g0_x0_neumann-oracle", "g0_x0_kernel_laplace-oracle"):
            with self.subTest(check=name):
                self.assertTrue(report.check(name).passed)
        self.assertNotIn("contraction_factor", [c.name for c in report.checks])

    def test_drift_term_matches_differenced_resolvent(self):
        line = StableParams(1, 1.5)
        gap, detail = drift_gradient_gap(sinusoidal_field(1.0, 1.0), line, 2.0, bump(0.0, width=1.0), [0.5])
        self.assertLess(gap, 1e-4)
        self.assertEqual(detail["x"], [0.5])


class NoiseUniquenessTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.config = parse_config(SMALL_RUN)
        cls.kernel = build_kernel(zero_field(1), cls.config)

    def test_runs_on_chain_paths(self):
        report = noise_uniqueness_probe(self.kernel, self.config)
        self.assertEqual([c.name for c in report.checks], ["cf_at_zero", "increment_cf", "lag1_independence"])
        self.assertTrue(report.check("cf_at_zero").passed)
        self.assertEqual(report.constants["steps"], 10)

    def test_too_few_increments(self):
        params = self.config.params()
        paths = kernel_chain_paths(self.kernel, SimConfig(params, zero_field(1), dt=0.08, horizon=0.16, n_paths=5))
        with self.assertRaises(InsufficientSampleError):
            noise_uniqueness_probe(self.kernel, self.config, paths=paths)


if __name__ == "__main__":
    unittest.main()
