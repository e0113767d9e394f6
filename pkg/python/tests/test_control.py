import json
import sys
import tempfile
import unittest
from pathlib import Path
from unittest import mock

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

import control  # noqa: E402
from errors import EXIT_CONFIG_ERROR, EXIT_OK, EXIT_VALIDATION_FAILED  # noqa: E402
from gridio import MANIFEST_NAME, read_csv, verify_manifest  # noqa: E402
from validate import CheckRecord, ValidationReport  # noqa: E402

SMALL_GRID = """
[grid]
half_width = 6.0
spacing = 0.1
horizon = 0.48
steps = 24

[simulation]
dt = 0.01
horizon = 0.1
n_paths = 50
"""


class ControlCLITests(unittest.TestCase):
    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.addCleanup(self.temp_dir.cleanup)
        self.root = Path(self.temp_dir.name)
        self.config_path = self.root / "run.ini"
        self.config_path.write_text(SMALL_GRID, encoding="utf-8")
        self.run_dir = self.root / "run"

    def run_main(self, argv):
        with mock.patch("builtins.print") as printer:
            code = control.main(argv)
        return code, json.loads(printer.call_args_list[-1].args[0])

    def test_parser_reads_common_flags(self):
        args = control.build_parser().parse_args(["density", "--t", "0.5", "--seed", "3", "-vv"])
        self.assertEqual(args.t, 0.5)
        self.assertEqual(args.seed, 3)
        self.assertEqual(args.verbose, 2)
        self.assertIs(args.func, control.command_density)

    def test_resolvent_lambda_flag(self):
        args = control.build_parser().parse_args(["resolvent", "--lambda", "4", "--g", "one"])
        self.assertEqual(args.lam, 4.0)
        self.assertEqual(args.g, "one")

    def test_density_writes_table_and_manifest(self):
        code, status = self.run_main(["density", "--out", str(self.run_dir), "--t", "1", "--points", "0; 1.5"])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(status["command"], "density")
        header, rows = read_csv(self.run_dir / "density.csv")
        self.assertEqual(header, ["x1", "p", "grad_norm"])
        self.assertEqual(len(rows), 2)
        self.assertGreater(float(rows[0][1]), float(rows[1][1]))
        self.assertTrue((self.run_dir / control.RESOLVED_CONFIG_NAME).is_file())
        self.assertTrue((self.run_dir / MANIFEST_NAME).is_file())
        self.assertEqual(verify_manifest(self.run_dir), [])

    def test_density_is_byte_reproducible(self):
        second = self.root / "again"
        self.run_main(["density", "--out", str(self.run_dir), "--points", "0; 0.25; 4"])
        self.run_main(["density", "--out", str(second), "--points", "0; 0.25; 4"])
        self.assertEqual((self.run_dir / "density.csv").read_bytes(), (second / "density.csv").read_bytes())

    def test_non_positive_time_is_a_config_exit(self):
        with mock.patch("sys.stderr") as stderr:
            with self.assertRaises(SystemExit) as caught:
                control.main(["density", "--out", str(self.run_dir), "--t", "0"])
        self.assertEqual(caught.exception.code, EXIT_CONFIG_ERROR)
        written = "".join(call.args[0] for call in stderr.write.call_args_list)
        self.assertIn("[katoflow:error]", written)

    def test_kernel_failure_exits_with_validation_code(self):
        failing = ValidationReport("identity", [CheckRecord("positivity", -1.0, 0.0, False, 0.0)])
        with mock.patch.object(control, "run_identity_suite", return_value=failing):
            with mock.patch("builtins.print"):
                with mock.patch("sys.stderr"):
                    with self.assertRaises(SystemExit) as caught:
                        control.main(["kernel", "--config", str(self.config_path), "--out", str(self.run_dir)])
        self.assertEqual(caught.exception.code, EXIT_VALIDATION_FAILED)
        summary = json.loads((self.run_dir / "kernel_summary.json").read_text(encoding="utf-8"))
        self.assertAlmostEqual(summary["t0_estimate"], 0.48, places=12)
        self.assertTrue((self.run_dir / control.KERNEL_NAME).is_file())
        self.assertTrue((self.run_dir / "kernel.csv").is_file())
        self.assertTrue((self.run_dir / "report_identity.json").is_file())
        self.assertEqual(len(summary["extended_times"]), 2)
        self.assertTrue((self.run_dir / "kernel_steps48.kfk").is_file())
        self.assertTrue((self.run_dir / "kernel_steps96.kfk").is_file())

    def test_inconclusive_kernel_run_is_not_a_failure(self):
        undecided = ValidationReport(
            "identity", [CheckRecord("generator", 0.3, 0.05, False, 0.0, inconclusive=True)]
        )
        with mock.patch.object(control, "run_identity_suite", return_value=undecided):
            code, status = self.run_main(["kernel", "--config", str(self.config_path), "--out", str(self.run_dir)])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(status["verdict"], "inconclusive")

    def test_simulate_euler_summary(self):
        code, status = self.run_main(["simulate", "--config", str(self.config_path), "--out", str(self.run_dir),
                                      "--seed", "17"])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(status["n_paths"], 50)
        summary = json.loads((self.run_dir / "simulation_summary.json").read_text(encoding="utf-8"))
        self.assertEqual(summary["seed"], 17)
        self.assertIn("ks", summary)
        self.assertIsNone(summary["levy"])
        self.assertTrue((self.run_dir / control.PATHS_NAME).is_file())

    def test_noise_suite_is_skipped_above_one_dimension(self):
        self.config_path.write_text("[model]\nd = 2\n", encoding="utf-8")
        code, status = self.run_main(["validate", "--suite", "noise", "--config", str(self.config_path),
                                      "--out", str(self.run_dir)])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(status["suites"], [])
        self.assertEqual(status["failed"], [])

    def test_default_run_directory_uses_the_config_hash(self):
        with mock.patch.object(control, "ensure_run_dir", return_value=self.run_dir) as ensure:
            self.run_main(["density", "--points", "0"])
        command, config_hash, out = ensure.call_args.args
        self.assertEqual(command, "density")
        self.assertEqual(len(config_hash), 64)
        self.assertIsNone(out)


if __name__ == "__main__":
    unittest.main()
