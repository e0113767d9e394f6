import logging
import os
import sys
import tempfile
import unittest
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from log_setup import ROOT_LOGGER_NAMES, configure_logging, level_from_verbosity  # noqa: E402
from parallel import chunked, map_parallel  # noqa: E402
from paths import default_run_dir, ensure_run_dir  # noqa: E402


class MapParallelTests(unittest.TestCase):
    def test_order_is_preserved_across_threads(self):
        items = list(range(25))
        self.assertEqual(map_parallel(lambda x: x * x, items, threads=4), [x * x for x in items])
        self.assertEqual(map_parallel(lambda x: x + 1, items, threads=1), [x + 1 for x in items])

    def test_chunks_cover_the_range(self):
        self.assertEqual(chunked(10, 4), [slice(0, 4), slice(4, 8), slice(8, 10)])
        self.assertEqual(chunked(0, 4), [])


class RunDirTests(unittest.TestCase):
    def test_default_name_uses_the_hash_prefix(self):
        base = Path("/tmp/base")
        self.assertEqual(default_run_dir("kernel", "0123456789abcdef", base), base / "kernel-01234567")

    def test_default_base_follows_the_working_directory(self):
        temp_dir = tempfile.TemporaryDirectory()
        self.addCleanup(temp_dir.cleanup)
        self.addCleanup(os.chdir, os.getcwd())
        os.chdir(temp_dir.name)
        expected = Path(temp_dir.name).resolve() / "runs" / "kernel-01234567"
        self.assertEqual(default_run_dir("kernel", "0123456789abcdef").resolve(), expected)

    def test_explicit_directory_is_created(self):
        temp_dir = tempfile.TemporaryDirectory()
        self.addCleanup(temp_dir.cleanup)
        target = Path(temp_dir.name) / "nested" / "run"
        self.assertEqual(ensure_run_dir("density", "ff" * 32, str(target)), target)
        self.assertTrue(target.is_dir())


class LoggingTests(unittest.TestCase):
    def test_verbosity_levels(self):
        self.assertEqual(level_from_verbosity(0), logging.WARNING)
        self.assertEqual(level_from_verbosity(1), logging.INFO)
        self.assertEqual(level_from_verbosity(3), logging.DEBUG)

    def test_single_handler_is_shared(self):
        first = configure_logging(logging.INFO)
        second = configure_logging(logging.WARNING)
        self.assertIs(first, second)
        for name in ROOT_LOGGER_NAMES:
            logger = logging.getLogger(name)
            self.assertEqual(logger.handlers.count(first), 1)
            self.assertEqual(logger.level, logging.WARNING)


if __name__ == "__main__":
    unittest.main()
