import unittest
from unittest.mock import patch
from pathlib import Path
import logging
import shutil
import xml.etree.ElementTree as ET

from src.errors import ConfigurationError
from src.svg_plot import SvgCanvas, bifurcation_diagram, mu_limit_panel

logging.disable(logging.CRITICAL)

BRANCH_ROWS = [
    {"lambda": "5.8", "l2_norm": "0.5"},
    {"lambda": "5.78", "l2_norm": "0"},
    {"lambda": "6.5", "l2_norm": "1.2"},
]

MU_ROWS = [
    {"mu": "0.2", "hmu_star": "1.0", "h10_trunc_L1": "2.0", "h10_trunc_L2": "2.5", "h10_trunc_L3": "nan"},
    {"mu": "0.25", "hmu_star": "1.1", "h10_trunc_L1": "3.0", "h10_trunc_L2": "3.9", "h10_trunc_L3": "nan"},
]


class TestSvgCanvas(unittest.TestCase):

    def test_coordinate_mapping(self):
        canvas = SvgCanvas((0.0, 1.0), (0.0, 2.0), width=200, height=100, margin=10)
        self.assertAlmostEqual(canvas.px(0.0), 10.0)
        self.assertAlmostEqual(canvas.px(1.0), 190.0)
        self.assertAlmostEqual(canvas.py(0.0), 90.0)
        self.assertAlmostEqual(canvas.py(2.0), 10.0)

    def test_degenerate_range_is_padded(self):
        canvas = SvgCanvas((1.0, 1.0), (0.0, 0.0))
        self.assertLess(canvas.x0, canvas.x1)
        self.assertLess(canvas.y0, canvas.y1)

    @patch('src.svg_plot.ensure_directory', return_value=True)
    @patch("builtins.open", side_effect=OSError("Test IO error"))
    def test_save_io_error(self, mock_open_call, mock_ensure):
        canvas = SvgCanvas((0.0, 1.0), (0.0, 1.0))
        self.assertIsNone(canvas.save(Path("out/figure.svg")))

    @patch('src.svg_plot.ensure_directory', return_value=False)
    def test_save_without_directory(self, mock_ensure):
        self.assertIsNone(SvgCanvas((0.0, 1.0), (0.0, 1.0)).save(Path("out/figure.svg")))


class TestFigures(unittest.TestCase):

    def setUp(self):
        self.test_dir = Path("test_data_temp")
        self.test_dir.mkdir(exist_ok=True)

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_bifurcation_diagram(self):
        path = bifurcation_diagram(BRANCH_ROWS, self.test_dir / "fig" / "bifurcation.svg")
        self.assertEqual(path, self.test_dir / "fig" / "bifurcation.svg")
        text = path.read_text(encoding="utf-8")
        root = ET.fromstring(text)
        classes = {node.get("class") for node in root.iter() if node.get("class")}
        self.assertTrue({"trivial-stable", "trivial-unstable", "branch-plus", "branch-minus", "onset"} <= classes)
        unstable = [node for node in root.iter() if node.get("class") == "trivial-unstable"][0]
        self.assertEqual(unstable.get("stroke-dasharray"), "6 4")
        plus = [node for node in root.iter() if node.get("class") == "branch-plus"][0]
        self.assertEqual(len(plus.get("points").split()), 3)
        self.assertIn("lambda_1=5.78", text)

    def test_bifurcation_diagram_without_onset_row(self):
        rows = [row for row in BRANCH_ROWS if row["l2_norm"] != "0"]
        path = bifurcation_diagram(rows, self.test_dir / "bifurcation.svg")
        self.assertIn("lambda_1=5.8", path.read_text(encoding="utf-8"))

    def test_bifurcation_diagram_errors(self):
        with self.assertRaises(ConfigurationError):
            bifurcation_diagram([], self.test_dir / "empty.svg")
        with self.assertRaises(ConfigurationError):
            bifurcation_diagram([{"lambda": "1.0"}], self.test_dir / "missing.svg")
        with self.assertRaises(ConfigurationError):
            bifurcation_diagram([{"lambda": "x", "l2_norm": "1"}], self.test_dir / "bad.svg")

    def test_mu_limit_panel_skips_missing_levels(self):
        path = mu_limit_panel(MU_ROWS, self.test_dir / "mu_limit.svg")
        root = ET.fromstring(path.read_text(encoding="utf-8"))
        classes = {node.get("class") for node in root.iter() if node.get("class")}
        self.assertIn("hmu-star", classes)
        self.assertIn("h10_trunc_L1", classes)
        self.assertIn("h10_trunc_L2", classes)
        self.assertNotIn("h10_trunc_L3", classes)

    def test_mu_limit_panel_errors(self):
        with self.assertRaises(ConfigurationError):
            mu_limit_panel([], self.test_dir / "empty.svg")
        with self.assertRaises(ConfigurationError):
            mu_limit_panel([{"mu": "0.2"}], self.test_dir / "missing.svg")


if __name__ == '__main__':
    unittest.main()
