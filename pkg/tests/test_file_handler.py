import unittest
from unittest.mock import patch, mock_open, MagicMock
from pathlib import Path
import json
import logging
import shutil

import numpy as np

from src.errors import ManifestError
from src.file_handler import (DIAGNOSTIC_FILENAME, MANIFEST_FILENAME, SUPPORTED_CONFIG_EXTENSIONS, ensure_directory,
                              file_digest, format_value, load_config, load_manifest, read_csv, validate_config_file,
                              write_csv, write_diagnostic, write_manifest)

# Suppress most logging output during tests for clarity, unless a test specifically needs it
logging.disable(logging.CRITICAL)


class TestFileHandler(unittest.TestCase):

    def setUp(self):
        """Set up for test methods."""
        self.test_dir = Path("test_data_temp")
        self.test_dir.mkdir(exist_ok=True)

    def tearDown(self):
        """Clean up after test methods."""
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_validate_config_file_valid(self):
        mock_path = MagicMock(spec=Path)
        mock_path.exists.return_value = True
        mock_path.is_file.return_value = True
        mock_path.suffix = '.cfg'
        mock_path.name = 'run.cfg'
        self.assertTrue(validate_config_file(mock_path))

    def test_validate_config_file_invalid_extension(self):
        mock_path = MagicMock(spec=Path)
        mock_path.exists.return_value = True
        mock_path.is_file.return_value = True
        mock_path.suffix = '.json'
        mock_path.name = 'run.json'
        self.assertNotIn('.json', SUPPORTED_CONFIG_EXTENSIONS)
        self.assertFalse(validate_config_file(mock_path))

    def test_validate_config_file_not_exists(self):
        mock_path = MagicMock(spec=Path)
        mock_path.exists.return_value = False
        self.assertFalse(validate_config_file(mock_path))

    def test_validate_config_file_is_not_file(self):
        mock_path = MagicMock(spec=Path)
        mock_path.exists.return_value = True
        mock_path.is_file.return_value = False
        self.assertFalse(validate_config_file(mock_path))

    def test_validate_config_file_invalid_path_type(self):
        self.assertFalse(validate_config_file("run.cfg"))

    def test_load_config_reads_key_values(self):
        path = self.test_dir / "run.cfg"
        path.write_text("# comment\nN=3\nmu=0.2\n\nmesh.M=64\n", encoding="utf-8")
        config = load_config(path)
        self.assertEqual(config, {"N": "3", "mu": "0.2", "mesh.M": "64"})

    def test_load_config_missing_file(self):
        self.assertIsNone(load_config(self.test_dir / "missing.cfg"))

    @patch('src.file_handler.dotenv_values', side_effect=PermissionError("Test permission error"))
    def test_load_config_permission_error(self, mock_dotenv):
        path = self.test_dir / "run.cfg"
        path.write_text("N=3\n", encoding="utf-8")
        self.assertIsNone(load_config(path))
        mock_dotenv.assert_called_once()

    @patch('src.file_handler.Path.mkdir', side_effect=PermissionError("Test permission error"))
    def test_ensure_directory_permission_error(self, mock_mkdir):
        self.assertFalse(ensure_directory(Path("no/permission")))

    def test_ensure_directory_invalid_type(self):
        self.assertFalse(ensure_directory("output"))

    def test_format_value(self):
        self.assertEqual(format_value(0.1), "0.10000000000000001")
        self.assertEqual(format_value(3), "3")
        self.assertEqual(format_value(np.int64(7)), "7")
        self.assertEqual(format_value(True), "1")
        self.assertEqual(format_value("u_plus"), "u_plus")
        self.assertEqual(format_value(float("nan")), "nan")

    def test_write_and_read_csv(self):
        path = write_csv(self.test_dir / "sub" / "table.csv", ["mu", "lambda1"], [[0.25, 0.5], [0.1, 2.0 / 3.0]])
        self.assertEqual(path, self.test_dir / "sub" / "table.csv")
        self.assertEqual(path.read_text(encoding="utf-8"), "mu,lambda1\n0.25,0.5\n0.10000000000000001,0.66666666666666663\n")
        rows = read_csv(path)
        self.assertEqual(float(rows[1]["lambda1"]), 2.0 / 3.0)

    @patch('src.file_handler.Path.mkdir')
    @patch("builtins.open", side_effect=IOError("Test IO error while opening file"))
    def test_write_csv_io_error(self, mock_open_call, mock_mkdir):
        self.assertIsNone(write_csv(Path("out/table.csv"), ["a"], [[1]]))

    def test_read_csv_missing(self):
        self.assertIsNone(read_csv(self.test_dir / "missing.csv"))

    def test_file_digest(self):
        path = self.test_dir / "data.txt"
        path.write_bytes(b"abc")
        self.assertEqual(file_digest(path), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad")

    def test_manifest_seal_roundtrip(self):
        content = {"command": "eigen", "outputs": {"eigen.csv": "00"}}
        path = write_manifest(self.test_dir, content)
        self.assertEqual(path.name, MANIFEST_FILENAME)
        self.assertIn("seal", json.loads(path.read_text(encoding="utf-8")))
        self.assertEqual(load_manifest(path), content)

    def test_manifest_tampering_detected(self):
        path = write_manifest(self.test_dir, {"command": "eigen"})
        data = json.loads(path.read_text(encoding="utf-8"))
        data["command"] = "branch"
        path.write_text(json.dumps(data), encoding="utf-8")
        with self.assertRaises(ManifestError):
            load_manifest(path)

    def test_manifest_errors(self):
        with self.assertRaises(ManifestError):
            load_manifest(self.test_dir / "missing.json")
        bad = self.test_dir / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        with self.assertRaises(ManifestError):
            load_manifest(bad)
        unsealed = self.test_dir / "unsealed.json"
        unsealed.write_text(json.dumps({"command": "eigen"}), encoding="utf-8")
        with self.assertRaises(ManifestError):
            load_manifest(unsealed)

    def test_write_diagnostic(self):
        path = write_diagnostic(self.test_dir, "Newton non convergente\n\n")
        self.assertEqual(path.name, DIAGNOSTIC_FILENAME)
        self.assertEqual(path.read_text(encoding="utf-8"), "Newton non convergente\n")

    @patch('src.file_handler.Path.mkdir')
    @patch("builtins.open", new_callable=mock_open)
    def test_write_diagnostic_uses_utf8(self, mock_file_open, mock_mkdir):
        write_diagnostic(Path("out"), "messaggio")
        mock_file_open.assert_called_once_with(Path("out") / DIAGNOSTIC_FILENAME, "w", encoding="utf-8")
        mock_file_open().write.assert_called_once_with("messaggio\n")


if __name__ == '__main__':
    unittest.main()
