from pathlib import Path
import csv
import hashlib
import json
import logging
from typing import Dict, List, Optional, Sequence

from dotenv import dotenv_values
import numpy as np

from .errors import ManifestError

logger = logging.getLogger(__name__)

SUPPORTED_CONFIG_EXTENSIONS = [".cfg", ".conf", ".env", ".ini", ".txt"]
MANIFEST_FILENAME = "manifest.json"
DIAGNOSTIC_FILENAME = "diagnostic.txt"
DIGEST_CHUNK_SIZE = 1 << 16


def validate_config_file(config_path: Path) -> bool:
    """
    Validates if the given path points to a readable key=value configuration file.

    Checks for file existence, if it's actually a file (not a directory),
    and if its extension is one of `SUPPORTED_CONFIG_EXTENSIONS` (case-insensitive).

    Args:
        config_path (Path): The path to the configuration file.

    Returns:
        bool: True if the configuration file is valid, False otherwise.
    """
    if not isinstance(config_path, Path):
        logger.error(f"Percorso non valido fornito a validate_config_file: {config_path} (tipo: {type(config_path)}). Previsto un oggetto Path.")
        return False

    if not config_path.exists():
        logger.warning(f"File di configurazione non trovato: {config_path}")
        return False
    if not config_path.is_file():
        logger.warning(f"Il percorso di configurazione specificato non è un file: {config_path}")
        return False
    if config_path.suffix.lower() not in SUPPORTED_CONFIG_EXTENSIONS:
        logger.warning(
            f"Estensione file non supportata per {config_path.name}. "
            f"Supportate: {', '.join(SUPPORTED_CONFIG_EXTENSIONS)} (ignora maiuscole/minuscole)."
        )
        return False
    logger.debug(f"File di configurazione valido: {config_path}")
    return True


def load_config(config_path: Path) -> Optional[Dict[str, Optional[str]]]:
    """
    Reads a flat key=value configuration file.

    Comments (`#`) and blank lines are allowed. Keys are returned as written;
    checking them against the known keys is left to the caller.

    Args:
        config_path (Path): Path of the configuration file.

    Returns:
        dict | None: Raw key/value pairs, or None if the file cannot be read.
    """
    if not validate_config_file(config_path):
        return None
    try:
        values = dotenv_values(dotenv_path=config_path, interpolate=False)
    except PermissionError:
        logger.error(f"Permesso negato durante la lettura della configurazione: {config_path}", exc_info=True)
        return None
    except UnicodeDecodeError as e:
        logger.error(f"Errore di decodifica della configurazione {config_path} (assicurarsi che sia UTF-8): {e}", exc_info=True)
        return None
    except OSError as e:
        logger.error(f"Errore I/O durante la lettura della configurazione {config_path}: {e}", exc_info=True)
        return None
    logger.info(f"Configurazione caricata da: {config_path} ({len(values)} chiavi)")
    return dict(values)


def ensure_directory(directory: Path) -> bool:
    """Creates `directory` (and parents) if needed. Returns False on failure."""
    if not isinstance(directory, Path):
        logger.error(f"Percorso directory di output non valido: {directory}. Previsto Path.")
        return False
    try:
        directory.mkdir(parents=True, exist_ok=True)
        logger.debug(f"Directory di output assicurata/creata: {directory}")
        return True
    except PermissionError:
        logger.error(f"Permesso negato nella creazione della directory di output: {directory}", exc_info=True)
        return False
    except OSError as e:
        logger.error(f"Errore OS durante la creazione della directory di output {directory}: {e}", exc_info=True)
        return False


def format_value(value) -> str:
    """CSV cell text: floats with 17 significant digits, everything else via str()."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    try:
        return f"{float(value):.17g}"
    except (TypeError, ValueError):
        return str(value)


def write_csv(output_path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Optional[Path]:
    """
    Writes a CSV file with the given header; numeric cells keep 17 significant digits.

    Args:
        output_path (Path): Destination file; its directory is created if needed.
        header (Sequence[str]): Column names, written verbatim.
        rows (Sequence[Sequence]): Data rows.

    Returns:
        Path | None: The written path, or None if an error occurred.
    """
    if not ensure_directory(output_path.parent):
        return None
    try:
        with open(output_path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(list(header))
            for row in rows:
                writer.writerow([format_value(cell) for cell in row])
        logger.info(f"CSV salvato con successo in: {output_path} ({len(rows)} righe)")
        return output_path
    except PermissionError:
        logger.error(f"Permesso negato durante il salvataggio del CSV in {output_path}", exc_info=True)
        return None
    except OSError as e:
        logger.error(f"Errore I/O durante il salvataggio del CSV in {output_path}: {e}", exc_info=True)
        return None


def read_csv(csv_path: Path) -> Optional[List[Dict[str, str]]]:
    """Reads a CSV written by write_csv into a list of row dicts, or None on error."""
    if not isinstance(csv_path, Path) or not csv_path.is_file():
        logger.error(f"File CSV non trovato o non è un file: {csv_path}")
        return None
    try:
        with open(csv_path, "r", encoding="utf-8", newline="") as f:
            return list(csv.DictReader(f))
    except (OSError, csv.Error) as e:
        logger.error(f"Errore durante la lettura del CSV {csv_path}: {e}", exc_info=True)
        return None


def file_digest(path: Path) -> str:
    """sha256 hex digest of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(DIGEST_CHUNK_SIZE), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _seal(content: Dict) -> str:
    canonical = json.dumps(content, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(output_dir: Path, content: Dict) -> Optional[Path]:
    """
    Writes `manifest.json` into `output_dir`, adding a seal: the sha256 of the
    canonical JSON of everything else in the manifest.
    """
    if not ensure_directory(output_dir):
        return None
    sealed = dict(content)
    sealed.pop("seal", None)
    sealed["seal"] = _seal(sealed)
    manifest_path = output_dir / MANIFEST_FILENAME
    try:
        with open(manifest_path, "w", encoding="utf-8") as f:
            json.dump(sealed, f, indent=2, sort_keys=True)
            f.write("\n")
        logger.info(f"Manifest salvato in: {manifest_path}")
        return manifest_path
    except OSError as e:
        logger.error(f"Errore I/O durante il salvataggio del manifest {manifest_path}: {e}", exc_info=True)
        return None


def load_manifest(manifest_path: Path) -> Dict:
    """
    Reads and unseals a manifest.

    Raises:
        ManifestError: if the file is missing, not JSON, or its seal does not match.
    """
    if not isinstance(manifest_path, Path) or not manifest_path.is_file():
        raise ManifestError(f"Manifest non trovato: {manifest_path}")
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            content = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestError(f"Manifest illeggibile {manifest_path}: {e}") from e
    if not isinstance(content, dict) or "seal" not in content:
        raise ManifestError(f"Manifest privo di sigillo: {manifest_path}")
    seal = content.pop("seal")
    if seal != _seal(content):
        raise ManifestError(f"Sigillo del manifest non valido (contenuto modificato): {manifest_path}")
    return content


def write_diagnostic(output_dir: Path, message: str) -> Optional[Path]:
    """Writes the failure diagnostic of a run. Returns None if it cannot be written."""
    if not ensure_directory(output_dir):
        return None
    path = output_dir / DIAGNOSTIC_FILENAME
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(message.rstrip() + "\n")
        logger.info(f"Diagnostica salvata in: {path}")
        return path
    except OSError as e:
        logger.error(f"Errore I/O durante il salvataggio della diagnostica {path}: {e}", exc_info=True)
        return None
