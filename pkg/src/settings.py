from pathlib import Path
import logging
import os
from typing import Optional

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

DEFAULT_THREADS = 1
THREADS_ENV_VAR = "HARDYFLOW_THREADS"
LOG_DIR_ENV_VAR = "HARDYFLOW_LOG_DIR"

# Process-wide settings, filled by configure_environment()
WORKER_THREADS = DEFAULT_THREADS
ENVIRONMENT_CONFIGURED = False


def configure_environment(env_path: Optional[Path] = None) -> bool:
    """
    Loads the process environment used by hardyflow.

    A `.env` file in the working directory (or at `env_path`) is loaded first,
    then HARDYFLOW_THREADS is read and validated. Invalid values fall back to
    the default of one worker, which keeps every run bit-reproducible.

    Args:
        env_path (Path | None): Explicit path of the .env file to load.

    Returns:
        bool: True if the worker count came from a valid setting or the default,
              False if an invalid value had to be replaced.
    """
    global WORKER_THREADS, ENVIRONMENT_CONFIGURED

    dotenv_file = env_path if env_path is not None else Path('.').resolve() / '.env'
    if dotenv_file.exists():
        load_dotenv(dotenv_path=dotenv_file)
        logger.info(f"Variabili d'ambiente caricate da: {dotenv_file}")
    else:
        logger.debug("File .env non trovato. Si utilizzeranno le variabili d'ambiente di sistema, se presenti.")

    raw_threads = os.getenv(THREADS_ENV_VAR)
    ENVIRONMENT_CONFIGURED = True
    if raw_threads is None or raw_threads.strip() == "":
        WORKER_THREADS = DEFAULT_THREADS
        logger.debug(f"{THREADS_ENV_VAR} non impostata, utilizzo {DEFAULT_THREADS} worker.")
        return True

    try:
        threads = int(raw_threads)
    except ValueError:
        logger.error(f"Valore non valido per {THREADS_ENV_VAR}: '{raw_threads}'. Utilizzo {DEFAULT_THREADS} worker.")
        WORKER_THREADS = DEFAULT_THREADS
        return False

    if threads < 1:
        logger.error(f"{THREADS_ENV_VAR} deve essere >= 1 (ricevuto {threads}). Utilizzo {DEFAULT_THREADS} worker.")
        WORKER_THREADS = DEFAULT_THREADS
        return False

    WORKER_THREADS = threads
    logger.info(f"Numero di worker configurato: {WORKER_THREADS}")
    return True


def worker_threads() -> int:
    """Returns the configured worker cap, configuring the environment on first use."""
    if not ENVIRONMENT_CONFIGURED:
        configure_environment()
    return WORKER_THREADS


def log_directory(project_root: Path) -> Path:
    """Returns the log directory: HARDYFLOW_LOG_DIR if set, else <project_root>/logs."""
    override = os.getenv(LOG_DIR_ENV_VAR)
    if override:
        return Path(override)
    return project_root / "logs"
