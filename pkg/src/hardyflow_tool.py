import logging
import sys # Per sys.stdout nel logging
from pathlib import Path # Per la directory dei log

from .settings import log_directory

# --- Logger Setup PRIMA DI TUTTO ---
PROJECT_ROOT_FOR_LOGGING = Path(__file__).resolve().parent.parent
LOG_FILE_NAME_FOR_LOGGING = "hardyflow.log"
LOG_DIRECTORY_FOR_LOGGING = log_directory(PROJECT_ROOT_FOR_LOGGING)

LOG_DIRECTORY_FOR_LOGGING.mkdir(parents=True, exist_ok=True)

logging.basicConfig(
    level=logging.DEBUG,
    format="%(asctime)s - %(name)s - %(levelname)s - %(module)s.%(funcName)s:%(lineno)d - %(message)s",
    handlers=[
        logging.FileHandler(LOG_DIRECTORY_FOR_LOGGING / LOG_FILE_NAME_FOR_LOGGING, mode='a', encoding='utf-8'),
        logging.StreamHandler(sys.stdout)
    ]
)

# Console a INFO, file a DEBUG (dopo basicConfig)
for handler in logging.getLogger().handlers:
    if isinstance(handler, logging.FileHandler):
        handler.setLevel(logging.DEBUG)
    elif isinstance(handler, logging.StreamHandler):
        handler.setLevel(logging.INFO)

# Ora le altre importazioni
import argparse
from datetime import datetime, timezone
import tempfile
import time
from typing import Callable, Dict, List, Optional

import numpy as np

from .eigensolver import MU_SWEEP_HEADER, mu_sweep, mu_sweep_rows, principal_eigenpair, spectrum
from .equilibrium import BRANCH_HEADER, check_uniqueness, trace_branch
from .errors import (ConfigurationError, DimensionError, HardyflowError, ManifestError, NumericalError,
                     OutputError, ParameterRangeError)
from .excision import EXCISION_HEADER, excision_sweep
from .file_handler import (ensure_directory, file_digest, load_config, load_manifest, read_csv, write_csv,
                           write_diagnostic, write_manifest)
from .mu_limit import MU_LIMIT_HEADER, branch_mu_sweep, h10_blowup_probe
from .radial_forms import DiscreteForms, assemble, build_mesh, export_nodes_csv, save_forms
from .run_config import RunConfig, parse_config, parse_overrides
from .semiflow import (TRAJECTORY_HEADER, equilibrium_set, evolve, omega_limit, parse_phi0,
                       sign_invariance_check)
from .settings import configure_environment, worker_threads
from .svg_plot import bifurcation_diagram, mu_limit_panel

# --- Constants ---
ARTIFACT_VERSION = "1.0.0"
DEFAULT_OUTPUT_DIR = Path("output")
EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2
FORMS_FILENAME = "forms.npz"
NODES_FILENAME = "nodes.csv"
DEFAULT_PHI0 = "eig*0.1"
SPECTRUM_HEADER = ["index", "eigenvalue"]
UNIQUENESS_HEADER = ["lambda", "starts", "failures", "trivial", "max_spread", "unique"]
OMEGA_HEADER = ["label", "distance", "t", "steps", "J", "velocity"]
USAGE_ERRORS = (ConfigurationError, DimensionError, ParameterRangeError)

logger = logging.getLogger(__name__)


def create_parser() -> argparse.ArgumentParser:
    """
    Creates and configures the argument parser for the CLI.

    Returns:
        argparse.ArgumentParser: The configured argument parser.
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="File di configurazione chiave=valore.")
    common.add_argument("--output-dir", type=Path, default=DEFAULT_OUTPUT_DIR,
                        help=f"Directory dei risultati. Default: ./{DEFAULT_OUTPUT_DIR}")
    common.add_argument("--set", action="append", default=[], metavar="CHIAVE=VALORE",
                        help="Sovrascrive una chiave della configurazione (ripetibile).")

    parser = argparse.ArgumentParser(
        description="hardyflow: equazione del calore semilineare con potenziale di Hardy su domini radiali."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    eigen = sub.add_parser("eigen", parents=[common], help="Autovalore principale e sweep in mu.")
    eigen.add_argument("--mu-list", default=None, help="Lista di mu separati da virgole.")
    eigen.add_argument("--k", type=int, default=None, help="Numero di autovalori dello spettro.")

    branch = sub.add_parser("branch", parents=[common], help="Ramo di equilibri non negativi.")
    branch.add_argument("--lambda-max", type=float, default=None, help="Estremo destro del ramo.")
    branch.add_argument("--steps", type=int, default=None, help="Numero di punti del ramo.")
    branch.add_argument("--uniqueness-starts", type=int, default=None,
                        help="Dati iniziali per il controllo di unicità.")

    excision = sub.add_parser("excision", parents=[common], help="Corone r < |x| < R con r -> 0.")
    excision.add_argument("--radii", required=True, help="Raggi interni decrescenti separati da virgole.")
    excision.add_argument("--lambda", dest="lam", type=float, default=None, help="Valore di lambda.")

    for name, help_text in (("evolve", "Integrazione del semiflusso."), ("omega", "Insieme omega-limite.")):
        flow = sub.add_parser(name, parents=[common], help=help_text)
        flow.add_argument("--phi0", default=DEFAULT_PHI0, help=f"Dato iniziale. Default: {DEFAULT_PHI0}")
        flow.add_argument("--lambda", dest="lam", type=float, default=None, help="Valore di lambda.")
        if name == "evolve":
            flow.add_argument("--T", type=float, default=None, help="Orizzonte temporale.")
            flow.add_argument("--dt", type=float, default=None, help="Passo temporale.")

    mu_limit = sub.add_parser("mu-limit", parents=[common], help="Studio mu -> mu_star.")
    mu_limit.add_argument("--mu-list", required=True, help="Lista crescente di mu separati da virgole.")
    mu_limit.add_argument("--lambda", dest="lam", required=True,
                          help="Valore fisso di lambda oppure schedule[:d1,d2,...] (lambda_1,mu + d).")

    figure = sub.add_parser("figure", parents=[common], help="Figure SVG da tabelle CSV.")
    figure.add_argument("--branch-csv", type=Path, required=True, help="Tabella prodotta da 'branch'.")
    figure.add_argument("--mu-limit-csv", type=Path, default=None, help="Tabella prodotta da 'mu-limit'.")

    replay = sub.add_parser("replay", help="Riesegue un manifest e verifica i digest.")
    replay.add_argument("--manifest", type=Path, required=True, help="Percorso del manifest.json.")
    replay.add_argument("--set", action="append", default=[], help=argparse.SUPPRESS)

    return parser


def parse_float_list(text: str, name: str) -> List[float]:
    """Comma-separated floats; raises ConfigurationError on malformed input."""
    try:
        values = [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise ConfigurationError(f"Lista non valida per {name}: '{text}'") from e
    if not values:
        raise ConfigurationError(f"Lista vuota per {name}")
    return values


def command_options(args: argparse.Namespace) -> Dict[str, object]:
    """Subcommand flags as a JSON-friendly dict (paths resolved), as stored in the manifest."""
    skip = {"command", "config", "output_dir", "set"}
    options = {}
    for key, value in vars(args).items():
        if key in skip:
            continue
        options[key] = str(value.resolve()) if isinstance(value, Path) else value
    return options


def _forms(config: RunConfig) -> DiscreteForms:
    return assemble(build_mesh(config.params, config.M, config.grading), config.params)


def _lambda(config: RunConfig, options: Dict) -> float:
    lam = options.get("lam")
    return config.lam if lam is None else float(lam)


def _emit(output_dir: Path, name: str, header: List[str], rows: List[list]) -> Path:
    path = write_csv(output_dir / name, header, rows)
    if path is None:
        raise OutputError(f"Impossibile scrivere {name} in {output_dir}")
    return path


def run_eigen(config: RunConfig, options: Dict, output_dir: Path) -> Dict[str, Path]:
    mus = parse_float_list(options["mu_list"], "--mu-list") if options.get("mu_list") else [config.params.mu]
    rows = mu_sweep(config.params, mus, M=config.M, grading=config.grading, tol=config.eigen_tol)
    outputs = {"eigen.csv": _emit(output_dir, "eigen.csv", MU_SWEEP_HEADER, mu_sweep_rows(rows))}
    k = options.get("k") or config.eigen_k
    if k > 1:
        spec = spectrum(_forms(config), k, tol=config.eigen_tol)
        table = [[i + 1, value] for i, value in enumerate(spec.eigenvalues)]
        outputs["spectrum.csv"] = _emit(output_dir, "spectrum.csv", SPECTRUM_HEADER, table)
    return outputs


def run_branch(config: RunConfig, options: Dict, output_dir: Path) -> Dict[str, Path]:
    lambda_max = options.get("lambda_max")
    if lambda_max is None:
        lambda_max = config.branch_lambda_max
    if lambda_max is None:
        raise ConfigurationError("Serve --lambda-max oppure la chiave branch.lambda_max")
    forms = _forms(config)
    eigen = principal_eigenpair(forms, tol=config.eigen_tol, max_iter=config.eigen_max_iter)
    branch = trace_branch(forms, lambda_max, steps=options.get("steps") or config.branch_steps,
                          tol=config.newton_tol, delta=config.branch_delta, geometric=config.branch_geometric,
                          eigen=eigen, max_iter=config.newton_max_iter)
    # la riga di innesco (lambda_1, u = 0) apre la tabella
    rows = [[branch.onset, 0.0, 0.0, 0.0, 0.0, 0, 0.0]] + branch.rows()
    outputs = {"branch.csv": _emit(output_dir, "branch.csv", BRANCH_HEADER, rows)}

    figure = bifurcation_diagram(read_csv(outputs["branch.csv"]) or [], output_dir / "bifurcation.svg")
    if figure is None:
        raise OutputError(f"Impossibile scrivere bifurcation.svg in {output_dir}")
    outputs["bifurcation.svg"] = figure

    starts = options.get("uniqueness_starts")
    if starts and branch.points:
        picks = sorted({0, len(branch.points) // 2, len(branch.points) - 1})
        table = []
        for i in picks:
            report = check_uniqueness(forms, branch.points[i].lam, n_starts=starts, tol=config.newton_tol, eigen=eigen)
            table.append([report.lam, starts, len(report.failures), report.trivial_count, report.max_spread,
                          report.unique])
        outputs["uniqueness.csv"] = _emit(output_dir, "uniqueness.csv", UNIQUENESS_HEADER, table)

    if branch.truncated:
        write_diagnostic(output_dir, branch.diagnostic or "Ramo troncato.")
    return outputs


def run_excision(config: RunConfig, options: Dict, output_dir: Path) -> Dict[str, Path]:
    radii = parse_float_list(options["radii"], "--radii")
    sweep = excision_sweep(config.params, radii, _lambda(config, options), tol=config.newton_tol, M=config.M,
                           eigen_tol=config.eigen_tol)
    return {"excision.csv": _emit(output_dir, "excision.csv", EXCISION_HEADER, sweep.csv_rows())}


def run_evolve(config: RunConfig, options: Dict, output_dir: Path) -> Dict[str, Path]:
    forms = _forms(config)
    eigen = principal_eigenpair(forms, tol=config.eigen_tol, max_iter=config.eigen_max_iter)
    phi0 = parse_phi0(options.get("phi0") or DEFAULT_PHI0, forms, eigen)
    T = options.get("T") or config.T
    dt = options.get("dt") or config.dt
    trajectory = evolve(forms, phi0, T=T, dt=dt, record_every=config.record_every, lam=_lambda(config, options))
    outputs = {"trajectory.csv": _emit(output_dir, "trajectory.csv", TRAJECTORY_HEADER, trajectory.rows())}
    sign_invariance_check(trajectory)
    if trajectory.truncated:
        raise NumericalError(trajectory.diagnostic or "Traiettoria troncata.")
    return outputs


def run_omega(config: RunConfig, options: Dict, output_dir: Path) -> Dict[str, Path]:
    forms = _forms(config)
    lam = _lambda(config, options)
    eigen = principal_eigenpair(forms, tol=config.eigen_tol, max_iter=config.eigen_max_iter)
    phi0 = parse_phi0(options.get("phi0") or DEFAULT_PHI0, forms, eigen)
    equilibria = equilibrium_set(forms, lam, eigen)
    result = omega_limit(forms, phi0, tol=config.omega_tol, t_cap=config.omega_t_cap, equilibria=equilibria,
                         lam=lam, dt0=config.dt, dt_max=config.omega_dt_max)
    row = [result.label, result.distance, result.t, result.steps, result.J, result.velocity]
    outputs = {"omega.csv": _emit(output_dir, "omega.csv", OMEGA_HEADER, [row])}
    if result.label == "undecided":
        write_diagnostic(output_dir, f"Classificazione indecisa a t={result.t}: distanza {result.distance:.3e}")
    return outputs


def run_mu_limit(config: RunConfig, options: Dict, output_dir: Path) -> Dict[str, Path]:
    mus = parse_float_list(options["mu_list"], "--mu-list")
    lam_spec = str(options["lam"]).strip()
    if lam_spec.startswith("schedule"):
        _, _, tail = lam_spec.partition(":")
        deltas = parse_float_list(tail, "--lambda schedule") if tail else None
        report = h10_blowup_probe(config.params, mus, deltas=deltas, M=config.M, grading=config.grading,
                                  tol=config.newton_tol)
        table = report.table
        if not report.reproduced:
            write_diagnostic(
                output_dir,
                f"Crescita H01 non riprodotta: lungo n={report.growth_along_n}, "
                f"lungo raffinamento={report.growth_along_refinement}, saturazione={report.saturated}",
            )
    else:
        try:
            lam = float(lam_spec)
        except ValueError as e:
            raise ConfigurationError(f"--lambda non valido: '{lam_spec}'") from e
        table = branch_mu_sweep(config.params, mus, lam, tol=config.newton_tol, M=config.M, grading=config.grading)
    return {"mu_limit.csv": _emit(output_dir, "mu_limit.csv", MU_LIMIT_HEADER, table.csv_rows())}


def run_figure(config: RunConfig, options: Dict, output_dir: Path) -> Dict[str, Path]:
    branch_rows = read_csv(Path(options["branch_csv"]))
    if branch_rows is None:
        raise ConfigurationError(f"Tabella del ramo non leggibile: {options['branch_csv']}")
    outputs = {}
    figure = bifurcation_diagram(branch_rows, output_dir / "bifurcation.svg")
    if figure is None:
        raise OutputError(f"Impossibile scrivere bifurcation.svg in {output_dir}")
    outputs["bifurcation.svg"] = figure
    if options.get("mu_limit_csv"):
        mu_rows = read_csv(Path(options["mu_limit_csv"]))
        if mu_rows is None:
            raise ConfigurationError(f"Tabella mu-limit non leggibile: {options['mu_limit_csv']}")
        panel = mu_limit_panel(mu_rows, output_dir / "mu_limit.svg")
        if panel is None:
            raise OutputError(f"Impossibile scrivere mu_limit.svg in {output_dir}")
        outputs["mu_limit.svg"] = panel
    return outputs


COMMANDS: Dict[str, Callable[[RunConfig, Dict, Path], Dict[str, Path]]] = {
    "eigen": run_eigen,
    "branch": run_branch,
    "excision": run_excision,
    "evolve": run_evolve,
    "omega": run_omega,
    "mu-limit": run_mu_limit,
    "figure": run_figure,
}


def _dump_forms(config: RunConfig, output_dir: Path) -> Dict[str, Path]:
    forms = _forms(config)
    nodes = export_nodes_csv(forms.mesh, output_dir / NODES_FILENAME)
    if nodes is None:
        raise OutputError(f"Impossibile scrivere {NODES_FILENAME} in {output_dir}")
    return {FORMS_FILENAME: save_forms(forms, output_dir / FORMS_FILENAME), NODES_FILENAME: nodes}


def execute(command: str, config: RunConfig, options: Dict, output_dir: Path) -> Dict[str, Path]:
    """
    Runs one subcommand and returns its output files by name. Every subcommand
    but `figure` also writes the forms dump and the node radii of its mesh.
    """
    if command not in COMMANDS:
        raise ConfigurationError(f"Sottocomando sconosciuto: {command}")
    if not ensure_directory(output_dir):
        raise OutputError(f"Impossibile creare la directory dei risultati: {output_dir}")
    logger.info(f"Esecuzione di '{command}' (N={config.params.N}, mu={config.params.mu}, M={config.M})")
    outputs = COMMANDS[command](config, options, output_dir)
    if command != "figure":
        outputs.update(_dump_forms(config, output_dir))
    return outputs


def run(command: str, options: Dict, config_path: Optional[Path], overrides: Optional[List[str]],
        output_dir: Path) -> int:
    """
    Executes a subcommand and writes its outputs plus a sealed manifest.

    Args:
        command (str): One of COMMANDS.
        options (dict): Subcommand flags (see command_options).
        config_path (Path | None): Configuration file; only `figure` may omit it.
        overrides (list[str] | None): `--set key=value` items.
        output_dir (Path): Directory of the results.

    Returns:
        int: 0 on success, 1 on numerical failure (diagnostic.txt written),
             2 on usage or configuration errors (no outputs).
    """
    try:
        raw: Dict[str, Optional[str]] = {}
        if config_path is not None:
            loaded = load_config(config_path)
            if loaded is None:
                logger.error(f"Impossibile caricare la configurazione: {config_path}")
                return EXIT_USAGE
            raw = loaded
        elif command != "figure":
            logger.error(f"Il sottocomando '{command}' richiede --config.")
            return EXIT_USAGE
        merged = dict(raw)
        merged.update(parse_overrides(overrides))
        config = parse_config(merged)
    except USAGE_ERRORS as e:
        logger.error(f"Configurazione non valida: {e}")
        return EXIT_USAGE

    started_at = datetime.now(timezone.utc).isoformat()
    clock = time.perf_counter()
    try:
        outputs = execute(command, config, options, output_dir)
    except USAGE_ERRORS as e:
        logger.error(f"Argomenti non validi per '{command}': {e}")
        return EXIT_USAGE
    except (HardyflowError, np.linalg.LinAlgError, FloatingPointError) as e:
        logger.error(f"Fallimento numerico in '{command}': {e}", exc_info=True)
        write_diagnostic(output_dir, f"{command}: {type(e).__name__}: {e}")
        return EXIT_NUMERICAL

    manifest = {
        "artifact_version": ARTIFACT_VERSION,
        "command": command,
        "config_file": str(config_path) if config_path is not None else None,
        "config": merged,
        "resolved": config.resolved,
        "options": options,
        "tolerances": config.tolerances(),
        "threads": worker_threads(),
        "started_at": started_at,
        "wall_clock_seconds": time.perf_counter() - clock,
        "outputs": {name: file_digest(path) for name, path in sorted(outputs.items())},
    }
    if write_manifest(output_dir, manifest) is None:
        return EXIT_NUMERICAL
    logger.info(f"'{command}' completato: {', '.join(sorted(outputs))}")
    return EXIT_OK


def replay(manifest_path: Path, overrides: Optional[List[str]] = None) -> int:
    """
    Re-executes a sealed manifest in a scratch directory and compares the
    digests of both the fresh outputs and the files next to the manifest.

    Returns:
        int: 0 when every digest matches, 1 listing divergent files otherwise,
             2 when the manifest is refused (overrides, version, seal).
    """
    if overrides:
        logger.error("Il manifest è sigillato: replay con override rifiutato.")
        return EXIT_USAGE
    try:
        manifest = load_manifest(manifest_path)
        if manifest.get("artifact_version") != ARTIFACT_VERSION:
            raise ManifestError(
                f"Versione del manifest {manifest.get('artifact_version')} diversa da {ARTIFACT_VERSION}"
            )
        config = parse_config(manifest["config"])
        expected: Dict[str, str] = manifest["outputs"]
        command = manifest["command"]
        options = manifest.get("options", {})
    except (ManifestError, KeyError, *USAGE_ERRORS) as e:
        logger.error(f"Manifest rifiutato: {e}")
        return EXIT_USAGE

    divergent = []
    base = manifest_path.parent
    for name, digest in sorted(expected.items()):
        path = base / name
        if not path.is_file() or file_digest(path) != digest:
            divergent.append(f"{name} (su disco)")

    with tempfile.TemporaryDirectory() as scratch:
        try:
            fresh = execute(command, config, options, Path(scratch))
        except (HardyflowError, np.linalg.LinAlgError, FloatingPointError) as e:
            logger.error(f"Riesecuzione fallita: {e}", exc_info=True)
            return EXIT_NUMERICAL
        for name, digest in sorted(expected.items()):
            path = fresh.get(name)
            if path is None or file_digest(path) != digest:
                divergent.append(f"{name} (rieseguito)")

    if divergent:
        logger.error(f"Digest non corrispondenti: {', '.join(divergent)}")
        return EXIT_NUMERICAL
    logger.info(f"Replay riuscito: {len(expected)} file identici.")
    return EXIT_OK


def main():
    """
    Main function to parse arguments and dispatch the subcommand.
    """
    logger.info("Avvio hardyflow CLI")
    configure_environment()

    parser = create_parser()
    args = parser.parse_args()
    logger.debug(f"Argomenti CLI ricevuti: {args}")

    if args.command == "replay":
        code = replay(args.manifest, args.set)
    else:
        code = run(args.command, command_options(args), args.config, args.set, args.output_dir)

    if code == EXIT_OK:
        logger.info("Elaborazione completata con successo.")
    else:
        logger.error(f"Elaborazione terminata con codice {code}. Controllare i log per i dettagli.")
    sys.exit(code)

if __name__ == "__main__":
    # python -m src.hardyflow_tool <sottocomando> ...
    main()
