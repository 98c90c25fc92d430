"""
Run configuration: the flat key=value table shared by every subcommand.

Raw values come from `file_handler.load_config` (a dotenv-style file) and from
repeated `--set key=value` flags, which win over the file.
"""
from dataclasses import asdict, dataclass, field
import logging
from typing import Callable, Dict, Iterable, Mapping, Optional, Tuple

from .constants import ProblemParams, validate
from .eigensolver import DEFAULT_MAX_ITER as EIGEN_MAX_ITER, DEFAULT_TOL as EIGEN_TOL
from .equilibrium import (DEFAULT_BRANCH_DELTA, DEFAULT_BRANCH_STEPS, DEFAULT_NEWTON_MAX_ITER,
                          DEFAULT_NEWTON_TOL)
from .errors import ConfigurationError, DimensionError, ParameterRangeError
from .radial_forms import DEFAULT_GRADING, DEFAULT_M
from .semiflow import DEFAULT_DT, DEFAULT_DT_MAX, DEFAULT_T, DEFAULT_T_CAP, STALL_TOL

logger = logging.getLogger(__name__)

TRUE_WORDS = {"1", "true", "yes", "on"}
FALSE_WORDS = {"0", "false", "no", "off"}


def _parse_bool(text: str) -> bool:
    word = text.strip().lower()
    if word in TRUE_WORDS:
        return True
    if word in FALSE_WORDS:
        return False
    raise ValueError(f"valore booleano non riconosciuto: '{text}'")


def _parse_optional_float(text: str) -> Optional[float]:
    if text.strip().lower() in {"", "none", "auto"}:
        return None
    return float(text)


# key -> (parser, default)
KNOWN_KEYS: Dict[str, Tuple[Callable[[str], object], object]] = {
    "N": (int, 3),
    "R": (float, 1.0),
    "r_in": (float, 0.0),
    "mu": (float, 0.25),
    "gamma": (float, 1.0),
    "lambda": (float, 0.0),
    "validation_mode": (_parse_bool, False),
    "mesh.M": (int, DEFAULT_M),
    "mesh.grading": (float, DEFAULT_GRADING),
    "eigen.tol": (float, EIGEN_TOL),
    "eigen.k": (int, 1),
    "eigen.max_iter": (int, EIGEN_MAX_ITER),
    "newton.tol": (float, DEFAULT_NEWTON_TOL),
    "newton.max_iter": (int, DEFAULT_NEWTON_MAX_ITER),
    "branch.steps": (int, DEFAULT_BRANCH_STEPS),
    "branch.lambda_max": (_parse_optional_float, None),
    "branch.delta": (float, DEFAULT_BRANCH_DELTA),
    "branch.geometric": (_parse_bool, False),
    "semiflow.dt": (float, DEFAULT_DT),
    "semiflow.T": (float, DEFAULT_T),
    "semiflow.record_every": (int, 1),
    "omega.tol": (float, STALL_TOL),
    "omega.t_cap": (float, DEFAULT_T_CAP),
    "omega.dt_max": (float, DEFAULT_DT_MAX),
}


@dataclass(frozen=True)
class RunConfig:
    params: ProblemParams = field(default_factory=ProblemParams)
    M: int = DEFAULT_M
    grading: float = DEFAULT_GRADING
    eigen_tol: float = EIGEN_TOL
    eigen_k: int = 1
    eigen_max_iter: int = EIGEN_MAX_ITER
    newton_tol: float = DEFAULT_NEWTON_TOL
    newton_max_iter: int = DEFAULT_NEWTON_MAX_ITER
    branch_steps: int = DEFAULT_BRANCH_STEPS
    branch_lambda_max: Optional[float] = None
    branch_delta: float = DEFAULT_BRANCH_DELTA
    branch_geometric: bool = False
    dt: float = DEFAULT_DT
    T: float = DEFAULT_T
    record_every: int = 1
    omega_tol: float = STALL_TOL
    omega_t_cap: float = DEFAULT_T_CAP
    omega_dt_max: float = DEFAULT_DT_MAX
    resolved: Dict[str, object] = field(default_factory=dict, compare=False)

    @property
    def lam(self) -> float:
        return self.params.lam

    def tolerances(self) -> Dict[str, float]:
        """Per-module tolerances recorded in the run manifest."""
        return {"eigen": self.eigen_tol, "newton": self.newton_tol, "omega": self.omega_tol}

    def as_dict(self) -> Dict[str, object]:
        content = asdict(self)
        content.pop("resolved", None)
        return content


def parse_overrides(items: Optional[Iterable[str]]) -> Dict[str, str]:
    """
    Turns `--set key=value` items into a dict (later items win).

    Raises:
        ConfigurationError: for an item without '=' or with an empty key.
    """
    overrides: Dict[str, str] = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError(f"Override non valido '{item}': atteso chiave=valore")
        overrides[key] = value.strip()
    return overrides


def parse_config(raw: Mapping[str, Optional[str]], overrides: Optional[Mapping[str, str]] = None) -> RunConfig:
    """
    Builds a typed RunConfig from raw key/value strings.

    Args:
        raw (Mapping): Values read from the configuration file.
        overrides (Mapping | None): Values from `--set`, applied after `raw`.

    Returns:
        RunConfig: The resolved configuration; `resolved` holds every known key
                   with its final value, as written into the manifest.

    Raises:
        ConfigurationError: for unknown keys, keys without a value or unparsable values.
        DimensionError: for N < 3.
        ParameterRangeError: when the problem parameters are not admissible.
    """
    merged: Dict[str, Optional[str]] = dict(raw)
    merged.update(overrides or {})

    unknown = sorted(set(merged) - set(KNOWN_KEYS))
    if unknown:
        raise ConfigurationError(f"Chiavi di configurazione sconosciute: {', '.join(unknown)}")

    values: Dict[str, object] = {}
    for key, (parser, default) in KNOWN_KEYS.items():
        if key not in merged:
            values[key] = default
            continue
        text = merged[key]
        if text is None:
            raise ConfigurationError(f"Chiave '{key}' senza valore")
        try:
            values[key] = parser(text)
        except ValueError as e:
            raise ConfigurationError(f"Valore non valido per '{key}': '{text}' ({e})") from e

    params = ProblemParams(N=values["N"], R=values["R"], r_in=values["r_in"], mu=values["mu"],
                           gamma=values["gamma"], lam=values["lambda"], validation_mode=values["validation_mode"])
    if params.N < 3:
        raise DimensionError(f"Dimensione N={params.N} non supportata (serve N >= 3)")
    report = validate(params)
    if not report.is_valid:
        raise ParameterRangeError(f"Parametri non ammissibili: {report}")
    if values["mesh.M"] < 1 or values["semiflow.record_every"] < 1 or values["eigen.k"] < 1:
        raise ConfigurationError("mesh.M, eigen.k e semiflow.record_every devono essere positivi")

    config = RunConfig(
        params=params,
        M=values["mesh.M"],
        grading=values["mesh.grading"],
        eigen_tol=values["eigen.tol"],
        eigen_k=values["eigen.k"],
        eigen_max_iter=values["eigen.max_iter"],
        newton_tol=values["newton.tol"],
        newton_max_iter=values["newton.max_iter"],
        branch_steps=values["branch.steps"],
        branch_lambda_max=values["branch.lambda_max"],
        branch_delta=values["branch.delta"],
        branch_geometric=values["branch.geometric"],
        dt=values["semiflow.dt"],
        T=values["semiflow.T"],
        record_every=values["semiflow.record_every"],
        omega_tol=values["omega.tol"],
        omega_t_cap=values["omega.t_cap"],
        omega_dt_max=values["omega.dt_max"],
        resolved=values,
    )
    logger.debug(f"Configurazione risolta: {values}")
    return config
