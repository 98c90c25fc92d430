"""
Closed-form constants of the Hardy problem and admissibility of a configuration.

All functions here are pure and thread safe.
"""
from dataclasses import dataclass, field, replace
import logging
import math
from typing import List

from scipy.special import gamma as gamma_function

from .bessel import first_zero_j0
from .errors import DimensionError, ParameterRangeError

logger = logging.getLogger(__name__)

MU_TOLERANCE = 1e-15


def critical_mu(N: int) -> float:
    """Best constant of Hardy's inequality, mu_star(N) = ((N - 2) / 2)^2."""
    if N < 3:
        raise DimensionError(f"La dimensione deve essere N >= 3 (ricevuto N={N}).")
    return ((N - 2) / 2.0) ** 2


def gamma_star(N: int, q: float) -> float:
    """
    Upper bound on the nonlinearity exponent for a given integrability index q.

    gamma_star = (Nq - 2N + 2q) / (2(N - q)), defined for 2N/(N+2) < q < 2.
    For N = 3 this is (5q - 6) / (2(3 - q)).
    """
    if N < 3:
        raise DimensionError(f"La dimensione deve essere N >= 3 (ricevuto N={N}).")
    lower = 2.0 * N / (N + 2.0)
    if not (lower < q < 2.0):
        raise ParameterRangeError(f"q={q} fuori dall'intervallo aperto ({lower}, 2).")
    return (N * q - 2.0 * N + 2.0 * q) / (2.0 * (N - q))


def gamma_supremum(N: int) -> float:
    """Supremum of gamma_star over admissible q: 2 / (N - 2)."""
    if N < 3:
        raise DimensionError(f"La dimensione deve essere N >= 3 (ricevuto N={N}).")
    return 2.0 / (N - 2.0)


def critical_sobolev_exponent(N: int, q: float) -> float:
    """Critical Sobolev exponent p* = qN / (N - q) for 1 <= q < min(2, N)."""
    if N < 3:
        raise DimensionError(f"La dimensione deve essere N >= 3 (ricevuto N={N}).")
    if not (1.0 <= q < min(2.0, N)):
        raise ParameterRangeError(f"q={q} fuori dall'intervallo [1, {min(2, N)}).")
    return q * N / (N - q)


def unit_ball_volume(N: int) -> float:
    """omega_N = pi^(N/2) / Gamma(N/2 + 1)."""
    return float(math.pi ** (N / 2.0) / gamma_function(N / 2.0 + 1.0))


def lambda_omega(N: int, volume: float) -> float:
    """
    Constant of the improved Hardy-Poincare inequality,
    z0^2 * omega_N^(2/N) * |Omega|^(-2/N), with z0 the first zero of J_0.
    """
    if volume <= 0:
        raise ParameterRangeError(f"Il volume deve essere positivo (ricevuto {volume}).")
    z0 = first_zero_j0()
    return z0 ** 2 * unit_ball_volume(N) ** (2.0 / N) * volume ** (-2.0 / N)


@dataclass(frozen=True)
class DomainGeometry:
    """Measure-theoretic data of the ball or annulus {r_in < |x| < R} in R^N."""
    volume: float
    unit_ball_volume: float
    angular_factor: float


def domain_geometry(N: int, R: float, r_in: float = 0.0) -> DomainGeometry:
    omega_n = unit_ball_volume(N)
    return DomainGeometry(
        volume=omega_n * (R ** N - r_in ** N),
        unit_ball_volume=omega_n,
        angular_factor=N * omega_n,
    )


@dataclass(frozen=True)
class ProblemParams:
    """
    Parameters of the semilinear problem on the ball (r_in = 0) or an annulus.

    `lam` is the reaction coefficient lambda. `validation_mode` admits mu = 0
    (classical Laplacian) for oracle checks.
    """
    N: int = 3
    R: float = 1.0
    r_in: float = 0.0
    mu: float = 0.25
    gamma: float = 1.0
    lam: float = 0.0
    validation_mode: bool = False

    @property
    def mu_star(self) -> float:
        return critical_mu(self.N)

    @property
    def is_ball(self) -> bool:
        return self.r_in == 0.0

    @property
    def geometry(self) -> DomainGeometry:
        return domain_geometry(self.N, self.R, self.r_in)

    def with_updates(self, **changes) -> "ProblemParams":
        return replace(self, **changes)


@dataclass
class ValidationReport:
    violations: List[str] = field(default_factory=list)

    @property
    def is_valid(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        return "valid" if self.is_valid else "; ".join(self.violations)


def validate(params: ProblemParams) -> ValidationReport:
    """
    Checks a configuration against the admissible ranges of the problem.

    Returns a report listing each violated constraint; the report is empty
    exactly when the parameters are admissible. Never raises.
    """
    report = ValidationReport()
    if params.N < 3:
        report.violations.append(f"N={params.N} below 3 (dimension error)")
        return report

    if params.R <= 0:
        report.violations.append(f"R={params.R} must be positive")
    if params.r_in < 0 or params.r_in >= params.R:
        report.violations.append(f"r_in={params.r_in} must satisfy 0 <= r_in < R")

    mu_star = critical_mu(params.N)
    if params.validation_mode:
        if params.mu < 0:
            report.violations.append(f"mu={params.mu} must be nonnegative")
    elif params.mu <= 0:
        report.violations.append(f"mu={params.mu} must be positive")
    if params.is_ball and params.mu > mu_star + MU_TOLERANCE:
        report.violations.append(f"mu exceeds mu_star={mu_star:g}")

    if params.gamma <= 0:
        report.violations.append(f"gamma={params.gamma} must be positive")
    elif params.is_ball and params.gamma >= gamma_supremum(params.N):
        report.violations.append(f"gamma ≥ 2/(N−2)={gamma_supremum(params.N):g}")

    if report.violations:
        logger.debug(f"Parametri non ammissibili {params}: {report}")
    return report
