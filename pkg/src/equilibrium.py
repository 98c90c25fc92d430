"""
Nonnegative equilibria of the semilinear problem and the branch bifurcating
from the principal eigenvalue.

The discrete stationary equation is F(v) = K v - lambda M2 v + n(v) = 0 with
n(v) = m |v|^(2 gamma) v on the lumped nonlinear weights m.
"""
from dataclasses import dataclass, field
import logging
import math
from typing import List, Optional

import numpy as np
from scipy.linalg import solve_banded

from .constants import ProblemParams
from .eigensolver import DEFAULT_TOL as EIGEN_TOL, EigenPair, inverse_iteration, principal_eigenpair
from .errors import ConvergenceError, HardyflowError, NumericalError, ParameterRangeError
from .radial_forms import DiscreteForms, NormReport, hmu_norm, norm_report
from .workers import map_ordered

logger = logging.getLogger(__name__)

DEFAULT_NEWTON_TOL = 1e-10
DEFAULT_NEWTON_MAX_ITER = 50
ARMIJO_C = 1e-4
MAX_BACKTRACKS = 30
TRIVIAL_FLOOR = 1e-12
TRIVIAL_L2 = 1e-8
NONNEGATIVE_TOL = 1e-10
DEFAULT_BRANCH_DELTA = 1e-2
DEFAULT_BRANCH_STEPS = 20
UNIQUENESS_TOL = 1e-8
START_OVERSHOOT = 1.5
LINEARIZED_POLISH_STEPS = 40

BRANCH_HEADER = ["lambda", "l2_norm", "hmu_norm", "lp_norm", "mu_tilde_1", "newton_iters", "residual"]


@dataclass
class Equilibrium:
    """A converged solution of the stationary equation at reaction coefficient `lam`."""
    lam: float
    v: np.ndarray
    residual: float
    norms: NormReport
    iterations: int = 0
    residual_history: List[float] = field(default_factory=list)

    @property
    def is_trivial(self) -> bool:
        return self.norms.l2 <= TRIVIAL_L2

    @property
    def is_nonnegative(self) -> bool:
        return bool(np.all(self.v >= -NONNEGATIVE_TOL))


def stationary_residual(forms: DiscreteForms, v: np.ndarray, lam: float) -> np.ndarray:
    return forms.apply_K(v) - lam * forms.apply_M(v) + forms.nonlinear(v)


def relative_defect(forms: DiscreteForms, v: np.ndarray, lam: float, F: Optional[np.ndarray] = None) -> float:
    """
    ||F(v)|| relative to the magnitudes of its three terms; 0 for v = 0.
    Below 1 (max(scale, 1) floor) the defect is absolute.
    """
    if F is None:
        F = stationary_residual(forms, v, lam)
    scale = (np.linalg.norm(forms.apply_abs_K(v)) + abs(lam) * np.linalg.norm(forms.apply_abs_M(v))
             + np.linalg.norm(forms.nonlinear(v)))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(F) / max(scale, 1.0))


def _jacobian_banded(forms: DiscreteForms, v: np.ndarray, lam: float) -> np.ndarray:
    gamma = forms.gamma
    diag = forms.K_diag - lam * forms.M_diag + (2.0 * gamma + 1.0) * forms.nonlinear_weight(v)
    off = forms.K_off - lam * forms.M_off
    ab = np.zeros((3, forms.n_dofs))
    ab[0, 1:] = off
    ab[1, :] = diag
    ab[2, :-1] = off
    return ab


def _newton_direction(forms: DiscreteForms, v: np.ndarray, lam: float, F: np.ndarray) -> np.ndarray:
    d = solve_banded((1, 1), _jacobian_banded(forms, v, lam), -F)
    if not np.all(np.isfinite(d)):
        raise NumericalError(f"Direzione di Newton non finita a lambda={lam}.")
    return d


def solve_equilibrium(forms: DiscreteForms, lam: float, init: np.ndarray,
                      tol: float = DEFAULT_NEWTON_TOL, max_iter: int = DEFAULT_NEWTON_MAX_ITER) -> Equilibrium:
    """
    Damped Newton iteration on F(v) = K v - lambda M2 v + n(v) = 0.

    Steps are backtracked (Armijo on ||F||). Iterates whose sup norm falls below
    TRIVIAL_FLOOR are snapped to the zero solution.

    Args:
        forms (DiscreteForms): Assembled forms.
        lam (float): Reaction coefficient lambda.
        init (np.ndarray): Initial guess (v-coefficients on the free nodes).
        tol (float): Tolerance on the relative defect.
        max_iter (int): Newton iteration cap.

    Returns:
        Equilibrium: The converged solution, possibly u = 0.

    Raises:
        ConvergenceError: if the cap is reached or the line search stalls.
        NumericalError: if the nonlinear evaluation produces NaN or inf.
    """
    if tol <= 0:
        raise ParameterRangeError(f"Tolleranza non positiva: {tol}")
    v = np.array(init, dtype=float, copy=True)
    if v.shape != (forms.n_dofs,):
        raise ParameterRangeError(f"Dato iniziale di dimensione {v.shape}, attesi {forms.n_dofs} gradi di libertà.")

    history: List[float] = []
    iteration = 0
    while True:
        F = stationary_residual(forms, v, lam)
        if not np.all(np.isfinite(F)):
            raise NumericalError(f"Valutazione non finita del termine non lineare a lambda={lam}.")
        res = relative_defect(forms, v, lam, F)
        history.append(res)

        if res <= tol:
            if res > 0.0:
                # one extra full step: the defect drops to round-off
                polished = v + _newton_direction(forms, v, lam, F)
                polished_res = relative_defect(forms, polished, lam)
                if np.isfinite(polished_res) and polished_res <= res:
                    v, res = polished, polished_res
                    history.append(res)
            break
        if np.max(np.abs(v)) <= TRIVIAL_FLOOR:
            v = np.zeros_like(v)
            res = 0.0
            history.append(res)
            break
        if iteration >= max_iter:
            raise ConvergenceError(f"Newton non convergente a lambda={lam}.", residual=res, iterations=iteration)

        d = _newton_direction(forms, v, lam, F)
        f0 = float(F @ F)
        alpha = 1.0
        for _ in range(MAX_BACKTRACKS):
            trial = v + alpha * d
            F_trial = stationary_residual(forms, trial, lam)
            if np.all(np.isfinite(F_trial)) and float(F_trial @ F_trial) <= (1.0 - 2.0 * ARMIJO_C * alpha) * f0:
                break
            alpha *= 0.5
        else:
            raise ConvergenceError(
                f"Ricerca lineare fallita a lambda={lam}.", residual=res, iterations=iteration
            )
        v = trial
        iteration += 1
        logger.debug(f"Newton lambda={lam}: iterazione {iteration}, passo={alpha:g}, residuo={res:.3e}")

    eq = Equilibrium(lam=lam, v=v, residual=res, norms=norm_report(forms, v),
                     iterations=iteration, residual_history=history)
    logger.debug(
        f"Equilibrio a lambda={lam}: ||u||_L2={eq.norms.l2:.6e}, iterazioni={iteration}, residuo={res:.3e}"
    )
    return eq


def galerkin_amplitude(forms: DiscreteForms, eigen: EigenPair, lam: float) -> float:
    """
    One-mode amplitude eps = ((lambda - lambda_1) ||u_1||^2_L2 / int |u_1|^(2 gamma + 2))^(1 / (2 gamma));
    0 for lambda <= lambda_1.
    """
    if lam <= eigen.lambda_1:
        return 0.0
    l2_sq = float(eigen.v @ forms.apply_M(eigen.v))
    return ((lam - eigen.lambda_1) * l2_sq / forms.nonlinear_energy(eigen.v)) ** (1.0 / (2.0 * forms.gamma))


def r0_bound(gamma: float, lam: float, volume: float) -> float:
    """
    A-priori bound R0 on ||u||_mu^2 for every equilibrium,
    R0 = (2 lambda)^((gamma+1)/gamma) 2^(1/gamma) gamma (gamma+1)^(-(gamma+1)/gamma) |Omega|.
    For lambda <= 0 the only equilibrium is 0 and the bound is 0.
    """
    if gamma <= 0:
        raise ParameterRangeError(f"gamma deve essere positivo (ricevuto {gamma}).")
    if lam <= 0:
        return 0.0
    p = (gamma + 1.0) / gamma
    return (2.0 * lam) ** p * 2.0 ** (1.0 / gamma) * gamma * (gamma + 1.0) ** (-p) * volume


def absorbing_radius_squared(params: ProblemParams, lam: float) -> float:
    """rho^2 = R0 / lambda, the radius of the absorbing L2 ball of the semiflow."""
    if lam <= 0:
        return 0.0
    return r0_bound(params.gamma, lam, params.geometry.volume) / lam


def nonnegative_equilibrium(forms: DiscreteForms, lam: float, tol: float = DEFAULT_NEWTON_TOL,
                            eigen: Optional[EigenPair] = None) -> Equilibrium:
    """
    The nonnegative equilibrium at `lam`: zero for lambda <= lambda_1, otherwise the
    branch solution, seeded with the one-mode amplitude (and doubled seeds if Newton
    collapses onto zero).
    """
    eigen = eigen or principal_eigenpair(forms)
    eps = galerkin_amplitude(forms, eigen, lam)
    if eps == 0.0:
        return solve_equilibrium(forms, lam, np.zeros(forms.n_dofs), tol=tol)
    for factor in (1.0, 2.0, 4.0):
        eq = solve_equilibrium(forms, lam, factor * eps * eigen.v, tol=tol)
        if not eq.is_trivial:
            return eq
        logger.debug(f"Newton collassato su zero a lambda={lam} con seme {factor}*eps, si raddoppia.")
    return eq


@dataclass
class LinearizedMode:
    """Smallest eigenvalue mu_tilde of the linearization at an equilibrium and its mode."""
    mu_tilde: float
    psi: np.ndarray
    identity_residual: Optional[float]


def linearized_smallest_eigenvalue(forms: DiscreteForms, equilibrium: Equilibrium,
                                   tol: float = EIGEN_TOL) -> LinearizedMode:
    """
    Smallest eigenvalue of K + (2 gamma + 1) W(u) - lambda M2 against M2, W(u) = diag(m |v|^(2 gamma)).

    For a nontrivial equilibrium the identity 2 gamma int |u|^(2 gamma) u psi = mu_tilde int u psi
    is evaluated and its relative defect returned.
    """
    gamma = forms.gamma
    v = equilibrium.v
    W = forms.nonlinear_weight(v)
    theta, psi, _, _ = inverse_iteration(forms, forms.banded(diag_extra=(2.0 * gamma + 1.0) * W), tol=tol,
                                         polish=LINEARIZED_POLISH_STEPS)
    mu_tilde = theta - equilibrium.lam

    identity_residual = None
    if not equilibrium.is_trivial:
        lhs = 2.0 * gamma * float(forms.nonlinear(v) @ psi)
        rhs = mu_tilde * float(v @ forms.apply_M(psi))
        identity_residual = abs(lhs - rhs) / max(abs(rhs), abs(lhs), 1e-300)
    return LinearizedMode(mu_tilde=mu_tilde, psi=psi, identity_residual=identity_residual)


@dataclass
class Branch:
    """Nonnegative equilibria by increasing lambda past the onset lambda_1."""
    onset: float
    points: List[Equilibrium] = field(default_factory=list)
    stability: List[float] = field(default_factory=list)
    truncated: bool = False
    diagnostic: Optional[str] = None

    def rows(self) -> List[list]:
        return [
            [eq.lam, eq.norms.l2, eq.norms.hmu, eq.norms.lp, mt, eq.iterations, eq.residual]
            for eq, mt in zip(self.points, self.stability)
        ]


def branch_lambdas(onset: float, lambda_max: float, steps: int, delta: float, geometric: bool) -> np.ndarray:
    if lambda_max <= onset:
        raise ParameterRangeError(f"lambda_max={lambda_max} deve superare lambda_1={onset}.")
    if steps < 1:
        raise ParameterRangeError(f"Numero di passi non valido: {steps}")
    span = lambda_max - onset
    if not (0.0 < delta <= span):
        raise ParameterRangeError(f"delta={delta} fuori da (0, lambda_max - lambda_1 = {span}].")
    if steps == 1:
        return np.array([onset + delta])
    if geometric:
        return onset + np.geomspace(delta, span, steps)
    return np.linspace(onset + delta, lambda_max, steps)


def trace_branch(forms: DiscreteForms, lambda_max: float, steps: int = DEFAULT_BRANCH_STEPS,
                 tol: float = DEFAULT_NEWTON_TOL, delta: float = DEFAULT_BRANCH_DELTA,
                 geometric: bool = False, eigen: Optional[EigenPair] = None,
                 max_iter: int = DEFAULT_NEWTON_MAX_ITER) -> Branch:
    """
    Natural continuation of the nonnegative branch from lambda_1 + delta to lambda_max.

    The first point is seeded with the one-mode amplitude times u_1; each further
    point with the previous solution rescaled by the amplitude law
    ((lambda_next - lambda_1) / (lambda - lambda_1))^(1 / (2 gamma)). A failed
    point truncates the branch and is reported in `diagnostic`.
    """
    eigen = eigen or principal_eigenpair(forms)
    onset = eigen.lambda_1
    lambdas = branch_lambdas(onset, lambda_max, steps, delta, geometric)
    branch = Branch(onset=onset)
    p = forms.params

    seed = galerkin_amplitude(forms, eigen, float(lambdas[0])) * eigen.v
    prev_lam = None
    for lam in lambdas:
        lam = float(lam)
        if prev_lam is not None:
            seed = branch.points[-1].v * ((lam - onset) / (prev_lam - onset)) ** (1.0 / (2.0 * forms.gamma))
        try:
            eq = solve_equilibrium(forms, lam, seed, tol=tol, max_iter=max_iter)
        except HardyflowError as e:
            branch.truncated = True
            branch.diagnostic = f"Ramo troncato a lambda={lam}: {e}"
            logger.warning(branch.diagnostic)
            break
        if eq.is_trivial:
            branch.truncated = True
            branch.diagnostic = f"Ramo troncato a lambda={lam}: Newton collassato sulla soluzione nulla."
            logger.warning(branch.diagnostic)
            break

        hmu_sq = eq.norms.hmu ** 2
        if hmu_sq > lam * eq.norms.l2 ** 2 + 1e-10:
            logger.warning(f"||u||_mu^2 > lambda ||u||_L2^2 a lambda={lam}")
        r0 = r0_bound(p.gamma, lam, p.geometry.volume)
        if hmu_sq > r0:
            logger.warning(f"||u||_mu^2={hmu_sq:.6g} supera R0={r0:.6g} a lambda={lam}")
        if not eq.is_nonnegative:
            logger.warning(f"Soluzione con valori negativi a lambda={lam}: min={eq.v.min():.3e}")

        branch.points.append(eq)
        branch.stability.append(linearized_smallest_eigenvalue(forms, eq).mu_tilde)
        prev_lam = lam

    logger.info(
        f"Ramo calcolato: {len(branch.points)} punti da lambda_1={onset:.10g} a lambda_max={lambda_max}"
        + (" (troncato)" if branch.truncated else "")
    )
    return branch


@dataclass
class UniquenessReport:
    lam: float
    limits: List[Optional[Equilibrium]]
    failures: List[str]
    trivial_count: int
    max_spread: float
    unique: bool


def uniqueness_starts(forms: DiscreteForms, eigen: EigenPair, lam: float, n_starts: int,
                      seed: int = 0) -> List[np.ndarray]:
    """
    Distinct positive initial profiles: the one-mode scaled eigenfunction, a
    capped constant profile and smooth random positive perturbations of u_1,
    all at an amplitude above the expected solution.
    """
    rng = np.random.default_rng(seed)
    eps = galerkin_amplitude(forms, eigen, lam)
    target = START_OVERSHOOT * (eps * float(np.max(eigen.v)) if eps > 0 else 1.0)
    rho = forms.rho
    R = forms.params.R

    starts = [eigen.v * (eps if eps > 0 else 1.0)]
    cap = rho ** forms.beta * np.minimum(1.0, 2.0 * (1.0 - rho / R))
    starts.append(cap * target / np.max(cap))
    while len(starts) < n_starts:
        coeffs = rng.standard_normal(3) / np.arange(1, 4)
        xi = sum(c * np.cos((j + 1) * math.pi * rho / R) for j, c in enumerate(coeffs))
        profile = eigen.v * np.exp(0.5 * xi)
        starts.append(profile * target / np.max(profile))
    return starts[:n_starts]


def check_uniqueness(forms: DiscreteForms, lam: float, n_starts: int = 5, tol: float = DEFAULT_NEWTON_TOL,
                     seed: int = 0, eigen: Optional[EigenPair] = None) -> UniquenessReport:
    """
    Newton from `n_starts` distinct positive profiles; reports whether all limits
    coincide within 1e-8 in the mu-norm. Diverging starts are recorded, not raised.
    """
    if n_starts < 3:
        raise ParameterRangeError(f"Servono almeno 3 dati iniziali (ricevuti {n_starts}).")
    eigen = eigen or principal_eigenpair(forms)
    starts = uniqueness_starts(forms, eigen, lam, n_starts, seed)

    def attempt(init: np.ndarray):
        try:
            return solve_equilibrium(forms, lam, init, tol=tol), None
        except HardyflowError as e:
            return None, str(e)

    outcomes = map_ordered(attempt, starts)
    limits = [eq for eq, _ in outcomes]
    failures = [msg for _, msg in outcomes if msg is not None]
    converged = [eq for eq in limits if eq is not None]
    trivial_count = sum(1 for eq in converged if eq.is_trivial)

    spread = 0.0
    if converged:
        ref = converged[0].v
        spread = max(hmu_norm(forms, eq.v - ref) for eq in converged)
    unique = not failures and spread <= UNIQUENESS_TOL
    if not unique:
        logger.warning(
            f"Unicità non verificata a lambda={lam}: scarto={spread:.3e}, fallimenti={len(failures)}, banali={trivial_count}"
        )
    else:
        logger.info(f"Unicità verificata a lambda={lam} su {n_starts} dati iniziali (scarto {spread:.3e}).")
    return UniquenessReport(lam=lam, limits=limits, failures=failures, trivial_count=trivial_count,
                            max_spread=spread, unique=unique)
