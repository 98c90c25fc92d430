"""
Time integration of the parabolic problem phi_t = Laplace phi + mu phi/|x|^2 + lambda phi - |phi|^(2 gamma) phi.

Steps use a convex splitting of the Lyapunov functional

    J(phi) = 1/2 ||phi||_mu^2 - lambda/2 ||phi||_L2^2 + 1/(2 gamma + 2) ||phi||_(2 gamma + 2)^(2 gamma + 2):

the stiffness and nonlinear terms are implicit, the lambda term explicit (implicit
for lambda < 0), so J decreases for every dt. Each step minimizes a strictly
convex functional by damped Newton.
"""
from dataclasses import dataclass, field
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import solveh_banded

from .eigensolver import EigenPair, principal_eigenpair
from .equilibrium import absorbing_radius_squared, nonnegative_equilibrium
from .errors import ConfigurationError, ConvergenceError, HardyflowError, NumericalError, ParameterRangeError
from .file_handler import read_csv
from .radial_forms import DiscreteForms, hmu_norm

logger = logging.getLogger(__name__)

DEFAULT_DT = 1e-2
DEFAULT_T = 10.0
STEP_NEWTON_TOL = 1e-12
STEP_NEWTON_MAX_ITER = 50
MAX_HALVINGS = 20
ARMIJO_C = 1e-4
MAX_BACKTRACKS = 40
STALL_TOL = 1e-9
CLASSIFICATION_TOL = 1e-6
DEFAULT_T_CAP = 1e4
DEFAULT_DT_MAX = 50.0
DT_GROWTH = 1.5
FAST_NEWTON_ITERS = 3
SIGN_TOL_FACTOR = 1e-8
MIN_DECAY_DROP = 1e3
DECAY_RATE_SLACK = 0.05

TRAJECTORY_HEADER = ["t", "J", "l2", "hmu", "lp", "energy_residual", "min_node", "max_node"]


@dataclass(frozen=True)
class TrajectoryState:
    t: float
    phi: np.ndarray
    dt: float


@dataclass
class EnergyRecord:
    """Squared norms l2, hmu and the power lp = ||phi||^(2 gamma + 2) at time t."""
    t: float
    J: float
    l2: float
    hmu: float
    lp: float
    energy_residual: float
    dJ: float
    min_node: float
    max_node: float


@dataclass
class Trajectory:
    lam: float
    states: List[TrajectoryState] = field(default_factory=list)
    records: List[EnergyRecord] = field(default_factory=list)
    truncated: bool = False
    diagnostic: Optional[str] = None

    def rows(self) -> List[list]:
        return [[r.t, r.J, r.l2, r.hmu, r.lp, r.energy_residual, r.min_node, r.max_node] for r in self.records]


def lyapunov(forms: DiscreteForms, v: np.ndarray, lam: float) -> float:
    """J(v) = 1/2 v^T K v - lambda/2 v^T M2 v + sum m |v|^(2 gamma + 2) / (2 gamma + 2)."""
    p = 2.0 * forms.gamma + 2.0
    return float(0.5 * (v @ forms.apply_K(v)) - 0.5 * lam * (v @ forms.apply_M(v)) + forms.nonlinear_energy(v) / p)


def _energy_parts(forms: DiscreteForms, v: np.ndarray) -> Tuple[float, float, float]:
    return float(v @ forms.apply_M(v)), float(v @ forms.apply_K(v)), forms.nonlinear_energy(v)


def _implicit_solve(forms: DiscreteForms, phi_n: np.ndarray, dt: float, lam: float) -> Tuple[np.ndarray, int]:
    """
    Solves A phi + dt n(phi) = b, the minimizer of the convex functional
    1/2 phi^T A phi + dt Phi(phi) - b^T phi.

    A = M2 + dt K and b = (1 + dt lambda) M2 phi_n for lambda >= 0;
    A = (1 - dt lambda) M2 + dt K and b = M2 phi_n for lambda < 0.
    """
    mass_coeff, rhs_coeff = (1.0, 1.0 + dt * lam) if lam >= 0 else (1.0 - dt * lam, 1.0)
    b = rhs_coeff * forms.apply_M(phi_n)
    gamma = forms.gamma
    p = 2.0 * gamma + 2.0

    def apply_a(x: np.ndarray) -> np.ndarray:
        return mass_coeff * forms.apply_M(x) + dt * forms.apply_K(x)

    def energy(x: np.ndarray) -> float:
        return float(0.5 * (x @ apply_a(x)) + dt * forms.nonlinear_energy(x) / p - b @ x)

    phi = phi_n.copy()
    for iteration in range(STEP_NEWTON_MAX_ITER + 1):
        n_phi = forms.nonlinear(phi)
        G = apply_a(phi) + dt * n_phi - b
        if not np.all(np.isfinite(G)):
            raise NumericalError(f"Valutazione non finita nel passo implicito (dt={dt}).")
        scale = (np.linalg.norm(b) + mass_coeff * np.linalg.norm(forms.apply_abs_M(phi))
                 + dt * np.linalg.norm(forms.apply_abs_K(phi)) + dt * np.linalg.norm(n_phi))
        if scale == 0.0 or np.linalg.norm(G) <= STEP_NEWTON_TOL * scale:
            return phi, iteration
        if iteration == STEP_NEWTON_MAX_ITER:
            break

        extra = dt * (2.0 * gamma + 1.0) * forms.nonlinear_weight(phi)
        ab = forms.banded(shift_mass=mass_coeff, diag_extra=extra, stiffness_scale=dt)
        d = solveh_banded(ab, -G, lower=False)
        e0 = energy(phi)
        slope = float(G @ d)
        alpha = 1.0
        for _ in range(MAX_BACKTRACKS):
            trial = phi + alpha * d
            if energy(trial) <= e0 + ARMIJO_C * alpha * slope:
                break
            alpha *= 0.5
        else:
            # no decrease representable: accept the full step at round-off level
            trial = phi + d
        phi = trial

    raise ConvergenceError(
        f"Newton del passo implicito non convergente (dt={dt}).",
        residual=float(np.linalg.norm(G)),
        iterations=STEP_NEWTON_MAX_ITER,
    )


def _advance(forms: DiscreteForms, state: TrajectoryState, dt: float, lam: float) -> Tuple[TrajectoryState, int]:
    """One step with dt halving on failure (cap MAX_HALVINGS). Returns the new state and Newton iterations."""
    trial_dt = dt
    last_error: Optional[HardyflowError] = None
    for _ in range(MAX_HALVINGS + 1):
        try:
            phi, iterations = _implicit_solve(forms, state.phi, trial_dt, lam)
            return TrajectoryState(t=state.t + trial_dt, phi=phi, dt=trial_dt), iterations
        except (ConvergenceError, NumericalError) as e:
            last_error = e
            logger.debug(f"Passo rifiutato con dt={trial_dt:.3e}: {e}. Si dimezza dt.")
            trial_dt *= 0.5
    raise ConvergenceError(f"Passo temporale fallito dopo {MAX_HALVINGS} dimezzamenti: {last_error}",
                           iterations=MAX_HALVINGS)


def step(forms: DiscreteForms, state: TrajectoryState, dt: float, lam: Optional[float] = None) -> TrajectoryState:
    """
    Advances the semiflow by one convex-splitting step of size dt (halved on failure).

    Args:
        forms (DiscreteForms): Assembled forms.
        state (TrajectoryState): Current state.
        dt (float): Requested step size, dt > 0.
        lam (float | None): Reaction coefficient; defaults to forms.params.lam.

    Returns:
        TrajectoryState: State at t + dt_used with dt = dt_used.
    """
    if dt <= 0:
        raise ParameterRangeError(f"Passo temporale non positivo: dt={dt}")
    lam = forms.params.lam if lam is None else lam
    new_state, _ = _advance(forms, state, dt, lam)
    return new_state


def _make_record(forms: DiscreteForms, state: TrajectoryState, lam: float, parts: Tuple[float, float, float],
                 residual: float, dJ: float) -> EnergyRecord:
    l2, hmu, lp = parts
    J = 0.5 * hmu - 0.5 * lam * l2 + lp / (2.0 * forms.gamma + 2.0)
    return EnergyRecord(t=state.t, J=J, l2=l2, hmu=hmu, lp=lp, energy_residual=residual, dJ=dJ,
                        min_node=float(np.min(state.phi)), max_node=float(np.max(state.phi)))


def energy_law_defect(before: Tuple[float, float, float], after: Tuple[float, float, float],
                      dtau: float, lam: float) -> float:
    """Defect of the energy law over one step, (l2, hmu, lp) parts averaged at the endpoints."""
    return abs(
        0.5 * (after[0] - before[0]) / dtau
        + 0.5 * (after[1] + before[1])
        - lam * 0.5 * (after[0] + before[0])
        + 0.5 * (after[2] + before[2])
    )


def evolve(forms: DiscreteForms, phi0: np.ndarray, T: float = DEFAULT_T, dt: float = DEFAULT_DT,
           record_every: int = 1, lam: Optional[float] = None) -> Trajectory:
    """
    Integrates the semiflow from phi0 up to time T with nominal step dt.

    A record is emitted at t = 0, every `record_every` steps and at T. The
    energy residual of a record is the defect of the energy law
    d/dt 1/2 ||phi||^2 + ||phi||_mu^2 - lambda ||phi||^2 + ||phi||_(2 gamma + 2)^(2 gamma + 2) = 0
    over the last step, with endpoint averages. A failing step truncates the
    trajectory with a diagnostic.
    """
    if T <= 0:
        raise ParameterRangeError(f"Orizzonte temporale non positivo: T={T}")
    if dt <= 0:
        raise ParameterRangeError(f"Passo temporale non positivo: dt={dt}")
    if record_every < 1:
        raise ParameterRangeError(f"record_every deve essere >= 1 (ricevuto {record_every})")
    lam = forms.params.lam if lam is None else lam
    phi0 = np.array(phi0, dtype=float, copy=True)
    if not np.all(np.isfinite(phi0)):
        raise NumericalError("Dato iniziale non finito.")

    state = TrajectoryState(t=0.0, phi=phi0, dt=dt)
    trajectory = Trajectory(lam=lam, states=[state])
    parts = _energy_parts(forms, phi0)
    record = _make_record(forms, state, lam, parts, residual=0.0, dJ=0.0)
    trajectory.records.append(record)
    J_prev = record.J

    n_steps = 0
    t_end_tol = 1e-12 * max(1.0, T)
    while state.t < T - t_end_tol:
        h = min(dt, T - state.t)
        try:
            new_state, _ = _advance(forms, state, h, lam)
        except HardyflowError as e:
            trajectory.truncated = True
            trajectory.diagnostic = f"Traiettoria troncata a t={state.t}: {e}"
            logger.warning(trajectory.diagnostic)
            break
        n_steps += 1
        new_parts = _energy_parts(forms, new_state.phi)
        J_new = 0.5 * new_parts[1] - 0.5 * lam * new_parts[0] + new_parts[2] / (2.0 * forms.gamma + 2.0)
        dJ = J_new - J_prev
        if dJ > 1e-12 * max(1.0, abs(J_prev)):
            logger.warning(f"Funzionale di Lyapunov in crescita a t={new_state.t}: dJ={dJ:.3e}")
        J_prev = J_new

        if n_steps % record_every == 0 or new_state.t >= T - t_end_tol:
            residual = energy_law_defect(parts, new_parts, new_state.dt, lam)
            trajectory.records.append(_make_record(forms, new_state, lam, new_parts, residual, dJ))
            trajectory.states.append(new_state)
        state, parts = new_state, new_parts

    logger.info(
        f"Evoluzione completata fino a t={state.t:.6g} ({n_steps} passi, J finale={J_prev:.10g})"
        + (" (troncata)" if trajectory.truncated else "")
    )
    return trajectory


@dataclass
class SignReport:
    applicable: bool
    sign: int
    tol: float
    worst: float
    holds: bool
    note: str = ""


def sign_invariance_check(trajectory: Trajectory, tol_factor: float = SIGN_TOL_FACTOR) -> SignReport:
    """
    For nonnegative (nonpositive) initial data, checks that the minimum (maximum)
    nodal value stays above -tol (below tol) at every sample, tol = tol_factor * max|phi0|.
    """
    phi0 = trajectory.states[0].phi
    amplitude = float(np.max(np.abs(phi0))) if phi0.size else 0.0
    tol = tol_factor * amplitude
    if amplitude == 0.0:
        return SignReport(applicable=True, sign=0, tol=0.0, worst=0.0, holds=True, note="dato iniziale nullo")
    if np.all(phi0 >= 0):
        worst = min(float(np.min(s.phi)) for s in trajectory.states)
        holds = worst >= -tol
        report = SignReport(applicable=True, sign=1, tol=tol, worst=worst, holds=holds)
    elif np.all(phi0 <= 0):
        worst = max(float(np.max(s.phi)) for s in trajectory.states)
        holds = worst <= tol
        report = SignReport(applicable=True, sign=-1, tol=tol, worst=worst, holds=holds)
    else:
        logger.info("Dato iniziale di segno variabile: controllo di invarianza non applicabile.")
        return SignReport(applicable=False, sign=0, tol=tol, worst=float("nan"), holds=True,
                          note="dato iniziale di segno variabile")
    if not report.holds:
        logger.warning(f"Invarianza del segno violata: valore peggiore {report.worst:.3e} (tolleranza {tol:.3e})")
    return report


@dataclass
class DecayReport:
    rate: float
    expected: float
    conclusive: bool
    consistent: bool
    boundary_case: bool
    drop: float
    note: str = ""


def decay_rate(trajectory: Trajectory, lambda_1: float) -> DecayReport:
    """
    Least-squares slope of log ||phi(t)||_L2 along a trajectory with lambda < lambda_1.

    The fit is conclusive only when the norm drops by at least 1e3; it is
    consistent when the slope is at most -(lambda_1 - lambda) + 5% relative.
    lambda = lambda_1 is flagged as the boundary (sub-exponential) case.
    """
    lam = trajectory.lam
    times = np.array([r.t for r in trajectory.records])
    norms = np.sqrt(np.array([r.l2 for r in trajectory.records]))
    expected = -(lambda_1 - lam)
    boundary = abs(lambda_1 - lam) <= 1e-12 * max(1.0, abs(lambda_1))
    if lam > lambda_1 and not boundary:
        raise ParameterRangeError(f"decay_rate richiede lambda <= lambda_1 (lambda={lam}, lambda_1={lambda_1}).")

    positive = norms > 0
    if positive.sum() < 2:
        return DecayReport(rate=float("nan"), expected=expected, conclusive=False, consistent=False,
                           boundary_case=boundary, drop=float("inf"), note="traiettoria troppo breve o nulla")
    times, norms = times[positive], norms[positive]
    drop = float(norms[0] / norms[-1])
    rate = float(np.polyfit(times, np.log(norms), 1)[0])

    if boundary:
        decreasing = bool(np.all(np.diff(norms) <= 0))
        note = "caso limite lambda = lambda_1: decadimento sub-esponenziale" + ("" if decreasing else ", norma non monotona")
        logger.info(note)
        return DecayReport(rate=rate, expected=0.0, conclusive=False, consistent=decreasing, boundary_case=True,
                           drop=drop, note=note)
    if drop < MIN_DECAY_DROP:
        note = f"finestra di decadimento insufficiente (riduzione {drop:.3g} < {MIN_DECAY_DROP:g})"
        logger.warning(note)
        return DecayReport(rate=rate, expected=expected, conclusive=False, consistent=False, boundary_case=False,
                           drop=drop, note=note)
    consistent = rate <= expected + DECAY_RATE_SLACK * abs(expected)
    return DecayReport(rate=rate, expected=expected, conclusive=True, consistent=consistent, boundary_case=False,
                       drop=drop)


@dataclass
class OmegaClassification:
    label: str
    distance: float
    t: float
    steps: int
    J: float
    velocity: float


def equilibrium_set(forms: DiscreteForms, lam: float, eigen: Optional[EigenPair] = None) -> Dict[str, np.ndarray]:
    """The equilibria {0, u, -u} at lam (only 0 when lambda <= lambda_1)."""
    equilibria = {"zero": np.zeros(forms.n_dofs)}
    eq = nonnegative_equilibrium(forms, lam, eigen=eigen)
    if not eq.is_trivial:
        equilibria["u_plus"] = eq.v
        equilibria["u_minus"] = -eq.v
    return equilibria


def omega_limit(forms: DiscreteForms, phi0: np.ndarray, tol: float = STALL_TOL, t_cap: float = DEFAULT_T_CAP,
                equilibria: Optional[Dict[str, np.ndarray]] = None, lam: Optional[float] = None,
                dt0: float = DEFAULT_DT, dt_max: float = DEFAULT_DT_MAX,
                classification_tol: float = CLASSIFICATION_TOL) -> OmegaClassification:
    """
    Evolves phi0 with adaptive dt until the discrete velocity ||phi^(n+1) - phi^n||_L2 / dt
    drops below `tol`, then labels the state by the nearest equilibrium in the mu-norm.

    dt grows by 1.5 after steps whose Newton solve took at most 3 iterations
    (capped at dt_max) and halves on failure. The zero label is refused while
    J < J(0) = 0, since J cannot increase back to 0. Reaching t_cap gives
    "undecided".
    """
    lam = forms.params.lam if lam is None else lam
    if equilibria is None:
        equilibria = equilibrium_set(forms, lam)
    state = TrajectoryState(t=0.0, phi=np.array(phi0, dtype=float, copy=True), dt=dt0)
    dt = dt0
    steps = 0
    velocity = float("inf")
    J = lyapunov(forms, state.phi, lam)
    best_label, best_dist = "undecided", float("inf")

    while state.t < t_cap:
        try:
            new_state, iterations = _advance(forms, state, dt, lam)
        except HardyflowError as e:
            logger.warning(f"Classificazione interrotta a t={state.t}: {e}")
            break
        steps += 1
        increment = new_state.phi - state.phi
        velocity = math.sqrt(max(float(increment @ forms.apply_M(increment)), 0.0)) / new_state.dt
        dt = min(new_state.dt * DT_GROWTH, dt_max) if iterations <= FAST_NEWTON_ITERS else new_state.dt
        state = new_state
        J = lyapunov(forms, state.phi, lam)

        if velocity < tol:
            distances = {label: hmu_norm(forms, state.phi - v) for label, v in equilibria.items()}
            best_label = min(distances, key=distances.get)
            best_dist = distances[best_label]
            if best_label == "zero" and J < -1e-14:
                logger.debug(f"Stallo vicino a zero con J={J:.3e} < 0: la traiettoria deve ripartire.")
                continue
            if best_dist < classification_tol:
                logger.info(
                    f"Insieme omega-limite: {best_label} (distanza {best_dist:.3e}, t={state.t:.6g}, passi={steps})"
                )
                return OmegaClassification(label=best_label, distance=best_dist, t=state.t, steps=steps, J=J,
                                           velocity=velocity)

    distances = {label: hmu_norm(forms, state.phi - v) for label, v in equilibria.items()}
    nearest = min(distances, key=distances.get)
    logger.warning(f"Classificazione indecisa a t={state.t:.6g}: equilibrio più vicino {nearest} a {distances[nearest]:.3e}")
    return OmegaClassification(label="undecided", distance=distances[nearest], t=state.t, steps=steps, J=J,
                               velocity=velocity)


@dataclass
class AbsorbingReport:
    radius_squared: float
    gronwall_holds: bool
    tail_holds: bool
    hmu_bound_holds: bool
    worst_gronwall_excess: float
    tail_max: float


def absorbing_bound_check(trajectory: Trajectory, forms: DiscreteForms, tail_fraction: float = 0.25) -> AbsorbingReport:
    """
    Checks a trajectory (lambda > 0) against the dissipativity estimates:
    ||phi(t)||^2 <= ||phi0||^2 e^(-2 lambda t) + (R0/lambda)(1 - e^(-2 lambda t)) at every sample,
    the tail bound ||phi||^2 <= R0/lambda, and ||phi||_mu^2 <= 2 J(phi0) + lambda rho1^2
    wherever ||phi||^2 <= rho1^2, rho1^2 = (1 + 1e-6)^2 R0/lambda.
    """
    lam = trajectory.lam
    if lam <= 0:
        raise ParameterRangeError(f"Il controllo di assorbimento richiede lambda > 0 (lambda={lam}).")
    rho_sq = absorbing_radius_squared(forms.params, lam)
    rho1_sq = rho_sq * (1.0 + 1e-6) ** 2
    records = trajectory.records
    l2_0 = records[0].l2
    J0 = records[0].J

    excess = []
    for r in records:
        decay = math.exp(-2.0 * lam * r.t)
        envelope = l2_0 * decay + rho_sq * (1.0 - decay)
        excess.append(r.l2 - envelope * (1.0 + 1e-10))
    worst = max(excess)

    start = int(len(records) * (1.0 - tail_fraction))
    tail = records[start:] or records[-1:]
    tail_max = max(r.l2 for r in tail)
    hmu_ok = all(r.hmu <= 2.0 * J0 + lam * rho1_sq + 1e-10 for r in records if r.l2 <= rho1_sq)

    report = AbsorbingReport(radius_squared=rho_sq, gronwall_holds=worst <= 0.0, tail_holds=tail_max <= rho_sq,
                             hmu_bound_holds=hmu_ok, worst_gronwall_excess=worst, tail_max=tail_max)
    if not (report.gronwall_holds and report.tail_holds and report.hmu_bound_holds):
        logger.warning(f"Stime di assorbimento violate: {report}")
    return report


def parse_phi0(spec: str, forms: DiscreteForms, eigen: Optional[EigenPair] = None) -> np.ndarray:
    """
    Initial datum from the mini-language:

        eig*<scale>              scale times the principal eigenfunction
        const:<c>                u = c
        singular:<e>:<scale>     u = scale rho^e (1 - rho^2/R^2), requires beta + e >= 0
        file:<path>              CSV with columns rho,u, interpolated at the nodes

    Returns:
        np.ndarray: v-coefficients on the free nodes.

    Raises:
        ConfigurationError: for malformed specs or unreadable files.
        ParameterRangeError: for singular exponents below -beta.
    """
    text = spec.strip()
    rho = forms.rho
    beta = forms.beta
    R = forms.params.R

    if text == "eig" or text.startswith("eig*"):
        scale = _parse_number(text[4:], spec) if text.startswith("eig*") else 1.0
        eigen = eigen or principal_eigenpair(forms)
        return scale * eigen.v
    if text.startswith("const:"):
        return _parse_number(text[len("const:"):], spec) * rho ** beta
    if text.startswith("singular:"):
        fields = text.split(":")
        if len(fields) != 3:
            raise ConfigurationError(f"Specifica singolare attesa nella forma singular:<e>:<scala>, ricevuto '{spec}'")
        exponent, scale = _parse_number(fields[1], spec), _parse_number(fields[2], spec)
        if beta + exponent < 0:
            raise ParameterRangeError(
                f"Esponente singolare {exponent} troppo negativo: serve beta + e >= 0 (beta={beta:.6g})."
            )
        return scale * rho ** (beta + exponent) * (1.0 - (rho / R) ** 2)
    if text.startswith("file:"):
        path = Path(text[len("file:"):])
        rows = read_csv(path)
        if not rows:
            raise ConfigurationError(f"File del dato iniziale illeggibile o vuoto: {path}")
        try:
            r_data = np.array([float(row["rho"]) for row in rows])
            u_data = np.array([float(row["u"]) for row in rows])
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"Il file {path} deve avere colonne numeriche 'rho' e 'u' ({e})") from e
        order = np.argsort(r_data)
        return rho ** beta * np.interp(rho, r_data[order], u_data[order])
    raise ConfigurationError(f"Specifica del dato iniziale sconosciuta: '{spec}'")


def _parse_number(text: str, spec: str) -> float:
    try:
        return float(text)
    except ValueError as e:
        raise ConfigurationError(f"Specifica del dato iniziale non valida: '{spec}'") from e
