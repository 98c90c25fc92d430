"""
Annulus problems on Omega_r = {r < |x| < R} and their convergence to the ball problem as r -> 0.

Annuli are assembled directly in u (beta = 0): the origin is outside the domain
and the inverse-square term is bounded there. Annulus meshes are submeshes of a
uniform ball mesh, so nodal comparisons need no interpolation.
"""
from dataclasses import dataclass, field
import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from .constants import ProblemParams
from .eigensolver import DEFAULT_TOL as EIGEN_TOL, EigenPair, principal_eigenpair
from .equilibrium import DEFAULT_NEWTON_TOL, Equilibrium, nonnegative_equilibrium
from .errors import ParameterRangeError
from .radial_forms import DEFAULT_M, DiscreteForms, RadialMesh, annulus_submesh, assemble, build_mesh, hmu_norm
from .workers import map_ordered

logger = logging.getLogger(__name__)

EXCISION_HEADER = ["r", "lambda1_r", "gap", "eq_hmu_dist", "max_pointwise_violation"]
COMPARISON_RTOL = 1e-4
EXTRAPOLATION_RTOL = 1e-2
# uniform convergence is measured only on rho >= FAR_RADIUS
FAR_RADIUS = 0.1


def richardson(xs: Sequence[float], values: Sequence[float]) -> float:
    """
    Value at x = 0 of the polynomial through the last three (x, value) pairs,
    or the line through them when only two are given.
    """
    if len(xs) != len(values):
        raise ParameterRangeError(f"Lunghezze diverse: {len(xs)} ascisse, {len(values)} valori.")
    if len(values) < 2:
        raise ParameterRangeError(f"Servono almeno due valori per l'estrapolazione (ricevuti {len(values)}).")
    x = np.asarray(xs[-3:], dtype=float)
    y = np.asarray(values[-3:], dtype=float)
    if np.unique(x).size != x.size:
        raise ParameterRangeError(f"Ascisse ripetute nell'estrapolazione: {x.tolist()}")
    limit = 0.0
    for i in range(x.size):
        others = np.delete(x, i)
        limit += y[i] * float(np.prod(others / (others - x[i])))
    return float(limit)


def gap_variable(params: ProblemParams, r: float) -> float:
    """
    Rate variable of lambda_{1,mu,r} - lambda_{1,mu} as r -> 0: (r/R)^(2 s) with
    s = sqrt(mu_star - mu), and 1/log(R/r) at mu = mu_star.
    """
    s = math.sqrt(max(params.mu_star - params.mu, 0.0))
    if s == 0.0:
        return 1.0 / math.log(params.R / r)
    return (r / params.R) ** (2.0 * s)


def _check_annulus(params: ProblemParams) -> None:
    if not (0.0 < params.r_in < params.R):
        raise ParameterRangeError(f"Raggio interno non valido per una corona: r={params.r_in} (R={params.R}).")


def annulus_forms(params: ProblemParams, M: int = DEFAULT_M, mesh: Optional[RadialMesh] = None) -> DiscreteForms:
    """Forms on the annulus r_in < rho < R in the u-variable, on `mesh` or a uniform mesh of M elements."""
    _check_annulus(params)
    mesh = mesh if mesh is not None else build_mesh(params, M, 1.0)
    return assemble(mesh, params, beta=0.0)


def solve_annulus_eigen(params: ProblemParams, M: int = DEFAULT_M, tol: float = EIGEN_TOL,
                        mesh: Optional[RadialMesh] = None) -> EigenPair:
    """
    Principal Dirichlet eigenpair on the annulus r_in < rho < R.

    Args:
        params (ProblemParams): Parameters with 0 < r_in < R.
        M (int): Element count of the uniform annulus mesh (ignored when `mesh` is given).
        tol (float): Eigenvalue tolerance.
        mesh (RadialMesh | None): Explicit annulus mesh.
    """
    return principal_eigenpair(annulus_forms(params, M, mesh), tol=tol)


def solve_annulus_equilibrium(params: ProblemParams, lam: float, tol: float = DEFAULT_NEWTON_TOL,
                              M: int = DEFAULT_M, mesh: Optional[RadialMesh] = None) -> Equilibrium:
    """Nonnegative equilibrium on the annulus (zero when lambda <= lambda_{1,mu,r})."""
    return nonnegative_equilibrium(annulus_forms(params, M, mesh), lam, tol=tol)


def zero_extension(annulus: DiscreteForms, v_annulus: np.ndarray, ball: DiscreteForms) -> np.ndarray:
    """
    Extends an annulus function by zero on [0, r] and returns its ground-state
    coefficients on the ball's free nodes (u interpolated at ball nodes, v = rho^beta u).
    """
    u_full = annulus.to_full(v_annulus)  # beta = 0 on annuli
    nodes = annulus.mesh.nodes
    rho = ball.rho
    u_hat = np.where(rho >= nodes[0], np.interp(rho, nodes, u_full), 0.0)
    return rho ** ball.beta * u_hat


@dataclass
class ExcisionRow:
    r: float
    lambda1_r: float
    gap: float
    eq_hmu_dist: float
    max_pointwise_violation: float
    annulus_hmu: float
    far_sup_dist: float = 0.0


@dataclass
class ExcisionSweep:
    """Per-radius annulus quantities against the ball limit (r = 0)."""
    radii: List[float]
    lam: float
    lambda1: float
    reference_hmu: float
    rows: List[ExcisionRow] = field(default_factory=list)
    extrapolated_lambda1: Optional[float] = None
    extrapolation_error: Optional[float] = None

    def csv_rows(self) -> List[list]:
        table = [[row.r, row.lambda1_r, row.gap, row.eq_hmu_dist, row.max_pointwise_violation] for row in self.rows]
        table.append([0.0, self.lambda1, 0.0, 0.0, 0.0])
        return table


def _positive_violation(values: np.ndarray, bound: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    return float(max(0.0, np.max(values - bound)))


def excision_sweep(params: ProblemParams, radii: Sequence[float], lam: float, tol: float = DEFAULT_NEWTON_TOL,
                   M: int = DEFAULT_M, eigen_tol: float = EIGEN_TOL) -> ExcisionSweep:
    """
    Eigenvalues and fixed-lambda equilibria on the annuli r < rho < R for a
    decreasing list of radii, compared with the ball problem on a uniform ball
    mesh of M elements.

    Per radius the sweep reports lambda_{1,mu,r}, the gap to lambda_{1,mu}, the
    mu-norm distance between the zero-extended annulus equilibrium and the
    ball equilibrium, the largest nodal excess u_{lambda,r} - u_lambda and the max-norm
    distance of the equilibria on rho >= FAR_RADIUS.
    Monotonicity along the sweep is logged, not raised.
    """
    radii = [float(r) for r in radii]
    if not radii:
        raise ParameterRangeError("Lista dei raggi vuota.")
    if any(not (0.0 < r < params.R) for r in radii):
        raise ParameterRangeError(f"Raggi fuori da (0, R={params.R}): {radii}")
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise ParameterRangeError(f"I raggi devono essere strettamente decrescenti: {radii}")

    ball_params = params.with_updates(r_in=0.0)
    ball_mesh = build_mesh(ball_params, M, 1.0)
    ball = assemble(ball_mesh, ball_params)
    ball_eigen = principal_eigenpair(ball, tol=eigen_tol)
    ball_eq = nonnegative_equilibrium(ball, lam, tol=tol, eigen=ball_eigen)
    eq_u_ball = ball.to_u(ball_eq.v)

    def row(r: float) -> ExcisionRow:
        mesh = annulus_submesh(ball_mesh, r)
        forms = annulus_forms(params.with_updates(r_in=r), mesh=mesh)
        eigen = principal_eigenpair(forms, tol=eigen_tol)
        eq = nonnegative_equilibrium(forms, lam, tol=tol, eigen=eigen)

        v_hat = zero_extension(forms, eq.v, ball)
        distance = hmu_norm(ball, v_hat - ball_eq.v)

        shared = (ball.rho >= r) & (ball.rho > 0.0)
        eq_hat_u = np.interp(ball.rho[shared], mesh.nodes, forms.to_full(eq.v))
        eq_violation = _positive_violation(eq_hat_u, eq_u_ball[shared])
        far = ball.rho[shared] >= FAR_RADIUS
        far_sup = float(np.max(np.abs(eq_hat_u[far] - eq_u_ball[shared][far]))) if np.any(far) else 0.0

        return ExcisionRow(r=r, lambda1_r=eigen.lambda_1, gap=eigen.lambda_1 - ball_eigen.lambda_1,
                           eq_hmu_dist=distance, max_pointwise_violation=eq_violation,
                           annulus_hmu=eq.norms.hmu, far_sup_dist=far_sup)

    sweep = ExcisionSweep(radii=radii, lam=lam, lambda1=ball_eigen.lambda_1, reference_hmu=ball_eq.norms.hmu)
    sweep.rows = map_ordered(row, radii)
    if len(sweep.rows) >= 3:
        xs = [gap_variable(params, row.r) for row in sweep.rows]
        sweep.extrapolated_lambda1 = richardson(xs, [row.lambda1_r for row in sweep.rows])
        sweep.extrapolation_error = abs(sweep.extrapolated_lambda1 - sweep.lambda1) / abs(sweep.lambda1)
        if sweep.extrapolation_error > EXTRAPOLATION_RTOL:
            logger.warning(
                f"Estrapolazione r -> 0 di lambda_1,r ({sweep.extrapolated_lambda1:.10g}) lontana da "
                f"lambda_1={sweep.lambda1:.10g}: scarto relativo {sweep.extrapolation_error:.3e}"
            )

    for prev, cur in zip(sweep.rows, sweep.rows[1:]):
        if not cur.lambda1_r < prev.lambda1_r:
            logger.warning(f"lambda_1,r non decrescente tra r={prev.r} e r={cur.r}")
        if cur.eq_hmu_dist > prev.eq_hmu_dist:
            logger.warning(f"Distanza dall'equilibrio non decrescente tra r={prev.r} e r={cur.r}")
    scale = float(np.max(np.abs(eq_u_ball[ball.rho > 0.0]))) if ball.n_dofs > 1 else 0.0
    for item in sweep.rows:
        if item.max_pointwise_violation > COMPARISON_RTOL * scale:
            logger.warning(f"Confronto nodale u_(lambda,r) <= u_lambda violato a r={item.r}: {item.max_pointwise_violation:.3e}")
    logger.info(
        f"Escissione: {len(radii)} raggi, lambda_1={ball_eigen.lambda_1:.10g}, ultimo gap={sweep.rows[-1].gap:.3e}, "
        f"ultima distanza={sweep.rows[-1].eq_hmu_dist:.3e}, sup su rho>={FAR_RADIUS}={sweep.rows[-1].far_sup_dist:.3e}"
    )
    return sweep

