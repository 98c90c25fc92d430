"""
Branch solutions as mu increases to mu_star: boundedness in the critical form
against growth of the truncated H_0^1 norm.

All cross-mu quantities are measured in the mu_star form. For a solution
computed at mu < mu_star in its own ground-state variable, the exact identity

    ||u||_{mu_star}^2 = v^T K_mu v - (mu_star - mu) v^T H_mu v

gives the critical norm without changing variables.
"""
from dataclasses import dataclass, field
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .constants import ProblemParams, critical_mu
from .eigensolver import DEFAULT_TOL as EIGEN_TOL, principal_eigenpair
from .equilibrium import DEFAULT_NEWTON_TOL, Equilibrium, nonnegative_equilibrium
from .errors import ParameterRangeError
from .excision import richardson
from .radial_forms import (DEFAULT_GRADING, DEFAULT_M, DiscreteForms, RadialMesh, assemble, build_mesh,
                           h10_squared, hmu_norm)
from .workers import map_ordered

logger = logging.getLogger(__name__)

MU_LIMIT_HEADER = ["mu", "lambda", "hmu_star", "h10_trunc_L1", "h10_trunc_L2", "h10_trunc_L3", "l2", "dist_to_ref"]
DEFAULT_LEVELS = 3
SATURATION_RATIO = 0.75
REFINEMENT_DRIFT = 1e-2
DEFAULT_OFFSET_SCALE = 1.0
DEFAULT_OFFSET_EXPONENT = 0.125
DISTANCE_LIMIT_FRACTION = 1e-3


def default_offsets(params: ProblemParams, mus: Sequence[float], scale: float = DEFAULT_OFFSET_SCALE,
                    exponent: float = DEFAULT_OFFSET_EXPONENT) -> List[float]:
    """
    delta_n = scale (mu_star - mu_n)^exponent. With exponent below 1/2 the offsets
    tend to 0 more slowly than the truncated norm of u_{1,mu_n} grows.
    """
    offsets = []
    for mu in mus:
        gap = params.mu_star - mu
        if gap <= 0.0:
            raise ParameterRangeError(f"Lo schedule degli scarti richiede mu < mu* (mu={mu}, mu*={params.mu_star}).")
        offsets.append(scale * gap ** exponent)
    return offsets


def distance_limit(mus: Sequence[float], distances: Sequence[float], mu_star: float) -> float:
    """
    Limit of the distance to the critical solution as mu -> mu_star: the line through
    the last two rows in the variable s = (mu_star - mu)^(1/2), evaluated at s = 0
    and clamped at 0.
    """
    s = [math.sqrt(mu_star - mu) for mu in mus]
    if len(s) < 2:
        raise ParameterRangeError(f"Servono almeno due righe sotto mu* (ricevute {len(s)}).")
    if any(x <= 0.0 for x in s):
        raise ParameterRangeError(f"Le righe devono avere mu < mu*: {list(mus)}")
    return max(richardson(s[-2:], distances[-2:]), 0.0)


def critical_norm(forms: DiscreteForms, v: np.ndarray) -> float:
    """||u||_{mu_star} of u = rho^(-beta) v, from the forms at mu."""
    mu_star = critical_mu(forms.params.N)
    hmu_sq = float(v @ forms.apply_K(v))
    gap = mu_star - forms.params.mu
    if gap <= 0.0:
        return math.sqrt(max(hmu_sq, 0.0))
    return math.sqrt(max(hmu_sq - gap * float(v @ forms.apply_H(v)), 0.0))


def to_reference_variable(forms: DiscreteForms, v: np.ndarray, beta_ref: float) -> np.ndarray:
    """
    Nodal coefficients of u = rho^(-beta) v in the variable rho^beta_ref u on the
    same mesh. At rho = 0 the value of the first positive node is used.
    """
    if beta_ref == forms.beta:
        return np.array(v, dtype=float, copy=True)
    rho = forms.rho
    w = np.empty_like(v)
    positive = rho > 0.0
    w[positive] = rho[positive] ** (beta_ref - forms.beta) * v[positive]
    if not positive.all():
        w[~positive] = w[positive][0] if positive.any() else 0.0
    return w


def saturated(values: Sequence[float], ratio: float = SATURATION_RATIO) -> bool:
    """
    True when a refinement sequence levels off: some increment is not positive,
    or the last increment is below `ratio` times the previous one.
    """
    increments = np.diff(np.asarray(values, dtype=float))
    if increments.size == 0:
        return False
    if np.any(increments <= 0.0):
        return True
    if increments.size >= 2 and increments[-1] < ratio * increments[-2]:
        return True
    return False


@dataclass
class MuLimitRow:
    mu: float
    lam: float
    hmu_star: float
    h10_trunc: List[float]
    l2: float
    dist_to_ref: float
    hmu_star_levels: List[float]
    trivial: bool

    def csv_row(self, levels: int = DEFAULT_LEVELS) -> list:
        h10 = list(self.h10_trunc) + [float("nan")] * (levels - len(self.h10_trunc))
        return [self.mu, self.lam, self.hmu_star, *h10[:levels], self.l2, self.dist_to_ref]


@dataclass
class MuLimitTable:
    rows: List[MuLimitRow] = field(default_factory=list)
    meshes: List[int] = field(default_factory=list)
    extrapolated_distance: Optional[float] = None
    distance_limit_ok: Optional[bool] = None

    def csv_rows(self) -> List[list]:
        return [row.csv_row() for row in self.rows]


def _level_meshes(params: ProblemParams, M: int, grading: float, levels: int) -> List[RadialMesh]:
    if levels < 1:
        raise ParameterRangeError(f"Numero di livelli di raffinamento non valido: {levels}")
    return [build_mesh(params, M * 2 ** k, grading) for k in range(levels)]


def _mu_limit_rows(params: ProblemParams, pairs: Sequence[Tuple[float, float]], M: int, grading: float,
                   levels: int, tol: float) -> MuLimitTable:
    if not params.is_ball:
        raise ParameterRangeError("Lo studio mu -> mu_star richiede la palla (r_in = 0).")
    mu_star = params.mu_star
    for mu, _ in pairs:
        if not (0.0 < mu <= mu_star):
            raise ParameterRangeError(f"mu={mu} fuori da (0, mu_star={mu_star}].")

    meshes = _level_meshes(params, M, grading, levels)
    finest = meshes[-1]
    reference_forms = assemble(finest, params.with_updates(mu=mu_star))
    references: Dict[float, Equilibrium] = {}

    def reference(lam: float) -> Equilibrium:
        if lam not in references:
            references[lam] = nonnegative_equilibrium(reference_forms, lam, tol=tol)
        return references[lam]

    for lam in sorted({lam for _, lam in pairs}):
        reference(lam)

    def row(pair: Tuple[float, float]) -> MuLimitRow:
        mu, lam = pair
        h10_levels: List[float] = []
        hmu_star_levels: List[float] = []
        eq = None
        forms = None
        for mesh in meshes:
            forms = assemble(mesh, params.with_updates(mu=mu))
            eq = nonnegative_equilibrium(forms, lam, tol=tol)
            h10_levels.append(math.sqrt(max(h10_squared(forms, eq.v, skip_first=True), 0.0)))
            hmu_star_levels.append(critical_norm(forms, eq.v))
        ref = references[lam]
        w = to_reference_variable(forms, eq.v, reference_forms.beta)
        distance = hmu_norm(reference_forms, w - ref.v)
        return MuLimitRow(mu=mu, lam=lam, hmu_star=hmu_star_levels[-1], h10_trunc=h10_levels, l2=eq.norms.l2,
                          dist_to_ref=distance, hmu_star_levels=hmu_star_levels, trivial=eq.is_trivial)

    table = MuLimitTable(rows=map_ordered(row, list(pairs)), meshes=[m.M for m in meshes])

    for item in table.rows:
        if item.trivial:
            logger.warning(f"Equilibrio banale a mu={item.mu}, lambda={item.lam}: lambda sotto l'autovalore principale?")
        if item.hmu_star ** 2 > item.lam * item.l2 ** 2 + 1e-10:
            logger.warning(f"||u||_mu*^2 > lambda ||u||_L2^2 a mu={item.mu}")
    return table


def branch_mu_sweep(params: ProblemParams, mus: Sequence[float], lam: float, tol: float = DEFAULT_NEWTON_TOL,
                    M: int = DEFAULT_M, grading: float = DEFAULT_GRADING,
                    levels: int = DEFAULT_LEVELS) -> MuLimitTable:
    """
    Equilibria at fixed lambda for an increasing list of mu up to mu_star, measured
    in the mu_star form on the finest of `levels` nested refinements (M, 2M, 4M, ...).

    The distance column compares each solution with the mu_star solution at the
    same lambda. Its limit as mu -> mu_star (see `distance_limit`) is stored in
    `extrapolated_distance` and compared with 1e-3 times the first distance.
    """
    mus = [float(m) for m in mus]
    if any(b <= a for a, b in zip(mus, mus[1:])):
        raise ParameterRangeError(f"La lista dei mu deve essere strettamente crescente: {mus}")
    lambda_star = principal_eigenpair(assemble(build_mesh(params, M, grading), params.with_updates(mu=params.mu_star))).lambda_1
    if lam <= lambda_star:
        logger.warning(f"lambda={lam} non supera lambda_1,mu*={lambda_star:.10g}: equilibri banali attesi.")

    table = _mu_limit_rows(params, [(mu, lam) for mu in mus], M, grading, levels, tol)
    below = [row for row in table.rows if row.mu < params.mu_star]
    if len(below) >= 2:
        limit = distance_limit([row.mu for row in below], [row.dist_to_ref for row in below], params.mu_star)
        table.extrapolated_distance = limit
        table.distance_limit_ok = limit <= DISTANCE_LIMIT_FRACTION * below[0].dist_to_ref
        if not table.distance_limit_ok:
            logger.warning(
                f"Limite estrapolato della distanza {limit:.3e} sopra {DISTANCE_LIMIT_FRACTION:g} volte "
                f"la prima distanza ({below[0].dist_to_ref:.3e})."
            )
    for prev, cur in zip(table.rows, table.rows[1:]):
        if cur.dist_to_ref > prev.dist_to_ref:
            logger.warning(f"Distanza dalla soluzione critica non decrescente tra mu={prev.mu} e mu={cur.mu}")
    logger.info(f"Studio mu -> mu*: {len(mus)} righe a lambda={lam}, mesh {table.meshes}")
    return table


@dataclass
class BlowupReport:
    table: MuLimitTable
    growth_along_n: bool
    growth_along_refinement: bool
    saturated: bool
    hmu_star_drift: List[float]
    stable_critical_norm: bool
    eigen_ratios: List[float]
    eigen_ratio_decreasing: bool

    @property
    def reproduced(self) -> bool:
        return (self.growth_along_n and self.growth_along_refinement and not self.saturated
                and self.stable_critical_norm)


def probe_lambdas(params: ProblemParams, mus: Sequence[float], deltas: Sequence[float], mesh: RadialMesh,
                  tol: float = EIGEN_TOL) -> Tuple[List[float], List[float]]:
    """lambda_n = lambda_{1,mu_n} + delta_n on `mesh`; returns (lambdas, eigen L2/H01_trunc ratios)."""
    if len(deltas) != len(mus):
        raise ParameterRangeError(f"Servono tanti delta quanti mu ({len(deltas)} contro {len(mus)}).")
    lambdas, ratios = [], []
    for mu, delta in zip(mus, deltas):
        if delta <= 0:
            raise ParameterRangeError(f"Scarto delta non positivo: {delta}")
        pair = principal_eigenpair(assemble(mesh, params.with_updates(mu=mu)), tol=tol)
        lambdas.append(pair.lambda_1 + delta)
        ratios.append(pair.norms.l2 / pair.norms.h10_trunc)
    return lambdas, ratios


def h10_blowup_probe(params: ProblemParams, mus: Sequence[float], deltas: Optional[Sequence[float]] = None,
                     lambdas: Optional[Sequence[float]] = None, levels: int = DEFAULT_LEVELS,
                     M: int = DEFAULT_M, grading: float = DEFAULT_GRADING,
                     tol: float = DEFAULT_NEWTON_TOL) -> BlowupReport:
    """
    Truncated H_0^1 norms of branch solutions along mu_n -> mu_star at `levels`
    refinements. Each mu_n is paired with lambda_n = lambda_{1,mu_n} + delta_n
    (default delta_n from `default_offsets`) unless explicit lambdas are given.

    The report states whether the truncated norm grows along n (finest level)
    and along refinement (last mu) without saturating, and whether the critical
    norm drifts by less than 1% across refinements. A failed reproduction is
    reported, not raised.
    """
    mus = [float(m) for m in mus]
    if any(b <= a for a, b in zip(mus, mus[1:])):
        raise ParameterRangeError(f"La lista dei mu deve essere strettamente crescente: {mus}")
    finest = build_mesh(params, M * 2 ** (levels - 1), grading)
    if deltas is None:
        deltas = default_offsets(params, mus)
    computed, ratios = probe_lambdas(params, mus, deltas, finest)
    if lambdas is None:
        lambdas = computed
    elif len(lambdas) != len(mus):
        raise ParameterRangeError(f"Servono tanti lambda quanti mu ({len(lambdas)} contro {len(mus)}).")

    table = _mu_limit_rows(params, list(zip(mus, [float(x) for x in lambdas])), M, grading, levels, tol)
    finest_h10 = [row.h10_trunc[-1] for row in table.rows]
    growth_n = bool(np.all(np.diff(finest_h10) > 0))
    last = table.rows[-1].h10_trunc
    growth_refinement = bool(np.all(np.diff(last) > 0))
    is_saturated = saturated(last)
    drift = [
        (max(row.hmu_star_levels) - min(row.hmu_star_levels)) / max(row.hmu_star_levels[-1], 1e-300)
        for row in table.rows
    ]
    stable = all(d < REFINEMENT_DRIFT for d in drift)
    eigen_decreasing = bool(np.all(np.diff(ratios) < 0))

    report = BlowupReport(table=table, growth_along_n=growth_n, growth_along_refinement=growth_refinement,
                          saturated=is_saturated, hmu_star_drift=drift, stable_critical_norm=stable,
                          eigen_ratios=ratios, eigen_ratio_decreasing=eigen_decreasing)
    if report.reproduced:
        logger.info("Crescita della norma H01 troncata confermata lungo mu_n e lungo il raffinamento.")
    else:
        logger.warning(
            f"Crescita H01 non riprodotta: lungo n={growth_n}, lungo raffinamento={growth_refinement}, "
            f"saturazione={is_saturated}, deriva norma critica={max(drift):.3e}"
        )
    return report
