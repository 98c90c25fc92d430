"""
Principal eigenpair and leading spectrum of -Laplace - mu/|x|^2 on radial domains.
"""
from dataclasses import dataclass
import logging
import math
from typing import List, Sequence

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, eigh
from scipy.sparse.linalg import eigsh

from .constants import ProblemParams, lambda_omega
from .errors import ConvergenceError, ParameterRangeError
from .radial_forms import DEFAULT_GRADING, DEFAULT_M, DiscreteForms, NormReport, assemble, build_mesh, norm_report
from .workers import map_ordered

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
RESIDUAL_TOL = 1e-8
DEFAULT_MAX_ITER = 10000


@dataclass
class EigenPair:
    """Eigenvalue and L2-normalized, nonnegative eigenfunction (stored as v-coefficients)."""
    lambda_1: float
    v: np.ndarray
    norms: NormReport
    iterations: int
    residual: float


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray  # columns, M2-orthonormal

    @property
    def k(self) -> int:
        return len(self.eigenvalues)


def _normalize_sign(v: np.ndarray) -> np.ndarray:
    idx = int(np.argmax(np.abs(v)))
    return -v if v[idx] < 0 else v


def inverse_iteration(forms: DiscreteForms, ab_upper: np.ndarray, tol: float = DEFAULT_TOL,
                      max_iter: int = DEFAULT_MAX_ITER, polish: int = 0) -> tuple:
    """
    Smallest eigenpair of A v = theta M2 v for a symmetric positive definite
    tridiagonal A given in upper banded storage. A is factored once.

    After convergence up to `polish` further steps are taken and the iterate
    with the smallest residual is kept.

    Returns:
        tuple: (theta, v, iterations, residual) with v M2-normalized and sign-fixed.

    Raises:
        ConvergenceError: if the cap is reached before the eigenvalue change drops
                          below tol and the relative residual below RESIDUAL_TOL.
    """
    factor = cholesky_banded(ab_upper, lower=False)

    def apply_a(x: np.ndarray) -> np.ndarray:
        y = ab_upper[1] * x
        y[:-1] += ab_upper[0, 1:] * x[1:]
        y[1:] += ab_upper[0, 1:] * x[:-1]
        return y

    def advance(x: np.ndarray) -> tuple:
        w = cho_solve_banded((factor, False), forms.apply_M(x))
        x = w / math.sqrt(w @ forms.apply_M(w))
        ax = apply_a(x)
        mx = forms.apply_M(x)
        theta = float(x @ ax) / float(x @ mx)
        return x, theta, float(np.linalg.norm(ax - theta * mx) / np.linalg.norm(ax))

    v = np.ones(forms.n_dofs)
    v /= math.sqrt(v @ forms.apply_M(v))
    theta_prev = float(v @ apply_a(v))
    residual = float("inf")
    for iteration in range(1, max_iter + 1):
        v, theta, residual = advance(v)
        change = abs(theta - theta_prev)
        theta_prev = theta
        if change < tol * abs(theta) and residual < RESIDUAL_TOL:
            best = (theta, v, residual)
            x = v
            for _ in range(polish):
                x, theta_x, residual_x = advance(x)
                if residual_x < best[2]:
                    best = (theta_x, x, residual_x)
            theta, v, residual = best
            logger.debug(f"Iterazione inversa convergente: theta={theta:.15g}, iterazioni={iteration}, residuo={residual:.3e}")
            return theta, _normalize_sign(v), iteration, residual

    raise ConvergenceError(
        "Iterazione inversa non convergente entro il limite di iterazioni.",
        residual=residual,
        iterations=max_iter,
    )


def principal_eigenpair(forms: DiscreteForms, tol: float = DEFAULT_TOL,
                        max_iter: int = DEFAULT_MAX_ITER) -> EigenPair:
    """
    Principal eigenpair of K v = lambda M2 v by inverse power iteration with a single
    banded Cholesky factorization of K.

    Args:
        forms (DiscreteForms): Assembled forms.
        tol (float): Relative eigenvalue change at convergence.
        max_iter (int): Iteration cap.

    Returns:
        EigenPair: lambda_1 and the eigenfunction with ||u||_L2 = 1, largest nodal value positive.
    """
    if tol <= 0:
        raise ParameterRangeError(f"Tolleranza non positiva: {tol}")
    lam, v, iterations, residual = inverse_iteration(forms, forms.banded(), tol=tol, max_iter=max_iter)

    floor = lambda_omega(forms.params.N, forms.params.geometry.volume)
    if lam < floor * (1.0 - 10.0 * tol):
        logger.warning(f"Autovalore {lam:.10g} sotto la costante di Hardy-Poincaré {floor:.10g}: mesh troppo grossolana?")

    logger.info(f"Autovalore principale: lambda_1={lam:.12g} (mu={forms.params.mu}, iterazioni={iterations})")
    return EigenPair(lambda_1=lam, v=v, norms=norm_report(forms, v), iterations=iterations, residual=residual)


def spectrum(forms: DiscreteForms, k: int, tol: float = DEFAULT_TOL) -> Spectrum:
    """
    First k eigenpairs in ascending order, M2-orthonormal and sign-normalized.

    Uses shift-invert Lanczos (eigsh, sigma=0); falls back to a dense generalized
    eigensolver when k is close to the number of degrees of freedom.

    Raises:
        ParameterRangeError: if k < 1 or k exceeds the degrees of freedom.
    """
    n = forms.n_dofs
    if k < 1 or k > n:
        raise ParameterRangeError(f"Numero di autovalori richiesto non valido: k={k} (gradi di libertà {n}).")

    if k >= n - 1:
        K = forms.sparse_K().toarray()
        M2 = forms.sparse_M().toarray()
        values, vectors = eigh(K, M2, subset_by_index=[0, k - 1])
    else:
        values, vectors = eigsh(
            forms.sparse_K(), k=k, M=forms.sparse_M(), sigma=0.0, which="LM",
            v0=np.ones(n), tol=min(tol, 1e-12),
        )

    order = np.argsort(values)
    values = np.asarray(values[order], dtype=float)
    vectors = np.asarray(vectors[:, order], dtype=float)
    for j in range(k):
        col = vectors[:, j]
        col = col / math.sqrt(col @ forms.apply_M(col))
        vectors[:, j] = _normalize_sign(col)

    logger.info(f"Spettro calcolato: {k} autovalori, lambda_1={values[0]:.12g}")
    return Spectrum(eigenvalues=values, eigenfunctions=vectors)


@dataclass
class MuSweepRow:
    mu: float
    lambda1: float
    l2_over_h10: float
    hmu_norm: float
    M: int
    grading: float


MU_SWEEP_HEADER = ["mu", "lambda1", "l2_over_h10", "hmu_norm", "M", "grading"]


def mu_sweep(base: ProblemParams, mus: Sequence[float], M: int = DEFAULT_M,
             grading: float = DEFAULT_GRADING, tol: float = DEFAULT_TOL) -> List[MuSweepRow]:
    """
    Principal eigenvalue and the ratio ||u_1||_L2 / ||u_1||_H01,trunc along a list of mu.

    Rows are independent and returned in input order. Strict decrease of both
    columns along increasing mu is checked and logged, not raised.
    """
    mesh = build_mesh(base, M, grading)

    def row(mu: float) -> MuSweepRow:
        forms = assemble(mesh, base.with_updates(mu=mu))
        pair = principal_eigenpair(forms, tol=tol)
        ratio = pair.norms.l2 / pair.norms.h10_trunc
        return MuSweepRow(mu=mu, lambda1=pair.lambda_1, l2_over_h10=ratio, hmu_norm=pair.norms.hmu,
                          M=M, grading=mesh.grading)

    rows = map_ordered(row, list(mus))
    ascending = sorted(rows, key=lambda r: r.mu)
    for prev, cur in zip(ascending, ascending[1:]):
        if not cur.lambda1 < prev.lambda1:
            logger.warning(f"lambda_1 non decrescente tra mu={prev.mu} e mu={cur.mu}")
        if not cur.l2_over_h10 < prev.l2_over_h10:
            logger.warning(f"Rapporto L2/H01 non decrescente tra mu={prev.mu} e mu={cur.mu}")
    return rows


def mu_sweep_rows(rows: List[MuSweepRow]) -> List[list]:
    return [[r.mu, r.lambda1, r.l2_over_h10, r.hmu_norm, r.M, r.grading] for r in rows]
