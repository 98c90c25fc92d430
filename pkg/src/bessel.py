"""
Bessel functions of the first kind by power series, and their positive zeros.

The series is summed directly, so it is only used on the moderate range of
arguments the radial eigenvalue oracles need (x <= MAX_SERIES_ARGUMENT).
"""
from functools import lru_cache
import logging
from typing import List

import numpy as np
from scipy.optimize import bisect
from scipy.special import gamma as gamma_function

from .errors import ParameterRangeError

logger = logging.getLogger(__name__)

MAX_SERIES_ARGUMENT = 12.0
SCAN_STEP = 0.05
ZERO_XTOL = 1e-14
MAX_SERIES_TERMS = 300


def bessel_j_series(nu: float, x: float) -> float:
    """
    Evaluates J_nu(x) from its power series.

    Args:
        nu (float): Order, nu >= 0.
        x (float): Argument, 0 <= x <= MAX_SERIES_ARGUMENT.

    Returns:
        float: J_nu(x).
    """
    if nu < 0:
        raise ParameterRangeError(f"Ordine di Bessel negativo non supportato: nu={nu}")
    if x < 0 or x > MAX_SERIES_ARGUMENT:
        raise ParameterRangeError(
            f"Argomento fuori dall'intervallo della serie: x={x} (ammesso [0, {MAX_SERIES_ARGUMENT}])"
        )
    if x == 0.0:
        return 1.0 if nu == 0 else 0.0

    half = 0.5 * x
    term = half ** nu / gamma_function(nu + 1.0)
    total = term
    quarter_sq = half * half
    for k in range(1, MAX_SERIES_TERMS):
        term *= -quarter_sq / (k * (k + nu))
        total += term
        if abs(term) < 1e-18 * max(1.0, abs(total)) and k > half:
            break
    return float(total)


def bessel_zeros(nu: float, count: int) -> List[float]:
    """
    Returns the first `count` positive zeros of J_nu, bracketed by a sign scan
    and refined by bisection.
    """
    if count < 1:
        raise ParameterRangeError(f"Numero di zeri richiesto non valido: {count}")

    zeros: List[float] = []
    left = SCAN_STEP
    f_left = bessel_j_series(nu, left)
    while len(zeros) < count:
        right = left + SCAN_STEP
        if right > MAX_SERIES_ARGUMENT:
            raise ParameterRangeError(
                f"Solo {len(zeros)} zeri di J_{nu} trovati entro x={MAX_SERIES_ARGUMENT}; richiesti {count}."
            )
        f_right = bessel_j_series(nu, right)
        if f_left == 0.0:
            zeros.append(left)
        elif f_left * f_right < 0.0:
            root = bisect(lambda t: bessel_j_series(nu, t), left, right, xtol=ZERO_XTOL, maxiter=200)
            zeros.append(float(root))
        left, f_left = right, f_right

    logger.debug(f"Zeri di J_{nu}: {zeros}")
    return zeros


@lru_cache(maxsize=None)
def first_zero_j0() -> float:
    """z0 = 2.404825557695773..., the first zero of J_0, by bisection on [2, 3]."""
    return float(bisect(lambda t: bessel_j_series(0.0, t), 2.0, 3.0, xtol=ZERO_XTOL, maxiter=200))


def radial_ball_eigenvalues(s: float, count: int = 1, radius: float = 1.0) -> np.ndarray:
    """
    Squared zeros of J_s scaled to a ball of the given radius: the radial
    Dirichlet eigenvalues of -Laplace - mu/|x|^2 on the ball, in any dimension,
    with s = sqrt(mu_star - mu).
    """
    return np.asarray(bessel_zeros(s, count)) ** 2 / radius ** 2
