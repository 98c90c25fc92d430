"""
Radial meshes and the bilinear forms of -Laplace - mu/|x|^2 in the ground-state variable.

Functions are discretized as v(rho) = rho^beta u(rho) with beta the smaller root of
beta(N - 2 - beta) = mu. In that variable

    int |grad u|^2 - mu u^2/|x|^2 dx = |S^{N-1}| int rho^(N-1-2 beta) |v'|^2 d rho,

so the singular profile rho^(-beta) of u is carried by a bounded v. On annuli
(0 outside the domain) the assembly runs in u itself (beta = 0) and keeps the
inverse-square term explicitly.

Every weighted integral int rho^e (basis product) is evaluated in closed form per
element. Operators are symmetric tridiagonal and stored as (diag, off) pairs over
the free nodes (Dirichlet nodes eliminated).
"""
from dataclasses import dataclass, field
import logging
import math
from pathlib import Path
from typing import Optional
import zipfile

import numpy as np
import scipy.sparse as sp
from scipy.special import hyp2f1

from .constants import MU_TOLERANCE, ProblemParams, critical_mu, validate
from .errors import ConfigurationError, InfeasibleWeightError, ParameterRangeError
from .file_handler import write_csv

logger = logging.getLogger(__name__)

DEFAULT_GRADING = 0.75
DEFAULT_M = 512
TEST_M = 64
MIN_ELEMENTS = 8
LAYER_FLOOR = 1e-6
FORMS_FORMAT_VERSION = 1
DUMP_TIMESTAMP = (1980, 1, 1, 0, 0, 0)


@dataclass(frozen=True)
class GroundStateWeight:
    """Exponent of the substitution v = rho^beta u, with s = (N - 2)/2 - beta."""
    beta: float
    s: float


def ground_state_exponent(N: int, mu: float) -> GroundStateWeight:
    """
    Returns beta = (N-2)/2 - sqrt(mu_star - mu), the smaller root of beta(N-2-beta) = mu.

    Raises:
        ParameterRangeError: if mu < 0 or mu > mu_star(N).
    """
    mu_star = critical_mu(N)
    if mu < 0 or mu > mu_star + MU_TOLERANCE:
        raise ParameterRangeError(f"mu={mu} fuori dall'intervallo [0, mu_star={mu_star}].")
    s = math.sqrt(max(mu_star - mu, 0.0))
    return GroundStateWeight(beta=(N - 2) / 2.0 - s, s=s)


@dataclass(frozen=True)
class RadialMesh:
    """Nodes r_in = rho_0 < ... < rho_M = R, geometrically graded toward rho = 0 on balls."""
    nodes: np.ndarray
    grading: float
    layer: int

    @property
    def M(self) -> int:
        return len(self.nodes) - 1

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def r_in(self) -> float:
        return float(self.nodes[0])

    @property
    def R(self) -> float:
        return float(self.nodes[-1])


def build_mesh(params: ProblemParams, M: int, grading: float = DEFAULT_GRADING) -> RadialMesh:
    """
    Builds a radial mesh of M elements on [r_in, R].

    On a ball with grading q < 1 the innermost L = min(M // 4, floor(log(1e-6) / log q))
    elements form a geometric layer (adjacent size ratio q, smallest element at the
    origin) that joins a uniform outer mesh with the same ratio. Annuli and q = 1
    give uniform meshes.

    Raises:
        ConfigurationError: if M < 8 or q is outside (0, 1].
    """
    if M < MIN_ELEMENTS:
        raise ConfigurationError(f"Numero di elementi troppo basso: M={M} (minimo {MIN_ELEMENTS}).")
    if not (0.0 < grading <= 1.0):
        raise ConfigurationError(f"Rapporto di graduazione non valido: {grading} (ammesso (0, 1]).")

    if params.r_in > 0 or grading == 1.0:
        nodes = np.linspace(params.r_in, params.R, M + 1)
        return RadialMesh(nodes=nodes, grading=1.0 if params.r_in > 0 else grading, layer=0)

    q = grading
    layer = max(1, min(M // 4, int(math.floor(math.log(LAYER_FLOOR) / math.log(q)))))
    powers = q ** np.arange(layer, 0, -1)  # q^L, ..., q^1
    outer_size = params.R / (powers.sum() + (M - layer))
    inner = np.concatenate(([0.0], np.cumsum(powers * outer_size)))
    outer = np.linspace(inner[-1], params.R, M - layer + 1)[1:]
    nodes = np.concatenate((inner, outer))
    nodes[-1] = params.R
    logger.debug(f"Mesh graduata: M={M}, q={q}, strato={layer}, primo elemento={nodes[1]:.3e}")
    return RadialMesh(nodes=nodes, grading=q, layer=layer)


def annulus_submesh(mesh: RadialMesh, r: float) -> RadialMesh:
    """Restricts a mesh to [r, R], inserting r as a node when it is not one already."""
    if not (mesh.nodes[0] <= r < mesh.R):
        raise ParameterRangeError(f"Raggio di escissione fuori dal dominio: r={r}")
    h_min = float(mesh.sizes.min())
    keep = mesh.nodes[mesh.nodes > r + 1e-9 * h_min]
    nodes = np.concatenate(([r], keep))
    return RadialMesh(nodes=nodes, grading=1.0, layer=0)


def _power_integral(x0: np.ndarray, x1: np.ndarray, e: float) -> np.ndarray:
    """int_{x0}^{x1} rho^e d rho elementwise."""
    if abs(e + 1.0) < 1e-13:
        return np.log(x1 / x0)
    return (x1 ** (e + 1.0) - x0 ** (e + 1.0)) / (e + 1.0)


def _element_moments(x0: np.ndarray, x1: np.ndarray, e: float) -> np.ndarray:
    """
    Closed-form moments A_k = int_{x0}^{x1} rho^e t^k d rho, t = (rho - x0)/h, k = 0, 1, 2.

    Elements far from the origin (x0 >= 2h) use the hypergeometric form
    x0^e h 2F1(-e, k+1; k+2; -h/x0) / (k+1); the others expand t^k in powers of rho.
    """
    h = x1 - x0
    moments = np.empty((3, len(x0)))
    far = x0 >= 2.0 * h
    near = ~far

    if far.any():
        xf, hf = x0[far], h[far]
        tau = hf / xf
        scale = xf ** e * hf
        for k in range(3):
            moments[k, far] = scale * hyp2f1(-e, k + 1.0, k + 2.0, -tau) / (k + 1.0)

    if near.any():
        xn, x1n, hn = x0[near], x1[near], h[near]
        p0 = _power_integral(xn, x1n, e)
        p1 = _power_integral(xn, x1n, e + 1.0)
        p2 = _power_integral(xn, x1n, e + 2.0)
        moments[0, near] = p0
        moments[1, near] = (p1 - xn * p0) / hn
        moments[2, near] = (p2 - 2.0 * xn * p1 + xn ** 2 * p0) / hn ** 2

    return moments


def _tridiagonal_mass(moments: np.ndarray):
    """Element mass blocks int w phi_i phi_j from moments of t: returns (m00, m01, m11)."""
    a0, a1, a2 = moments
    return a0 - 2.0 * a1 + a2, a1 - a2, a2


def _assemble_tridiagonal(block_00: np.ndarray, block_01: np.ndarray, block_11: np.ndarray):
    n_nodes = len(block_00) + 1
    diag = np.zeros(n_nodes)
    diag[:-1] += block_00
    diag[1:] += block_11
    return diag, block_01.copy()


def _restrict(diag: np.ndarray, off: np.ndarray, free: np.ndarray):
    lo, hi = free[0], free[-1]
    return diag[lo:hi + 1].copy(), off[lo:hi].copy()


@dataclass
class DiscreteForms:
    """
    Stiffness K (the H_mu inner product), mass M2 (L^2) and lumped nonlinear
    weights on the free nodes of a radial mesh. Not modified after assembly, so
    a single instance may be shared by concurrent read-only solves.
    """
    params: ProblemParams
    mesh: RadialMesh
    weight: GroundStateWeight
    free: np.ndarray
    K_diag: np.ndarray
    K_off: np.ndarray
    M_diag: np.ndarray
    M_off: np.ndarray
    lumped: np.ndarray
    stiffness_exponent: float
    nonlinear_exponent: float
    angular_factor: float
    H_diag: Optional[np.ndarray] = None
    H_off: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_dofs(self) -> int:
        return len(self.free)

    @property
    def rho(self) -> np.ndarray:
        return self.mesh.nodes[self.free]

    @property
    def beta(self) -> float:
        return self.weight.beta

    @property
    def gamma(self) -> float:
        return self.params.gamma

    def apply_K(self, v: np.ndarray) -> np.ndarray:
        return _tridiagonal_apply(self.K_diag, self.K_off, v)

    def apply_M(self, v: np.ndarray) -> np.ndarray:
        return _tridiagonal_apply(self.M_diag, self.M_off, v)

    def apply_abs_K(self, v: np.ndarray) -> np.ndarray:
        """|K| |v| entrywise, the magnitude scale of K v."""
        return _tridiagonal_apply(np.abs(self.K_diag), np.abs(self.K_off), np.abs(v))

    def apply_abs_M(self, v: np.ndarray) -> np.ndarray:
        return _tridiagonal_apply(self.M_diag, self.M_off, np.abs(v))

    def apply_H(self, v: np.ndarray) -> np.ndarray:
        if self.H_diag is None:
            raise InfeasibleWeightError("Il momento del potenziale 1/|x|^2 non è integrabile su questa mesh.")
        return _tridiagonal_apply(self.H_diag, self.H_off, v)

    def nonlinear(self, v: np.ndarray) -> np.ndarray:
        """Assembled |u|^(2 gamma) u against the test functions (nodal, lumped)."""
        return self.lumped * np.abs(v) ** (2.0 * self.gamma) * v

    def nonlinear_weight(self, v: np.ndarray) -> np.ndarray:
        """Diagonal of W(u): lumped |v|^(2 gamma)."""
        return self.lumped * np.abs(v) ** (2.0 * self.gamma)

    def nonlinear_energy(self, v: np.ndarray) -> float:
        """int |u|^(2 gamma + 2) dx in the lumped quadrature."""
        return float(np.sum(self.lumped * np.abs(v) ** (2.0 * self.gamma + 2.0)))

    def banded(self, shift_mass: float = 0.0, diag_extra: Optional[np.ndarray] = None,
               stiffness_scale: float = 1.0) -> np.ndarray:
        """
        Upper banded storage (2, n) of stiffness_scale*K + shift_mass*M2 + diag(diag_extra),
        the layout expected by scipy.linalg.solveh_banded / cholesky_banded.
        """
        diag = stiffness_scale * self.K_diag + shift_mass * self.M_diag
        off = stiffness_scale * self.K_off + shift_mass * self.M_off
        if diag_extra is not None:
            diag = diag + diag_extra
        ab = np.zeros((2, self.n_dofs))
        ab[0, 1:] = off
        ab[1, :] = diag
        return ab

    def mass_banded(self) -> np.ndarray:
        ab = np.zeros((2, self.n_dofs))
        ab[0, 1:] = self.M_off
        ab[1, :] = self.M_diag
        return ab

    def sparse_K(self) -> sp.csc_matrix:
        if "K" not in self._cache:
            self._cache["K"] = sp.diags([self.K_off, self.K_diag, self.K_off], [-1, 0, 1], format="csc")
        return self._cache["K"]

    def sparse_M(self) -> sp.csc_matrix:
        if "M" not in self._cache:
            self._cache["M"] = sp.diags([self.M_off, self.M_diag, self.M_off], [-1, 0, 1], format="csc")
        return self._cache["M"]

    def to_full(self, v: np.ndarray) -> np.ndarray:
        """Nodal vector on all mesh nodes (zeros on Dirichlet nodes)."""
        full = np.zeros(self.mesh.M + 1)
        full[self.free] = v
        return full

    def to_u(self, v: np.ndarray) -> np.ndarray:
        """Nodal values of u = rho^(-beta) v on the free nodes (inf/nan at rho = 0 when beta > 0)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.rho ** (-self.beta) * v

    def from_u(self, u: np.ndarray) -> np.ndarray:
        """Ground-state coefficients v = rho^beta u of nodal values u on the free nodes."""
        return self.rho ** self.beta * u


def _tridiagonal_apply(diag: np.ndarray, off: np.ndarray, v: np.ndarray) -> np.ndarray:
    y = diag * v
    y[:-1] += off * v[1:]
    y[1:] += off * v[:-1]
    return y


def assemble(mesh: RadialMesh, params: ProblemParams, beta: Optional[float] = None) -> DiscreteForms:
    """
    Assembles K, M2 and the nonlinear weight table for `params` on `mesh`.

    The exponent beta defaults to the ground-state root on balls and to 0 on
    annuli. With weight exponent a = N-1-2beta, the forms are

        K  = |S| [ int rho^a v'w' + (beta(N-2-beta) - mu) int rho^(a-2) v w ],
        M2 = |S| int rho^a v w,
        m_i = |S| int rho^(N-1-2beta(gamma+1)) phi_i.

    Dirichlet conditions at R (and at r_in on annuli) are imposed by elimination;
    on balls v is left free at rho = 0.

    Raises:
        ParameterRangeError: if params are not admissible.
        InfeasibleWeightError: if a weight touching rho = 0 is not integrable.
    """
    report = validate(params)
    if not report.is_valid:
        raise ParameterRangeError(f"Parametri non ammissibili: {report}")
    if abs(mesh.r_in - params.r_in) > 1e-12 or abs(mesh.R - params.R) > 1e-12:
        raise ConfigurationError(
            f"Mesh [{mesh.r_in}, {mesh.R}] incompatibile con il dominio [{params.r_in}, {params.R}]."
        )

    N, gamma = params.N, params.gamma
    if beta is None:
        weight = ground_state_exponent(N, params.mu) if params.is_ball else GroundStateWeight(beta=0.0, s=(N - 2) / 2.0)
    else:
        weight = GroundStateWeight(beta=beta, s=(N - 2) / 2.0 - beta)
    b = weight.beta
    a = N - 1.0 - 2.0 * b
    nl_exp = N - 1.0 - 2.0 * b * (gamma + 1.0)
    potential_coeff = b * (N - 2.0 - b) - params.mu
    if abs(potential_coeff) < 1e-13:
        potential_coeff = 0.0

    touches_origin = mesh.r_in == 0.0
    if touches_origin and nl_exp <= -1.0:
        raise InfeasibleWeightError(
            f"Peso non integrabile nell'origine: esponente {nl_exp:.6g} <= -1 (gamma={gamma}, beta={b})."
        )

    x0, x1 = mesh.nodes[:-1], mesh.nodes[1:]
    h = x1 - x0
    angular = params.geometry.angular_factor

    moments = _element_moments(x0, x1, a)
    stiff = moments[0] / h ** 2
    k_diag, _ = _assemble_tridiagonal(stiff, -stiff, stiff)
    k_off = -stiff
    m00, m01, m11 = _tridiagonal_mass(moments)
    m_diag, m_off = _assemble_tridiagonal(m00, m01, m11)

    h_diag = h_off = None
    potential_integrable = (not touches_origin) or (a - 2.0 > -1.0)
    if potential_integrable:
        pm = _element_moments(x0, x1, a - 2.0)
        h_diag, h_off = _assemble_tridiagonal(*_tridiagonal_mass(pm))
    if potential_coeff != 0.0:
        if h_diag is None:
            raise InfeasibleWeightError(
                f"Il termine 1/|x|^2 non è integrabile con beta={b}: usare la sostituzione dello stato fondamentale."
            )
        k_diag = k_diag + potential_coeff * h_diag
        k_off = k_off + potential_coeff * h_off

    nl = _element_moments(x0, x1, nl_exp)
    lumped_full = np.zeros(mesh.M + 1)
    lumped_full[:-1] += nl[0] - nl[1]
    lumped_full[1:] += nl[1]

    free = np.arange(1 if not touches_origin else 0, mesh.M)
    K_diag, K_off = _restrict(k_diag, k_off, free)
    M_diag, M_off = _restrict(m_diag, m_off, free)
    if h_diag is not None:
        H_diag, H_off = _restrict(h_diag, h_off, free)
        H_diag, H_off = angular * H_diag, angular * H_off
    else:
        H_diag = H_off = None

    forms = DiscreteForms(
        params=params,
        mesh=mesh,
        weight=weight,
        free=free,
        K_diag=angular * K_diag,
        K_off=angular * K_off,
        M_diag=angular * M_diag,
        M_off=angular * M_off,
        lumped=angular * lumped_full[free],
        stiffness_exponent=a,
        nonlinear_exponent=nl_exp,
        angular_factor=angular,
        H_diag=H_diag,
        H_off=H_off,
    )
    logger.debug(
        f"Forme assemblate: N={N}, mu={params.mu}, beta={b:.6g}, a={a:.6g}, esponente non lineare={nl_exp:.6g}, "
        f"gradi di libertà={forms.n_dofs}"
    )
    return forms


@dataclass(frozen=True)
class NormReport:
    hmu: float
    l2: float
    h10_trunc: float
    lp: float


def h10_squared(forms: DiscreteForms, v: np.ndarray, skip_first: bool = True) -> float:
    """
    int |grad u|^2 dx of u = rho^(-beta) v, v piecewise linear, over rho >= rho_1
    (skip_first) or over the whole mesh.

    On each element v = alpha + g rho, so |u'|^2 rho^(N-1) is a combination of
    rho^a, rho^(a-1), rho^(a-2) and integrates in closed form.
    """
    full = forms.to_full(v)
    nodes = forms.mesh.nodes
    x0, x1 = nodes[:-1], nodes[1:]
    v0, v1 = full[:-1], full[1:]
    if skip_first:
        x0, x1, v0, v1 = x0[1:], x1[1:], v0[1:], v1[1:]
    beta = forms.beta
    a = forms.stiffness_exponent
    slope = (v1 - v0) / (x1 - x0)
    alpha = v0 - slope * x0

    total = (1.0 - beta) ** 2 * slope ** 2 * _power_integral(x0, x1, a)
    if beta != 0.0:
        if np.any(x0 == 0.0) and a - 2.0 <= -1.0:
            raise InfeasibleWeightError("La norma H_0^1 non è finita sul primo elemento: usare la versione troncata.")
        with np.errstate(divide="ignore", invalid="ignore"):
            cross = -2.0 * beta * (1.0 - beta) * alpha * slope * _power_integral(x0, x1, a - 1.0)
            pot = beta ** 2 * alpha ** 2 * _power_integral(x0, x1, a - 2.0)
        cross = np.where(alpha * slope == 0.0, 0.0, cross)
        pot = np.where(alpha == 0.0, 0.0, pot)
        total = total + cross + pot
    return float(forms.angular_factor * np.sum(total))


def norm_report(forms: DiscreteForms, v: np.ndarray) -> NormReport:
    """Norms of u = rho^(-beta) v: ||u||_mu, ||u||_L2, truncated ||u||_H01, ||u||_L^(2 gamma + 2)."""
    hmu_sq = float(v @ forms.apply_K(v))
    l2_sq = float(v @ forms.apply_M(v))
    p = 2.0 * forms.gamma + 2.0
    return NormReport(
        hmu=math.sqrt(max(hmu_sq, 0.0)),
        l2=math.sqrt(max(l2_sq, 0.0)),
        h10_trunc=math.sqrt(max(h10_squared(forms, v, skip_first=True), 0.0)),
        lp=forms.nonlinear_energy(v) ** (1.0 / p),
    )


def hmu_norm(forms: DiscreteForms, v: np.ndarray) -> float:
    return math.sqrt(max(float(v @ forms.apply_K(v)), 0.0))


def save_forms(forms: DiscreteForms, path: Path) -> Path:
    """Writes a versioned .npz dump of the mesh, parameters and assembled operators (readable by np.load)."""
    p = forms.params
    arrays = {
        "format_version": np.array(FORMS_FORMAT_VERSION),
        "nodes": forms.mesh.nodes,
        "grading": np.array(forms.mesh.grading),
        "layer": np.array(forms.mesh.layer),
        "params": np.array([p.N, p.R, p.r_in, p.mu, p.gamma, p.lam, float(p.validation_mode)]),
        "beta": np.array(forms.beta),
        "free": forms.free,
        "K_diag": forms.K_diag, "K_off": forms.K_off,
        "M_diag": forms.M_diag, "M_off": forms.M_off,
        "lumped": forms.lumped,
        "exponents": np.array([forms.stiffness_exponent, forms.nonlinear_exponent, forms.angular_factor]),
    }
    if forms.H_diag is not None:
        arrays["H_diag"] = forms.H_diag
        arrays["H_off"] = forms.H_off
    path = Path(path)
    # fixed member timestamps keep the dump byte-identical across runs
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as archive:
        for name, array in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=DUMP_TIMESTAMP)
            with archive.open(info, "w", force_zip64=True) as member:
                np.lib.format.write_array(member, np.asanyarray(array), allow_pickle=False)
    logger.info(f"Forme discrete salvate in: {path}")
    return path


def load_forms(path: Path) -> DiscreteForms:
    """Reads a dump written by save_forms; refuses other format versions."""
    with np.load(Path(path)) as data:
        version = int(data["format_version"])
        if version != FORMS_FORMAT_VERSION:
            raise ConfigurationError(f"Versione del dump non supportata: {version} (attesa {FORMS_FORMAT_VERSION}).")
        N, R, r_in, mu, gamma, lam, vmode = data["params"]
        params = ProblemParams(N=int(N), R=float(R), r_in=float(r_in), mu=float(mu), gamma=float(gamma),
                               lam=float(lam), validation_mode=bool(vmode))
        mesh = RadialMesh(nodes=data["nodes"].copy(), grading=float(data["grading"]), layer=int(data["layer"]))
        beta = float(data["beta"])
        a, nl_exp, angular = data["exponents"]
        has_h = "H_diag" in data.files
        return DiscreteForms(
            params=params,
            mesh=mesh,
            weight=GroundStateWeight(beta=beta, s=(params.N - 2) / 2.0 - beta),
            free=data["free"].copy(),
            K_diag=data["K_diag"].copy(), K_off=data["K_off"].copy(),
            M_diag=data["M_diag"].copy(), M_off=data["M_off"].copy(),
            lumped=data["lumped"].copy(),
            stiffness_exponent=float(a),
            nonlinear_exponent=float(nl_exp),
            angular_factor=float(angular),
            H_diag=data["H_diag"].copy() if has_h else None,
            H_off=data["H_off"].copy() if has_h else None,
        )


def export_nodes_csv(mesh: RadialMesh, path: Path) -> Optional[Path]:
    rows = [[i, float(r)] for i, r in enumerate(mesh.nodes)]
    return write_csv(Path(path), ["index", "rho"], rows)
