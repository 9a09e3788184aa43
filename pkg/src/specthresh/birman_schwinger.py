"""
Birman-Schwinger machinery: K(z) = R0(z) V, boundary operators K+(lambda),
threshold operator K0 = G0 V, detection of the eigenvalue -1, Riesz
projections, classification of the zero threshold, scans for outgoing
positive resonances, and the checkable Gram-determinant hypotheses.

Conventions used throughout the package:
  - <u, Jv> denotes the *bilinear* pairing sum_i w_i u_i v_i (J = conjugation
    composed with the conjugated inner product leaves no conjugation),
  - Theta(u, v) = sum_i w_i V_i u_i v_i,
  - adjoints are taken in the w-weighted inner product.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as sla
from scipy.optimize import golden

from .kernels import BranchPoint, assemble_gj, assemble_gj_plus, assemble_r0
from .model import Model, OperatorMatrix, QuadratureGrid

__all__ = [
    "BSOperator", "EigenNearMinusOne", "ZeroClassification", "RieszProjection",
    "Discretization", "assemble_K", "detect_minus_one", "tune_coupling",
    "riesz_projection", "classify_zero", "scan_positive_resonances",
    "check_hypotheses", "b_form", "marker_tolerance",
]

ZLike = Union[BranchPoint, str, Tuple[float, str]]


# ---------------------------------------------------------------------------
# shared discretization cache

class Discretization:
    """Caches the pairwise-distance matrix and kernel assemblies of a model,
    and provides the operators every other module consumes."""

    def __init__(self, model: Model):
        self.model = model
        self.grid = model.grid
        self.V = model.V
        self.w = model.grid.weights
        self.dist = model.grid.distance_matrix()
        self._gj = {}
        self._gjp = {}

    # --- free kernels -----------------------------------------------------
    def r0(self, bp: BranchPoint) -> np.ndarray:
        return assemble_r0(self.grid, bp, dist=self.dist)

    def gj(self, j: int) -> np.ndarray:
        if j not in self._gj:
            self._gj[j] = assemble_gj(self.grid, j, dist=self.dist)
        return self._gj[j]

    def gj_plus(self, j: int, lam0: float) -> np.ndarray:
        key = (j, float(lam0))
        if key not in self._gjp:
            self._gjp[key] = assemble_gj_plus(self.grid, j, lam0, dist=self.dist)
        return self._gjp[key]

    # --- Birman-Schwinger operators --------------------------------------
    def K(self, bp: BranchPoint) -> np.ndarray:
        return self.r0(bp) * self.V[None, :]

    @property
    def K0(self) -> np.ndarray:
        return self.gj(0) * self.V[None, :]

    def M(self, bp: BranchPoint) -> np.ndarray:
        return np.eye(self.grid.n) + self.K(bp)

    def R(self, bp: BranchPoint) -> np.ndarray:
        """Full resolvent of the model, (Id + R0 V)^{-1} R0, by dense solve."""
        return sla.solve(self.M(bp), self.r0(bp))

    # --- pairings ---------------------------------------------------------
    def pair(self, u: np.ndarray, v: np.ndarray) -> complex:
        """Bilinear pairing <u, Jv> = sum w u v."""
        return complex(np.sum(self.w * u * v))

    def theta(self, u: np.ndarray, v: np.ndarray) -> complex:
        return complex(np.sum(self.w * self.V * u * v))

    def marker(self, psi: np.ndarray) -> complex:
        """Quadrature of integral V psi; zero iff psi belongs to L^2 in the
        continuum characterization of threshold states."""
        return complex(np.sum(self.w * self.V * psi))

    def l2_pair_source(self, u: np.ndarray, v: np.ndarray) -> complex:
        """<u, Jv> over all of R^3 for threshold states u = -G0(Vu),
        v = -G0(Vv) with vanishing markers, evaluated through the source
        representation: int u v = -<G2 (Vu), J(Vv)>. This removes the
        ball-truncation error of the plain grid pairing."""
        fu = self.w * self.V * u
        fv = self.V * v
        G2 = self.gj(2)
        return complex(-(fu @ G2 @ (fv)))


# ---------------------------------------------------------------------------
# types

@dataclass(frozen=True)
class BSOperator:
    matrix: OperatorMatrix
    z: ZLike
    potential_id: str

    @property
    def entries(self) -> np.ndarray:
        return self.matrix.entries


@dataclass(frozen=True)
class EigenNearMinusOne:
    eigenvalue: complex
    gap: float
    geometric_multiplicity: int
    algebraic_multiplicity: int
    eigenvectors: np.ndarray        # (n, k) null-space basis of Id + K


@dataclass(frozen=True)
class ZeroClassification:
    kind: str                       # regular | first | second | third
    k: int
    resonance_state: Optional[np.ndarray]
    eigenvectors: List[np.ndarray]  # marker-free kernel directions
    integral_marker: complex
    marker_tol: float


@dataclass(frozen=True)
class RieszProjection:
    matrix: OperatorMatrix
    rank: int
    contour_radius: float

    @property
    def entries(self) -> np.ndarray:
        return self.matrix.entries


# ---------------------------------------------------------------------------
# operations

def _resolve_bp(z: ZLike) -> BranchPoint:
    if isinstance(z, BranchPoint):
        return z
    if z == "threshold":
        return BranchPoint(z=0.0, sqrt_z=0.0)
    if isinstance(z, tuple):
        lam, side = z
        return BranchPoint.boundary(lam, "+" if side in ("+", "+i0") else "-")
    raise ValueError("branch side required")


def assemble_K(model: Model, z: ZLike, disc: Optional[Discretization] = None) -> BSOperator:
    """K(z) = R0(z) V as a dense matrix on the grid (threshold: K0 = G0 V)."""
    disc = disc or Discretization(model)
    bp = _resolve_bp(z)
    if bp.z == 0:
        mat = disc.K0
    else:
        mat = disc.K(bp)
    op = OperatorMatrix(entries=mat, row_weight=None, col_weight=None,
                        grid_id=model.grid.grid_id)
    return BSOperator(matrix=op, z=z, potential_id=model.grid.grid_id)


def detect_minus_one(K: Union[BSOperator, np.ndarray], tol: float = 1e-6
                     ) -> Union[EigenNearMinusOne, str]:
    """Dense eigendecomposition; report the eigenvalue cluster near -1."""
    A = K.entries if isinstance(K, BSOperator) else np.asarray(K)
    evals = sla.eigvals(A)
    d = np.abs(evals + 1.0)
    in_cluster = d <= tol
    if not in_cluster.any():
        return "absent"
    rest = d[~in_cluster]
    gap = float(rest.min()) if rest.size else np.inf
    if rest.size and gap <= 2.0 * tol:
        raise ValueError("ill-separated cluster")
    m = int(in_cluster.sum())
    # geometric multiplicity and kernel basis from the SVD of Id + K
    U, s, Vh = sla.svd(np.eye(A.shape[0]) + A)
    null_tol = max(tol, 1e5 * np.finfo(float).eps * s[0])
    k = int((s < null_tol).sum())
    k = max(k, 1)
    vecs = Vh[-k:, :].conj().T
    eig = complex(evals[in_cluster][np.argmin(d[in_cluster])])
    return EigenNearMinusOne(eigenvalue=eig, gap=gap, geometric_multiplicity=k,
                             algebraic_multiplicity=m, eigenvectors=vecs)


def tune_coupling(grid: QuadratureGrid, template: np.ndarray, target: str,
                  lam0: Optional[float] = None, which: str = "largest",
                  disc_dist: Optional[np.ndarray] = None) -> complex:
    """Coupling gamma* such that -1 is an eigenvalue of G0 diag(gamma* W)
    (threshold) or of R0+(lam0) diag(gamma* W) (positive energy): with mu an
    eigenvalue of the untuned operator, gamma* = -1/mu."""
    W = np.asarray(template, dtype=complex)
    if np.max(np.abs(W)) == 0:
        raise ValueError("template too weak")
    if target == "threshold_zero":
        base = assemble_gj(grid, 0, dist=disc_dist) * W[None, :]
    elif target == "positive":
        if lam0 is None or lam0 <= 0:
            raise ValueError("positive target needs lam0 > 0")
        base = assemble_r0(grid, BranchPoint.boundary(lam0, "+"),
                           dist=disc_dist) * W[None, :]
    else:
        raise ValueError("unknown tuning target")
    mu = sla.eigvals(base)
    mu = mu[np.abs(mu) > 1e-12]
    if mu.size == 0:
        raise ValueError("template too weak")
    if which == "largest":
        choice = mu[np.argmax(np.abs(mu))]
    else:
        idx = int(which)
        choice = mu[np.argsort(-np.abs(mu))[idx]]
    return complex(-1.0 / choice)


def riesz_projection(K0: np.ndarray, eps: float,
                     detection: Optional[EigenNearMinusOne] = None,
                     n_quad: int = 64) -> RieszProjection:
    """Spectral projector onto the -1 cluster of K0 by trapezoidal contour
    quadrature of the resolvent on the circle |w + 1| = eps."""
    if detection is not None and eps > detection.gap / 2.0:
        raise ValueError("contour captures foreign spectrum")
    n = K0.shape[0]
    P = np.zeros((n, n), dtype=complex)
    I = np.eye(n)
    for q in range(n_quad):
        th = 2.0 * np.pi * (q + 0.5) / n_quad
        wq = -1.0 + eps * np.exp(1j * th)
        P += eps * np.exp(1j * th) * sla.solve(wq * I - K0, I)
    P /= n_quad
    s = sla.svdvals(P)
    rank = int((s > 1e-8 * max(1.0, s[0])).sum())
    op = OperatorMatrix(entries=P, row_weight=None, col_weight=None, grid_id="")
    return RieszProjection(matrix=op, rank=rank, contour_radius=eps)


def marker_tolerance(disc: Discretization, psi: np.ndarray) -> float:
    """Scale-invariant threshold for the integral marker: 1e-6 |V|_1 |psi|_inf."""
    v_l1 = float(np.sum(disc.w * np.abs(disc.V)))
    return 1e-6 * v_l1 * float(np.max(np.abs(psi)))


def classify_zero(model: Model, disc: Optional[Discretization] = None,
                  tol: float = 1e-6) -> ZeroClassification:
    """Classify the zero threshold through the integral marker int V psi of
    the kernel directions of Id + K0 (zero marker <=> L^2 direction)."""
    disc = disc or Discretization(model)
    det = detect_minus_one(disc.K0, tol=tol)
    if det == "absent":
        return ZeroClassification(kind="regular", k=0, resonance_state=None,
                                  eigenvectors=[], integral_marker=0.0,
                                  marker_tol=0.0)
    k = det.geometric_multiplicity
    basis = det.eigenvectors        # orthonormal columns
    markers = np.array([disc.marker(basis[:, i]) for i in range(k)])
    mtol = max(marker_tolerance(disc, basis[:, i]) for i in range(k))
    if np.linalg.norm(markers) <= mtol:
        return ZeroClassification(kind="second", k=k, resonance_state=None,
                                  eigenvectors=[basis[:, i] for i in range(k)],
                                  integral_marker=0.0, marker_tol=mtol)
    # direction of maximal marker inside the kernel
    c = markers.conj() / np.linalg.norm(markers)
    res = basis @ c
    res_marker = disc.marker(res)
    if k == 1:
        return ZeroClassification(kind="first", k=1, resonance_state=res,
                                  eigenvectors=[], integral_marker=res_marker,
                                  marker_tol=mtol)
    # third kind: complement of the resonance direction inside the kernel is
    # marker-free (geometric simplicity of the resonance)
    _, _, Vh = np.linalg.svd(markers.reshape(1, -1))
    null_coords = Vh[1:, :].conj().T            # (k, k-1): markers @ col = 0
    comp_cols = [basis @ null_coords[:, i] for i in range(k - 1)]
    for v in comp_cols:
        if abs(disc.marker(v)) > 10 * mtol:
            raise ValueError("resonance not geometrically simple")
    return ZeroClassification(kind="third", k=k, resonance_state=res,
                              eigenvectors=comp_cols, integral_marker=res_marker,
                              marker_tol=mtol)


def _sigma_min_boundary(disc: Discretization, lam: float) -> float:
    M = disc.M(BranchPoint.boundary(lam, "+"))
    return float(sla.svdvals(M)[-1])


def scan_positive_resonances(model: Model, interval: Tuple[float, float],
                             n_samples: int = 60, threshold: float = 1e-2,
                             refine_tol: float = 1e-9,
                             disc: Optional[Discretization] = None
                             ) -> List[Tuple[float, int]]:
    """Sample sigma_min(Id + K+(lambda)) on a mesh, refine local minima below
    `threshold` by golden-section, and report (lambda_j, N_j)."""
    a, b = interval
    if not (0 < a < b):
        raise ValueError("scan interval must satisfy 0 < a < b")
    disc = disc or Discretization(model)
    lams = np.linspace(a, b, n_samples)
    vals = np.array([_sigma_min_boundary(disc, l) for l in lams])
    out = []
    for i in range(len(lams)):
        if vals[i] >= threshold:
            continue
        is_min = ((i == 0 or vals[i] <= vals[i - 1])
                  and (i == len(lams) - 1 or vals[i] <= vals[i + 1]))
        if not is_min:
            continue
        if i == 0 or i == len(lams) - 1:
            warnings.warn("possible resonance outside scan window")
            continue
        lo, hi = lams[i - 1], lams[i + 1]
        lam_star = golden(lambda l: _sigma_min_boundary(disc, l),
                          brack=(lo, lams[i], hi), tol=refine_tol)
        Mstar = disc.M(BranchPoint.boundary(float(lam_star), "+"))
        s = sla.svdvals(Mstar)
        N = int((s < max(1e-6, 1e3 * s[-1])).sum()) if s[-1] < threshold else 0
        N = max(N, 1)
        out.append((float(lam_star), N))
    return out


# ---------------------------------------------------------------------------
# hypotheses

def b_form(disc: Discretization, lam: float, u: np.ndarray, v: np.ndarray) -> complex:
    """B_lambda(u, v) = double integral of e^{i sqrt(lam)|x-y|} u V (x)
    v V (y) over the support, by the double quadrature sum."""
    E = np.exp(1j * np.sqrt(lam) * disc.dist)
    fu = disc.w * disc.V * u
    fv = disc.w * disc.V * v
    return complex(fu @ E @ fv)


def check_hypotheses(model: Model, classification: ZeroClassification,
                     resonances: Optional[Sequence[Tuple[float, int]]] = None,
                     det_tol: float = 1e-10,
                     disc: Optional[Discretization] = None) -> dict:
    """Evaluate the Gram-determinant conditions behind the expansion theorems.

    H1: det(<phi_j, J phi_i>) != 0 over the threshold kernel directions.
    H2: marker separation of resonance/eigen directions plus the H1-type
        condition on the eigen block (third kind).
    H3: det(B_lambda_j(psi_r, psi_l)) != 0 at each outgoing resonance.
    """
    disc = disc or Discretization(model)
    report = {"H1": True, "H2": True, "H3": True, "determinants": {}}

    vecs: List[np.ndarray] = []
    if classification.resonance_state is not None:
        vecs.append(classification.resonance_state)
    vecs.extend(classification.eigenvectors)
    if vecs:
        k = len(vecs)
        G = np.array([[disc.pair(vecs[j], vecs[i]) for j in range(k)]
                      for i in range(k)])
        d = complex(np.linalg.det(G))
        report["determinants"]["H1"] = d
        report["H1"] = abs(d) > det_tol
        if classification.kind == "third":
            ke = len(classification.eigenvectors)
            Ge = G[1:, 1:] if ke else np.zeros((0, 0))
            de = complex(np.linalg.det(Ge)) if ke else 1.0
            marker_ok = abs(classification.integral_marker) > classification.marker_tol
            report["determinants"]["H2"] = de
            report["H2"] = bool(marker_ok and abs(de) > det_tol)
    if resonances:
        for lam, _N in resonances:
            det_r = detect_minus_one(disc.K(BranchPoint.boundary(lam, "+")),
                                     tol=1e-4)
            if det_r == "absent":
                report["H3"] = False
                report["determinants"][f"H3@{lam:.6f}"] = 0.0
                continue
            B = det_r.eigenvectors
            N = B.shape[1]
            Bmat = np.array([[b_form(disc, lam, B[:, r], B[:, l])
                              for l in range(N)] for r in range(N)])
            d = complex(np.linalg.det(Bmat))
            report["determinants"][f"H3@{lam:.6f}"] = d
            report["H3"] = report["H3"] and abs(d) > det_tol
    return report
