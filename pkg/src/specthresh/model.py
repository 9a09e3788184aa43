"""
Physical model: quadrature grid over a ball in R^3, complex potential samples,
weighted-norm conventions, and the dense finite-difference realization of
H = -Delta + V used on oracle paths.

All integral operators elsewhere in the package are Nystrom matrices living on
a QuadratureGrid; weighted L^2 norms are realized as diagonal scalings by
<x>^{+-s} at the nodes.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

__all__ = [
    "QuadratureGrid", "Potential", "WeightSpec", "OperatorMatrix", "Model",
    "build_grid", "sample_potential", "assemble_H",
    "bracket_weight", "weight_diag", "weighted_operator_norm", "weighted_vec",
]


# ---------------------------------------------------------------------------
# types

@dataclass(frozen=True)
class QuadratureGrid:
    """Nodes/weights covering the ball of radius `extent`.

    weights carry units of volume; sum(weights) ~ volume of the ball.
    """
    nodes: np.ndarray          # (n, 3) float
    weights: np.ndarray        # (n,) float > 0
    extent: float
    scheme: str
    spacing: float             # nominal linear cell size (uniform scheme)
    grid_id: str = field(default="")

    def __post_init__(self):
        if self.weights.min() <= 0:
            raise ValueError("degenerate grid: nonpositive weight")
        object.__setattr__(self, "grid_id", _grid_hash(self.nodes, self.weights))

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.nodes, axis=1)

    def distance_matrix(self) -> np.ndarray:
        d = self.nodes[:, None, :] - self.nodes[None, :, :]
        return np.sqrt((d * d).sum(axis=2))

    def cell_radii(self) -> np.ndarray:
        """Radius of the equal-volume ball of each quadrature cell."""
        return (3.0 * self.weights / (4.0 * np.pi)) ** (1.0 / 3.0)


def _grid_hash(nodes: np.ndarray, weights: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(nodes).tobytes())
    h.update(np.ascontiguousarray(weights).tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class Potential:
    """Complex potential sampled at the grid nodes with a decay certificate
    |V(x)| <= C_v <x>^{-rho}."""
    values: np.ndarray         # (n,) complex
    rho: float
    C_v: float
    support_radius: float
    grid_id: str

    def __post_init__(self):
        if self.rho <= 2:
            raise ValueError("decay rate rho must exceed 2")


@dataclass(frozen=True)
class WeightSpec:
    """Exponent s of the weighted space L^{2,s}."""
    s: float

    def __post_init__(self):
        if self.s < 0:
            raise ValueError("weight exponent must be >= 0")

    def check_against(self, potential: Potential) -> None:
        if not self.s < potential.rho - 0.5:
            raise ValueError("weight exponent incompatible with potential decay")


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense matrix of an integral or multiplication operator on the grid.

    row_weight / col_weight record the weighted spaces the matrix is meant to
    act between (None = plain L^2 with the quadrature measure).
    """
    entries: np.ndarray
    row_weight: Optional[WeightSpec]
    col_weight: Optional[WeightSpec]
    grid_id: str

    def __post_init__(self):
        e = self.entries
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ValueError("operator matrix must be square")
        if not np.all(np.isfinite(e)):
            raise ValueError("operator matrix has non-finite entries")


@dataclass(frozen=True)
class Model:
    """A grid plus a potential: everything the spectral machinery needs."""
    grid: QuadratureGrid
    potential: Potential
    name: str = "model"

    def __post_init__(self):
        if self.grid.grid_id != self.potential.grid_id:
            raise ValueError("grid/potential mismatch")

    @property
    def V(self) -> np.ndarray:
        return self.potential.values


# ---------------------------------------------------------------------------
# grid construction

def build_grid(extent: float, resolution: int, scheme: str = "uniform") -> QuadratureGrid:
    """Quadrature grid covering the ball of radius `extent`.

    uniform: tensor-product cell centers, boundary cells weighted by the
    sub-sampled fraction of the cell inside the ball (keeps sum(w) close to
    the exact ball volume).
    gauss_radial: Gauss-Legendre in radius and polar angle, uniform azimuth.
    """
    if extent <= 0 or resolution < 2:
        raise ValueError("degenerate grid")
    if scheme == "uniform":
        return _uniform_grid(extent, resolution)
    if scheme == "gauss_radial":
        return _gauss_radial_grid(extent, resolution)
    raise ValueError(f"unknown grid scheme {scheme!r}")


def _uniform_grid(extent: float, resolution: int) -> QuadratureGrid:
    h = 2.0 * extent / resolution
    axis = -extent + h * (np.arange(resolution) + 0.5)
    X, Y, Z = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    r = np.linalg.norm(pts, axis=1)
    half_diag = 0.5 * h * np.sqrt(3.0)
    inside = r <= extent - half_diag
    outside = r >= extent + half_diag
    boundary = ~(inside | outside)

    frac = np.zeros(len(pts))
    frac[inside] = 1.0
    if boundary.any():
        # sub-sample boundary cells to estimate the covered fraction
        m = 6
        sub = (np.arange(m) + 0.5) / m - 0.5
        sx, sy, sz = np.meshgrid(sub, sub, sub, indexing="ij")
        offs = h * np.stack([sx.ravel(), sy.ravel(), sz.ravel()], axis=1)
        bpts = pts[boundary]
        d = np.linalg.norm(bpts[:, None, :] + offs[None, :, :], axis=2)
        frac[boundary] = (d <= extent).mean(axis=1)

    keep = frac > 1e-12
    nodes = pts[keep]
    weights = h ** 3 * frac[keep]
    if len(nodes) < 2:
        raise ValueError("degenerate grid")
    return QuadratureGrid(nodes=nodes, weights=weights, extent=extent,
                          scheme="uniform", spacing=h)


def _gauss_radial_grid(extent: float, resolution: int) -> QuadratureGrid:
    nr = resolution
    nth = max(resolution // 2, 2)
    nph = max(resolution, 3)
    xr, wr = np.polynomial.legendre.leggauss(nr)
    rr = 0.5 * extent * (xr + 1.0)
    wrr = 0.5 * extent * wr * rr ** 2
    xc, wc = np.polynomial.legendre.leggauss(nth)   # cos(theta) in [-1,1]
    phi = 2.0 * np.pi * (np.arange(nph) + 0.5) / nph
    wph = 2.0 * np.pi / nph
    nodes, weights = [], []
    for r, wr_ in zip(rr, wrr):
        for c, wc_ in zip(xc, wc):
            s = np.sqrt(1.0 - c * c)
            for p in phi:
                nodes.append([r * s * np.cos(p), r * s * np.sin(p), r * c])
                weights.append(wr_ * wc_ * wph)
    return QuadratureGrid(nodes=np.array(nodes), weights=np.array(weights),
                          extent=extent, scheme="gauss_radial",
                          spacing=extent / nr)


# ---------------------------------------------------------------------------
# potential sampling

def sample_potential(grid: QuadratureGrid,
                     formula: Union[Callable[[np.ndarray], np.ndarray], np.ndarray, complex],
                     rho: float = 8.0,
                     C_v: Optional[float] = None,
                     support_radius: Optional[float] = None) -> Potential:
    """Sample a complex field on the grid and certify its decay bound."""
    if callable(formula):
        vals = np.asarray(formula(grid.nodes), dtype=complex)
    elif np.isscalar(formula):
        vals = np.full(grid.n, complex(formula))
    else:
        vals = np.asarray(formula, dtype=complex)
    if vals.shape != (grid.n,):
        raise ValueError("potential values do not match grid")
    if not np.all(np.isfinite(vals)):
        raise ValueError("potential not finite at all nodes")
    if support_radius is None:
        support_radius = grid.extent
    r = grid.radii()
    vals = np.where(r <= support_radius + 1e-12, vals, 0.0)
    bracket = np.sqrt(1.0 + r ** 2)
    need = np.abs(vals) * bracket ** rho
    if C_v is None:
        C_v = float(need.max() * (1 + 1e-12) + 1e-300)
    elif need.max() > C_v * (1 + 1e-9):
        raise ValueError("decay bound violated")
    return Potential(values=vals, rho=rho, C_v=C_v,
                     support_radius=support_radius, grid_id=grid.grid_id)


# ---------------------------------------------------------------------------
# weights

def bracket_weight(grid: QuadratureGrid, s: float) -> np.ndarray:
    """<x>^s sampled at the nodes."""
    return (1.0 + grid.radii() ** 2) ** (s / 2.0)


def weight_diag(grid: QuadratureGrid, s: float) -> np.ndarray:
    """Diagonal of the isometry L^{2,s}(grid) -> l^2: sqrt(w) <x>^s."""
    return np.sqrt(grid.weights) * bracket_weight(grid, s)


def weighted_vec(grid: QuadratureGrid, u: np.ndarray, s: float) -> float:
    """Norm of u in L^{2,s}(grid)."""
    return float(np.linalg.norm(weight_diag(grid, s) * u))


def weighted_operator_norm(A: np.ndarray, grid: QuadratureGrid,
                           s_in: float = 0.0, s_out: float = 0.0) -> float:
    """Operator norm of A from L^{2,s_in} to L^{2,s_out}."""
    d_out = weight_diag(grid, s_out)
    d_in = weight_diag(grid, s_in)
    return float(np.linalg.norm((d_out[:, None] * A) / d_in[None, :], 2))


# ---------------------------------------------------------------------------
# finite-difference H (oracle path)

def assemble_H(grid: QuadratureGrid, potential: Potential) -> OperatorMatrix:
    """Dense finite-difference -Delta + diag(V) on a uniform grid (Dirichlet
    outside the retained nodes). Used only as a ground-truth oracle for
    time-domain checks."""
    if grid.grid_id != potential.grid_id:
        raise ValueError("grid/potential mismatch")
    if grid.scheme != "uniform":
        raise ValueError("finite differences need the uniform scheme")
    h = grid.spacing
    n = grid.n
    index = {}
    # cell centers sit at -extent + h (k + 1/2); recover the integer k
    key = np.round((grid.nodes + grid.extent) / h - 0.5).astype(int)
    for i, k in enumerate(map(tuple, key)):
        index[k] = i
    H = np.zeros((n, n), dtype=complex)
    inv_h2 = 1.0 / h ** 2
    for i, k in enumerate(map(tuple, key)):
        H[i, i] += 6.0 * inv_h2
        for dim in range(3):
            for sgn in (-1, 1):
                kk = list(k)
                kk[dim] += sgn
                j = index.get(tuple(kk))
                if j is not None:
                    H[i, j] -= inv_h2
    H += np.diag(potential.values)
    return OperatorMatrix(entries=H, row_weight=None, col_weight=None,
                          grid_id=grid.grid_id)
