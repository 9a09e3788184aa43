"""
Reference model factories: complex potentials tuned so that the discrete
Birman-Schwinger operator has an exact eigenvalue -1 at the zero threshold
(resonance and/or eigenvalue type) or at a chosen positive energy.

All constructions work at the level of the assembled Nystrom matrices, so the
tuned spectral structure holds to machine precision on the grid itself rather
than only in the continuum limit.
"""
from __future__ import annotations

from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy.optimize import root

from .birman_schwinger import Discretization, tune_coupling
from .kernels import assemble_gj
from .model import Model, QuadratureGrid, build_grid, sample_potential

__all__ = [
    "default_grid", "gaussian_template", "free_model", "regular_model",
    "first_kind_model", "second_kind_model", "third_kind_model",
    "resonance_model", "dissipative_model",
]


def default_grid(extent: float = 3.0, resolution: int = 8) -> QuadratureGrid:
    return build_grid(extent, resolution, scheme="uniform")


def _support_mask(grid: QuadratureGrid) -> np.ndarray:
    """Indicator of nodes inside the ball: potentials are certified with
    support in the ball, so templates are truncated the same way before any
    coupling is tuned against them."""
    return (grid.radii() <= grid.extent + 1e-12).astype(float)


def gaussian_template(grid: QuadratureGrid, width: float = 1.0,
                      tilt: float = 0.35) -> np.ndarray:
    """Complex gaussian bump: non-self-adjoint but smooth and localized."""
    r2 = grid.radii() ** 2
    bump = np.exp(-r2 / width ** 2) * (1.0 + 1j * tilt * np.exp(-0.5 * r2))
    return bump * _support_mask(grid)


def free_model(grid: Optional[QuadratureGrid] = None) -> Model:
    grid = grid or default_grid()
    pot = sample_potential(grid, 0.0)
    return Model(grid=grid, potential=pot, name="free")


def regular_model(grid: Optional[QuadratureGrid] = None,
                  strength: complex = 0.6 + 0.25j) -> Model:
    """Weak complex potential: zero is a regular point of the threshold."""
    grid = grid or default_grid()
    V = strength * gaussian_template(grid)
    pot = sample_potential(grid, V)
    return Model(grid=grid, potential=pot, name="regular")


def first_kind_model(grid: Optional[QuadratureGrid] = None) -> Model:
    """Coupling tuned so that -1 is a simple eigenvalue of G0 V whose
    eigenfunction has a nonzero integral marker: a threshold resonance."""
    grid = grid or default_grid()
    W = gaussian_template(grid)
    dist = grid.distance_matrix()
    gamma = tune_coupling(grid, W, "threshold_zero", disc_dist=dist)
    pot = sample_potential(grid, gamma * W)
    return Model(grid=grid, potential=pot, name="first_kind")


def _dipole_source_potential(grid: QuadratureGrid, tilt: float,
                             alpha: complex) -> np.ndarray:
    """Exact threshold eigenvalue by the source method in the odd (dipole)
    sector: g ~ x_1 h(r), psi = -G0 g, V = g / psi pointwise.  Then
    G0 V psi = -psi on the grid exactly, and the integral marker of psi
    (= sum w g) vanishes exactly by parity, so psi is an eigen direction
    rather than a resonance.  alpha deforms the radial shape h."""
    mask = _support_mask(grid)
    G0 = assemble_gj(grid, 0)
    r2 = grid.radii() ** 2
    x1 = grid.nodes[:, 0]
    g = (np.exp(-r2) * (1.0 + tilt * 1j * np.exp(-0.5 * r2))
         + alpha * r2 * np.exp(-1.3 * r2)) * x1 * mask
    psi = -G0 @ g
    V = np.where(mask > 0, g / psi, 0.0)
    # an interior zero of psi where g is supported would blow V up
    scale = np.abs(V[np.argmax(np.abs(g))])
    if not np.abs(V).max() < 1e4 * max(scale, 1e-300):
        raise ValueError("source construction produced a near-vanishing state")
    return V


def second_kind_model(grid: Optional[QuadratureGrid] = None) -> Model:
    """Pure threshold eigenvalue (zero integral marker), kernel dimension 1."""
    grid = grid or default_grid()
    V = _dipole_source_potential(grid, tilt=0.25, alpha=0.0)
    pot = sample_potential(grid, V)
    return Model(grid=grid, potential=pot, name="second_kind")


def third_kind_model(grid: Optional[QuadratureGrid] = None) -> Model:
    """Mixed threshold: an exact eigenvalue plus a tuned resonance.

    An odd (dipole) source g ~ x_1 h(r) gives psi = -G0 g and V = g / psi
    pointwise, so G0 V psi = -psi exactly and the marker of psi vanishes by
    parity.  The shape parameter alpha of h is then tuned (complex Newton on
    the eigenvalue tracked through its nonzero integral marker) so a second,
    marker-carrying eigenvalue of G0 V also sits at -1."""
    grid = grid or default_grid()
    G0 = assemble_gj(grid, 0)
    w = grid.weights

    def potential_of(alpha: complex) -> np.ndarray:
        return _dipole_source_potential(grid, tilt=0.2, alpha=alpha)

    def marked_eigenvalue(alpha: complex) -> complex:
        V = potential_of(alpha)
        ev, vec = sla.eig(G0 * V[None, :])
        mk = np.abs((w * V) @ vec)
        marked = mk > 0.05 * mk.max()
        evm = ev[marked]
        return complex(evm[np.argmin(np.abs(evm + 1.0))])

    # coarse scan for a basin, then Newton on the marked eigenvalue
    best = None
    for ar in np.linspace(-4.0, 4.0, 9):
        for ai in (-1.5, -0.5, 0.5, 1.5):
            mu = marked_eigenvalue(ar + 1j * ai)
            if best is None or abs(mu + 1.0) < best[0]:
                best = (abs(mu + 1.0), ar + 1j * ai)

    def residual(x):
        mu = marked_eigenvalue(x[0] + 1j * x[1])
        return [mu.real + 1.0, mu.imag]

    sol = root(residual, [best[1].real, best[1].imag], method="hybr", tol=1e-13)
    if not sol.success or np.linalg.norm(sol.fun) > 1e-9:
        raise ValueError("two-eigenvalue tuning did not converge")
    V = potential_of(sol.x[0] + 1j * sol.x[1])
    pot = sample_potential(grid, V)
    return Model(grid=grid, potential=pot, name="third_kind")


def resonance_model(grid: Optional[QuadratureGrid] = None,
                    lam0: float = 1.0) -> Model:
    """Coupling tuned so that -1 is an eigenvalue of R0+(lam0) V: an outgoing
    resonance embedded at the positive energy lam0."""
    grid = grid or default_grid()
    W = gaussian_template(grid, width=1.1, tilt=0.4)
    dist = grid.distance_matrix()
    gamma = tune_coupling(grid, W, "positive", lam0=lam0, disc_dist=dist)
    pot = sample_potential(grid, gamma * W)
    return Model(grid=grid, potential=pot, name="resonance")


def dissipative_model(extent: float = 2.2, resolution: int = 7,
                      strength: float = 1.5,
                      absorption: float = 0.05) -> Model:
    """Uniform-grid model with a uniformly dissipative potential
    V = strength e^{-r^2} - i absorption: every eigenvalue of the dense
    finite-difference H sits exactly absorption below the real axis, which
    keeps contours cleanly separated from the spectrum."""
    grid = build_grid(extent, resolution, scheme="uniform")
    r2 = grid.radii() ** 2
    V = strength * np.exp(-r2) - 1j * absorption
    # keep the constant absorption on every node (including boundary-cell
    # centers slightly outside the ball) so Im spec(H) = -absorption exactly
    pot = sample_potential(grid, V, support_radius=2.0 * extent)
    return Model(grid=grid, potential=pot, name="dissipative")
