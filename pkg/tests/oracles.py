"""
Independent reference implementations used to check the package's numerics.

Everything here is deliberately built from different primitives than the
library code: rotated-ray Gauss-Laguerre quadrature instead of closed forms,
dense eigendecompositions instead of contour calculus, scipy.integrate
instead of hand-derived cell rules.  Tests freeze their expectations against
these oracles.
"""
import numpy as np
import scipy.integrate
import scipy.linalg as sla
from scipy.special import roots_genlaguerre


def halfline_power_integral(j: int, t: float, n: int = 120,
                            delta: float = np.pi / 3.0) -> complex:
    """int_0^infty lam^{j/2} e^{-i t lam} dlam by rotating the path onto the
    ray lam = s e^{-i delta} / (t sin delta) and integrating with generalized
    Gauss-Laguerre nodes (weight s^{j/2} e^{-s}).

    On the rotated ray e^{-i t lam} = e^{-s} e^{-i s cot delta}, so the
    remaining smooth factor is a pure phase.
    """
    alpha = j / 2.0
    s, w = roots_genlaguerre(n, alpha)
    scale = np.exp(-1j * delta) / (t * np.sin(delta))
    vals = np.exp(-1j * s / np.tan(delta))
    return complex(scale ** (alpha + 1.0) * np.sum(w * vals))


def pv_plus_i0_integral(t: float) -> complex:
    """int_R e^{-i t lam} / (lam + i0) dlam for t > 0.

    Split into the principal value (an odd sine integral computed by scipy's
    oscillatory quadrature) and the half-residue -i pi from the i0 shift.
    """
    a = 1e-3
    val, _ = scipy.integrate.quad(lambda u: 1.0 / u, a, np.inf,
                                  weight="sin", wvar=t)
    # series of int_0^a sin(t u)/u du around 0
    val += t * a - (t * a) ** 3 / 18.0 + (t * a) ** 5 / 600.0
    return complex(-2j * val - 1j * np.pi)


def matrix_exponential(H: np.ndarray, t: float) -> np.ndarray:
    """e^{-i t H} by scipy's expm."""
    return sla.expm(-1j * t * H)


def spectral_projector(H: np.ndarray, select) -> np.ndarray:
    """Sum of oblique eigenprojectors v w^T / (w^T v) over the eigenvalues
    picked by `select`, from a dense two-sided eigendecomposition."""
    lam, VR = np.linalg.eig(H)
    WL = np.linalg.inv(VR)          # rows are left eigenvectors
    P = np.zeros_like(H, dtype=complex)
    for i in range(len(lam)):
        if select(lam[i]):
            P += np.outer(VR[:, i], WL[i, :])
    return P


def upper_half_eigenvalues(H: np.ndarray, tol: float = 1e-9):
    """Eigenvalues of H with nonnegative imaginary part, sorted."""
    lam = np.linalg.eig(H)[0]
    sel = lam[lam.imag >= -tol]
    return np.sort_complex(sel)


def cell_ball_integral(kernel, rc: float) -> complex:
    """4 pi int_0^rc rho^2 kernel(rho) d rho by adaptive quadrature on real
    and imaginary parts separately."""
    re, _ = scipy.integrate.quad(
        lambda rho: (4.0 * np.pi * rho ** 2 * kernel(rho)).real, 0.0, rc,
        limit=200)
    im, _ = scipy.integrate.quad(
        lambda rho: (4.0 * np.pi * rho ** 2 * kernel(rho)).imag, 0.0, rc,
        limit=200)
    return complex(re, im)


def boundary_pairing_double_sum(grid, V, lam: float, u, v) -> complex:
    """Double quadrature sum of e^{i sqrt(lam)|x-y|} (w V u)(x) (w V v)(y)
    written as an explicit loop over node pairs."""
    x = grid.nodes
    w = grid.weights
    fu = w * V * u
    fv = w * V * v
    acc = 0.0 + 0.0j
    for i in range(grid.n):
        r = np.sqrt(((x - x[i]) ** 2).sum(axis=1))
        acc += fu[i] * np.sum(np.exp(1j * np.sqrt(lam) * r) * fv)
    return complex(acc)


def central_derivative(f, x0: float, h: float = 1e-5, order: int = 1):
    """Richardson-improved central finite differences for real-parameter
    derivatives of matrix/scalar functions."""
    def d1(h):
        return (f(x0 + h) - f(x0 - h)) / (2.0 * h)

    def d2(h):
        return (f(x0 + h) - 2.0 * f(x0) + f(x0 - h)) / h ** 2

    d = d1 if order == 1 else d2
    return (4.0 * d(h / 2.0) - d(h)) / 3.0


def richardson(values, ratio: float):
    """One Richardson step on a sequence whose error shrinks by `ratio` per
    term: returns the accelerated sequence."""
    v = list(values)
    return [(ratio * v[i + 1] - v[i]) / (ratio - 1.0)
            for i in range(len(v) - 1)]


def polynomial_matmul(a_coeffs: dict, b_coeffs: dict, cap: int) -> dict:
    """Truncated product of two matrix polynomials given as {order: matrix},
    computed by the plain double loop."""
    out = {}
    for i, A in a_coeffs.items():
        for j, B in b_coeffs.items():
            if i + j > cap:
                continue
            out[i + j] = out.get(i + j, 0) + A @ B
    return out
