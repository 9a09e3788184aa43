"""Contours, generalized oscillatory integrals, the matrix Dunford
propagator, branch-cut propagation and decay / high-energy fits."""
import numpy as np
import pytest

import oracles
from specthresh.birman_schwinger import Discretization
from specthresh.kernels import BranchPoint
from specthresh.model import build_grid
from specthresh.models import free_model, regular_model
from specthresh.propagator import (audit_contour, build_contour,
                                   check_high_energy, dunford_propagator,
                                   enumerate_upper_eigenvalues,
                                   free_propagator, generalized_integral,
                                   resolvent_taylor, verify_large_time)


# --------------------------------------------------------------------------
# contours

def test_contour_segments_and_orientation():
    c = build_contour(0.1, np.pi / 4, resonances=[1.0])
    labels = [s.label for s in c.segments]
    assert labels[0] == "incoming_ray"
    assert "origin_circle" in labels
    assert "detour_0" in labels
    assert labels[-1] == "outgoing_ray"
    # incoming ray heads into the lower-left half-plane
    d = c.segments[0].direction
    assert d.real < 0 and d.imag < 0


def test_contour_eta_guard():
    with pytest.raises(ValueError, match="eta too large"):
        build_contour(0.6, np.pi / 4, resonances=[1.0])
    with pytest.raises(ValueError):
        build_contour(0.1, 2.0)        # nu outside (0, pi/2)


def test_audit_contour_clearance():
    c = build_contour(0.1, np.pi / 4, resonances=[1.0])
    d = audit_contour(c, [2.5 + 1.0j])
    assert d > 0.05


# --------------------------------------------------------------------------
# generalized integrals

@pytest.mark.parametrize("j", [-1, 0, 1, 2])
@pytest.mark.parametrize("t", [0.5, 1.0, 10.0])
def test_generalized_integral_against_rotated_ray(j, t):
    got = generalized_integral(j, t)
    want = oracles.halfline_power_integral(j, t)
    assert abs(got - want) < 1e-10 * abs(want)


def test_generalized_integral_closed_forms():
    # j = 0: int e^{-itlam} dlam = 1/(it); j = -1: sqrt(pi/t) e^{-i pi/4}
    t = 2.0
    assert abs(generalized_integral(0, t) - 1.0 / (1j * t)) < 1e-14
    want = np.sqrt(np.pi / t) * np.exp(-1j * np.pi / 4.0)
    assert abs(generalized_integral(-1, t) - want) < 1e-14


def test_principal_value_integral():
    got = generalized_integral(pv=True, t=3.0)
    assert abs(got + 2j * np.pi) < 1e-14
    want = oracles.pv_plus_i0_integral(3.0)
    assert abs(got - want) < 1e-8


def test_generalized_integral_validation():
    with pytest.raises(ValueError):
        generalized_integral(0, -1.0)
    with pytest.raises(ValueError):
        generalized_integral(-2, 1.0)


# --------------------------------------------------------------------------
# discrete spectrum and the Dunford propagator

def test_enumerate_upper_eigenvalues_synthetic():
    H = np.diag([0.5 + 0.2j, 1.5 - 0.3j, 3.0 + 0.05j])
    rep = enumerate_upper_eigenvalues(H, cross_check=False)
    got = sorted(rep.eigenvalues, key=lambda z: z.real)
    assert np.allclose(got, [0.5 + 0.2j, 3.0 + 0.05j])
    for zj, P in zip(rep.eigenvalues, rep.projectors):
        want = oracles.spectral_projector(H, lambda l: abs(l - zj) < 1e-6)
        assert np.linalg.norm(P - want) < 1e-8


def test_dunford_small_matrix_against_expm():
    rng = np.random.default_rng(8)
    n = 40
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    H = A @ A.conj().T / n + np.diag(2.0 + np.arange(n) * 0.2 - 0.15j)
    f = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    g = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    contour = build_contour(0.08, np.pi / 4)
    for t in (1.0, 5.0):
        got = dunford_propagator(H, contour, t, f, g)
        want = complex(g.conj() @ oracles.matrix_exponential(H, t) @ f)
        assert abs(got - want) < 1e-8 * max(abs(want), 1e-6)


def test_dunford_dissipative_with_upper_block(dissipative_H):
    H, f, g = dissipative_H
    contour = build_contour(0.02, np.pi / 4)
    for t in (1.0, 10.0):
        got = dunford_propagator(H, contour, t, f, g)
        want = complex(g.conj() @ oracles.matrix_exponential(H, t) @ f)
        assert abs(got - want) < 1e-8 * abs(want)


def test_dunford_rejects_nonpositive_time(dissipative_H):
    H, f, g = dissipative_H
    contour = build_contour(0.02, np.pi / 4)
    with pytest.raises(ValueError):
        dunford_propagator(H, contour, -1.0, f, g)


# --------------------------------------------------------------------------
# free propagator and boundary resolvent derivatives

def test_free_propagator_is_unitary_group_kernel():
    grid = build_grid(3.0, 6)
    # group property sampled on a vector: U(t1+t2) f ~ U(t1) U(t2) f fails on
    # a truncated grid, but the exact kernel obeys |det factor| scaling
    t = 50.0
    U = free_propagator(grid, t)
    amp = np.abs(U[0, 1] / grid.weights[1])
    assert np.isclose(amp, (4.0 * np.pi * t) ** -1.5, rtol=1e-12)


def test_free_decay_slope():
    grid = build_grid(3.0, 6)
    model = free_model(grid)
    rep = verify_large_time(model)
    assert abs(rep.slope_fit + 1.5) < 0.05
    assert rep.r_squared > 0.999


def test_resolvent_taylor_matches_finite_difference():
    grid = build_grid(2.5, 5)
    model = regular_model(grid, strength=0.4 + 0.2j)
    disc = Discretization(model)
    lam = 2.0
    T = resolvent_taylor(disc, lam, 1, side="+")
    want = oracles.central_derivative(
        lambda l: disc.R(BranchPoint.boundary(l, "+")), lam, h=1e-4)
    assert np.linalg.norm(T[1] - want) < 1e-6 * np.linalg.norm(want)


def test_resolvent_taylor_minus_side_is_conjugate_for_real_V():
    grid = build_grid(2.0, 4)
    import specthresh.models as m
    from specthresh.model import Model, sample_potential
    V = 0.5 * np.exp(-grid.radii() ** 2)
    model = Model(grid=grid, potential=sample_potential(grid, V.astype(complex)))
    disc = Discretization(model)
    Tp = resolvent_taylor(disc, 1.5, 0, side="+")
    Tm = resolvent_taylor(disc, 1.5, 0, side="-")
    assert np.allclose(Tm[0], np.conj(Tp[0]))


def test_high_energy_exponents_free():
    model = free_model(build_grid(3.0, 8))
    for r in (0, 1):
        he = check_high_energy(model, r=r)
        assert he["pass"]
    with pytest.raises(ValueError):
        check_high_energy(model, r=3)
