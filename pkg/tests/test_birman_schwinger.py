"""Birman-Schwinger assembly, eigenvalue detection, coupling tuning,
threshold classification and resonance scanning."""
import numpy as np
import pytest

import oracles
from specthresh.birman_schwinger import (Discretization, assemble_K, b_form,
                                         check_hypotheses, classify_zero,
                                         detect_minus_one, riesz_projection,
                                         scan_positive_resonances,
                                         tune_coupling)
from specthresh.kernels import BranchPoint
from specthresh.model import build_grid, sample_potential
from specthresh.models import free_model, gaussian_template, resonance_model
from specthresh.model import Model


def test_resolvent_identity_small_grid():
    grid = build_grid(2.5, 5)
    V = 0.4 * gaussian_template(grid)
    model = Model(grid=grid, potential=sample_potential(grid, V))
    disc = Discretization(model)
    bp = BranchPoint.from_z(-1.3 + 0.2j)
    # (Id + K) R = R0 by construction of the solve
    lhs = (np.eye(grid.n) + disc.K(bp)) @ disc.R(bp)
    assert np.allclose(lhs, disc.r0(bp), atol=1e-10)


def test_assemble_K_wraps_discretization():
    grid = build_grid(2.0, 4)
    V = 0.3 * gaussian_template(grid)
    model = Model(grid=grid, potential=sample_potential(grid, V))
    op = assemble_K(model, BranchPoint.from_z(-2.0))
    disc = Discretization(model)
    assert np.allclose(op.entries, disc.K(BranchPoint.from_z(-2.0)))
    k0 = assemble_K(model, "threshold", disc=disc)
    assert np.allclose(k0.entries, disc.K0)
    kb = assemble_K(model, (1.5, "+"), disc=disc)
    assert np.allclose(kb.entries, disc.K(BranchPoint.boundary(1.5, "+")))
    with pytest.raises(ValueError, match="branch side"):
        assemble_K(model, -2.0)


def test_detect_minus_one_on_synthetic_matrix():
    rng = np.random.default_rng(5)
    n = 30
    Q = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    lams = np.linspace(0.2, 2.0, n).astype(complex)
    lams[7] = -1.0 + 1e-9
    K = Q @ np.diag(lams) @ np.linalg.inv(Q)
    det = detect_minus_one(K)
    assert det != "absent"
    assert abs(det.eigenvalue + 1.0) < 1e-8
    assert det.geometric_multiplicity == 1
    # eigenvector lies in the kernel of Id + K
    v = det.eigenvectors[:, 0]
    assert np.linalg.norm((np.eye(n) + K) @ v) < 1e-6


def test_detect_minus_one_absent():
    K = np.diag(np.linspace(0.1, 0.9, 10)).astype(complex)
    assert detect_minus_one(K) == "absent"


def test_detect_minus_one_rejects_unresolved_cluster():
    lams = np.array([-1.0 + 5e-7, -1.0 + 1.5e-6, 0.5], dtype=complex)
    with pytest.raises(ValueError, match="ill-separated"):
        detect_minus_one(np.diag(lams), tol=1e-6)


def test_tune_coupling_places_eigenvalue_at_minus_one():
    grid = build_grid(3.0, 6)
    W = gaussian_template(grid)
    gamma = tune_coupling(grid, W, "threshold_zero")
    model = Model(grid=grid, potential=sample_potential(grid, gamma * W))
    disc = Discretization(model)
    ev = np.linalg.eigvals(disc.K0)
    assert np.min(np.abs(ev + 1.0)) < 1e-10


def test_riesz_projection_matches_dense_eig():
    rng = np.random.default_rng(7)
    n = 24
    Q = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    lams = np.linspace(0.3, 1.8, n).astype(complex)
    lams[3] = -1.0
    lams[11] = -1.0 + 1e-11          # same cluster
    K = Q @ np.diag(lams) @ np.linalg.inv(Q)
    det = detect_minus_one(K)
    P = riesz_projection(K, eps=det.gap / 3.0, detection=det).entries
    want = oracles.spectral_projector(K, lambda l: abs(l + 1.0) < 1e-6)
    assert np.linalg.norm(P - want) < 1e-8
    assert np.linalg.norm(P @ P - P) < 1e-8


def test_classify_free_model_regular():
    model = free_model(build_grid(3.0, 6))
    cls = classify_zero(model)
    assert cls.kind == "regular"
    assert cls.k == 0


def test_classification_kinds(cls_first, cls_second, cls_third):
    assert cls_first.kind == "first"
    assert cls_second.kind == "second"
    assert cls_third.kind == "third"
    assert abs(cls_first.integral_marker) > cls_first.marker_tol
    assert cls_second.k == 1
    assert cls_third.k == 2


def test_second_kind_marker_vanishes(cls_second):
    assert abs(cls_second.integral_marker) <= cls_second.marker_tol


def test_bilinear_pairings(disc_first):
    rng = np.random.default_rng(1)
    n = disc_first.grid.n
    u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    # bilinear, not sesquilinear
    assert np.isclose(disc_first.pair(1j * u, v), 1j * disc_first.pair(u, v))
    assert np.isclose(disc_first.theta(u, v), disc_first.theta(v, u))


def test_b_form_matches_double_sum(disc_resonance):
    rng = np.random.default_rng(2)
    n = disc_resonance.grid.n
    u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    got = b_form(disc_resonance, 1.0, u, v)
    want = oracles.boundary_pairing_double_sum(
        disc_resonance.grid, disc_resonance.V, 1.0, u, v)
    assert abs(got - want) < 1e-9 * abs(want)


def test_scan_finds_tuned_resonance(resonance8, disc_resonance):
    found = scan_positive_resonances(resonance8, (0.3, 2.0),
                                     disc=disc_resonance)
    assert len(found) >= 1
    lam, N = min(found, key=lambda p: abs(p[0] - 1.0))
    assert abs(lam - 1.0) < 1e-6
    assert N == 1


def test_scan_rejects_bad_interval(resonance8):
    with pytest.raises(ValueError):
        scan_positive_resonances(resonance8, (-1.0, 2.0))


def test_hypotheses_hold_on_tuned_models(first8, cls_first, disc_first,
                                         third8, cls_third, disc_third):
    h1 = check_hypotheses(first8, cls_first, disc=disc_first)
    assert h1["H1"] and h1["H2"]
    h3 = check_hypotheses(third8, cls_third, disc=disc_third)
    assert h3["H1"] and h3["H2"]


def test_hypothesis_h3_at_resonance(resonance8, disc_resonance):
    cls = classify_zero(resonance8, disc=disc_resonance)
    rep = check_hypotheses(resonance8, cls, resonances=[(1.0, 1)],
                           disc=disc_resonance)
    assert rep["H3"]
