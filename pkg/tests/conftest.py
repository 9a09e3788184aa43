"""
Shared fixtures.  Heavy objects (tuned models, expansions, propagators,
the dissipative Hamiltonian) are session-scoped: they are built once and
reused across the unit and acceptance tests.
"""
import numpy as np
import pytest

from specthresh import (Discretization, classify_zero,
                        threshold_resolvent_expansion,
                        resonance_resolvent_expansion)
from specthresh.model import assemble_H, build_grid
from specthresh.models import (default_grid, dissipative_model,
                               first_kind_model, free_model, regular_model,
                               resonance_model, second_kind_model,
                               third_kind_model)
from specthresh.propagator import CutPropagator


# --------------------------------------------------------------------------
# grids

@pytest.fixture(scope="session")
def grid8():
    return default_grid()                    # extent 3, resolution 8, n=408


@pytest.fixture(scope="session")
def grid6():
    return build_grid(3.0, 6)                # coarse grid for propagator runs


# --------------------------------------------------------------------------
# models at resolution 8 (expansion accuracy)

@pytest.fixture(scope="session")
def free8(grid8):
    return free_model(grid8)


@pytest.fixture(scope="session")
def regular8(grid8):
    return regular_model(grid8)


@pytest.fixture(scope="session")
def first8(grid8):
    return first_kind_model(grid8)


@pytest.fixture(scope="session")
def second8(grid8):
    return second_kind_model(grid8)


@pytest.fixture(scope="session")
def third8(grid8):
    return third_kind_model(grid8)


@pytest.fixture(scope="session")
def resonance8(grid8):
    return resonance_model(grid8, lam0=1.0)


def _disc_fixture(name):
    @pytest.fixture(scope="session", name=f"disc_{name}")
    def fx(request):
        return Discretization(request.getfixturevalue(f"{name}8"))
    return fx


disc_regular = _disc_fixture("regular")
disc_first = _disc_fixture("first")
disc_second = _disc_fixture("second")
disc_third = _disc_fixture("third")
disc_resonance = _disc_fixture("resonance")


@pytest.fixture(scope="session")
def cls_first(first8, disc_first):
    return classify_zero(first8, disc=disc_first)


@pytest.fixture(scope="session")
def cls_second(second8, disc_second):
    return classify_zero(second8, disc=disc_second)


@pytest.fixture(scope="session")
def cls_third(third8, disc_third):
    return classify_zero(third8, disc=disc_third)


@pytest.fixture(scope="session")
def coeffs_first(first8, cls_first, disc_first):
    return threshold_resolvent_expansion(first8, cls_first, disc=disc_first)


@pytest.fixture(scope="session")
def coeffs_second(second8, cls_second, disc_second):
    return threshold_resolvent_expansion(second8, cls_second, disc=disc_second)


@pytest.fixture(scope="session")
def coeffs_third(third8, cls_third, disc_third):
    return threshold_resolvent_expansion(third8, cls_third, disc=disc_third)


@pytest.fixture(scope="session")
def res_coeffs(resonance8, disc_resonance):
    return resonance_resolvent_expansion(resonance8, 1.0, disc=disc_resonance)


# --------------------------------------------------------------------------
# coarse-grid models and propagators (large-time runs are memory-bound)

@pytest.fixture(scope="session")
def first6(grid6):
    return first_kind_model(grid6)


@pytest.fixture(scope="session")
def second6(grid6):
    return second_kind_model(grid6)


@pytest.fixture(scope="session")
def coeffs_first6(first6):
    disc = Discretization(first6)
    return threshold_resolvent_expansion(first6, disc=disc), disc


@pytest.fixture(scope="session")
def coeffs_second6(second6):
    disc = Discretization(second6)
    return threshold_resolvent_expansion(second6, disc=disc), disc


@pytest.fixture(scope="session")
def cut_first6(first6, coeffs_first6):
    coeffs, disc = coeffs_first6
    return CutPropagator(first6, coeffs, disc=disc)


@pytest.fixture(scope="session")
def cut_second6(second6, coeffs_second6):
    coeffs, disc = coeffs_second6
    return CutPropagator(second6, coeffs, disc=disc)


# --------------------------------------------------------------------------
# dense dissipative Hamiltonian for the contour-representation checks

@pytest.fixture(scope="session")
def dissipative_H():
    """Finite-difference H with uniformly dissipative spectrum, augmented by
    a detached 2x2 block above the real axis to exercise the residue path."""
    model = dissipative_model()
    H = assemble_H(model.grid, model.potential).entries
    extra = np.diag([0.8 + 0.10j, 2.0 + 0.20j])
    n = H.shape[0]
    Hbig = np.zeros((n + 2, n + 2), dtype=complex)
    Hbig[:n, :n] = H
    Hbig[n:, n:] = extra
    rng = np.random.default_rng(3)
    f = rng.standard_normal(n + 2) + 1j * rng.standard_normal(n + 2)
    g = rng.standard_normal(n + 2) + 1j * rng.standard_normal(n + 2)
    return Hbig, f, g
