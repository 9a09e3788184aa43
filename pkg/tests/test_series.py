"""Truncated matrix Laurent series: arithmetic, evaluation, inversion and
determinant coefficients."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from specthresh.series import ExpansionSeries


def _random_series(rng, n=3, cap=4, lowest=0):
    coeffs = {j: rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
              for j in range(lowest, cap + 1)}
    return ExpansionSeries("u", coeffs, cap)


def test_add_sub_scalar():
    rng = np.random.default_rng(0)
    a = _random_series(rng)
    b = _random_series(rng)
    s = (a + b) - b
    for j in range(0, a.cap + 1):
        assert np.allclose(s.coeff(j), a.coeff(j))
    assert np.allclose(((a * 2.0) - a).coeff(2), a.coeff(2))


def test_matmul_matches_polynomial_oracle():
    rng = np.random.default_rng(1)
    a = _random_series(rng, cap=3)
    b = _random_series(rng, cap=3)
    prod = a @ b
    want = oracles.polynomial_matmul(a.coeffs, b.coeffs, 3)
    for j, W in want.items():
        assert np.allclose(prod.coeff(j), W)


def test_eval_is_polynomial_evaluation():
    rng = np.random.default_rng(2)
    a = _random_series(rng, cap=3)
    u = 0.37 - 0.21j
    want = sum(a.coeff(j) * u ** j for j in range(0, 4))
    assert np.allclose(a.eval(u), want)


def test_variable_mismatch_rejected():
    rng = np.random.default_rng(3)
    a = _random_series(rng)
    b = ExpansionSeries("v", {0: np.eye(3, dtype=complex)}, a.cap)
    with pytest.raises(ValueError):
        a + b


def test_truncated_drops_high_orders():
    rng = np.random.default_rng(4)
    a = _random_series(rng, cap=4)
    t = a.truncated(2)
    assert t.cap == 2
    assert max(t.coeffs) <= 2


def test_identity_and_constant():
    I = ExpansionSeries.identity(3, "u", 2)
    C = ExpansionSeries.constant(2.0 * np.eye(3), "u", 2)
    assert np.allclose((I @ C).coeff(0), 2.0 * np.eye(3))
    assert np.allclose((I @ C).coeff(1), 0.0)


def test_laurent_inverse_regular():
    rng = np.random.default_rng(5)
    a = _random_series(rng, cap=4)
    a.coeffs[0] += 4.0 * np.eye(3)     # ensure invertible leading term
    inv = a.laurent_inverse(0)
    prod = a @ inv
    assert np.allclose(prod.coeff(0), np.eye(3), atol=1e-9)
    for j in range(1, 3):
        assert np.allclose(prod.coeff(j), 0.0, atol=1e-8)


def test_laurent_inverse_with_pole():
    # series u A1 + u^2 A2: the inverse starts at order -1
    rng = np.random.default_rng(6)
    n = 3
    A1 = rng.standard_normal((n, n)) + 2.0 * np.eye(n)
    A2 = rng.standard_normal((n, n)).astype(complex)
    s = ExpansionSeries("u", {1: A1.astype(complex), 2: A2}, 4)
    inv = s.laurent_inverse(1)
    u = 1e-3
    direct = np.linalg.inv(s.eval(u))
    assert np.linalg.norm(inv.eval(u) - direct) < 1e-6 * np.linalg.norm(direct)


def test_det_series_matches_pointwise_determinant():
    rng = np.random.default_rng(7)
    a = _random_series(rng, n=3, cap=4)
    dc = a.det_series()
    for u in (0.01, 0.02j, -0.015):
        want = np.linalg.det(a.eval(u))
        got = sum(c * u ** j for j, c in dc.items())
        assert abs(got - want) < 1e-6 * abs(want)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6), u_re=st.floats(-0.1, 0.1))
def test_eval_distributes_over_matmul(seed, u_re):
    rng = np.random.default_rng(seed)
    a = _random_series(rng, n=2, cap=6)
    b = _random_series(rng, n=2, cap=6)
    u = complex(u_re, 0.05)
    # the truncated product agrees with the product of evaluations up to the
    # dropped orders O(u^{cap+1})
    lhs = (a @ b).eval(u)
    rhs = a.eval(u) @ b.eval(u)
    assert np.linalg.norm(lhs - rhs) < 500.0 * abs(u) ** 7 + 1e-9
