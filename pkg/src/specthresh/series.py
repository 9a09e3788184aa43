"""
Laurent/Puiseux matrix series with half-power bookkeeping.

Orders are integers counting powers of the series variable: sqrt(z) for
threshold expansions (so order 2 means z^1) or (z - lambda0) for expansions
at a positive energy.  Coefficients are dense matrices; a cap bounds the
retained order so products stay exact up to the cap.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

__all__ = ["ExpansionSeries"]


@dataclass
class ExpansionSeries:
    variable: str                       # "sqrt_z" | "z_minus_lambda0"
    coeffs: Dict[int, np.ndarray]
    cap: int                            # highest retained order
    radius: float = np.inf
    remainder_samples: List[Tuple[complex, float]] = field(default_factory=list)

    # --- bookkeeping ------------------------------------------------------
    def __post_init__(self):
        self.coeffs = {j: np.asarray(c, dtype=complex)
                       for j, c in self.coeffs.items() if j <= self.cap}

    @property
    def lowest_order(self) -> int:
        live = [j for j, c in self.coeffs.items() if np.any(np.abs(c) > 0)]
        return min(live) if live else 0

    @property
    def shape(self):
        return next(iter(self.coeffs.values())).shape

    def coeff(self, j: int) -> np.ndarray:
        if j in self.coeffs:
            return self.coeffs[j]
        return np.zeros(self.shape, dtype=complex)

    def copy(self) -> "ExpansionSeries":
        return ExpansionSeries(self.variable, {j: c.copy() for j, c in self.coeffs.items()},
                               self.cap, self.radius, list(self.remainder_samples))

    def _check(self, other: "ExpansionSeries"):
        if self.variable != other.variable:
            raise ValueError("series variable mismatch")

    # --- arithmetic -------------------------------------------------------
    def __add__(self, other: "ExpansionSeries") -> "ExpansionSeries":
        self._check(other)
        keys = set(self.coeffs) | set(other.coeffs)
        return ExpansionSeries(self.variable,
                               {j: self.coeff(j) + other.coeff(j) for j in keys},
                               min(self.cap, other.cap))

    def __sub__(self, other: "ExpansionSeries") -> "ExpansionSeries":
        return self + (other * (-1.0))

    def __mul__(self, scalar: complex) -> "ExpansionSeries":
        return ExpansionSeries(self.variable,
                               {j: scalar * c for j, c in self.coeffs.items()},
                               self.cap)

    __rmul__ = __mul__

    def __matmul__(self, other: "ExpansionSeries") -> "ExpansionSeries":
        self._check(other)
        cap = min(self.cap, other.cap)
        out: Dict[int, np.ndarray] = {}
        for j1, A in self.coeffs.items():
            for j2, B in other.coeffs.items():
                j = j1 + j2
                if j > cap:
                    continue
                P = A @ B
                if j in out:
                    out[j] += P
                else:
                    out[j] = P
        return ExpansionSeries(self.variable, out, cap)

    def eval(self, u: complex) -> np.ndarray:
        """Sum of coeff_j u^j (u is the series variable: sqrt(z) or z-lam0)."""
        acc = np.zeros(self.shape, dtype=complex)
        for j, c in sorted(self.coeffs.items()):
            acc = acc + c * u ** j
        return acc

    def truncated(self, cap: int) -> "ExpansionSeries":
        return ExpansionSeries(self.variable,
                               {j: c for j, c in self.coeffs.items() if j <= cap},
                               cap)

    # --- constructors -----------------------------------------------------
    @staticmethod
    def constant(mat: np.ndarray, variable: str, cap: int) -> "ExpansionSeries":
        return ExpansionSeries(variable, {0: np.asarray(mat, dtype=complex)}, cap)

    @staticmethod
    def identity(n: int, variable: str, cap: int) -> "ExpansionSeries":
        return ExpansionSeries.constant(np.eye(n), variable, cap)

    # --- structural operations -------------------------------------------
    def laurent_inverse(self, q: int) -> "ExpansionSeries":
        """Inverse series assuming lowest inverse order -q: solves the stacked
        block-Toeplitz system sum_r C_r D_{s-r} = delta_{s0} I for the D's."""
        if min(self.coeffs) < 0:
            raise ValueError("laurent_inverse expects a regular input series")
        m = self.shape[0]
        L = self.cap
        nb = L + 1
        big = np.zeros((nb * m, nb * m), dtype=complex)
        rhs = np.zeros((nb * m, m), dtype=complex)
        for a in range(nb):           # equation order s = a - q
            for b in range(nb):       # unknown order p = b - q
                r = a - b
                if 0 <= r <= L and r in self.coeffs:
                    big[a * m:(a + 1) * m, b * m:(b + 1) * m] = self.coeffs[r]
        rhs[q * m:(q + 1) * m, :] = np.eye(m)
        sol, *_ = np.linalg.lstsq(big, rhs, rcond=None)
        out = {b - q: sol[b * m:(b + 1) * m, :] for b in range(nb)}
        return ExpansionSeries(self.variable, out, L - q)

    def det_series(self) -> Dict[int, complex]:
        """Determinant as a scalar series (Leibniz expansion; small m only)."""
        m = self.shape[0]
        out: Dict[int, complex] = {}
        orders = sorted(self.coeffs)
        for perm in itertools.permutations(range(m)):
            sign = _perm_sign(perm)
            # product over rows of scalar series entries (i, perm[i])
            prod: Dict[int, complex] = {0: 1.0}
            for i in range(m):
                nxt: Dict[int, complex] = {}
                for j1, v in prod.items():
                    for j2 in orders:
                        c = self.coeffs[j2][i, perm[i]]
                        if c == 0:
                            continue
                        j = j1 + j2
                        if j > self.cap:
                            continue
                        nxt[j] = nxt.get(j, 0.0) + v * c
                prod = nxt
            for j, v in prod.items():
                out[j] = out.get(j, 0.0) + sign * v
        return out


def _perm_sign(perm) -> int:
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, clen = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            clen += 1
        if clen % 2 == 0:
            sign = -sign
    return sign
