"""
Theta-bilinear Jordan-chain machinery on the range of the Riesz projection.

Theta(u, v) = sum_i tau_i u_i v_i with tau = w * V is a symmetric bilinear
(not sesquilinear) form; on E = Ran Pi_1 it is non-degenerate and
Theta-symmetric for Id + K0.  The constructive decomposition below follows
the staircase recursion: find the nilpotency index of (Id+K0)|_E, pick a
chain top maximizing |Theta((Id+K0)^{m-1} u, u)|, split off the chain's span
and recurse on its Theta-orthogonal complement.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
import scipy.linalg as sla

__all__ = [
    "ThetaForm", "JordanBasis", "TriangularFactor",
    "theta", "build_jordan_chains", "dual_basis", "verify_jordan_form",
    "complex_symmetric_cholesky", "projector_from_chains",
]


# ---------------------------------------------------------------------------
# types

@dataclass(frozen=True)
class ThetaForm:
    """Evaluator of Theta(u,v) = sum_i tau_i u_i v_i (tau = weights * V)."""
    tau: np.ndarray
    potential_id: str = ""

    def __call__(self, u: np.ndarray, v: np.ndarray) -> complex:
        return complex(np.sum(self.tau * u * v))


def theta(tau: np.ndarray, u: np.ndarray, v: np.ndarray) -> complex:
    return complex(np.sum(tau * u * v))


@dataclass
class JordanBasis:
    k: int
    sizes: List[int]                   # m_1 .. m_k
    chains: List[List[np.ndarray]]     # chains[i][r-1] = u_r^{(i)}
    duals: List[List[np.ndarray]]      # duals[j][r-1] = w_r^{(j)}
    constants: List[complex]           # c_i = Theta(u_1^{(i)}, u_{m_i}^{(i)})

    @property
    def m(self) -> int:
        return sum(self.sizes)

    def flat_chain(self) -> np.ndarray:
        """(n, m) matrix of chain vectors, blocks in order, r = 1..m_i."""
        return np.column_stack([u for ch in self.chains for u in ch])

    def flat_dual(self) -> np.ndarray:
        return np.column_stack([w for ch in self.duals for w in ch])


@dataclass(frozen=True)
class TriangularFactor:
    Q: np.ndarray                      # upper triangular, Q^T Q = L^{-1}
    L: np.ndarray


# ---------------------------------------------------------------------------
# construction

def _range_basis(P1: np.ndarray, rank_tol: float = 1e-8) -> np.ndarray:
    U, s, _ = sla.svd(P1)
    m = int((s > rank_tol * max(1.0, s[0])).sum())
    return U[:, :m]


def _nilpotency_index(Ac: np.ndarray, tol: float = 1e-8) -> int:
    d = Ac.shape[0]
    X = np.eye(d)
    base = max(1.0, np.linalg.norm(Ac, 2))
    for p in range(1, d + 1):
        X = Ac @ X
        if np.linalg.norm(X, 2) < tol * base ** p:
            return p
    raise ValueError("operator not nilpotent on the candidate subspace")


def build_jordan_chains(P1: np.ndarray, K0: np.ndarray, tau: np.ndarray,
                        degeneracy_tol: float = 1e-10,
                        rng: Optional[np.random.Generator] = None,
                        prefer: Optional[Callable[[np.ndarray], float]] = None
                        ) -> JordanBasis:
    """Constructive Jordan decomposition of (Id + K0) restricted to Ran P1
    with Theta-orthogonal blocks.

    `prefer` optionally scores the bottom vector u_1 of each block; blocks are
    emitted in decreasing score order (used to put the resonance direction
    first for mixed thresholds). Default order: decreasing block size.
    """
    rng = rng or np.random.default_rng(7)
    B = _range_basis(P1)               # (n, m), orthonormal columns
    m = B.shape[1]
    A = B.conj().T @ (B + K0 @ B)      # coords of (Id+K0)|_E
    Th = (B * tau[:, None]).T @ B      # coords of Theta (complex symmetric)
    Th = (Th + Th.T) / 2.0
    th_scale = max(np.linalg.norm(Th, 2), 1e-300)

    blocks: List[np.ndarray] = []      # each: (m, m_i) chain coords, r = 1..m_i
    C = np.eye(m)                      # current subspace basis (coords)
    while C.shape[1] > 0:
        d = C.shape[1]
        Ac = np.linalg.pinv(C) @ A @ C
        p = _nilpotency_index(Ac)
        Q = np.linalg.matrix_power(A, p - 1)
        # candidate chain tops: current basis + random combinations
        cands = [C[:, i] for i in range(d)]
        for _ in range(2 * d):
            coeff = rng.standard_normal(d) + 1j * rng.standard_normal(d)
            cands.append(C @ coeff)
        best, best_val = None, -1.0
        for u in cands:
            u = u / np.linalg.norm(u)
            val = abs((Q @ u) @ Th @ u)
            if val > best_val:
                best, best_val = u, val
        if best_val < degeneracy_tol * th_scale:
            raise ValueError("Theta-degenerate block")
        chain = [np.linalg.matrix_power(A, p - r) @ best for r in range(1, p + 1)]
        blocks.append(np.column_stack(chain))
        # Theta-orthogonal complement of the chain span inside span(C)
        R = np.column_stack(chain).T @ Th          # (p, m)
        Z = sla.null_space(R @ C, rcond=1e-10)
        if Z.shape[1] != d - p:
            raise ValueError("Theta-degenerate block")
        C = C @ Z

    # order blocks and lift to the full space
    chains_full = [[B @ blk[:, r] for r in range(blk.shape[1])] for blk in blocks]
    if prefer is not None:
        order = sorted(range(len(blocks)),
                       key=lambda i: -prefer(chains_full[i][0]))
    else:
        order = sorted(range(len(blocks)), key=lambda i: -blocks[i].shape[1])
    chains_full = [chains_full[i] for i in order]
    sizes = [len(ch) for ch in chains_full]
    consts = []
    for ch in chains_full:
        c = theta(tau, ch[0], ch[-1])
        if abs(c) <= degeneracy_tol * th_scale:
            raise ValueError("Theta-degenerate block")
        consts.append(c)
    basis = JordanBasis(k=len(sizes), sizes=sizes, chains=chains_full,
                        duals=[], constants=consts)
    basis.duals = dual_basis(basis, tau)
    return basis


def dual_basis(basis: JordanBasis, tau: np.ndarray) -> List[List[np.ndarray]]:
    """Solve the Gram system Theta(u_l^{(i)}, w_r^{(j)}) = delta_ij delta_lr
    and pin w_{m_j}^{(j)} = c_j^{-1} u_1^{(j)}."""
    U = basis.flat_chain()
    G = (U * tau[:, None]).T @ U
    if np.linalg.cond(G) > 1e10:
        raise ValueError("numerically Theta-degenerate")
    alpha = np.linalg.inv(G)
    W = U @ alpha
    duals, col = [], 0
    for j, mj in enumerate(basis.sizes):
        block = [W[:, col + r] for r in range(mj)]
        block[mj - 1] = basis.chains[j][0] / basis.constants[j]
        duals.append(block)
        col += mj
    return duals


def verify_jordan_form(basis: JordanBasis, K0: np.ndarray, tau: np.ndarray
                       ) -> np.ndarray:
    """Matrix of Pi_1 (Id+K0) Pi_1 in the chain basis via the dual pairing;
    equals the block-diagonal nilpotent with ones on each superdiagonal."""
    U = basis.flat_chain()
    W = basis.flat_dual()
    AU = U + K0 @ U
    return (W * tau[:, None]).T @ AU


def projector_from_chains(basis: JordanBasis, tau: np.ndarray) -> np.ndarray:
    """Pi_1 = sum_{j,r} <., J V w_r^{(j)}> u_r^{(j)} rebuilt from the chains."""
    U = basis.flat_chain()
    W = basis.flat_dual()
    return U @ (W * tau[:, None]).T


def complex_symmetric_cholesky(L: np.ndarray) -> TriangularFactor:
    """Upper-triangular Q with Q^T Q = L^{-1} (transpose, no conjugation),
    via the unpivoted complex-symmetric Cholesky factorization of L^{-1}."""
    L = np.asarray(L, dtype=complex)
    if L.shape[0] != L.shape[1] or not np.allclose(L, L.T, atol=1e-10 * max(1.0, abs(L).max())):
        raise ValueError("matrix must be complex symmetric")
    M = np.linalg.inv(L)
    n = M.shape[0]
    Lo = np.zeros_like(M)
    scale = abs(M).max()
    for j in range(n):
        s = M[j, j] - np.sum(Lo[j, :j] ** 2)
        piv = np.sqrt(complex(s))
        if abs(piv) < 1e-12 * np.sqrt(scale):
            raise ValueError("pivot breakdown")
        Lo[j, j] = piv
        for i in range(j + 1, n):
            Lo[i, j] = (M[i, j] - np.sum(Lo[i, :j] * Lo[j, :j])) / piv
    Q = Lo.T.copy()
    return TriangularFactor(Q=Q, L=L)
