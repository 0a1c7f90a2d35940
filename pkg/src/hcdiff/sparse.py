"""Sparse and dense linear-algebra kernels.

CSR storage and products are delegated to :mod:`scipy.sparse`; the
thresholded ILU and the Jacobi eigensolver are implemented here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.linalg as sla
import scipy.sparse as sp

from . import _kernels


class SingularMatrixError(np.linalg.LinAlgError):
    pass


def csr(K) -> sp.csr_matrix:
    """Canonical CSR: float64, sorted column indices, no stored zeros."""
    K = sp.csr_matrix(K, dtype=np.float64)
    K.sum_duplicates()
    K.eliminate_zeros()
    K.sort_indices()
    return K


def spmv(K: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != K.shape[1]:
        raise ValueError(f"cannot multiply {K.shape} matrix by vector of shape {x.shape}")
    return K @ x


def galerkin_triple_product(R: sp.spmatrix, K: sp.spmatrix, P: sp.spmatrix) -> sp.csr_matrix:
    """Coarse operator ``R K P``, symmetrized by averaging with its transpose."""
    if R.shape[1] != K.shape[0] or K.shape[1] != P.shape[0]:
        raise ValueError(f"non-conformable shapes {R.shape}, {K.shape}, {P.shape}")
    A = csr(R @ (K @ P))
    if A.shape[0] == A.shape[1]:
        A = csr(0.5 * (A + A.T))
    return A


class DenseLU:
    """Partial-pivoting LU of a small dense matrix (coarsest-level solves)."""

    def __init__(self, K):
        K = K.toarray() if sp.issparse(K) else np.array(K, dtype=np.float64)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError(f"square matrix required, got {K.shape}")
        scale = np.abs(K).max() if K.size else 0.0
        if K.size == 0 or scale == 0.0:
            raise SingularMatrixError("zero matrix")
        self.n = K.shape[0]
        self._lu, self._piv = sla.lu_factor(K, check_finite=True)
        pivots = np.abs(np.diag(self._lu))
        if pivots.min() < 1e-14 * scale:
            raise SingularMatrixError(
                f"pivot {pivots.min():.3e} below 1e-14 * ||K||_max = {1e-14 * scale:.3e}")

    def solve(self, b: np.ndarray) -> np.ndarray:
        return sla.lu_solve((self._lu, self._piv), b)

    apply = solve
    __call__ = solve


def dense_lu_solve(K, b: np.ndarray) -> np.ndarray:
    return DenseLU(K).solve(np.asarray(b, dtype=np.float64))


def symmetric_eigendecomposition(K, tol: float = 1e-15, max_sweeps: int = 60):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.

    Parallel-ordered cyclic Jacobi: each step rotates ``n/2`` disjoint index
    pairs at once (round-robin tournament ordering). A pair is rotated while
    ``|a_pq| > tol * sqrt(|a_pp a_qq|)``; this relative test retains small
    eigenvalues of graded matrices to high relative accuracy. Iteration ends
    after a sweep without rotations.
    """
    A = K.toarray() if sp.issparse(K) else np.array(K, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"square matrix required, got {A.shape}")
    n = A.shape[0]
    if n and np.abs(A - A.T).max() > 1e-12 * max(np.abs(A).max(), 1.0):
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    if n < 2:
        return np.diag(A).copy(), V
    floor = 1e-17 * np.linalg.norm(A)
    m = n + (n % 2)
    players = np.arange(m)
    for _ in range(max_sweeps):
        rotated = False
        order = players.copy()
        for _step in range(m - 1):
            top, bot = order[: m // 2], order[m // 2:][::-1]
            p = np.minimum(top, bot)
            q = np.maximum(top, bot)
            keep = q < n
            p, q = p[keep], q[keep]
            apq = A[p, q]
            app = A[p, p]
            aqq = A[q, q]
            active = (np.abs(apq) > tol * np.sqrt(np.abs(app * aqq))) & (np.abs(apq) > floor)
            if np.any(active):
                rotated = True
                p, q, apq, app, aqq = p[active], q[active], apq[active], app[active], aqq[active]
                theta = (aqq - app) / (2.0 * apq)
                t = np.sign(theta) / (np.abs(theta) + np.sqrt(1.0 + theta * theta))
                t[theta == 0.0] = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                Ap, Aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c[:, None] * Ap - s[:, None] * Aq
                A[q, :] = s[:, None] * Ap + c[:, None] * Aq
                Ap, Aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = Ap * c - Aq * s
                A[:, q] = Ap * s + Aq * c
                A[p, q] = 0.0
                A[q, p] = 0.0
                Vp, Vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = Vp * c - Vq * s
                V[:, q] = Vp * s + Vq * c
            # round-robin: player 0 stays, the others rotate one seat
            order = np.concatenate([order[:1], order[-1:], order[1:-1]])
        if not rotated:
            break
    else:
        raise np.linalg.LinAlgError(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(A).copy()
    idx = np.argsort(w, kind="stable")
    return w[idx], V[:, idx]


def eigvalsh(K, method: str = "auto") -> np.ndarray:
    """Ascending eigenvalues; Jacobi up to n=512, LAPACK above."""
    n = K.shape[0]
    if method == "jacobi" or (method == "auto" and n <= 512):
        return symmetric_eigendecomposition(K)[0]
    A = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=np.float64)
    return np.linalg.eigvalsh(A)


@dataclass(frozen=True)
class IluFactors:
    """Unit lower ``L`` (strict part stored), strictly upper ``U`` and pivots."""

    L: sp.csr_matrix
    U: sp.csr_matrix
    pivots: np.ndarray
    tau: float
    shifted_pivots: int

    def solve(self, r: np.ndarray) -> np.ndarray:
        L, U = self.L, self.U
        return _kernels.lu_solve(L.indptr, L.indices, L.data,
                                 U.indptr, U.indices, U.data, self.pivots,
                                 np.ascontiguousarray(r, dtype=np.float64))

    def product(self) -> sp.csr_matrix:
        n = self.pivots.size
        Lf = self.L + sp.identity(n, format="csr")
        Uf = self.U + sp.diags(self.pivots)
        return csr(Lf @ Uf)


def ilu_factorize(K: sp.spmatrix, tau: float = 1e-5) -> IluFactors:
    """Thresholded IKJ incomplete LU in the matrix's own (lexicographic) order.

    ``tau = inf`` reproduces ILU(0); ``tau = 0`` keeps all fill (exact LU).
    Near-zero pivots are shifted by ``1e-12 * ||K||_max`` and counted.
    """
    K = csr(K)
    n = K.shape[0]
    scale = np.abs(K.data).max() if K.nnz else 1.0
    out = _kernels.ilut(K.indptr.astype(np.int64), K.indices.astype(np.int64),
                        K.data, n, float(tau), 1e-14 * scale, 1e-12 * scale)
    l_ptr, l_idx, l_val, u_ptr, u_idx, u_val, piv, shifts = out
    L = sp.csr_matrix((l_val, l_idx, l_ptr), shape=(n, n))
    U = sp.csr_matrix((u_val, u_idx, u_ptr), shape=(n, n))
    return IluFactors(L, U, piv, float(tau), int(shifts))


def write_matrix_market(path, K) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(K), precision=17)


def read_matrix_market(path) -> sp.csr_matrix:
    return csr(scipy.io.mmread(str(path)))
