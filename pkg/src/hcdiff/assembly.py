"""Cell-centered finite volume assembly with harmonic-mean transmissibilities.

Square cells make the geometric factors ``ky/kx`` and ``kx/ky`` equal to 1,
so matrix entries are sums of face transmissibilities. The homogeneous
Dirichlet condition uses a ghost cell mirrored at half a cell distance,
i.e. a boundary-face transmissibility of ``2 * alpha_cell``; this gives the
diagonal values 5 (edge) and 6 (corner) for lowly-diffusive boundary cells.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .geometry import DofPartition, Grid, IslandSpec, build_coefficient_field, geometric_partition


class ConsistencyError(RuntimeError):
    """An internal algebraic identity failed beyond round-off."""


def harmonic_mean(a, b):
    """Face transmissibility ``2ab / (a + b)`` of two adjacent diffusivities."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("diffusivities must be positive")
    # equal arguments are returned untouched so that m-m faces stay exactly m
    out = np.where(a == b, a, 2.0 * a * b / (a + b))
    return out if out.ndim else float(out)


def contrast_mean(m: float) -> float:
    """Harmonic mean of ``m`` and 1."""
    return 2.0 * m / (m + 1.0)


def _assemble(grid: Grid, face_t: np.ndarray, p: np.ndarray, q: np.ndarray,
              boundary_t: np.ndarray) -> sp.csr_matrix:
    n = grid.n
    diag = boundary_t.copy()
    np.add.at(diag, p, face_t)
    np.add.at(diag, q, face_t)
    rows = np.concatenate([np.arange(n), p, q])
    cols = np.concatenate([np.arange(n), q, p])
    vals = np.concatenate([diag, -face_t, -face_t])
    K = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    K.sum_duplicates()
    K.sort_indices()
    K.eliminate_zeros()
    return K


def assemble_operator(grid: Grid, coeff: np.ndarray) -> sp.csr_matrix:
    """5-point operator ``K`` for per-cell diffusivities ``coeff``."""
    coeff = np.asarray(coeff, dtype=float)
    if coeff.shape != (grid.n,):
        raise ValueError(f"coefficient field has shape {coeff.shape}, expected ({grid.n},)")
    p, q = grid.faces()
    t = harmonic_mean(coeff[p], coeff[q])
    return _assemble(grid, t, p, q, 2.0 * coeff * grid.boundary_face_counts())


def assemble_limiting_operator(grid: Grid, coeff: np.ndarray, h_mask: np.ndarray) -> sp.csr_matrix:
    """Operator with every H-L face set to its ``m -> inf`` transmissibility.

    The harmonic mean of ``m`` and ``a_L`` tends to ``2 a_L``; all other faces
    keep their finite-contrast value. Only the HL, LH and LL blocks of the
    result are meaningful limits.
    """
    coeff = np.asarray(coeff, dtype=float)
    h_mask = np.asarray(h_mask, dtype=bool)
    p, q = grid.faces()
    t = harmonic_mean(coeff[p], coeff[q])
    cross = h_mask[p] != h_mask[q]
    low = np.where(h_mask[p], coeff[q], coeff[p])
    t = np.where(cross, 2.0 * low, t)
    return _assemble(grid, t, p, q, 2.0 * coeff * grid.boundary_face_counts())


def assemble_rhs(grid: Grid, f: Callable | float) -> np.ndarray:
    """Cell integrals of ``f`` by the midpoint rule, ``h_ij * f(center)``."""
    if callable(f):
        vals = np.asarray(f(*grid.cell_centers()), dtype=float)
        vals = np.broadcast_to(vals, (grid.n,))
    else:
        vals = np.full(grid.n, float(f))
    return grid.cell_volume * vals


@dataclass(frozen=True)
class BlockView:
    """The 2x2 block split of ``K`` in L-then-H order."""

    K_HH: sp.csr_matrix
    K_HL: sp.csr_matrix
    K_LH: sp.csr_matrix
    K_LL: sp.csr_matrix
    permutation: np.ndarray

    def reassemble(self) -> sp.csr_matrix:
        """Put the blocks back into the original (lexicographic) order."""
        blocks = sp.bmat([[self.K_LL, self.K_LH], [self.K_HL, self.K_HH]], format="csr")
        inv = np.empty_like(self.permutation)
        inv[self.permutation] = np.arange(self.permutation.size)
        return blocks[inv][:, inv].tocsr()


def split_blocks(K: sp.spmatrix, partition: DofPartition) -> BlockView:
    K = sp.csr_matrix(K)
    if K.shape != (partition.n, partition.n):
        raise ValueError(f"matrix {K.shape} does not match partition of {partition.n} cells")
    if partition.is_empty:
        raise ValueError("the H set is empty; the block view needs an island")
    h, l = partition.h_indices, partition.l_indices
    Kh = K[h]
    Kl = K[l]
    return BlockView(
        K_HH=Kh[:, h].tocsr(), K_HL=Kh[:, l].tocsr(),
        K_LH=Kl[:, h].tocsr(), K_LL=Kl[:, l].tocsr(),
        permutation=partition.permutation,
    )


def neumann_decomposition(K_HH: sp.spmatrix, partition: DofPartition, m: float):
    """Split ``K_HH(m) = m * N_HH + diag(delta)``.

    ``delta`` holds ``hbar_m`` times the number of L-neighbors of each H
    cell; ``N_HH`` is the pure-Neumann Laplacian of the islands.
    """
    K_HH = sp.csr_matrix(K_HH, dtype=float)
    delta = contrast_mean(m) * partition.l_neighbor_counts.astype(float)
    N = (K_HH - sp.diags(delta)) / m
    N = sp.csr_matrix(N)
    N.sort_indices()
    rows = np.abs(np.asarray(N.sum(axis=1)).ravel())
    if rows.size and rows.max() > 1e-10 * max(abs(N).max(), 1.0):
        raise ConsistencyError("N_HH row sums do not vanish")
    return N, delta


@dataclass(frozen=True)
class AssembledSystem:
    """A discretized problem ``K x = b`` together with its H/L split."""

    grid: Grid
    coeff: np.ndarray
    K: sp.csr_matrix
    b: np.ndarray
    partition: DofPartition
    m: float

    def blocks(self) -> BlockView:
        return split_blocks(self.K, self.partition)

    def limiting_operator(self) -> sp.csr_matrix:
        return assemble_limiting_operator(self.grid, self.coeff, self.partition.h_mask)

    def limiting_blocks(self) -> BlockView:
        return split_blocks(self.limiting_operator(), self.partition)


def assemble_system(grid: Grid, islands: IslandSpec, f: Callable | float = 1.0) -> AssembledSystem:
    """Assemble ``K``, ``b`` and the geometric partition for a benchmark problem."""
    coeff = build_coefficient_field(grid, islands)
    return AssembledSystem(
        grid=grid,
        coeff=coeff,
        K=assemble_operator(grid, coeff),
        b=assemble_rhs(grid, f),
        partition=geometric_partition(grid, islands),
        m=islands.m,
    )
