"""Mesh, island geometry and H/L degree-of-freedom partitions.

Cells are numbered lexicographically with the x index running fastest:
cell ``(i, j)`` (0-based) has global index ``j * nx + i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

COARSEST_N = 8


class GeometryError(ValueError):
    """Raised for inconsistent grids, islands or partitions."""


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered mesh of the unit interval or unit square.

    ``ndim=2`` is the production case and requires ``nx`` to be a power of
    two no smaller than the 8x8 coarsest multigrid level. ``ndim=1`` is a
    strip of ``nx`` cells used for small hand-checkable examples.
    """

    nx: int
    ndim: int = 2

    def __post_init__(self):
        if self.ndim not in (1, 2):
            raise GeometryError(f"ndim must be 1 or 2, got {self.ndim}")
        if self.ndim == 2:
            if not _is_power_of_two(self.nx) or self.nx < COARSEST_N:
                raise GeometryError(
                    f"nx must be a power of two >= {COARSEST_N}, got {self.nx}")
        elif self.nx < 1:
            raise GeometryError("a strip needs at least one cell")

    @property
    def n(self) -> int:
        return self.nx ** self.ndim

    @property
    def h(self) -> float:
        return 1.0 / self.nx

    @property
    def shape(self) -> tuple[int, ...]:
        # row-major (j, i) so that ravel() gives the lexicographic order
        return (self.nx,) * self.ndim

    @property
    def cell_volume(self) -> float:
        return self.h ** self.ndim

    def index(self, i: int, j: int = 0) -> int:
        return j * self.nx + i if self.ndim == 2 else i

    def cell_centers(self) -> tuple[np.ndarray, ...]:
        """Flat arrays of center coordinates, ``(x,)`` or ``(x, y)``."""
        c = (np.arange(self.nx) + 0.5) * self.h
        if self.ndim == 1:
            return (c,)
        y, x = np.meshgrid(c, c, indexing="ij")
        return x.ravel(), y.ravel()

    def faces(self) -> tuple[np.ndarray, np.ndarray]:
        """Index pairs ``(p, q)``, ``p < q``, of all interior faces."""
        idx = np.arange(self.n).reshape(self.shape)
        if self.ndim == 1:
            return idx[:-1], idx[1:]
        left = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
        right = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
        return left, right

    def boundary_face_counts(self) -> np.ndarray:
        """Number of faces each cell shares with the domain boundary."""
        counts = np.zeros(self.shape, dtype=np.int64)
        if self.ndim == 1:
            counts[0] += 1
            counts[-1] += 1
        else:
            counts[:, 0] += 1
            counts[:, -1] += 1
            counts[0, :] += 1
            counts[-1, :] += 1
        return counts.ravel()

    def adjacency(self) -> sp.csr_matrix:
        p, q = self.faces()
        ones = np.ones(2 * p.size)
        adj = sp.coo_matrix((ones, (np.r_[p, q], np.r_[q, p])),
                            shape=(self.n, self.n))
        return adj.tocsr()

    def coarsen(self) -> "Grid":
        return Grid(self.nx // 2, self.ndim)


@dataclass(frozen=True)
class IslandSpec:
    """Axis-aligned highly-diffusive rectangles on the coarsest 8x8 mesh.

    Each rectangle is ``(i0, j0, w, h)`` in coarsest-level cells; ``m`` is
    the island diffusivity (the background diffusivity is 1).
    """

    rects: tuple[tuple[int, int, int, int], ...] = ()
    m: float = 1.0
    coarse_n: int = COARSEST_N

    def __post_init__(self):
        rects = []
        for r in self.rects:
            if len(r) != 4:
                raise GeometryError(f"island rectangle needs 4 entries: {r}")
            vals = []
            for v in r:
                if float(v) != int(v):
                    raise GeometryError(
                        f"island {tuple(r)} is not aligned to the coarsest cells")
                vals.append(int(v))
            i0, j0, w, h = vals
            if w < 1 or h < 1:
                raise GeometryError(f"island {tuple(r)} is empty")
            if i0 < 1 or j0 < 1 or i0 + w > self.coarse_n - 1 or j0 + h > self.coarse_n - 1:
                raise GeometryError(
                    f"island {tuple(r)} touches or leaves the domain boundary")
            rects.append((i0, j0, w, h))
        for a in range(len(rects)):
            for b in range(a + 1, len(rects)):
                if _too_close(rects[a], rects[b]):
                    raise GeometryError(
                        f"islands {rects[a]} and {rects[b]} overlap or touch")
        if not self.m >= 1.0:
            raise GeometryError(f"contrast m must be >= 1, got {self.m}")
        object.__setattr__(self, "rects", tuple(rects))

    def with_contrast(self, m: float) -> "IslandSpec":
        return IslandSpec(self.rects, m, self.coarse_n)

    @property
    def count(self) -> int:
        return len(self.rects)


def _too_close(a, b) -> bool:
    # islands need a full lowly-diffusive cell between them, corners included
    ai, aj, aw, ah = a
    bi, bj, bw, bh = b
    return (ai - 1 < bi + bw and bi < ai + aw + 1
            and aj - 1 < bj + bh and bj < aj + ah + 1)


def default_islands(m: float = 1.0) -> IslandSpec:
    """Single 2x2-cell island centered at (3/8, 3/8) on the 8x8 mesh."""
    return IslandSpec(((2, 2, 2, 2),), m)


def island_labels(grid: Grid, islands: IslandSpec) -> np.ndarray:
    """Per-cell island number (1..s), 0 for the lowly-diffusive region."""
    if grid.ndim != 2:
        raise GeometryError("island specs are defined on 2D grids only")
    if grid.nx < islands.coarse_n:
        raise GeometryError(
            f"grid {grid.nx} is coarser than the island mesh {islands.coarse_n}")
    r = grid.nx // islands.coarse_n
    labels = np.zeros(grid.shape, dtype=np.int64)
    for k, (i0, j0, w, h) in enumerate(islands.rects, start=1):
        labels[j0 * r:(j0 + h) * r, i0 * r:(i0 + w) * r] = k
    return labels.ravel()


def build_coefficient_field(grid: Grid, islands: IslandSpec) -> np.ndarray:
    """Per-cell diffusivity: ``islands.m`` inside an island, 1 elsewhere."""
    alpha = np.ones(grid.n)
    alpha[island_labels(grid, islands) > 0] = islands.m
    return alpha


@dataclass(frozen=True)
class DofPartition:
    """Split of the cells into highly (H) and lowly (L) diffusive sets.

    ``l_neighbor_counts`` is aligned with ``h_indices`` and holds the number
    of L face-neighbors of each H cell (0 interior, 1 non-corner, 2 corner).
    ``components`` lists the H cells of each connected island.
    """

    n: int
    h_indices: np.ndarray
    l_indices: np.ndarray
    gamma_indices: np.ndarray
    interior_indices: np.ndarray
    l_neighbor_counts: np.ndarray
    components: tuple[np.ndarray, ...] = field(default=())

    @property
    def n_h(self) -> int:
        return self.h_indices.size

    @property
    def n_l(self) -> int:
        return self.l_indices.size

    @property
    def corner_counts(self) -> tuple[int, int]:
        """``(n_{H,nc}, n_{H,c})``: interface cells with one / two L-neighbors."""
        c = self.l_neighbor_counts
        return int(np.sum(c == 1)), int(np.sum(c == 2))

    @property
    def h_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[self.h_indices] = True
        return mask

    @property
    def is_empty(self) -> bool:
        return self.h_indices.size == 0

    @property
    def permutation(self) -> np.ndarray:
        """L-then-H ordering used by the block view."""
        return np.concatenate([self.l_indices, self.h_indices])

    @classmethod
    def from_mask(cls, h_mask: np.ndarray, adjacency: sp.spmatrix) -> "DofPartition":
        h_mask = np.asarray(h_mask, dtype=bool)
        n = h_mask.size
        adj = sp.csr_matrix(adjacency, copy=True)
        adj.setdiag(0)
        adj.eliminate_zeros()
        adj.data[:] = 1.0
        h = np.flatnonzero(h_mask)
        l = np.flatnonzero(~h_mask)
        counts = np.asarray(adj[h][:, l].sum(axis=1)).ravel().astype(np.int64)
        if counts.size and counts.max() > 2:
            bad = h[counts > 2]
            raise GeometryError(
                f"cells {bad.tolist()} have more than two L-neighbors")
        comps: tuple[np.ndarray, ...] = ()
        if h.size:
            ncomp, lab = connected_components(adj[h][:, h], directed=False)
            comps = tuple(h[lab == k] for k in range(ncomp))
        return cls(
            n=n,
            h_indices=h,
            l_indices=l,
            gamma_indices=h[counts > 0],
            interior_indices=h[counts == 0],
            l_neighbor_counts=counts,
            components=comps,
        )


def geometric_partition(grid: Grid, islands: IslandSpec) -> DofPartition:
    """Partition read off the island rectangles (independent of ``m``)."""
    labels = island_labels(grid, islands)
    part = DofPartition.from_mask(labels > 0, grid.adjacency())
    # keep one component per rectangle, in rectangle order
    comps = tuple(np.flatnonzero(labels == k) for k in range(1, islands.count + 1))
    return DofPartition(part.n, part.h_indices, part.l_indices,
                        part.gamma_indices, part.interior_indices,
                        part.l_neighbor_counts, comps)


def partition_by_diagonal(K: sp.spmatrix, threshold_ratio: float = 10.0) -> DofPartition:
    """Algebraic H/L split: ``p`` is in H iff ``K_pp > ratio * median(diag K)``.

    With no contrast the H set comes back empty; callers that need an
    island (AGKS) must check ``partition.is_empty``.
    """
    if not threshold_ratio > 1.0:
        raise ValueError("threshold_ratio must exceed 1")
    K = sp.csr_matrix(K)
    d = K.diagonal()
    h_mask = d > threshold_ratio * np.median(d)
    return DofPartition.from_mask(h_mask, K)
