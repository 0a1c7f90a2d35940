"""Cell-centered geometric multigrid (CCMG).

Two problem-independent prolongations are provided, both given by 4x4
coarse-to-fine stencils:

* ``bilinear``: tensor product of the 1D cell-centered weights (3/4, 1/4);
  interior fine cells take {9, 3, 3, 1}/16 from the four nearest coarse
  cells.
* ``wesseling_khalil``: linear interpolation on triangles (the stencil
  ``1/4 [[1,1,0,0],[1,3,2,0],[0,2,3,1],[0,0,1,1]]``); every fine cell takes
  weights from three coarse cells.

Near the outer boundary, weights of missing coarse cells are dropped and
the remaining ones renormalized (one-sided rule), so every row sums to 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from . import _kernels
from .geometry import Grid
from .sparse import DenseLU, IluFactors, csr, galerkin_triple_product, ilu_factorize

PROLONGATIONS = ("wesseling_khalil", "bilinear")
SMOOTHERS = ("sgs", "ilu")
ILU_TAU = 1e-5

_ALIASES = {"wk": "wesseling_khalil", "b": "bilinear"}


def canonical_prolongation(kind: str) -> str:
    kind = _ALIASES.get(kind.lower(), kind.lower())
    if kind not in PROLONGATIONS:
        raise ValueError(f"unknown prolongation {kind!r}; choose from {PROLONGATIONS}")
    return kind


# (child offset) -> list of (coarse offset, weight numerator); denominators
# are 16 (bilinear) and 4 (WK)
def _bilinear_weights(a: int, b: int):
    dx = -1 if a == 0 else 1
    dy = -1 if b == 0 else 1
    return [((0, 0), 9.0), ((dx, 0), 3.0), ((0, dy), 3.0), ((dx, dy), 1.0)]


def _wk_weights(a: int, b: int):
    if a == b:
        d = -1 if a == 0 else 1
        return [((0, 0), 3.0), ((d, d), 1.0)]
    if a == 1:  # child (1, 0)
        return [((0, 0), 2.0), ((1, 0), 1.0), ((0, -1), 1.0)]
    return [((0, 0), 2.0), ((-1, 0), 1.0), ((0, 1), 1.0)]


@dataclass(frozen=True)
class Prolongation:
    kind: str
    matrix: sp.csr_matrix


def build_prolongation(kind: str, fine_grid: Grid) -> Prolongation:
    """Prolongation from the ``nx/2`` grid to ``fine_grid`` (2D)."""
    kind = canonical_prolongation(kind)
    nx = fine_grid.nx
    if nx % 2:
        raise ValueError(f"fine grid size must be even, got {nx}")
    nc = nx // 2
    weights = _bilinear_weights if kind == "bilinear" else _wk_weights
    rows, cols, vals = [], [], []
    for j in range(nx):
        J, b = divmod(j, 2)
        for i in range(nx):
            I, a = divmod(i, 2)
            entries = [(I + di, J + dj, w) for (di, dj), w in weights(a, b)
                       if 0 <= I + di < nc and 0 <= J + dj < nc]
            total = sum(w for _, _, w in entries)
            for ci, cj, w in entries:
                rows.append(j * nx + i)
                cols.append(cj * nc + ci)
                vals.append(w / total)
    P = sp.csr_matrix((vals, (rows, cols)), shape=(nx * nx, nc * nc))
    return Prolongation(kind, csr(P))


def grid_prolongations(kind: str, grid: Grid, coarsest_n: int = 8) -> list[sp.csr_matrix]:
    """Prolongations for every level from ``grid`` down to ``coarsest_n``."""
    if coarsest_n > grid.nx:
        raise ValueError(f"coarsest level {coarsest_n} exceeds grid size {grid.nx}")
    if grid.nx % coarsest_n or (grid.nx // coarsest_n) & (grid.nx // coarsest_n - 1):
        raise ValueError(f"grid {grid.nx} is not a power-of-two multiple of {coarsest_n}")
    Ps = []
    g = grid
    while g.nx > coarsest_n:
        Ps.append(build_prolongation(kind, g).matrix)
        g = g.coarsen()
    return Ps


def coarse_masks(mask: np.ndarray, grid: Grid, levels: int) -> list[np.ndarray]:
    """Coarsen a cell mask: a coarse cell is selected iff all children are."""
    out = [np.asarray(mask, dtype=bool)]
    nx = grid.nx
    for _ in range(levels):
        m2 = out[-1].reshape(nx, nx)
        nx //= 2
        out.append((m2[0::2, 0::2] & m2[1::2, 0::2] & m2[0::2, 1::2] & m2[1::2, 1::2]).ravel())
    return out


def restricted_prolongations(kind: str, grid: Grid, mask: np.ndarray,
                             coarsest_n: int = 8, renormalize: bool = False) -> list[sp.csr_matrix]:
    """Subblocks ``P[fine in mask][:, coarse in mask]`` of the global prolongations.

    With ``renormalize`` every row is rescaled to sum to one, so constants
    on the subdomain are prolongated exactly (wanted for blocks with a
    Neumann-like near kernel, such as an island block).
    """
    Ps = grid_prolongations(kind, grid, coarsest_n)
    masks = coarse_masks(mask, grid, len(Ps))
    out = []
    for k, P in enumerate(Ps):
        sub = csr(P[masks[k]][:, masks[k + 1]])
        if renormalize:
            sums = np.asarray(sub.sum(axis=1)).ravel()
            if np.any(sums <= 0.0):
                raise ValueError("a fine cell has no coarse parent inside the subdomain")
            sub = csr(sp.diags(1.0 / sums) @ sub)
        out.append(sub)
    return out


@dataclass
class Level:
    A: sp.csr_matrix
    P: sp.csr_matrix | None = None
    diag: np.ndarray | None = None
    ilu: IluFactors | None = None


@dataclass
class MgHierarchy:
    """Galerkin hierarchy with a V(1,1)-cycle as preconditioner.

    ``apply`` allocates its own work vectors, so one hierarchy may serve
    several callers concurrently.
    """

    levels: list[Level]
    coarse_solver: DenseLU
    smoother: str
    pre: int = 1
    post: int = 1
    _shape: tuple[int, int] = field(init=False)

    def __post_init__(self):
        n = self.levels[0].A.shape[0]
        self._shape = (n, n)

    @property
    def n(self) -> int:
        return self._shape[0]

    @property
    def depth(self) -> int:
        return len(self.levels)

    @classmethod
    def from_operators(cls, A: sp.spmatrix, prolongations: Sequence[sp.spmatrix],
                       smoother: str = "sgs", tau: float = ILU_TAU) -> "MgHierarchy":
        smoother = smoother.lower()
        if smoother not in SMOOTHERS:
            raise ValueError(f"unknown smoother {smoother!r}; choose from {SMOOTHERS}")
        A = csr(A)
        levels = []
        for P in prolongations:
            P = csr(P)
            if P.shape[0] != A.shape[0]:
                raise ValueError(f"prolongation {P.shape} does not fit operator {A.shape}")
            lev = Level(A=A, P=P)
            if smoother == "sgs":
                lev.diag = A.diagonal().copy()
            else:
                lev.ilu = ilu_factorize(A, tau)
            levels.append(lev)
            A = galerkin_triple_product(P.T.tocsr(), A, P)
        levels.append(Level(A=A))
        return cls(levels, DenseLU(A), smoother)

    def apply(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        if r.shape != (self.n,):
            raise ValueError(f"residual has shape {r.shape}, expected ({self.n},)")
        return self._cycle(0, r)

    __call__ = apply

    def _smooth(self, lev: Level, x: np.ndarray, b: np.ndarray) -> np.ndarray:
        A = lev.A
        if self.smoother == "sgs":
            _kernels.gs_forward(A.indptr, A.indices, A.data, lev.diag, x, b)
            _kernels.gs_backward(A.indptr, A.indices, A.data, lev.diag, x, b)
            return x
        return x + lev.ilu.solve(b - A @ x)

    def _cycle(self, k: int, b: np.ndarray) -> np.ndarray:
        lev = self.levels[k]
        if lev.P is None:
            return self.coarse_solver.solve(b)
        x = np.zeros_like(b)
        for _ in range(self.pre):
            x = self._smooth(lev, x, b)
        rc = lev.P.T @ (b - lev.A @ x)
        x += lev.P @ self._cycle(k + 1, rc)
        for _ in range(self.post):
            x = self._smooth(lev, x, b)
        return x

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator(self._shape, matvec=self.apply, dtype=np.float64)


def build_hierarchy(K: sp.spmatrix, grid: Grid, kind: str = "bilinear",
                    smoother: str = "sgs", coarsest_n: int = 8) -> MgHierarchy:
    """CCMG hierarchy for an operator on ``grid`` down to ``coarsest_n``."""
    if K.shape[0] != grid.n:
        raise ValueError(f"operator of size {K.shape[0]} does not live on a {grid.nx}^2 grid")
    return MgHierarchy.from_operators(K, grid_prolongations(kind, grid, coarsest_n), smoother)
