"""AGKS block preconditioner and subdomain deflation.

The preconditioner is the block factorization

    B = [[I, -Q^T], [0, I]] . diag(K_HH(m)^-1, S_inf^-1) . [[I, 0], [-Q, I]]

in (H, L) block order, with ``Q = V diag(eta_inf)^-1 E_H^T``,
``V = K_LH_inf E_H`` and ``S_inf = K_LL_inf - V diag(eta_inf)^-1 V^T``.
``E_H`` holds one normalized constant vector per island. The practical
variant replaces ``K_HH(m)^-1`` by a V-cycle on ``K_HH(m)`` and
``S_inf^-1`` by a Woodbury update of a V-cycle on ``K_LL_inf``.

``eta`` values are evaluated through the zero row sums of island rows
(``K_HH 1_H = -K_HL 1_L``), which avoids the cancellation that a direct
``e^T K_HH e`` suffers once ``m`` approaches ``1/eps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import AssembledSystem
from .multigrid import MgHierarchy, canonical_prolongation, restricted_prolongations
from .sparse import DenseLU, csr

DENSE_HH_LIMIT = 64


class AgksSetupError(RuntimeError):
    """The Woodbury capacitance matrix is not positive definite."""


def compute_eta(K_HH: sp.spmatrix, n_H: int, K_HL: sp.spmatrix | None = None) -> float:
    """``e_H^T K_HH e_H`` for the normalized constant vector ``e_H``.

    With the coupling block ``K_HL`` the product ``K_HH e_H`` is taken from
    the zero row sums of island rows, which is exact to round-off for any
    contrast. Without it the plain quadratic form is used.
    """
    e = np.full(n_H, n_H ** -0.5)
    if K_HL is not None:
        return float(-(K_HL.sum() / n_H))
    return float(e @ (K_HH @ e))


def _island_columns(system: AssembledSystem) -> np.ndarray:
    """``E_H``: one normalized indicator column per island, in H-local rows."""
    part = system.partition
    pos = np.empty(part.n, dtype=np.int64)
    pos[part.h_indices] = np.arange(part.n_h)
    comps = part.components or (part.h_indices,)
    E = np.zeros((part.n_h, len(comps)))
    for k, cells in enumerate(comps):
        E[pos[cells], k] = cells.size ** -0.5
    return E


def _eta_per_island(E_H: np.ndarray, K_HL: sp.spmatrix) -> np.ndarray:
    # island rows sum to zero, so e_k^T K_HH e_k = -(1_k^T K_HL 1_L) / n_k
    row_out = -np.asarray(K_HL.sum(axis=1)).ravel()
    inside = E_H != 0
    return np.array([row_out[inside[:, k]].sum() / inside[:, k].sum()
                     for k in range(E_H.shape[1])])


@dataclass
class LimitingBlocks:
    K_HL: sp.csr_matrix
    K_LH: sp.csr_matrix
    K_LL: sp.csr_matrix
    E_H: np.ndarray
    V: np.ndarray
    eta: np.ndarray

    def schur_dense(self) -> np.ndarray:
        """``S_inf`` as a dense matrix (desk-scale only)."""
        return self.K_LL.toarray() - (self.V / self.eta) @ self.V.T


def build_limiting_blocks(system: AssembledSystem, scale: float = 1.0) -> LimitingBlocks:
    """``K_HL_inf``, ``K_LL_inf``, ``V = K_LH_inf E_H`` and ``eta_inf`` per island."""
    if system.partition.is_empty:
        raise ValueError("AGKS needs a nonempty island set")
    bv = system.limiting_blocks()
    E_H = _island_columns(system)
    K_HL = csr(bv.K_HL * scale)
    K_LH = csr(bv.K_LH * scale)
    K_LL = csr(bv.K_LL * scale)
    V = np.asarray(K_LH @ E_H)
    eta = _eta_per_island(E_H, K_HL)
    return LimitingBlocks(K_HL, K_LH, K_LL, E_H, V, eta)


class AgksCore:
    """Setup data and application of the AGKS preconditioner.

    ``variant='exact'`` factors ``K_HH(m)`` and ``S_inf`` densely;
    ``variant='practical'`` uses V-cycles ``M_HH`` on ``K_HH(m)`` and
    ``M_LL`` on ``K_LL_inf``. ``scale`` multiplies the operator (use the
    same factor that was applied to ``K``).

    ``deflated=True`` is for use under island deflation: island-constant
    components are cleared from the input (where they are round-off) and
    left out of the output (where the deflated iteration discards them).
    Carrying them along would cost ``eps * m`` relative accuracy in the
    island part.
    """

    def __init__(self, system: AssembledSystem, variant: str = "practical",
                 prolongation: str = "bilinear", smoother: str = "sgs",
                 coarsest_n: int = 8, scale: float = 1.0,
                 M_LL=None, deflated: bool = False):
        if variant not in ("exact", "practical"):
            raise ValueError(f"unknown AGKS variant {variant!r}")
        part = system.partition
        if part.is_empty:
            raise ValueError("AGKS needs a nonempty island set")
        self.variant = variant
        self.deflated = deflated
        self.n = part.n
        self.h = part.h_indices
        self.l = part.l_indices
        K = csr(system.K * scale)
        K_HH = csr(K[self.h][:, self.h])
        K_HL = csr(K[self.h][:, self.l])
        lim = build_limiting_blocks(system, scale)
        self.limits = lim
        self.E_H = lim.E_H
        self.V = lim.V
        self.eta_inf = lim.eta
        self.eta = _eta_per_island(self.E_H, K_HL)

        if variant == "exact":
            self._hh = DenseLU(K_HH).solve
            self._schur = DenseLU(lim.schur_dense()).solve
            return

        grid = system.grid
        kind = canonical_prolongation(prolongation)
        if part.n_h <= DENSE_HH_LIMIT or grid.ndim != 2:
            self.M_HH = DenseLU(K_HH)
            self._hh = self.M_HH.solve
        else:
            P_HH = restricted_prolongations(kind, grid, part.h_mask, coarsest_n, renormalize=True)
            self.M_HH = MgHierarchy.from_operators(K_HH, P_HH, smoother)
            self._hh = self.M_HH.apply
        if M_LL is None:
            if grid.ndim == 2:
                P_LL = restricted_prolongations(kind, grid, ~part.h_mask, coarsest_n)
            else:
                P_LL = []
            M_LL = MgHierarchy.from_operators(lim.K_LL, P_LL, smoother)
        self.M_LL = M_LL
        apply_ll = M_LL.apply if hasattr(M_LL, "apply") else M_LL
        self._ll = apply_ll
        # Woodbury: (A - V C V^T)^-1 = M + (M V) (C^-1 - V^T M V)^-1 V^T M
        self.U = np.column_stack([apply_ll(self.V[:, k]) for k in range(self.V.shape[1])])
        cap = np.diag(self.eta_inf) - self.V.T @ self.U
        cap = 0.5 * (cap + cap.T)
        if np.any(np.linalg.eigvalsh(cap) <= 0.0):
            raise AgksSetupError(
                f"Woodbury capacitance {np.diag(cap)} is not positive; M_LL is too weak")
        self.capacitance = cap
        self._cap_solve = sla.cho_factor(cap)
        self._schur = self._woodbury

    @property
    def sigma(self) -> np.ndarray:
        """Diagonal of the Woodbury capacitance, ``eta_inf - v^T M_LL v``."""
        return np.diag(self.capacitance)

    def _woodbury(self, y: np.ndarray) -> np.ndarray:
        w = self._ll(y)
        return w + self.U @ sla.cho_solve(self._cap_solve, self.V.T @ w, check_finite=False)

    def apply_schur_inverse(self, y: np.ndarray) -> np.ndarray:
        return self._schur(y)

    def apply(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        rH = r[self.h]
        if self.deflated:
            # deflated residuals satisfy E^T r = 0; clearing the round-off
            # keeps M_HH from amplifying it by 1/eta against 1/m
            rH = rH - self.E_H @ (self.E_H.T @ rH)
        yL = r[self.l] - self.V @ ((self.E_H.T @ rH) / self.eta_inf)
        zH = self._hh(rH)
        zL = self._schur(yL)
        out = np.empty_like(r)
        if self.deflated:
            out[self.h] = zH - self.E_H @ (self.E_H.T @ zH)
        else:
            out[self.h] = zH - self.E_H @ ((self.V.T @ zL) / self.eta_inf)
        out[self.l] = zL
        return out

    __call__ = apply

    def left_factor(self, x: np.ndarray) -> np.ndarray:
        """``L x`` with ``L = [[I, 0], [-Q, I]]``."""
        out = np.array(x, dtype=np.float64)
        out[self.l] -= self.V @ ((self.E_H.T @ x[self.h]) / self.eta_inf)
        return out


def apply_exact(core: AgksCore, r: np.ndarray) -> np.ndarray:
    if core.variant != "exact":
        raise ValueError("core was not built with the exact variant")
    return core.apply(r)


def apply_practical(core: AgksCore, r: np.ndarray) -> np.ndarray:
    if core.variant != "practical":
        raise ValueError("core was not built with the practical variant")
    return core.apply(r)


def _exact_column_sums(K: sp.csr_matrix, cells: np.ndarray) -> np.ndarray:
    """``K[:, cells].sum(axis=1)`` with one rounding per row.

    Island rows sum entries of size ``m`` to an O(1) result; plain
    summation would leave an ``eps * m`` error that does not match the
    stored matrix.
    """
    sub = csr(K[:, cells])
    out = np.zeros(K.shape[0])
    for i in np.flatnonzero(np.diff(sub.indptr)):
        out[i] = math.fsum(sub.data[sub.indptr[i]:sub.indptr[i + 1]])
    return out


class DeflationProjector:
    """Subdomain deflation on the island constant vectors.

    ``project_t`` is ``P^T = I - E G^-1 E^T K`` with ``G = E^T K E``;
    ``project`` is its transpose ``P = I - K E G^-1 E^T``.
    """

    def __init__(self, K: sp.spmatrix, islands_cells, n: int | None = None):
        K = csr(K)
        n = K.shape[0] if n is None else n
        cols = []
        KE = []
        for cells in islands_cells:
            cells = np.asarray(cells)
            c = cells.size ** -0.5
            e = np.zeros(n)
            e[cells] = c
            cols.append(e)
            KE.append(_exact_column_sums(K, cells) * c)
        self.E = np.column_stack(cols)
        self.KE = np.column_stack(KE)
        G = np.array([[math.fsum(self.E[:, i] * self.KE[:, j]) for j in range(len(cols))]
                      for i in range(len(cols))])
        self.G = 0.5 * (G + G.T)
        self._G = sla.cho_factor(self.G)

    @property
    def eta(self) -> np.ndarray:
        return np.diag(self.G)

    def project_t(self, x: np.ndarray) -> np.ndarray:
        return x - self.E @ sla.cho_solve(self._G, self.KE.T @ x, check_finite=False)

    def project(self, r: np.ndarray) -> np.ndarray:
        return r - self.KE @ sla.cho_solve(self._G, self.E.T @ r, check_finite=False)

    def project_product(self, Kv: np.ndarray, v: np.ndarray) -> np.ndarray:
        """``P K v`` given ``Kv``, as ``Kv - K E G^-1 (K E)^T v`` with ``E`` stripped.

        Equal to ``project(Kv)`` in exact arithmetic, but ``E^T (K v)`` sums
        entries of size ``m`` and loses ``eps * m``, which the deflated
        system turns into an O(1)-amplified solution error. ``(K E)^T v``
        is accurate, and ``E^T P = 0`` makes the final strip exact.
        """
        return self.strip(Kv - self.KE @ sla.cho_solve(self._G, self.KE.T @ v,
                                                        check_finite=False))

    def strip(self, x: np.ndarray) -> np.ndarray:
        """Remove the (orthogonal) component of ``x`` along ``E``.

        Neither ``P K x`` nor ``P^T x`` depends on it, and without it island
        entries stay small, so ``K x`` avoids the ``eps * m`` cancellation.
        """
        return x - self.E @ (self.E.T @ x)

    def correction(self, b: np.ndarray) -> np.ndarray:
        """Component of the solution along the deflation space, ``E G^-1 E^T b``."""
        return self.E @ sla.cho_solve(self._G, self.E.T @ b, check_finite=False)


def build_deflation(K: sp.spmatrix, system_or_core) -> DeflationProjector:
    part = system_or_core.partition if hasattr(system_or_core, "partition") else None
    if part is None:
        core = system_or_core
        cells = [core.h[np.flatnonzero(core.E_H[:, k])] for k in range(core.E_H.shape[1])]
    else:
        cells = part.components or (part.h_indices,)
    return DeflationProjector(K, cells)


def build_constrained_dirichlet_matrix(system: AssembledSystem) -> np.ndarray:
    """Dirichlet stiffness matrix with the solution held constant per island.

    Unknowns are one value per island followed by the L cells. Couplings
    use the limiting blocks; the island diagonal is ``1_H^T Delta_inf 1_H``,
    the total limiting H-L transmissibility of the island.
    """
    lim = build_limiting_blocks(system)
    ones = (lim.E_H != 0).astype(float)
    top = ones.T @ lim.K_HL.toarray()
    corner = np.diag(-top.sum(axis=1))
    return np.block([[corner, top], [top.T, lim.K_LL.toarray()]])


def exact_preconditioned_eigenvalues(system: AssembledSystem) -> np.ndarray:
    """Spectrum of ``B_exact K`` from the symmetric-definite pencil.

    ``B K`` is similar to ``D L K L^T`` with ``D^-1 = diag(K_HH, S_inf)``,
    so its eigenvalues solve ``(L K L^T) x = lam D^-1 x``.
    """
    part = system.partition
    h, l = part.h_indices, part.l_indices
    perm = np.concatenate([h, l])
    K = system.K[perm][:, perm].toarray()
    lim = build_limiting_blocks(system)
    nh = h.size
    Lmat = np.eye(K.shape[0])
    Lmat[nh:, :nh] = -(lim.V / lim.eta) @ lim.E_H.T
    M = Lmat @ K @ Lmat.T
    M = 0.5 * (M + M.T)
    Dinv = np.zeros_like(K)
    Dinv[:nh, :nh] = K[:nh, :nh]
    Dinv[nh:, nh:] = lim.schur_dense()
    return sla.eigh(M, Dinv, eigvals_only=True)


def asymptotic_deviations(system: AssembledSystem, dps: int = 50) -> dict[str, float]:
    """2-norm distances of the blocks of ``K(m)^-1`` from their ``m -> inf`` limits.

    Returns the deviations of ``K_HH^-1`` from ``E_H diag(eta_inf)^-1 E_H^T``,
    of ``S(m)`` from ``S_inf`` and of ``K_LH K_HH^-1`` from
    ``V diag(eta_inf)^-1 E_H^T``. Everything that touches ``K_HH(m)^-1`` is
    evaluated in ``dps``-digit arithmetic, so the O(1/m) differences stay
    resolvable at contrasts where double precision loses them.
    """
    import mpmath

    grid = system.grid
    part = system.partition
    old = mpmath.mp.dps
    mpmath.mp.dps = dps
    try:
        m = mpmath.mpf(system.m)
        h = part.h_indices
        hpos = {int(c): k for k, c in enumerate(h)}
        p, q = grid.faces()
        h_mask = part.h_mask
        cross = h_mask[p] != h_mask[q]
        gl = np.unique(np.where(h_mask[p[cross]], q[cross], p[cross]))
        gpos = {int(c): k for k, c in enumerate(gl)}
        nh, ng = h.size, gl.size
        hbar = 2 * m / (m + 1)
        KHH = mpmath.zeros(nh, nh)
        KGH = mpmath.zeros(ng, nh)
        KGH_inf = mpmath.zeros(ng, nh)
        dLL = mpmath.zeros(ng, ng)
        for a, b in zip(p.tolist(), q.tolist()):
            ha, hb = a in hpos, b in hpos
            if ha and hb:
                i, j = hpos[a], hpos[b]
                KHH[i, i] += m
                KHH[j, j] += m
                KHH[i, j] -= m
                KHH[j, i] -= m
            elif ha or hb:
                hc, lc = (a, b) if ha else (b, a)
                i, g = hpos[hc], gpos[lc]
                KHH[i, i] += hbar
                KGH[g, i] -= hbar
                KGH_inf[g, i] -= 2
                dLL[g, g] += hbar - 2
        comps = part.components or (h,)
        cols = []
        for cells in comps:
            col = mpmath.zeros(nh, 1)
            for c in cells:
                col[hpos[int(c)], 0] = 1 / mpmath.sqrt(len(cells))
            cols.append(col)
        inv_lim = mpmath.zeros(nh, nh)
        coup_lim = mpmath.zeros(ng, nh)
        schur_lim = mpmath.zeros(ng, ng)
        for col in cols:
            v = KGH_inf * col
            # -1_k^T K_HL_inf 1_L / n_k; only interface L rows couple to H
            eta = -sum(KGH_inf * col) / mpmath.sqrt(sum(1 for x in col if x != 0))
            inv_lim += col * col.T / eta
            coup_lim += v * col.T / eta
            schur_lim += v * v.T / eta
        KHH_inv = mpmath.inverse(KHH)
        coup = KGH * KHH_inv
        d1 = KHH_inv - inv_lim
        d2 = dLL - (coup * KGH.T - schur_lim)
        d3 = coup - coup_lim

        def norm2(A):
            arr = np.array(A.tolist(), dtype=float)
            return float(np.linalg.norm(arr, 2))

        return {"K_HH_inv": norm2(d1), "schur": norm2(d2), "coupling": norm2(d3)}
    finally:
        mpmath.mp.dps = old
