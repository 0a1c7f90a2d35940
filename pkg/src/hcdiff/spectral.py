"""Spectra of K(m) and of its diagonally scaled version A(m).

Under growing contrast, K(m) develops ``sum_k (n_k - 1)`` eigenvalues of
order m (one island-internal mode per island cell beyond the first), while
A(m) = D^-1/2 K D^-1/2 develops ``s`` eigenvalues of order 1/m, one per
island, the rest staying bounded.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .assembly import assemble_system
from .geometry import Grid, IslandSpec, island_labels
from .sparse import csr, eigvalsh

DENSE_LIMIT = 4096


def diagonal_scale(K: sp.spmatrix) -> sp.csr_matrix:
    """``diag(K)^-1/2 K diag(K)^-1/2`` with the unit diagonal set exactly."""
    K = csr(K)
    d = K.diagonal()
    if np.any(d <= 0.0):
        raise ValueError("diagonal scaling needs a positive diagonal")
    s = 1.0 / np.sqrt(d)
    A = csr(sp.diags(s) @ K @ sp.diags(s))
    A.setdiag(1.0)
    return A


def small_band(m: float) -> float:
    return 100.0 / m


def large_band(m: float) -> float:
    return m / 100.0


@dataclass(frozen=True)
class SpectrumReport:
    kind: str
    m: float
    eigenvalues: np.ndarray

    @property
    def condition_number(self) -> float:
        return float(self.eigenvalues[-1] / self.eigenvalues[0])

    @property
    def count_small(self) -> int:
        return int(np.sum(self.eigenvalues < small_band(self.m)))

    @property
    def count_large(self) -> int:
        return int(np.sum(self.eigenvalues > large_band(self.m)))

    def eig(self, k: int) -> float:
        """``lambda_k`` with the 1-based index used in tables."""
        return float(self.eigenvalues[k - 1])


def spectrum(K, kind: str, m: float, method: str = "auto") -> SpectrumReport:
    if K.shape[0] > DENSE_LIMIT:
        raise ValueError(f"dense spectra are limited to n <= {DENSE_LIMIT}, got {K.shape[0]}")
    return SpectrumReport(kind, float(m), eigvalsh(K, method))


@dataclass(frozen=True)
class StudyRow:
    m: float
    K: SpectrumReport
    A: SpectrumReport


def spectrum_study(grid: Grid, islands: IslandSpec, m_list: Iterable[float],
                   method: str = "auto") -> list[StudyRow]:
    """Spectra of K(m) and A(m) for every contrast in ``m_list``."""
    if grid.n > DENSE_LIMIT:
        raise ValueError(f"dense spectra are limited to n <= {DENSE_LIMIT}, got {grid.n}")
    rows = []
    for m in m_list:
        K = assemble_system(grid, islands.with_contrast(m)).K
        rows.append(StudyRow(float(m), spectrum(K, "K", m, method),
                             spectrum(diagonal_scale(K), "A", m, method)))
    return rows


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    residual: float


def fit_asymptotic_slope(samples: Sequence[tuple[float, float]]) -> SlopeFit:
    """Least-squares line through ``(log10 m, log10 value)``.

    ``residual`` is the root-mean-square misfit in decades.
    """
    if len(samples) < 3:
        raise ValueError("need at least three samples for a slope fit")
    m, v = np.asarray(samples, dtype=np.float64).T
    if np.any(m <= 0.0) or np.any(v <= 0.0):
        raise ValueError("slope fit needs positive abscissae and values")
    x, y = np.log10(m), np.log10(v)
    coef, *_ = np.linalg.lstsq(np.column_stack([x, np.ones_like(x)]), y, rcond=None)
    res = y - (coef[0] * x + coef[1])
    return SlopeFit(float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(res ** 2))))


def table_indices(grid: Grid, islands: IslandSpec):
    """Default 1-based eigenvalue indices for K and A.

    K: the smallest, the last bounded, the first unbounded and the largest;
    A: the smallest, the first bounded and the largest.
    """
    n = grid.n
    s = islands.count
    n_large = int(np.count_nonzero(island_labels(grid, islands))) - s
    return (1, n - n_large, n - n_large + 1, n), (1, s + 1, n)


def write_spectrum_csv(path_or_stream, rows: Sequence[StudyRow], k_idx: Sequence[int],
                       a_idx: Sequence[int]) -> None:
    """Table-1-style CSV; ``path_or_stream`` is a path or an open text stream."""
    if hasattr(path_or_stream, "write"):
        _write_spectrum_rows(path_or_stream, rows, k_idx, a_idx)
        return
    with open(path_or_stream, "w", newline="", encoding="utf-8") as fh:
        _write_spectrum_rows(fh, rows, k_idx, a_idx)


def _write_spectrum_rows(fh, rows, k_idx, a_idx) -> None:
    header = (["m", "kappa_K"] + [f"lambda{k}_K" for k in k_idx]
              + ["kappa_A"] + [f"lambda{k}_A" for k in a_idx]
              + ["count_large_K", "count_small_A"])
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(r.m), repr(r.K.condition_number)]
                   + [repr(r.K.eig(k)) for k in k_idx]
                   + [repr(r.A.condition_number)]
                   + [repr(r.A.eig(k)) for k in a_idx]
                   + [r.K.count_large, r.A.count_small])
