import csv
import io

import numpy as np
import pytest
import scipy.sparse as sp

from hcdiff import Grid, IslandSpec
from hcdiff.spectral import (
    diagonal_scale,
    fit_asymptotic_slope,
    spectrum,
    spectrum_study,
    table_indices,
    write_spectrum_csv,
)

ISLAND = IslandSpec(((2, 2, 2, 2),))


def test_diagonal_scale_unit_diagonal(make_system):
    A = diagonal_scale(make_system(16, 1e8).K)
    assert np.all(A.diagonal() == 1.0)
    assert abs(A - A.T).max() <= 1e-15
    assert abs(diagonal_scale(sp.diags([2.0, 5.0])) - sp.identity(2)).max() == 0.0
    with pytest.raises(ValueError):
        diagonal_scale(sp.diags([1.0, 0.0]))


def test_table_values_at_1e4():
    row = spectrum_study(Grid(8), ISLAND, [1e4])[0]
    assert row.A.eig(1) == pytest.approx(6.139e-5, rel=1e-3)
    assert row.A.eig(64) == pytest.approx(1.999, rel=1e-3)
    assert row.K.eig(62) == pytest.approx(2.000e4, rel=1e-3)
    assert row.K.eig(64) == pytest.approx(4.000e4, rel=1e-3)


def test_counts_single_island():
    row = spectrum_study(Grid(8), ISLAND, [1e6])[0]
    assert row.K.count_large == 3
    assert np.sum(row.K.eigenvalues >= 0.1 * 1e6) == 3
    assert np.sum(row.A.eigenvalues <= 1e-3) == 1
    assert row.A.eig(2) >= 0.13


def test_counts_two_islands():
    row = spectrum_study(Grid(16), IslandSpec(((1, 1, 2, 2), (4, 4, 2, 2))), [1e6])[0]
    assert row.A.count_small == 2
    assert row.K.count_large == 2 * (16 - 1)


def test_smallest_scaled_eigenvalue_bounds():
    ms = [1e2, 1e4, 1e6, 1e8, 1e10]
    rows = spectrum_study(Grid(8), ISLAND, ms)
    prod = np.array([r.A.eig(1) * r.m for r in rows if r.m >= 1e4])
    assert prod.max() <= 1.05 * prod.min()
    c2 = rows[0].A.eig(1) * np.sqrt(1e2)
    assert all(r.A.eig(1) <= c2 / np.sqrt(r.m) * (1 + 1e-12) for r in rows)
    fit = fit_asymptotic_slope([(r.m, r.A.eig(1)) for r in rows if r.m >= 1e4])
    assert fit.slope == pytest.approx(-1.0, abs=0.02)
    kappa = [r.K.condition_number / r.m for r in rows[1:]]
    assert max(kappa) / min(kappa) < 1.01


def test_slope_fit():
    ms = np.logspace(1, 8, 8)
    assert fit_asymptotic_slope(list(zip(ms, 3.0 / ms))).slope == pytest.approx(-1.0, abs=1e-6)
    assert fit_asymptotic_slope(list(zip(ms, ms ** -0.5))).slope == pytest.approx(-0.5, abs=1e-6)
    with pytest.raises(ValueError):
        fit_asymptotic_slope([(1.0, 1.0), (2.0, 0.5)])
    with pytest.raises(ValueError):
        fit_asymptotic_slope([(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)])


def test_size_limit():
    with pytest.raises(ValueError):
        spectrum_study(Grid(128), ISLAND, [1.0])
    with pytest.raises(ValueError):
        spectrum(sp.identity(5000, format="csr"), "K", 1.0)


def test_report_consistency(make_system):
    rep = spectrum(make_system(8, 1e2).K, "K", 1e2)
    assert np.all(np.diff(rep.eigenvalues) >= 0)
    assert rep.condition_number == pytest.approx(rep.eigenvalues[-1] / rep.eigenvalues[0])


def test_csv_layout():
    grid = Grid(8)
    rows = spectrum_study(grid, ISLAND, [1e0, 1e2, 1e4, 1e6, 1e8, 1e10])
    buf = io.StringIO()
    write_spectrum_csv(buf, rows, *table_indices(grid, ISLAND))
    table = list(csv.DictReader(io.StringIO(buf.getvalue())))
    assert len(table) == 6
    assert list(table[0])[:6] == ["m", "kappa_K", "lambda1_K", "lambda61_K", "lambda62_K",
                                  "lambda64_K"]
    assert table[-1]["count_large_K"] == "3" and table[-1]["count_small_A"] == "1"
