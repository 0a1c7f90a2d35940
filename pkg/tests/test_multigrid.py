import numpy as np
import pytest

from oracles import materialize
from hcdiff import Grid
from hcdiff.bench import SolverChoice, build_system, run_solve
from hcdiff.krylov import pcg
from hcdiff.multigrid import (
    MgHierarchy,
    build_hierarchy,
    build_prolongation,
    canonical_prolongation,
    grid_prolongations,
    restricted_prolongations,
)


def test_prolongation_aliases():
    assert canonical_prolongation("WK") == "wesseling_khalil"
    with pytest.raises(ValueError):
        canonical_prolongation("cubic")


@pytest.mark.parametrize("kind", ["bilinear", "wesseling_khalil"])
def test_prolongation_rows(kind):
    P = build_prolongation(kind, Grid(16)).matrix
    assert P.shape == (256, 64)
    assert np.diff(P.indptr).max() <= 4
    assert np.allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0)


def test_bilinear_interior_weights():
    g = Grid(16)
    P = build_prolongation("bilinear", g).matrix
    row = P[g.index(5, 6)]
    assert sorted(row.data * 16) == [1.0, 3.0, 3.0, 9.0]


def test_odd_grid_rejected():
    with pytest.raises(ValueError):
        build_prolongation("bilinear", Grid(9, ndim=1))


def test_hierarchy_depth_and_symmetry(make_system):
    H = build_hierarchy(make_system(64, 1e3).K, Grid(64))
    assert H.depth == 4
    for lev in H.levels:
        A = lev.A
        assert abs(A - A.T).max() <= 1e-13 * abs(A).max()
    with pytest.raises(ValueError):
        grid_prolongations("bilinear", Grid(8), coarsest_n=16)


def test_single_level_is_direct_solve(make_system, rng):
    s = make_system(8, 1e4)
    H = build_hierarchy(s.K, Grid(8))
    assert H.depth == 1
    b = rng.standard_normal(64)
    assert np.allclose(s.K @ H.apply(b), b)


def test_coarse_rows_sum_to_zero_inside(make_system):
    H = build_hierarchy(make_system(16, 1.0).K, Grid(16), "bilinear")
    rows = np.asarray(H.levels[1].A.sum(axis=1)).ravel().reshape(8, 8)
    assert np.abs(rows[1:-1, 1:-1]).max() <= 1e-13


@pytest.mark.parametrize("smoother", ["sgs", "ilu"])
def test_vcycle_is_linear(make_system, rng, smoother):
    H = build_hierarchy(make_system(32, 1e5).K, Grid(32), "wk", smoother)
    r1, r2 = rng.standard_normal((2, 1024))
    lhs = H.apply(2.0 * r1 - 3.0 * r2)
    rhs = 2.0 * H.apply(r1) - 3.0 * H.apply(r2)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)
    assert np.all(H.apply(np.zeros(1024)) == 0.0)


def test_sgs_vcycle_spd(make_system):
    H = build_hierarchy(make_system(16, 1.0).K, Grid(16), "bilinear", "sgs")
    B = materialize(H.apply, 256)
    assert np.abs(B - B.T).max() <= 1e-12 * np.abs(B).max()
    assert np.linalg.eigvalsh(0.5 * (B + B.T)).min() > 0.0


def test_two_grid_exact_with_exact_smoother(make_system, rng):
    s = make_system(16, 1e2)
    H = build_hierarchy(s.K, Grid(16), "bilinear", "ilu")
    H.levels[0].ilu = type(H.levels[0].ilu)(*_exact_ilu(s.K))
    b = rng.standard_normal(256)
    assert np.linalg.norm(s.K @ H.apply(b) - b) <= 1e-10 * np.linalg.norm(b)


def _exact_ilu(K):
    from hcdiff.sparse import ilu_factorize
    f = ilu_factorize(K, tau=0.0)
    return f.L, f.U, f.pivots, f.tau, f.shifted_pivots


def test_unit_contrast_iterations():
    _, rep = run_solve(build_system(16, 1.0, ((2, 2, 2, 2),)),
                       SolverChoice("ccmg", "bilinear", "sgs"))
    assert rep.ok and rep.iterations <= 14


@pytest.mark.parametrize("nx", [16, 32])
def test_ccmg_count_grows_with_contrast(nx):
    its = [run_solve(build_system(nx, m, ((2, 2, 2, 2),)),
                     SolverChoice("ccmg", "bilinear", "sgs"))[1].iterations
           for m in (1e0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6)]
    assert its == sorted(its)


def test_ccmg_fails_at_large_contrast():
    _, rep = run_solve(build_system(32, 1e8, ((2, 2, 2, 2),)),
                       SolverChoice("ccmg", "bilinear", "sgs"))
    assert rep.failed


def test_restricted_prolongations(make_system):
    s = make_system(64, 1.0)
    mask = s.partition.h_mask
    raw = restricted_prolongations("bilinear", Grid(64), mask)
    ren = restricted_prolongations("bilinear", Grid(64), mask, renormalize=True)
    assert [P.shape for P in raw] == [(256, 64), (64, 16), (16, 4)]
    for P in ren:
        assert np.allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0)
    H = MgHierarchy.from_operators(s.blocks().K_HH, ren, "sgs")
    x, rep = pcg(s.blocks().K_HH, np.ones(256), H)
    assert rep.ok
