import numpy as np
import pytest

from oracles import hbar, materialize, refined_solve
from hcdiff import Grid, IslandSpec, assemble_system
from hcdiff.agks import (
    AgksCore,
    AgksSetupError,
    DeflationProjector,
    apply_exact,
    apply_practical,
    build_deflation,
    build_limiting_blocks,
    compute_eta,
    exact_preconditioned_eigenvalues,
)
from hcdiff.bench import SolverChoice, build_system, run_solve
from hcdiff.krylov import pcg


@pytest.mark.parametrize("m", [1.0, 1e3, 1e12])
def test_eta_two_by_two_island(make_system, m):
    s = make_system(8, m)
    bv = s.blocks()
    eta = compute_eta(bv.K_HH, 4, bv.K_HL)
    assert eta == pytest.approx(2 * hbar(m), rel=1e-14)
    if m < 1e6:
        assert compute_eta(bv.K_HH, 4) == pytest.approx(eta, rel=1e-13)


def test_eta_matches_corner_formula(make_system):
    m = 1e4
    s = make_system(16, m)
    bv = s.blocks()
    n_nc, n_c = s.partition.corner_counts
    eta = compute_eta(bv.K_HH, s.partition.n_h, bv.K_HL)
    assert abs(eta - hbar(m) * (n_nc + 2 * n_c) / s.partition.n_h) <= 1e-12


def test_eta_one_dimensional():
    from hcdiff import DofPartition, assemble_operator
    from hcdiff.assembly import split_blocks
    g = Grid(7, ndim=1)
    for m in (1.0, 1e8):
        alpha = np.ones(7)
        alpha[2:5] = m
        mask = alpha > 1 if m > 1 else np.isin(np.arange(7), [2, 3, 4])
        part = DofPartition.from_mask(mask, g.adjacency())
        bv = split_blocks(assemble_operator(g, alpha), part)
        assert compute_eta(bv.K_HH, 3, bv.K_HL) == pytest.approx(2 * hbar(m) / 3, rel=1e-14)


def test_limiting_blocks(make_system):
    s = make_system(8, 1e6)
    lim = build_limiting_blocks(s)
    v = lim.V[:, 0]
    assert np.count_nonzero(v) == 8 and np.allclose(v[v != 0], -1.0)
    assert lim.eta[0] == pytest.approx(4.0)
    assert np.linalg.eigvalsh(lim.schur_dense()).min() > 0.0


def test_schur_limit_spd_16(make_system):
    assert np.linalg.eigvalsh(build_limiting_blocks(make_system(16, 1e3)).schur_dense()).min() > 0


def test_k_hh_spectrum_split(make_system):
    for m in (1e4, 1e6):
        ev = np.linalg.eigvalsh(make_system(8, m).blocks().K_HH.toarray())
        assert ev[0] < 10 and np.all(ev[1:] >= 0.1 * m)


def test_empty_island_rejected():
    s = assemble_system(Grid(8), IslandSpec((), m=1.0))
    with pytest.raises(ValueError):
        AgksCore(s)


@pytest.mark.parametrize("variant", ["exact", "practical"])
def test_apply_zero_and_variant_guard(make_system, variant):
    core = AgksCore(make_system(16, 1e4), variant)
    assert np.all(core(np.zeros(256)) == 0.0)
    other = apply_practical if variant == "exact" else apply_exact
    with pytest.raises(ValueError):
        other(core, np.zeros(256))


def test_exact_preconditioner_spd_at_unit_contrast(make_system):
    core = AgksCore(make_system(8, 1.0), "exact")
    B = materialize(core.apply, 64)
    assert np.abs(B - B.T).max() <= 1e-12 * np.abs(B).max()
    assert np.linalg.eigvalsh(0.5 * (B + B.T)).min() > 0.0


def test_exact_spectrum_clusters(make_system):
    ev = exact_preconditioned_eigenvalues(make_system(16, 1e6))
    c = np.abs(ev - 1.0).max() * 1e3
    assert c < 5.0
    ev2 = exact_preconditioned_eigenvalues(make_system(16, 1e8))
    assert np.abs(ev2 - 1.0).max() <= c * 1e-4 * 1.5


def test_weak_m_ll_raises(make_system):
    with pytest.raises(AgksSetupError):
        AgksCore(make_system(8, 1e4), "practical", M_LL=lambda y: 1e6 * y)


def test_capacitance_positive(make_system):
    for kind in ("wk", "bilinear"):
        for smoother in ("sgs", "ilu"):
            core = AgksCore(make_system(32, 1e6), "practical", kind, smoother)
            assert np.all(core.sigma > 0)


def test_deflation_projector(make_system, rng):
    s = make_system(16, 1e6)
    D = build_deflation(s.K, s)
    x = rng.standard_normal(256)
    assert np.allclose(D.project_t(D.project_t(x)), D.project_t(x), atol=1e-12)
    assert np.linalg.norm(D.project_t(D.E[:, 0])) <= 1e-12
    assert np.abs(D.E.T @ D.project(x)).max() <= 1e-12 * np.linalg.norm(x)
    Kx = s.K @ x
    assert np.allclose(D.project_product(Kx, x), D.strip(D.project(Kx)), atol=1e-8)
    core = build_deflation(s.K, AgksCore(s, "exact"))
    assert np.allclose(core.E, D.E)


def test_left_factor_fixes_projection(make_system, rng):
    s = make_system(16, 1e6)
    D = build_deflation(s.K, s)
    core = AgksCore(s, "exact")
    for _ in range(10):
        x = rng.standard_normal(256)
        px = D.project(x)
        assert np.linalg.norm(core.left_factor(px) - px) <= 1e-12 * np.linalg.norm(x)


def test_deflated_solve_consistency(make_system):
    s = make_system(16, 1e6)
    ref = refined_solve(s.K, s.b)
    core = AgksCore(s, "practical", deflated=True)
    x, rep = pcg(s.K, s.b, core, build_deflation(s.K, s))
    assert rep.ok
    assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)


def test_two_islands_deflation(rng):
    s = build_system(16, 1e8, ((1, 1, 2, 2), (4, 4, 2, 2)))
    x, rep = run_solve(s, SolverChoice("agks", "bilinear", "sgs"))
    assert rep.ok and rep.iterations <= 12
    ref = refined_solve(s.K, s.b)
    assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)


def test_scaled_solve_same_solution():
    s = build_system(16, 1e6, ((2, 2, 2, 2),))
    x1, r1 = run_solve(s, SolverChoice("agks", "bilinear", "sgs"))
    x2, r2 = run_solve(s, SolverChoice("agks", "bilinear", "sgs", scale_by_contrast=True))
    assert r1.ok and r2.ok
    assert np.linalg.norm(x1 - x2) <= 1e-8 * np.linalg.norm(x1)


def test_one_dimensional_practical():
    """Practical AGKS on a strip falls back to dense solves."""
    from hcdiff import DofPartition, assemble_operator
    from hcdiff.assembly import AssembledSystem, assemble_rhs
    g = Grid(7, ndim=1)
    alpha = np.ones(7)
    alpha[2:5] = 1e6
    part = DofPartition.from_mask(alpha > 1, g.adjacency())
    K = assemble_operator(g, alpha)
    s = AssembledSystem(g, alpha, K, assemble_rhs(g, 1.0), part, 1e6)
    x, rep = pcg(K, s.b, AgksCore(s, "practical", deflated=True), DeflationProjector(K, [part.h_indices]))
    assert rep.ok and rep.iterations <= 4


def test_deflation_default_only_for_agks():
    assert SolverChoice("agks").deflated and SolverChoice("agks_exact").deflated
    assert not SolverChoice("ccmg").deflated
    assert SolverChoice("ccmg", deflation="on").deflated
