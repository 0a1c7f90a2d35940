import numpy as np
import pytest
import scipy.sparse as sp

from hcdiff.krylov import (
    CAP_REACHED,
    CONVERGED,
    DIVERGED,
    SolveReport,
    average_reduction_factor,
    pcg,
)


def laplace_1d(n):
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")


def test_cg_solves_small_system():
    K = laplace_1d(20)
    b = np.ones(20)
    x, rep = pcg(K, b, maxit=100)
    assert rep.converged == CONVERGED
    assert rep.iterations <= 20
    assert np.allclose(K @ x, b, atol=1e-8)
    assert rep.residual_history[0] == 1.0
    assert rep.final_relative_residual <= 1e-9


def test_zero_rhs():
    x, rep = pcg(laplace_1d(5), np.zeros(5))
    assert rep.iterations == 0 and rep.ok and np.all(x == 0)


def test_exact_preconditioner_one_step():
    K = laplace_1d(30)
    Kd = K.toarray()
    x, rep = pcg(K, np.arange(30.0), lambda r: np.linalg.solve(Kd, r))
    assert rep.iterations == 1 and rep.ok


def test_cap_and_divergence():
    K = laplace_1d(200)
    _, rep = pcg(K, np.ones(200), maxit=60)
    assert rep.converged in (CAP_REACHED, DIVERGED) and rep.failed
    _, rep = pcg(K, np.ones(200), lambda r: np.full_like(r, np.nan))
    assert rep.converged == DIVERGED


def test_shape_checks():
    with pytest.raises(ValueError):
        pcg(laplace_1d(4), np.ones(5))
    with pytest.raises(ValueError):
        pcg(laplace_1d(4), np.ones(4), lambda r: np.ones(3))


def test_average_reduction_factor():
    assert average_reduction_factor([1.0, 0.1, 0.01]) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        average_reduction_factor([1.0])


def test_report_cells():
    assert SolveReport(6, CONVERGED, 0.0171, 1e-10).cell() == "**6**, 0.017"
    assert SolveReport(60, CAP_REACHED, 0.938, 1e-4).cell() == "**60+**, 0.938"
    assert SolveReport(12, DIVERGED, 1.07, 2e3).cell() == "**inf**, 1.070"


def test_callback_sees_iterates():
    seen = []
    pcg(laplace_1d(10), np.ones(10), callback=lambda x: seen.append(x.copy()), maxit=50)
    assert len(seen) >= 1 and seen[-1].shape == (10,)


class _PointDeflation:
    """Deflation on one coordinate vector, for exercising the driver."""

    def __init__(self, K, k):
        self.K = K.toarray()
        self.e = np.zeros(K.shape[0])
        self.e[k] = 1.0
        self.Ke = self.K @ self.e
        self.g = self.e @ self.Ke

    def project(self, r):
        return r - self.Ke * (self.e @ r) / self.g

    def project_t(self, x):
        return x - self.e * (self.Ke @ x) / self.g

    def correction(self, b):
        return self.e * (self.e @ b) / self.g


def test_deflated_solution_is_exact():
    K = laplace_1d(25)
    b = np.linspace(0, 1, 25)
    x, rep = pcg(K, b, deflation=_PointDeflation(K, 12), maxit=100)
    assert rep.ok
    assert np.allclose(x, np.linalg.solve(K.toarray(), b), atol=1e-8)
