"""Preconditioned conjugate gradients with optional subspace deflation."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

CONVERGED = "yes"
CAP_REACHED = "cap_reached"
DIVERGED = "diverged"

DIVERGENCE_RR = 1e3
# a run stopped by the iteration cap below this level is reported as 60+;
# above it, it counts as divergence
CAP_RR = 1e-3


class Deflation(Protocol):
    def project(self, r: np.ndarray) -> np.ndarray: ...
    def project_t(self, x: np.ndarray) -> np.ndarray: ...
    def correction(self, b: np.ndarray) -> np.ndarray: ...


def _identity(v: np.ndarray) -> np.ndarray:
    return v


def average_reduction_factor(history: Sequence[float]) -> float:
    """Geometric-mean contraction ``(rr_t / rr_0) ** (1 / t)``."""
    if len(history) == 0:
        raise ValueError("empty residual history")
    t = len(history) - 1
    if t < 1:
        raise ValueError("need at least one iteration")
    rr = history[-1] / history[0]
    if not np.isfinite(rr):
        return float("inf")
    return float(rr ** (1.0 / t))


@dataclass
class SolveReport:
    iterations: int
    converged: str
    avg_reduction_factor: float
    final_relative_residual: float
    setup_seconds: float = 0.0
    solve_seconds: float = 0.0
    residual_history: list[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.converged == CONVERGED

    @property
    def failed(self) -> bool:
        return self.converged in (CAP_REACHED, DIVERGED)

    def cell(self) -> str:
        """Table cell text: ``**t**, f``, ``60+, f`` or ``inf, f``."""
        f = f"{self.avg_reduction_factor:.3f}"
        if self.converged == CONVERGED:
            return f"**{self.iterations}**, {f}"
        if self.converged == CAP_REACHED:
            return f"**{self.iterations}+**, {f}"
        return f"**inf**, {f}"


def _as_apply(op) -> Callable[[np.ndarray], np.ndarray]:
    if op is None:
        return lambda v: v.copy()
    if callable(op) and not hasattr(op, "shape"):
        return op
    if hasattr(op, "matvec"):
        return op.matvec
    return lambda v: op @ v


def pcg(K, b: np.ndarray, B=None, deflation: Deflation | None = None,
        tol: float = 1e-9, maxit: int = 60, refresh: int = 10,
        callback: Callable[[np.ndarray], None] | None = None):
    """Solve ``K x = b`` by PCG from a zero initial guess.

    With ``deflation`` the iteration runs on ``P K x = P b`` and the final
    solution is ``P^T x + correction(b)``. If the deflation also offers
    ``strip`` (removal of the deflation-space component, which the deflated
    operator ignores), search directions and iterates are kept stripped, and
    ``project_product(Kv, v)`` replaces ``project(Kv)`` when offered.
    The reported relative residual is the unpreconditioned 2-norm of the (deflated) residual, refreshed by
    an explicit residual every ``refresh`` iterations. ``callback`` receives
    the current solution estimate after every iteration.

    Returns ``(x, SolveReport)``.
    """
    b = np.asarray(b, dtype=np.float64)
    n = b.size
    if hasattr(K, "shape") and K.shape != (n, n):
        raise ValueError(f"operator {K.shape} does not match right-hand side of size {n}")
    matvec = _as_apply(K)
    prec = _as_apply(B)
    strip = _identity
    if deflation is not None:
        proj = deflation.project
        strip = getattr(deflation, "strip", _identity)
        product = getattr(deflation, "project_product", None)
        if product is not None:
            op = lambda v: product(matvec(v), v)  # noqa: E731
        else:
            op = lambda v: proj(matvec(v))  # noqa: E731
    else:
        proj = None
        op = matvec

    def finish(xt):
        if deflation is None:
            return xt
        return deflation.project_t(xt) + deflation.correction(b)

    t0 = time.perf_counter()
    x = np.zeros(n)
    r = strip(proj(b)) if proj else b.copy()
    rhs = r.copy()
    r0 = np.linalg.norm(r)
    history = [1.0]
    if r0 == 0.0:
        rep = SolveReport(0, CONVERGED, 0.0, 0.0, solve_seconds=time.perf_counter() - t0,
                          residual_history=history)
        return finish(x), rep
    z = prec(r)
    if z.shape != (n,):
        raise ValueError(f"preconditioner returned shape {z.shape}")
    p = z.copy()
    rz = r @ z
    status = None
    rr = 1.0
    for it in range(1, maxit + 1):
        p = strip(p)
        q = op(p)
        pq = p @ q
        alpha = rz / pq if pq != 0.0 else np.nan
        x += alpha * p
        r -= alpha * q
        if refresh and it % refresh == 0:
            x = strip(x)
            r = rhs - op(x) if proj else b - matvec(x)
        rr = np.linalg.norm(r) / r0
        history.append(float(rr))
        if callback is not None:
            callback(finish(x))
        if not np.isfinite(rr) or rr > DIVERGENCE_RR:
            status = DIVERGED
            break
        if rr <= tol:
            status = CONVERGED
            break
        z = prec(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if status is None:
        status = CAP_REACHED if rr < CAP_RR else DIVERGED
    rep = SolveReport(
        iterations=len(history) - 1,
        converged=status,
        avg_reduction_factor=average_reduction_factor(history),
        final_relative_residual=float(rr),
        solve_seconds=time.perf_counter() - t0,
        residual_history=history,
    )
    return finish(x), rep
