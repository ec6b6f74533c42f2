"""Krylov methods, dense factorisation and the relaxed trace iteration.

All solvers are re-entrant: each call owns its workspace.  Stopping is on
the relative preconditioned residual.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import DivergenceError, SolverError

__all__ = [
    "SolverConfig",
    "IterationTrace",
    "cg",
    "gmres",
    "dense_solve",
    "relaxed_jacobi",
]


@dataclass(frozen=True)
class SolverConfig:
    method: str = "cg"
    tolerance: float = 1e-8
    max_iterations: int = 1000
    preconditioner: str | None = None
    restart: int | None = None

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class IterationTrace:
    """Per-iteration history of a solve."""

    residuals: list = field(default_factory=list)
    increments: list = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False
    label: str = ""

    @property
    def n_iterations(self) -> int:
        return len(self.residuals) if self.residuals else len(self.increments)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "residual", "increment"])
            n = max(len(self.residuals), len(self.increments))
            for i in range(n):
                r = self.residuals[i] if i < len(self.residuals) else ""
                d = self.increments[i] if i < len(self.increments) else ""
                writer.writerow([i, r, d])


def _as_matvec(operator, size=None):
    if callable(operator) and not sp.issparse(operator) and not isinstance(operator, np.ndarray):
        return operator
    return lambda x: operator @ x


def _apply_prec(M, r):
    if M is None:
        return r
    if callable(M) and not sp.issparse(M) and not isinstance(M, np.ndarray):
        return M(r)
    return M @ r


def cg(operator, rhs, config: SolverConfig, preconditioner=None, x0=None):
    """Preconditioned conjugate gradients for symmetric positive operators.

    Returns ``(solution, trace)``; raises SolverError on breakdown or when
    ``max_iterations`` is exhausted.
    """
    A = _as_matvec(operator)
    b = np.asarray(rhs, dtype=float)
    trace = IterationTrace(label="cg")
    t0 = time.perf_counter()

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A(x) if x0 is not None else b.copy()
    z = _apply_prec(preconditioner, r)
    rz = float(r @ z)
    bz = _apply_prec(preconditioner, b)
    ref = np.sqrt(max(float(b @ bz), 0.0))
    if ref == 0.0:
        trace.converged = True
        trace.wall_time = time.perf_counter() - t0
        return x, trace
    p = z.copy()
    for _ in range(config.max_iterations):
        Ap = A(p)
        pAp = float(p @ Ap)
        if not np.isfinite(pAp) or pAp == 0.0:
            raise SolverError("cg breakdown: non-finite or zero curvature", trace)
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        z = _apply_prec(preconditioner, r)
        rz_new = float(r @ z)
        rel = np.sqrt(abs(rz_new)) / ref
        trace.residuals.append(rel)
        if not np.isfinite(rel):
            raise SolverError("cg breakdown: NaN residual", trace)
        if rel <= config.tolerance:
            trace.converged = True
            trace.wall_time = time.perf_counter() - t0
            return x, trace
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    trace.wall_time = time.perf_counter() - t0
    raise SolverError(
        f"cg did not converge in {config.max_iterations} iterations "
        f"(residual {trace.residuals[-1]:.3e})", trace)


def gmres(operator, rhs, config: SolverConfig, preconditioner=None, size=None,
          x0=None):
    """Left-preconditioned GMRES with optional restart."""
    A = _as_matvec(operator, size)
    b = np.asarray(rhs, dtype=float)
    n = b.shape[0]
    restart = config.restart or config.max_iterations
    trace = IterationTrace(label="gmres")
    t0 = time.perf_counter()

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    Mb = _apply_prec(preconditioner, b)
    ref = np.linalg.norm(Mb)
    if ref == 0.0:
        trace.converged = True
        trace.wall_time = time.perf_counter() - t0
        return x, trace

    total = 0
    while total < config.max_iterations:
        r = _apply_prec(preconditioner, b - A(x))
        beta = np.linalg.norm(r)
        if beta / ref <= config.tolerance:
            trace.converged = True
            break
        m = min(restart, config.max_iterations - total)
        Q = np.zeros((n, m + 1))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        Q[:, 0] = r / beta
        k_used = 0
        for k in range(m):
            wv = _apply_prec(preconditioner, A(Q[:, k]))
            for i in range(k + 1):
                H[i, k] = wv @ Q[:, i]
                wv = wv - H[i, k] * Q[:, i]
            H[k + 1, k] = np.linalg.norm(wv)
            if not np.isfinite(H[k + 1, k]):
                raise SolverError("gmres breakdown: NaN in Arnoldi", trace)
            if H[k + 1, k] > 1e-300:
                Q[:, k + 1] = wv / H[k + 1, k]
            for i in range(k):
                t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = t
            denom = np.hypot(H[k, k], H[k + 1, k])
            cs[k] = H[k, k] / denom
            sn[k] = H[k + 1, k] / denom
            H[k, k] = denom
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            total += 1
            k_used = k + 1
            rel = abs(g[k + 1]) / ref
            trace.residuals.append(rel)
            if rel <= config.tolerance or total >= config.max_iterations:
                break
        y = sla.solve_triangular(H[:k_used, :k_used], g[:k_used], lower=False)
        x = x + Q[:, :k_used] @ y
        if trace.residuals and trace.residuals[-1] <= config.tolerance:
            trace.converged = True
            break
    else:
        r = _apply_prec(preconditioner, b - A(x))
        trace.converged = np.linalg.norm(r) / ref <= config.tolerance

    trace.wall_time = time.perf_counter() - t0
    if not trace.converged:
        raise SolverError(
            f"gmres did not converge in {config.max_iterations} iterations", trace)
    return x, trace


def dense_solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Partial-pivoting LU solve with a residual post-check."""
    A = np.asarray(matrix, dtype=float)
    b = np.asarray(rhs, dtype=float)
    try:
        lu, piv = sla.lu_factor(A)
    except sla.LinAlgError as exc:
        raise SolverError(f"factorisation failed: {exc}") from exc
    x = sla.lu_solve((lu, piv), b)
    if not np.all(np.isfinite(x)):
        raise SolverError("matrix singular to working precision")
    nb = np.linalg.norm(b)
    if nb > 0:
        rel = np.linalg.norm(A @ x - b) / nb
        if rel > 1e-10:
            scale = np.linalg.norm(A, ord=np.inf) * np.linalg.norm(x, ord=np.inf)
            if nb >= 1e-6 * scale:
                raise SolverError(f"dense solve residual {rel:.3e} exceeds 1e-10")
    return x


def relaxed_jacobi(system, sigma: float, config: SolverConfig,
                   inner_config: SolverConfig | None = None, u0=None):
    """Relaxed two-step trace iteration on a coupled system.

    Step one solves the interior and exterior problems with the current
    interface trace; step two updates the trace from its own test-function
    equation damped by ``sigma`` times the penalty mass.  Iterates until
    the L2 increment of the trace drops below the tolerance.
    """
    if sigma <= 0:
        raise ValueError("relaxation parameter must be positive")
    trace = IterationTrace(label=f"jacobi(sigma={sigma:g})")
    t0 = time.perf_counter()

    lu = sp.linalg.factorized(system.jacobi_step_matrix(sigma).tocsc())
    M_MM = system.exterior.ops.M_MM
    nt = system.n_trace

    ut = np.zeros(nt) if u0 is None else np.array(u0, dtype=float)
    for it in range(config.max_iterations):
        u_minus, u_plus, lam, inner_stats = system.subdomain_solves(ut, inner_config)
        r = system.trace_row_residual(u_minus, u_plus, lam, ut)
        delta = -lu(r)
        ut = ut + delta
        inc = float(np.sqrt(max(delta @ (M_MM @ delta), 0.0)))
        trace.increments.append(inc)
        if inc <= config.tolerance:
            trace.converged = True
            break
        if it >= 5 and trace.increments[it - 5] > 0 and \
                inc >= 10.0 * trace.increments[it - 5]:
            trace.wall_time = time.perf_counter() - t0
            raise DivergenceError(
                f"trace iteration diverging for sigma={sigma:g} "
                f"(increment grew 10x over 5 iterations)", sigma=sigma, trace=trace)
    trace.wall_time = time.perf_counter() - t0

    u_minus, u_plus, lam, inner_stats = system.subdomain_solves(ut, inner_config)
    bundle = system.make_bundle(u_minus, u_plus, lam, ut, outer_trace=trace,
                                inner_stats=inner_stats, method="jacobi")
    return bundle, trace
