"""The coupled hybrid system over (interior, exterior, flux, trace) unknowns.

The only coupling between the interior and exterior blocks passes through
the interface trace variable, which makes a Schur complement on the trace
the natural solver target.  All operators are immutable once assembled;
distinct Schur applications may run concurrently.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import quadrature as quad
from .bem import ExteriorBlocks, TraceSpace
from .errors import SpaceError
from .fem import InteriorBlocks, tet_basis, tet_basis_dl, _bary_gradients, _facet_tables
from .solvers import IterationTrace, SolverConfig, cg, dense_solve, gmres

__all__ = [
    "CoupledSystem",
    "SolutionBundle",
    "InnerOptions",
    "assemble_coupled",
    "schur_residual",
    "solve_coupled",
    "error_norms",
    "surface_values",
    "volume_trace_values",
]


@dataclass(frozen=True)
class InnerOptions:
    """How the two subdomain solves inside the Schur operator are run."""

    mode: str = "iterative"          # or "direct"
    tolerance: float = 1e-10
    max_iterations: int = 5000
    preconditioned: bool = True
    reduced_exterior: bool = True


@dataclass(eq=False)
class SolutionBundle:
    """Coefficients of all four unknowns plus solver diagnostics."""

    u_minus: np.ndarray
    u_plus: np.ndarray
    lam: np.ndarray
    u_tilde: np.ndarray
    method: str = ""
    outer_trace: IterationTrace | None = None
    inner_iters_interior: int = 0
    inner_iters_exterior: int = 0
    wall_time: float = 0.0

    def dump_json(self, path) -> None:
        data = {
            "method": self.method,
            "u_minus": self.u_minus.tolist(),
            "u_plus": self.u_plus.tolist(),
            "lambda": self.lam.tolist(),
            "u_tilde": self.u_tilde.tolist(),
            "outer_residuals": list(self.outer_trace.residuals) if self.outer_trace else [],
            "outer_increments": list(self.outer_trace.increments) if self.outer_trace else [],
            "inner_iters_interior": self.inner_iters_interior,
            "inner_iters_exterior": self.inner_iters_exterior,
            "wall_time": self.wall_time,
        }
        with open(path, "w") as fh:
            json.dump(data, fh)


class _InnerSolvers:
    """Cached subdomain solvers; counts the worst iteration cost seen."""

    def __init__(self, system: "CoupledSystem", options: InnerOptions):
        self.system = system
        self.options = options
        self.max_interior = 0
        self.max_exterior = 0
        interior = system.interior
        self._A_uu = interior.a_uu()
        self._A_ut = interior.a_ut()
        self._diag = self._A_uu.diagonal()
        ext = system.exterior
        if options.mode == "direct":
            self._interior_lu = spla.factorized(self._A_uu.tocsc())
            ext.ensure_reduced()
            import scipy.linalg as sla
            self._ext_lu = sla.lu_factor(ext.reduced_operator())
        elif options.reduced_exterior:
            ext.ensure_reduced()
            if options.preconditioned:
                self._mass_w = spla.factorized(ext.ops.M_WW.tocsc())
            else:
                self._mass_w = None
        else:
            if options.preconditioned:
                self._mass_w = spla.factorized(ext.ops.M_WW.tocsc())
                self._mass_l = spla.factorized(ext.ops.M_LL.tocsc())
            else:
                self._mass_w = self._mass_l = None

    def solve_interior(self, trace_data: np.ndarray, with_load: bool) -> np.ndarray:
        rhs = -(self._A_ut @ trace_data)
        if with_load and self.system.interior.load is not None:
            rhs = rhs + self.system.interior.load
        if self.options.mode == "direct":
            return self._interior_lu(rhs)
        cfg = SolverConfig(tolerance=self.options.tolerance,
                           max_iterations=self.options.max_iterations)
        M = (lambda r: r / self._diag) if self.options.preconditioned else None
        u, trace = cg(self._A_uu, rhs, cfg, preconditioner=M)
        self.max_interior = max(self.max_interior, trace.n_iterations)
        return u

    def solve_exterior(self, trace_data: np.ndarray):
        ext = self.system.exterior
        if self.options.mode == "direct":
            import scipy.linalg as sla
            rhs = ext.reduced_rhs(trace_data)
            u_plus = sla.lu_solve(self._ext_lu, rhs)
            lam = ext.recover_flux(u_plus, trace_data)
            return u_plus, lam
        cfg = SolverConfig(tolerance=self.options.tolerance,
                           max_iterations=self.options.max_iterations)
        if self.options.reduced_exterior:
            S = ext.reduced_operator()
            rhs = ext.reduced_rhs(trace_data)
            M = self._mass_w if self._mass_w is not None else None
            u_plus, trace = cg(S, rhs, cfg, preconditioner=M)
            lam = ext.recover_flux(u_plus, trace_data)
        else:
            nw = ext.ops.w_space.n_dofs
            B_ww, B_wl = ext.B_ww(), ext.B_wl()
            B_lw, B_ll = ext.B_lw(), ext.B_ll()
            rhs = np.concatenate([-ext.B_wt() @ trace_data,
                                  -ext.B_lt() @ trace_data])

            def op(x):
                return np.concatenate([B_ww @ x[:nw] + B_wl @ x[nw:],
                                       B_lw @ x[:nw] + B_ll @ x[nw:]])

            M = None
            if self._mass_w is not None:
                mw, ml = self._mass_w, self._mass_l
                M = lambda r: np.concatenate([mw(r[:nw]), ml(r[nw:])])
            x, trace = gmres(op, rhs, cfg, preconditioner=M)
            u_plus, lam = x[:nw], x[nw:]
        self.max_exterior = max(self.max_exterior, trace.n_iterations)
        return u_plus, lam


@dataclass(eq=False)
class CoupledSystem:
    """Block operator of the full hybrid form.

    Unknown layout: interior field, exterior Dirichlet trace, flux density,
    interface trace.  The (interior, exterior) and (interior, flux) blocks
    are identically zero.
    """

    interior: InteriorBlocks
    exterior: ExteriorBlocks
    trace_space: TraceSpace
    tau: float
    _solvers: dict = field(default_factory=dict, repr=False)

    @property
    def n_interior(self) -> int:
        return self.interior.space.n_dofs

    @property
    def n_wspace(self) -> int:
        return self.exterior.ops.w_space.n_dofs

    @property
    def n_lambda(self) -> int:
        return self.exterior.ops.lambda_space.n_dofs

    @property
    def n_trace(self) -> int:
        return self.trace_space.n_dofs

    @property
    def offsets(self):
        n0 = self.n_interior
        n1 = n0 + self.n_wspace
        n2 = n1 + self.n_lambda
        return (0, n0, n1, n2, n2 + self.n_trace)

    def split(self, x: np.ndarray):
        o = self.offsets
        return x[o[0]:o[1]], x[o[1]:o[2]], x[o[2]:o[3]], x[o[3]:o[4]]

    def rhs_vector(self) -> np.ndarray:
        b = np.zeros(self.offsets[-1])
        if self.interior.load is not None:
            b[:self.n_interior] = self.interior.load
        return b

    def p_mm_total(self) -> sp.csr_matrix:
        return (self.interior.p_mm() + self.exterior.p_mm()).tocsr()

    def jacobi_step_matrix(self, sigma: float) -> sp.csr_matrix:
        return (self.p_mm_total() + sigma * self.exterior.p_mm()).tocsr()

    def trace_row_residual(self, u_minus, u_plus, lam, u_tilde) -> np.ndarray:
        """Residual of the trace-test row of the coupled form."""
        interior = self.interior
        ext = self.exterior
        r = interior.a_ut().T @ u_minus
        if ext.trace_coupling:
            r = r - self.tau * (ext.ops.P_WM.T @ u_plus)
            r = r - ext.ops.M_LM.T @ lam
        r = r + self.p_mm_total() @ u_tilde
        return r

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Blockwise action of the monolithic operator."""
        u, w, lam, ut = self.split(x)
        ext = self.exterior
        out = np.empty_like(x)
        o = self.offsets
        out[o[0]:o[1]] = self.interior.a_uu() @ u + self.interior.a_ut() @ ut
        out[o[1]:o[2]] = ext.B_ww() @ w + ext.B_wl() @ lam + ext.B_wt() @ ut
        out[o[2]:o[3]] = ext.B_lw() @ w + ext.B_ll() @ lam + ext.B_lt() @ ut
        out[o[3]:o[4]] = self.trace_row_residual(u, w, lam, ut)
        return out

    def monolithic_dense(self) -> np.ndarray:
        """Dense monolithic matrix; intended for coarse verification."""
        o = self.offsets
        A = np.zeros((o[-1], o[-1]))
        interior = self.interior
        ext = self.exterior
        A[o[0]:o[1], o[0]:o[1]] = interior.a_uu().toarray()
        A[o[0]:o[1], o[3]:o[4]] = interior.a_ut().toarray()
        A[o[1]:o[2], o[1]:o[2]] = ext.B_ww()
        A[o[1]:o[2], o[2]:o[3]] = ext.B_wl()
        A[o[1]:o[2], o[3]:o[4]] = ext.B_wt()
        A[o[2]:o[3], o[1]:o[2]] = ext.B_lw()
        A[o[2]:o[3], o[2]:o[3]] = ext.B_ll()
        A[o[2]:o[3], o[3]:o[4]] = ext.B_lt()
        A[o[3]:o[4], o[0]:o[1]] = interior.a_ut().T.toarray()
        if ext.trace_coupling:
            A[o[3]:o[4], o[1]:o[2]] = -self.tau * ext.ops.P_WM.T.toarray()
            A[o[3]:o[4], o[2]:o[3]] = -ext.ops.M_LM.T.toarray()
        A[o[3]:o[4], o[3]:o[4]] = self.p_mm_total().toarray()
        return A

    def residual_norm(self, bundle: "SolutionBundle") -> float:
        """Relative monolithic residual of a solution bundle."""
        x = np.concatenate([bundle.u_minus, bundle.u_plus, bundle.lam, bundle.u_tilde])
        b = self.rhs_vector()
        r = self.apply(x) - b
        scale = np.linalg.norm(b)
        if scale == 0:
            scale = max(np.linalg.norm(x), 1.0)
        return float(np.linalg.norm(r) / scale)

    # -- subdomain machinery used by the Schur and trace iterations ----------
    def solver_bundle(self, options: InnerOptions) -> _InnerSolvers:
        key = options
        if key not in self._solvers:
            self._solvers[key] = _InnerSolvers(self, options)
        return self._solvers[key]

    def subdomain_solves(self, u_tilde: np.ndarray, options: InnerOptions | None = None,
                         with_load: bool = True):
        options = options or InnerOptions()
        solvers = self.solver_bundle(options)
        u = solvers.solve_interior(u_tilde, with_load)
        w, lam = solvers.solve_exterior(u_tilde)
        stats = {"interior": solvers.max_interior, "exterior": solvers.max_exterior}
        return u, w, lam, stats

    def make_bundle(self, u_minus, u_plus, lam, u_tilde, outer_trace=None,
                    inner_stats=None, method="") -> SolutionBundle:
        stats = inner_stats or {}
        return SolutionBundle(u_minus=u_minus, u_plus=u_plus, lam=lam,
                              u_tilde=u_tilde, method=method,
                              outer_trace=outer_trace,
                              inner_iters_interior=stats.get("interior", 0),
                              inner_iters_exterior=stats.get("exterior", 0))


def assemble_coupled(interior: InteriorBlocks, exterior: ExteriorBlocks,
                     trace_space: TraceSpace, tau: float) -> CoupledSystem:
    """Wire the interior and exterior blocks through a shared trace space."""
    if interior.trace_space is not trace_space:
        raise SpaceError("interior blocks were assembled against a different trace space")
    if exterior.ops.m_space is not trace_space:
        raise SpaceError("exterior blocks were assembled against a different trace space")
    if interior.tau != tau or exterior.tau != tau:
        raise SpaceError("penalty mismatch between blocks and coupled system")
    return CoupledSystem(interior=interior, exterior=exterior,
                         trace_space=trace_space, tau=tau)


def schur_residual(system: CoupledSystem, u_tilde: np.ndarray,
                   options: InnerOptions | None = None) -> np.ndarray:
    """Trace-row residual after exact subdomain solves at ``u_tilde``."""
    u, w, lam, _ = system.subdomain_solves(u_tilde, options, with_load=True)
    return system.trace_row_residual(u, w, lam, u_tilde)


class SchurOperator:
    """Matrix-free Schur complement on the interface trace."""

    def __init__(self, system: CoupledSystem, options: InnerOptions):
        self.system = system
        self.options = options
        self.solvers = system.solver_bundle(options)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        u = self.solvers.solve_interior(v, with_load=False)
        w, lam = self.solvers.solve_exterior(v)
        return self.system.trace_row_residual(u, w, lam, v)

    def rhs(self) -> np.ndarray:
        zero = np.zeros(self.system.n_trace)
        u = self.solvers.solve_interior(zero, with_load=True)
        r = self.system.interior.a_ut().T @ u
        return -r


def solve_coupled(system: CoupledSystem, method: str = "schur-cg",
                  config: SolverConfig | None = None,
                  inner: InnerOptions | None = None) -> SolutionBundle:
    """Solve the coupled system.

    ``schur-cg`` iterates on the trace with the symmetric reduced exterior
    block, ``schur-gmres`` on the unreduced one, ``monolithic-direct``
    factorises the dense monolithic matrix for verification.
    """
    t0 = time.perf_counter()
    if config is None:
        config = SolverConfig(tolerance=1e-8, max_iterations=400)

    if method == "monolithic-direct":
        A = system.monolithic_dense()
        x = dense_solve(A, system.rhs_vector())
        u, w, lam, ut = system.split(x)
        bundle = system.make_bundle(u, w, lam, ut, method=method)
        bundle.wall_time = time.perf_counter() - t0
        return bundle

    if method == "jacobi":
        from .solvers import relaxed_jacobi
        sigma = getattr(config, "sigma", 2.0)
        bundle, _ = relaxed_jacobi(system, sigma, config, inner_config=inner)
        bundle.wall_time = time.perf_counter() - t0
        return bundle

    if method not in ("schur-cg", "schur-gmres"):
        raise ValueError(f"unknown method {method!r}")

    if inner is None:
        inner = InnerOptions(tolerance=min(1e-10, config.tolerance / 100),
                             reduced_exterior=(method == "schur-cg"))
    op = SchurOperator(system, inner)
    g = op.rhs()
    P = system.p_mm_total()
    lu = spla.factorized(P.tocsc())
    M = lambda r: lu(r)
    if method == "schur-cg":
        ut, outer = cg(op.matvec, g, config, preconditioner=M)
    else:
        ut, outer = gmres(op.matvec, g, config, preconditioner=M)

    u, w, lam, stats = system.subdomain_solves(ut, inner, with_load=True)
    bundle = system.make_bundle(u, w, lam, ut, outer_trace=outer,
                                inner_stats=stats, method=method)
    bundle.wall_time = time.perf_counter() - t0
    return bundle


# ---------------------------------------------------------------------------
# norms and errors


def surface_values(space: TraceSpace, coeffs: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Values of a surface field at rule points, (ntri, nq)."""
    S = space.shape_values(uv)
    return np.einsum("qa,ea->eq", S, coeffs[space.dof_map])


def volume_trace_values(space, coeffs: np.ndarray, quad_degree: int = 6):
    """Trace and normal derivative of a volume field on its boundary.

    Returns ``(uv, w, values, normal_derivatives)`` with per-facet arrays.
    """
    surface, uv, w, X, bary, grads = _facet_tables(space, quad_degree)
    ne = surface.n_triangles
    Nv = np.stack([tet_basis(space.degree, bary[e]) for e in range(ne)])
    dN = np.stack([tet_basis_dl(space.degree, bary[e]) for e in range(ne)])
    B = np.einsum("eqik,ekx->eqix", dN, grads)
    dn = np.einsum("eqix,ex->eqi", B, surface.normals)
    local = coeffs[space.dof_map[surface.owner_tet]]
    vals = np.einsum("eqi,ei->eq", Nv, local)
    dvals = np.einsum("eqi,ei->eq", dn, local)
    return uv, w, vals, dvals


def _surface_l2(surface, w, vals, weight=None) -> float:
    contrib = surface.areas[:, None] * w[None, :] * vals ** 2
    if weight is not None:
        contrib = contrib * weight[:, None]
    return float(np.sqrt(max(contrib.sum(), 0.0)))


def _eval_callable(fn, X):
    return np.array([[fn(X[e, q]) for q in range(X.shape[1])]
                     for e in range(X.shape[0])])


def error_norms(system: CoupledSystem, bundle: SolutionBundle, case=None,
                quad_degree: int = 6) -> dict:
    """Error and diagnostic norms of a solution bundle.

    Fractional interface norms are reported through their operator-induced
    surrogates; with no exact solution available only the interface
    mismatch and the diagnostic terms are populated.
    """
    from .fem import volume_l2_error

    ext = system.exterior
    w_space = ext.ops.w_space
    l_space = ext.ops.lambda_space
    m_space = system.trace_space
    surface = w_space.surface

    uv, w = quad.tri_rule(quad_degree)
    up_vals = surface_values(w_space, bundle.u_plus, uv)
    lam_vals = surface_values(l_space, bundle.lam, uv)
    ut_vals = surface_values(m_space, bundle.u_tilde, uv)
    uvt, wt, tr_vals, dn_vals = volume_trace_values(
        system.interior.space, bundle.u_minus, quad_degree)

    bary = quad.tri_bary(uv)
    tv = surface.vertices[surface.triangles]
    X = np.einsum("qk,ekx->eqx", bary, tv)

    out = {}
    denom = _surface_l2(surface, w, up_vals)
    out["mismatch"] = _surface_l2(surface, wt, tr_vals - up_vals) / denom if denom > 0 else np.nan
    out["penalty_interior"] = _surface_l2(surface, wt, tr_vals - ut_vals,
                                          weight=system.tau / surface.diameters)
    out["penalty_exterior"] = _surface_l2(surface, w, up_vals - ut_vals,
                                          weight=system.tau / surface.diameters)
    out["flux_weighted"] = _surface_l2(surface, wt, dn_vals,
                                       weight=surface.diameters)
    out["lambda_weighted"] = _surface_l2(surface, w, lam_vals,
                                         weight=surface.diameters)

    exact_u = getattr(case, "exact_u_minus", None) if case is not None else None
    exact_up = getattr(case, "exact_u_plus", None) if case is not None else None
    exact_lam = getattr(case, "exact_lambda", None) if case is not None else None

    if exact_u is not None:
        out["l2_interior"] = volume_l2_error(system.interior.space,
                                             bundle.u_minus, exact_u)
    else:
        out["l2_interior"] = np.nan
    if exact_up is not None:
        ue = _eval_callable(exact_up, X)
        out["l2_uplus"] = _surface_l2(surface, w, up_vals - ue)
        err_w = bundle.u_plus - w_space.interpolate(exact_up)
        wq = float(err_w @ (ext.ops.W_hyp @ err_w))
        mean = float((ext.ops.M_WW @ err_w).sum()) / surface.total_area
        out["w_surrogate"] = np.sqrt(max(wq, 0.0)) + abs(mean)
    else:
        out["l2_uplus"] = np.nan
        out["w_surrogate"] = np.nan
    if exact_lam is not None:
        le = _eval_callable(exact_lam, X)
        out["l2_lambda"] = _surface_l2(surface, w, lam_vals - le)
        err_l = bundle.lam - l_space.interpolate(exact_lam)
        out["v_surrogate"] = np.sqrt(max(float(err_l @ (ext.ops.V @ err_l)), 0.0))
    else:
        out["l2_lambda"] = np.nan
        out["v_surrogate"] = np.nan
    return out
