"""Surface spaces and dense Galerkin boundary operators.

Assembles the single layer, double layer, adjoint double layer and
hypersingular operators on a closed triangulated surface, plus the
exterior block system coupling the Dirichlet unknown, the flux density
and the interface trace variable.  Touching triangle pairs are handled
by regularising coordinate transformations, near pairs by an escalated
tensor rule and the rest by a fixed symmetric rule.

Sign conventions: kernels are ``G(x, y) = 1 / (4 pi |x - y|)`` and
``dG/dn_y = n_y . (x - y) / (4 pi |x - y|^3)`` with outward normals, so
the double layer of the constant equals -1/2 on a closed surface and the
interior identity ``(1/2 Id - K) 1 = 1`` holds discretely up to mesh and
quadrature error; the exterior system uses exactly that convention.
"""

from __future__ import annotations

import warnings
import weakref
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import kernels
from . import quadrature as quad
from .errors import QuadratureConfigError, SingularEvaluationError, SpaceError
from .mesh import SurfaceMesh

__all__ = [
    "TraceSpace",
    "build_trace_space",
    "QuadratureConfig",
    "greens_kernel",
    "assemble_single_layer",
    "assemble_double_layer",
    "assemble_adjoint_double_layer",
    "assemble_hypersingular",
    "surface_mass",
    "BoundaryOperators",
    "build_boundary_operators",
    "ExteriorBlocks",
    "assemble_exterior",
    "symmetric_reduce",
    "solve_exterior_dirichlet",
    "evaluate_exterior_potential",
    "export_dense",
]

KERNEL_SL = 0
KERNEL_DL = 1


def greens_kernel(x, y) -> float:
    """Free-space Laplace kernel 1 / (4 pi |x - y|)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = float(np.linalg.norm(x - y))
    if r == 0.0:
        raise SingularEvaluationError("kernel evaluated at x == y")
    return 1.0 / (4.0 * np.pi * r)


@dataclass(frozen=True)
class QuadratureConfig:
    """Knobs for the Galerkin pair quadrature.

    ``base_degree`` drives well separated pairs, ``near_points`` the
    collapsed rule for close but non-touching pairs (within
    ``near_threshold`` times the larger diameter) and ``singular_points``
    the per-direction order of the regularised rules.
    """

    base_degree: int = 5
    near_points: int = 6
    near_threshold: float = 2.5
    singular_points: int = 4
    potential_points: int = 6
    min_eval_distance: float = 1.0
    on_close_point: str = "warn"

    def __post_init__(self):
        if self.base_degree < 1:
            raise QuadratureConfigError("base_degree must be >= 1")
        if self.near_points < 2:
            raise QuadratureConfigError("near_points must be >= 2")
        if self.singular_points < 2:
            raise QuadratureConfigError("singular_points must be >= 2")
        if self.on_close_point not in ("warn", "raise"):
            raise QuadratureConfigError("on_close_point must be 'warn' or 'raise'")


DEFAULT_QUADRATURE = QuadratureConfig()


@dataclass(frozen=True, eq=False)
class TraceSpace:
    """Scalar polynomial space on a surface triangulation."""

    surface: SurfaceMesh
    degree: int
    continuity: str
    dof_map: np.ndarray

    @property
    def n_dofs(self) -> int:
        return int(self.dof_map.max()) + 1

    @property
    def n_local(self) -> int:
        return self.dof_map.shape[1]

    def shape_values(self, uv: np.ndarray) -> np.ndarray:
        """Local shape values at triangle coordinates, (nq, n_local)."""
        if self.degree == 0:
            return np.ones((len(uv), 1))
        return quad.tri_bary(uv)

    def interpolate(self, fn) -> np.ndarray:
        """Nodal interpolation (midpoint sampling for piecewise constants)."""
        surf = self.surface
        if self.degree == 0:
            return np.array([fn(c) for c in surf.centroids])
        vals = np.array([fn(p) for p in surf.vertices])
        if self.continuity == "continuous":
            return vals
        out = np.empty(self.n_dofs)
        out[self.dof_map.ravel()] = vals[surf.triangles.ravel()]
        return out


def build_trace_space(surface: SurfaceMesh, degree: int, continuity: str) -> TraceSpace:
    if continuity == "continuous":
        if degree != 1:
            raise SpaceError("continuous surface spaces support degree 1 only")
        return TraceSpace(surface, 1, continuity, surface.triangles.copy())
    if continuity == "discontinuous":
        nt = surface.n_triangles
        if degree == 0:
            return TraceSpace(surface, 0, continuity,
                              np.arange(nt, dtype=np.int64).reshape(nt, 1))
        if degree == 1:
            return TraceSpace(surface, 1, continuity,
                              np.arange(3 * nt, dtype=np.int64).reshape(nt, 3))
        raise SpaceError("discontinuous surface spaces support degrees 0 and 1")
    raise SpaceError(f"unknown continuity {continuity!r}")


# ---------------------------------------------------------------------------
# pair classification and quadrature tables, cached per surface

_classify_cache: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _classify(surface: SurfaceMesh, near_threshold: float):
    key = round(near_threshold, 12)
    cache = _classify_cache.setdefault(surface, {})
    if key in cache:
        return cache[key]

    tris = surface.triangles
    nt = surface.n_triangles
    vert_tris: dict = {}
    for t in range(nt):
        for v in tris[t]:
            vert_tris.setdefault(int(v), []).append(t)

    adjacent: dict = {}
    for t in range(nt):
        for v in tris[t]:
            for u in vert_tris[int(v)]:
                if u == t:
                    continue
                shared = adjacent.get((t, u))
                if shared is None:
                    adjacent[(t, u)] = [int(v)]
                elif int(v) not in shared:
                    shared.append(int(v))

    edge_pairs, vertex_pairs = [], []
    for (a, b), shared in adjacent.items():
        if len(shared) == 2:
            edge_pairs.append((a, b, sorted(shared)))
        elif len(shared) == 1:
            vertex_pairs.append((a, b, shared[0]))
        else:
            raise SpaceError("triangles sharing three vertices are duplicates")

    skip = np.zeros((nt, nt), dtype=np.uint8)
    skip[np.arange(nt), np.arange(nt)] = 1
    for a, b, _ in edge_pairs:
        skip[a, b] = 1
    for a, b, _ in vertex_pairs:
        skip[a, b] = 1

    # close but non-touching pairs, escalated quadrature
    centroids = surface.centroids
    dmax = float(surface.diameters.max())
    tree = cKDTree(centroids)
    cand = tree.query_pairs(near_threshold * dmax + dmax, output_type="ndarray")
    near = []
    for a, b in cand:
        if skip[a, b]:
            continue
        lim = near_threshold * max(surface.diameters[a], surface.diameters[b])
        if np.linalg.norm(centroids[a] - centroids[b]) <= lim:
            near.append((a, b))
            near.append((b, a))
            skip[a, b] = 1
            skip[b, a] = 1
    near = np.array(sorted(near), dtype=np.int64).reshape(-1, 2)

    result = (edge_pairs, vertex_pairs, near, skip)
    cache[key] = result
    return result


def _perm_for(tri, shared):
    """Local vertex order putting the shared vertices first."""
    tri = [int(v) for v in tri]
    lead = [tri.index(s) for s in shared]
    rest = [i for i in range(3) if i not in lead]
    return lead + rest


def _rule_tables(surface: SurfaceMesh, uv: np.ndarray, wts: np.ndarray, space: TraceSpace):
    tv = surface.vertices[surface.triangles]
    bary = quad.tri_bary(uv)
    X = np.einsum("qk,ekx->eqx", bary, tv)
    W = surface.areas[:, None] * wts[None, :]
    S = space.shape_values(uv)
    return np.ascontiguousarray(X), np.ascontiguousarray(W), np.ascontiguousarray(S)


def _check_same_surface(a: TraceSpace, b: TraceSpace):
    if a.surface is not b.surface:
        raise SpaceError("test and trial spaces live on different surfaces")


def _assemble_kernel_matrix(trial: TraceSpace, test: TraceSpace, kernel_id: int,
                            qcfg: QuadratureConfig, include_coincident: bool = True):
    """Dense Galerkin matrix of a singular kernel, (n_test, n_trial)."""
    _check_same_surface(trial, test)
    surface = test.surface
    nt = surface.n_triangles
    edge_pairs, vertex_pairs, near, skip = _classify(surface, qcfg.near_threshold)

    disc_test = test.continuity == "discontinuous"
    if disc_test:
        rowmap = test.dof_map
        n_rows = test.n_dofs
    else:
        # give each (triangle, local dof) its own private row, fold afterwards
        rowmap = np.arange(nt * test.n_local, dtype=np.int64).reshape(nt, test.n_local)
        n_rows = nt * test.n_local
    out = np.zeros((n_rows, trial.n_dofs))
    colmap = trial.dof_map
    normals = surface.normals

    uv, w = quad.tri_rule(qcfg.base_degree)
    XA, WA, SA = _rule_tables(surface, uv, w, test)
    XB, WB, SB = _rule_tables(surface, uv, w, trial)
    kernels.galerkin_fill(out, XA, WA, SA, rowmap, XB, WB, SB, colmap,
                          normals, kernel_id, skip)

    if len(near):
        uvn, wn = quad.tri_rule_collapsed(qcfg.near_points)
        XAn, WAn, SAn = _rule_tables(surface, uvn, wn, test)
        XBn, WBn, SBn = _rule_tables(surface, uvn, wn, trial)
        kernels.pair_fill(out, near, XAn, WAn, SAn, rowmap, XBn, WBn, SBn,
                          colmap, normals, kernel_id)

    tv = surface.vertices[surface.triangles]
    areas4 = 4.0 * surface.areas

    def run_case(case, pair_data):
        if not pair_data:
            return
        rule = quad.singular_rule(case, qcfg.singular_points)
        bx = quad.ss_bary(rule.x)
        by = quad.ss_bary(rule.y)
        sx = np.ones((len(rule.w), 1)) if test.degree == 0 else bx
        sy = np.ones((len(rule.w), 1)) if trial.degree == 0 else by
        vx = np.empty((len(pair_data), 3, 3))
        vy = np.empty_like(vx)
        rows = np.empty((len(pair_data), sx.shape[1]), dtype=np.int64)
        cols = np.empty((len(pair_data), sy.shape[1]), dtype=np.int64)
        ny = np.empty((len(pair_data), 3))
        scale = np.empty(len(pair_data))
        for p, (ea, eb, px, py) in enumerate(pair_data):
            vx[p] = tv[ea][px]
            vy[p] = tv[eb][py]
            rows[p] = rowmap[ea] if test.degree == 0 else rowmap[ea][px]
            cols[p] = colmap[eb] if trial.degree == 0 else colmap[eb][py]
            ny[p] = normals[eb]
            scale[p] = areas4[ea] * surface.areas[eb]
        kernels.singular_fill(out, vx, vy, rows, cols, ny, scale,
                              rule.x, rule.y, rule.w, sx, sy, kernel_id)

    ident = list(range(3))
    if include_coincident:
        run_case("coincident", [(e, e, ident, ident) for e in range(nt)])
    run_case("edge", [(a, b, _perm_for(surface.triangles[a], s),
                       _perm_for(surface.triangles[b], s))
                      for a, b, s in edge_pairs])
    run_case("vertex", [(a, b, _perm_for(surface.triangles[a], [s]),
                         _perm_for(surface.triangles[b], [s]))
                        for a, b, s in vertex_pairs])

    if not disc_test:
        folded = np.zeros((test.n_dofs, trial.n_dofs))
        np.add.at(folded, test.dof_map.ravel(),
                  out.reshape(nt * test.n_local, trial.n_dofs))
        out = folded
    return out


def assemble_single_layer(trial: TraceSpace, test: TraceSpace,
                          qcfg: QuadratureConfig = DEFAULT_QUADRATURE) -> np.ndarray:
    """Galerkin single layer matrix <V phi_j, psi_i>."""
    return _assemble_kernel_matrix(trial, test, KERNEL_SL, qcfg)


def assemble_double_layer(trial: TraceSpace, test: TraceSpace,
                          qcfg: QuadratureConfig = DEFAULT_QUADRATURE) -> np.ndarray:
    """Galerkin double layer matrix <K w_j, psi_i>.

    Coincident flat pairs vanish identically (the dipole kernel is
    orthogonal to the panel) and are skipped.
    """
    return _assemble_kernel_matrix(trial, test, KERNEL_DL, qcfg,
                                   include_coincident=False)


def assemble_adjoint_double_layer(trial: TraceSpace, test: TraceSpace,
                                  qcfg: QuadratureConfig = DEFAULT_QUADRATURE) -> np.ndarray:
    """Adjoint double layer as the transpose of the double layer."""
    return assemble_double_layer(trial=test, test=trial, qcfg=qcfg).T.copy()


def _surface_curls(surface: SurfaceMesh) -> np.ndarray:
    """Constant tangential curl of each P1 hat per triangle, (nt, 3, 3)."""
    tv = surface.vertices[surface.triangles]
    c = np.empty_like(tv)
    for a in range(3):
        c[:, a] = (tv[:, (a + 1) % 3] - tv[:, (a + 2) % 3]) / (2.0 * surface.areas[:, None])
    return c


def assemble_hypersingular(trial: TraceSpace, test: TraceSpace,
                           qcfg: QuadratureConfig = DEFAULT_QUADRATURE) -> np.ndarray:
    """Hypersingular matrix via the tangential-curl regularisation.

    <W w, v> is rewritten as the single layer pairing of the constant
    surface curls, so only weakly singular integrals are evaluated.
    """
    _check_same_surface(trial, test)
    if trial.continuity != "continuous" or test.continuity != "continuous":
        raise SpaceError("hypersingular operator needs continuous spaces")
    surface = test.surface
    nt = surface.n_triangles
    p0 = build_trace_space(surface, 0, "discontinuous")
    I0 = _assemble_kernel_matrix(p0, p0, KERNEL_SL, qcfg)

    curls = _surface_curls(surface)
    out = np.zeros((test.n_dofs, trial.n_dofs))
    chunk = max(1, 2_000_000 // max(nt, 1))
    tri = surface.triangles
    for s in range(0, nt, chunk):
        e = min(nt, s + chunk)
        blocks = np.einsum("eax,fbx->eafb", curls[s:e], curls) * \
            I0[s:e][:, None, :, None]
        rows = np.broadcast_to(tri[s:e][:, :, None, None], blocks.shape)
        cols = np.broadcast_to(tri[None, None, :, :], blocks.shape)
        np.add.at(out, (rows, cols), blocks)
    return out


def surface_mass(test: TraceSpace, trial: TraceSpace, weight=None,
                 quad_degree: int = 4) -> sp.csr_matrix:
    """Sparse surface mass matrix <phi_j, psi_i>, optionally 1/h-weighted.

    ``weight`` may be ``None``, "inv_h" or a per-triangle array.
    """
    _check_same_surface(test, trial)
    surface = test.surface
    uv, w = quad.tri_rule(quad_degree)
    Sa = test.shape_values(uv)
    Sb = trial.shape_values(uv)
    scale = surface.areas.copy()
    if isinstance(weight, str) and weight == "inv_h":
        scale /= surface.diameters
    elif weight is not None:
        scale *= np.asarray(weight)
    loc = np.einsum("q,qa,qb->ab", w, Sa, Sb)[None, :, :] * scale[:, None, None]
    na, nb = Sa.shape[1], Sb.shape[1]
    rows = np.repeat(test.dof_map, nb, axis=1).ravel()
    cols = np.tile(trial.dof_map, (1, na)).ravel()
    return sp.coo_matrix((loc.ravel(), (rows, cols)),
                         shape=(test.n_dofs, trial.n_dofs)).tocsr()


@dataclass(eq=False)
class BoundaryOperators:
    """Dense boundary operators plus the mass pairings between spaces."""

    w_space: TraceSpace
    lambda_space: TraceSpace
    m_space: TraceSpace
    V: np.ndarray
    K: np.ndarray
    W_hyp: np.ndarray
    M_LW: sp.csr_matrix
    M_LM: sp.csr_matrix
    M_LL: sp.csr_matrix
    M_WW: sp.csr_matrix
    M_MM: sp.csr_matrix
    P_WW: sp.csr_matrix
    P_WM: sp.csr_matrix
    P_MM: sp.csr_matrix

    @property
    def Kp(self) -> np.ndarray:
        """Adjoint double layer; exactly the transpose by construction."""
        return self.K.T


def build_boundary_operators(w_space: TraceSpace, lambda_space: TraceSpace,
                             m_space: TraceSpace,
                             qcfg: QuadratureConfig = DEFAULT_QUADRATURE) -> BoundaryOperators:
    _check_same_surface(w_space, lambda_space)
    _check_same_surface(w_space, m_space)
    V = assemble_single_layer(lambda_space, lambda_space, qcfg)
    K = assemble_double_layer(w_space, lambda_space, qcfg)
    W_hyp = assemble_hypersingular(w_space, w_space, qcfg)
    return BoundaryOperators(
        w_space, lambda_space, m_space, V, K, W_hyp,
        M_LW=surface_mass(lambda_space, w_space),
        M_LM=surface_mass(lambda_space, m_space),
        M_LL=surface_mass(lambda_space, lambda_space),
        M_WW=surface_mass(w_space, w_space),
        M_MM=surface_mass(m_space, m_space),
        P_WW=surface_mass(w_space, w_space, weight="inv_h"),
        P_WM=surface_mass(w_space, m_space, weight="inv_h"),
        P_MM=surface_mass(m_space, m_space, weight="inv_h"),
    )


@dataclass(eq=False)
class ExteriorBlocks:
    """The exterior block system over (dirichlet trace, flux, interface trace).

    The unreduced system is nonsymmetric; ``symmetric_reduce`` eliminates
    the flux through the single layer factorisation and caches the
    symmetric reduced operator.
    """

    ops: BoundaryOperators
    tau: float
    trace_coupling: bool = True
    _chol_V: object = field(default=None, repr=False)
    _T: np.ndarray = field(default=None, repr=False)       # V^-1 G
    _R: np.ndarray = field(default=None, repr=False)       # V^-1 M_LM
    _S_ext: np.ndarray = field(default=None, repr=False)

    @property
    def G(self) -> np.ndarray:
        """Coupling matrix K + M/2 appearing in the flux equation."""
        return self.ops.K + 0.5 * self.ops.M_LW.toarray()

    def B_ww(self) -> np.ndarray:
        return self.ops.W_hyp + self.tau * self.ops.P_WW.toarray()

    def B_wl(self) -> np.ndarray:
        return self.G.T

    def B_lw(self) -> np.ndarray:
        return -self.G

    def B_ll(self) -> np.ndarray:
        return self.ops.V

    def B_wt(self) -> np.ndarray:
        if not self.trace_coupling:
            return np.zeros((self.ops.w_space.n_dofs, self.ops.m_space.n_dofs))
        return -self.tau * self.ops.P_WM.toarray()

    def B_lt(self) -> np.ndarray:
        if not self.trace_coupling:
            return np.zeros((self.ops.lambda_space.n_dofs, self.ops.m_space.n_dofs))
        return self.ops.M_LM.toarray()

    # trace-test row of the exterior form
    def B_tw(self) -> np.ndarray:
        if not self.trace_coupling:
            return np.zeros((self.ops.m_space.n_dofs, self.ops.w_space.n_dofs))
        return -self.tau * self.ops.P_WM.toarray().T

    def B_tl(self) -> np.ndarray:
        if not self.trace_coupling:
            return np.zeros((self.ops.m_space.n_dofs, self.ops.lambda_space.n_dofs))
        return -self.ops.M_LM.toarray().T

    def p_mm(self) -> sp.csr_matrix:
        return (self.tau * self.ops.P_MM).tocsr()

    # -- symmetric reduction -------------------------------------------------
    def ensure_reduced(self):
        if self._S_ext is not None:
            return
        try:
            c = sla.cho_factor(self.ops.V, lower=False)
        except sla.LinAlgError as exc:
            raise SpaceError(
                "single layer matrix is not positive definite; "
                "quadrature or mesh is broken") from exc
        G = self.G
        T = sla.cho_solve(c, G)
        R = sla.cho_solve(c, self.ops.M_LM.toarray())
        S = self.B_ww() + G.T @ T
        self._chol_V = c
        self._T = T
        self._R = R
        self._S_ext = 0.5 * (S + S.T)

    def reduced_operator(self) -> np.ndarray:
        """Symmetric positive definite operator for the Dirichlet unknown."""
        self.ensure_reduced()
        return self._S_ext

    def reduced_rhs(self, trace_data: np.ndarray) -> np.ndarray:
        self.ensure_reduced()
        return -self.B_wt() @ trace_data + self.G.T @ (self._R @ trace_data)

    def recover_flux(self, u_plus: np.ndarray, trace_data: np.ndarray) -> np.ndarray:
        """Flux from the eliminated equation V lam = G u - M ut."""
        self.ensure_reduced()
        return self._T @ u_plus - self._R @ trace_data

    def reduced_dense(self) -> np.ndarray:
        """Full symmetric reduced form over (dirichlet, interface) unknowns."""
        self.ensure_reduced()
        nw = self.ops.w_space.n_dofs
        nm = self.ops.m_space.n_dofs
        out = np.zeros((nw + nm, nw + nm))
        out[:nw, :nw] = self._S_ext
        wt = self.B_wt() - self.G.T @ self._R
        out[:nw, nw:] = wt
        out[nw:, :nw] = wt.T
        out[nw:, nw:] = self.p_mm().toarray() + \
            self.ops.M_LM.toarray().T @ self._R
        return out

    def solve_lambda(self, rhs: np.ndarray) -> np.ndarray:
        self.ensure_reduced()
        return sla.cho_solve(self._chol_V, rhs)


def assemble_exterior(ops: BoundaryOperators, tau: float,
                      trace_coupling: bool = True) -> ExteriorBlocks:
    """Block system of the exterior form with local-diameter penalty weights."""
    if tau < 0:
        raise ValueError("penalty must be nonnegative")
    return ExteriorBlocks(ops=ops, tau=tau, trace_coupling=trace_coupling)


def symmetric_reduce(blocks: ExteriorBlocks) -> ExteriorBlocks:
    """Eliminate the flux unknown; the reduced form is symmetric."""
    blocks.ensure_reduced()
    return blocks


def solve_exterior_dirichlet(blocks: ExteriorBlocks, trace_data: np.ndarray,
                             config=None, reduced: bool = True,
                             preconditioner: str | None = "mass"):
    """Solve the exterior problem with the interface trace held fixed.

    Returns ``(u_plus, lam, trace)``.  The reduced path runs CG on the
    symmetric operator; the unreduced path runs GMRES on the block system.
    """
    from .solvers import SolverConfig, cg, gmres

    if config is None:
        config = SolverConfig(tolerance=1e-10, max_iterations=2000)
    ops = blocks.ops
    nw = ops.w_space.n_dofs
    nl = ops.lambda_space.n_dofs

    if reduced:
        S = blocks.reduced_operator()
        rhs = blocks.reduced_rhs(trace_data)
        M = None
        if preconditioner == "mass":
            lu = sp.linalg.factorized(ops.M_WW.tocsc())
            M = lambda r: lu(r)
        u_plus, trace = cg(S, rhs, config, preconditioner=M)
        lam = blocks.recover_flux(u_plus, trace_data)
        return u_plus, lam, trace

    B_ww, B_wl = blocks.B_ww(), blocks.B_wl()
    B_lw, B_ll = blocks.B_lw(), blocks.B_ll()
    rhs = np.concatenate([-blocks.B_wt() @ trace_data,
                          -blocks.B_lt() @ trace_data])

    def op(x):
        u, lam = x[:nw], x[nw:]
        return np.concatenate([B_ww @ u + B_wl @ lam, B_lw @ u + B_ll @ lam])

    M = None
    if preconditioner == "mass":
        lu_w = sp.linalg.factorized(ops.M_WW.tocsc())
        lu_l = sp.linalg.factorized(ops.M_LL.tocsc())
        M = lambda r: np.concatenate([lu_w(r[:nw]), lu_l(r[nw:])])
    x, trace = gmres(op, rhs, config, preconditioner=M, size=nw + nl)
    return x[:nw], x[nw:], trace


def evaluate_exterior_potential(blocks: ExteriorBlocks, u_plus: np.ndarray,
                                lam: np.ndarray, points,
                                qcfg: QuadratureConfig = DEFAULT_QUADRATURE) -> np.ndarray:
    """Representation formula: double layer of the Dirichlet datum minus
    single layer of the flux, evaluated at exterior points."""
    ops = blocks.ops
    surface = ops.w_space.surface
    points = np.atleast_2d(np.asarray(points, dtype=float))

    d = np.linalg.norm(points[:, None, :] - surface.centroids[None, :, :], axis=2)
    margin = d - surface.diameters[None, :]
    closest = margin.min(axis=1)
    limit = qcfg.min_eval_distance * surface.diameters.max()
    if np.any(closest < limit):
        msg = "evaluation point closer than one local mesh size to the surface"
        if qcfg.on_close_point == "raise":
            raise ValueError(msg)
        warnings.warn(msg)

    uvp, wp = quad.tri_rule_collapsed(qcfg.potential_points)
    XB, WB, SB_w = _rule_tables(surface, uvp, wp, ops.w_space)
    _, _, SB_l = _rule_tables(surface, uvp, wp, ops.lambda_space)

    dl = kernels.potential_fill(points, XB, WB, SB_w, surface.normals, KERNEL_DL)
    sl = kernels.potential_fill(points, XB, WB, SB_l, surface.normals, KERNEL_SL)
    uw = u_plus[ops.w_space.dof_map]     # (nt, ns_w)
    ul = lam[ops.lambda_space.dof_map]   # (nt, ns_l)
    vals = np.einsum("pkb,kb->p", dl, uw) - np.einsum("pkb,kb->p", sl, ul)
    return vals


def export_dense(path, matrix: np.ndarray) -> None:
    """Write a dense operator in Matrix Market array format."""
    scipy.io.mmwrite(str(path), np.asarray(matrix))
