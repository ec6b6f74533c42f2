"""Continuous Lagrange spaces on tet meshes and the interior bilinear form.

Covers the volume stiffness/reaction terms and the boundary terms that
couple the volume field to the interface trace variable: consistency,
symmetry and penalty contributions with a local ``tau / h_E`` weight.
Assembled operators are immutable and safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import quadrature as quad
from .errors import InvalidCoefficientError, SpaceError
from .mesh import SurfaceMesh, TetMesh, extract_boundary

__all__ = [
    "VolumeSpace",
    "InteriorBlocks",
    "build_volume_space",
    "assemble_interior",
    "assemble_nitsche",
    "assemble_load",
    "combine_interior",
    "solve_interior_dirichlet",
    "interpolate",
    "volume_l2_error",
]

_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


@dataclass(frozen=True, eq=False)
class VolumeSpace:
    """Continuous P1/P2 Lagrange space on a tet mesh."""

    mesh: TetMesh
    degree: int
    dof_map: np.ndarray
    dof_coords: np.ndarray
    boundary_dofs: np.ndarray
    surface: SurfaceMesh

    @property
    def n_dofs(self) -> int:
        return len(self.dof_coords)

    @property
    def n_local(self) -> int:
        return self.dof_map.shape[1]


def build_volume_space(mesh: TetMesh, degree: int, surface: SurfaceMesh | None = None) -> VolumeSpace:
    """Global continuous DOF numbering for degree 1 or 2."""
    if degree not in (1, 2):
        raise SpaceError(f"volume degree {degree} not supported (use 1 or 2)")
    if surface is None:
        surface = extract_boundary(mesh)
    if degree == 1:
        dof_map = mesh.tets.copy()
        dof_coords = mesh.vertices.copy()
        boundary = surface.volume_vertex.copy()
        return VolumeSpace(mesh, 1, dof_map, dof_coords, np.sort(boundary), surface)

    # P2: vertices then unique edges
    edge_ids: dict = {}
    edge_list = []
    nverts = mesh.n_vertices
    dof_map = np.empty((mesh.n_tets, 10), dtype=np.int64)
    dof_map[:, :4] = mesh.tets
    for t, tet in enumerate(mesh.tets):
        for e, (a, b) in enumerate(_EDGES):
            key = (min(tet[a], tet[b]), max(tet[a], tet[b]))
            idx = edge_ids.get(key)
            if idx is None:
                idx = len(edge_list)
                edge_ids[key] = idx
                edge_list.append(key)
            dof_map[t, 4 + e] = nverts + idx
    edges = np.array(edge_list, dtype=np.int64)
    midpoints = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    dof_coords = np.vstack([mesh.vertices, midpoints])

    bverts = set(surface.volume_vertex.tolist())
    boundary = [v for v in surface.volume_vertex]
    for idx, (a, b) in enumerate(edge_list):
        if a in bverts and b in bverts:
            # an edge of a boundary facet, not merely one with both ends on it
            boundary.append(nverts + idx)
    boundary = np.array(sorted(set(boundary)), dtype=np.int64)
    return VolumeSpace(mesh, 2, dof_map, dof_coords, boundary, surface)


def tet_basis(degree: int, bary: np.ndarray) -> np.ndarray:
    """Basis values at barycentric points, shape (nq, n_local)."""
    if degree == 1:
        return bary
    lam = bary
    vals = [lam[:, i] * (2.0 * lam[:, i] - 1.0) for i in range(4)]
    vals += [4.0 * lam[:, a] * lam[:, b] for a, b in _EDGES]
    return np.column_stack(vals)


def tet_basis_dl(degree: int, bary: np.ndarray) -> np.ndarray:
    """Derivatives w.r.t. the four barycentric coordinates, (nq, n_local, 4)."""
    nq = len(bary)
    if degree == 1:
        out = np.zeros((nq, 4, 4))
        for i in range(4):
            out[:, i, i] = 1.0
        return out
    out = np.zeros((nq, 10, 4))
    for i in range(4):
        out[:, i, i] = 4.0 * bary[:, i] - 1.0
    for e, (a, b) in enumerate(_EDGES):
        out[:, 4 + e, a] = 4.0 * bary[:, b]
        out[:, 4 + e, b] = 4.0 * bary[:, a]
    return out


def _bary_gradients(mesh: TetMesh) -> np.ndarray:
    """Gradients of the four barycentric coordinates per tet, (nt, 4, 3)."""
    v = mesh.vertices[mesh.tets]
    J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0], v[:, 3] - v[:, 0]], axis=1)
    Jinv = np.linalg.inv(J)
    grads = np.empty((mesh.n_tets, 4, 3))
    grads[:, 1:] = np.transpose(Jinv, (0, 2, 1))
    grads[:, 0] = -grads[:, 1:].sum(axis=1)
    return grads


def _coo_to_csr(rows, cols, vals, shape):
    return sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()


@dataclass(eq=False)
class InteriorBlocks:
    """Assembled pieces of the interior form over (volume, trace) unknowns.

    Penalty matrices are stored with a plain ``1 / h_E`` weight so that the
    composed operators scale linearly in ``tau``.
    """

    space: VolumeSpace
    trace_space: object = None
    tau: float = 0.0
    consistency: bool = True
    stiffness_plus_mass: sp.spmatrix = None
    nitsche_consistency: sp.spmatrix = None   # <dn phi_j, phi_i> on the boundary
    penalty_vv: sp.spmatrix = None            # 1/h-weighted volume-trace mass
    flux_vm: sp.spmatrix = None               # <mu_m, dn phi_i>
    penalty_vm: sp.spmatrix = None
    penalty_mm: sp.spmatrix = None
    load: np.ndarray = None

    def a_uu(self) -> sp.spmatrix:
        A = self.stiffness_plus_mass.copy()
        if self.penalty_vv is not None:
            A = A + self.tau * self.penalty_vv
            if self.consistency:
                C = self.nitsche_consistency
                A = A - C - C.T
        return A.tocsr()

    def a_ut(self) -> sp.spmatrix:
        A = -self.tau * self.penalty_vm
        if self.consistency:
            A = A + self.flux_vm
        return A.tocsr()

    def p_mm(self) -> sp.spmatrix:
        return (self.tau * self.penalty_mm).tocsr()

    def export_matrix_market(self, directory) -> None:
        """Dump the assembled sparse blocks for debugging."""
        import pathlib

        d = pathlib.Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        named = {
            "stiffness_plus_mass": self.stiffness_plus_mass,
            "nitsche_consistency": self.nitsche_consistency,
            "penalty_vv": self.penalty_vv,
            "flux_vm": self.flux_vm,
        }
        for name, mat in named.items():
            if mat is not None:
                scipy.io.mmwrite(str(d / f"{name}.mtx"), sp.coo_matrix(mat))


def assemble_interior(space: VolumeSpace, epsilon, quad_degree: int | None = None) -> InteriorBlocks:
    """Volume stiffness plus reaction mass with coefficient ``epsilon``.

    ``epsilon`` may be a constant or a callable of position; negative
    samples are rejected.
    """
    mesh = space.mesh
    deg = quad_degree if quad_degree is not None else 2 * space.degree
    pts, wts = quad.tet_rule(deg)
    bary = quad.tet_bary(pts)
    N = tet_basis(space.degree, bary)
    dN = tet_basis_dl(space.degree, bary)
    grads = _bary_gradients(mesh)
    vols = mesh.tet_volumes()
    B = np.einsum("qik,ekx->eqix", dN, grads)

    v = mesh.vertices[mesh.tets]
    X = np.einsum("qk,ekx->eqx", bary, v)
    if callable(epsilon):
        eps = np.array([[epsilon(X[e, q]) for q in range(X.shape[1])]
                        for e in range(X.shape[0])])
    else:
        eps = np.full(X.shape[:2], float(epsilon))
    if np.any(eps < 0):
        raise InvalidCoefficientError("reaction coefficient sampled negative")

    K_loc = np.einsum("q,eqix,eqjx->eij", wts, B, B) * vols[:, None, None]
    M_loc = np.einsum("q,eq,qi,qj->eij", wts, eps, N, N) * vols[:, None, None]
    loc = K_loc + M_loc

    nl = space.n_local
    rows = np.repeat(space.dof_map, nl, axis=1).ravel()
    cols = np.tile(space.dof_map, (1, nl)).ravel()
    A = _coo_to_csr(rows, cols, loc.ravel(), (space.n_dofs, space.n_dofs))
    return InteriorBlocks(space=space, stiffness_plus_mass=A)


def assemble_load(space: VolumeSpace, f, quad_degree: int | None = None) -> np.ndarray:
    """Load vector for a source supported in the interior domain."""
    mesh = space.mesh
    deg = quad_degree if quad_degree is not None else 2 * space.degree + 2
    pts, wts = quad.tet_rule(deg)
    bary = quad.tet_bary(pts)
    N = tet_basis(space.degree, bary)
    vols = mesh.tet_volumes()
    v = mesh.vertices[mesh.tets]
    X = np.einsum("qk,ekx->eqx", bary, v)
    if callable(f):
        fv = np.array([[f(X[e, q]) for q in range(X.shape[1])] for e in range(X.shape[0])])
    else:
        fv = np.full(X.shape[:2], float(f))
    loc = np.einsum("q,eq,qi->ei", wts, fv, N) * vols[:, None]
    F = np.zeros(space.n_dofs)
    np.add.at(F, space.dof_map.ravel(), loc.ravel())
    return F


def _facet_tables(space: VolumeSpace, quad_degree: int):
    """Per-facet quadrature data shared by the boundary assembly."""
    surface = space.surface
    uv, w = quad.tri_rule(quad_degree)
    bary2 = quad.tri_bary(uv)
    tv = surface.vertices[surface.triangles]
    X = np.einsum("qk,ekx->eqx", bary2, tv)

    mesh = space.mesh
    owners = surface.owner_tet
    vt = mesh.vertices[mesh.tets[owners]]
    J = np.stack([vt[:, 1] - vt[:, 0], vt[:, 2] - vt[:, 0], vt[:, 3] - vt[:, 0]], axis=1)
    Jinv = np.linalg.inv(J)
    rel = X - vt[:, 0][:, None, :]
    lam123 = np.einsum("exy,eqy->eqx", np.transpose(Jinv, (0, 2, 1)), rel)
    lam0 = 1.0 - lam123.sum(axis=2)
    bary = np.concatenate([lam0[:, :, None], lam123], axis=2)  # (ne, nq, 4)

    grads = _bary_gradients(mesh)[owners]
    return surface, uv, w, X, bary, grads


def assemble_nitsche(space: VolumeSpace, trace_space, tau: float,
                     consistency: bool = True,
                     quad_degree: int | None = None) -> InteriorBlocks:
    """Boundary terms coupling the volume field to the trace variable.

    The penalty weight uses the local facet diameter in place of the
    global mesh size.
    """
    from .bem import TraceSpace  # local import avoids a cycle

    if not isinstance(trace_space, TraceSpace):
        raise SpaceError("trace_space must be a TraceSpace")
    if trace_space.surface is not space.surface:
        if (trace_space.surface.n_triangles != space.surface.n_triangles or
                not np.array_equal(trace_space.surface.triangles, space.surface.triangles)):
            raise SpaceError("trace space does not live on the volume boundary mesh")
    if tau < 0:
        raise ValueError("penalty must be nonnegative")

    m_deg = max(trace_space.degree, 0)
    deg = quad_degree if quad_degree is not None else 2 * max(space.degree, m_deg) + 1
    surface, uv, w, X, bary, grads = _facet_tables(space, deg)

    nq = len(w)
    ne = surface.n_triangles
    Nv = np.stack([tet_basis(space.degree, bary[e]) for e in range(ne)])  # (ne,nq,nl)
    dN = np.stack([tet_basis_dl(space.degree, bary[e]) for e in range(ne)])
    B = np.einsum("eqik,ekx->eqix", dN, grads)
    dn = np.einsum("eqix,ex->eqi", B, surface.normals)

    Sm = trace_space.shape_values(uv)  # (nq, nm)
    area_w = surface.areas[:, None] * w[None, :]
    pen_w = area_w / surface.diameters[:, None]

    C_loc = np.einsum("eq,eqi,eqj->eij", area_w, Nv, dn)
    Pvv_loc = np.einsum("eq,eqi,eqj->eij", pen_w, Nv, Nv)
    D_loc = np.einsum("eq,eqi,qm->eim", area_w, dn, Sm)
    Pvm_loc = np.einsum("eq,eqi,qm->eim", pen_w, Nv, Sm)
    Pmm_loc = np.einsum("eq,qm,qn->emn", pen_w, Sm, Sm)

    vmap = space.dof_map[surface.owner_tet]  # (ne, nl)
    nl = space.n_local
    nm = trace_space.dof_map.shape[1]
    nV, nM = space.n_dofs, trace_space.n_dofs

    rows = np.repeat(vmap, nl, axis=1).ravel()
    cols = np.tile(vmap, (1, nl)).ravel()
    C = _coo_to_csr(rows, cols, C_loc.ravel(), (nV, nV))
    Pvv = _coo_to_csr(rows, cols, Pvv_loc.ravel(), (nV, nV))

    rows = np.repeat(vmap, nm, axis=1).ravel()
    cols = np.tile(trace_space.dof_map, (1, nl)).ravel()
    D = _coo_to_csr(rows, cols, D_loc.ravel(), (nV, nM))
    Pvm = _coo_to_csr(rows, cols, Pvm_loc.ravel(), (nV, nM))

    rows = np.repeat(trace_space.dof_map, nm, axis=1).ravel()
    cols = np.tile(trace_space.dof_map, (1, nm)).ravel()
    Pmm = _coo_to_csr(rows, cols, Pmm_loc.ravel(), (nM, nM))

    return InteriorBlocks(space=space, trace_space=trace_space, tau=tau,
                          consistency=consistency, nitsche_consistency=C,
                          penalty_vv=Pvv, flux_vm=D, penalty_vm=Pvm,
                          penalty_mm=Pmm)


def combine_interior(volume: InteriorBlocks, boundary: InteriorBlocks,
                     load: np.ndarray | None = None) -> InteriorBlocks:
    """Merge volume and boundary assemblies into one operator bundle."""
    if volume.space is not boundary.space:
        raise SpaceError("volume and boundary blocks built on different spaces")
    return replace(boundary, stiffness_plus_mass=volume.stiffness_plus_mass,
                   load=load)


def solve_interior_dirichlet(blocks: InteriorBlocks, trace_data: np.ndarray,
                             config=None, preconditioner: str = "jacobi"):
    """Solve the interior problem with the trace variable held fixed.

    Returns the volume coefficient vector and the iteration trace.
    """
    from .solvers import SolverConfig, cg

    if config is None:
        config = SolverConfig(tolerance=1e-10, max_iterations=2000)
    A = blocks.a_uu()
    rhs = -blocks.a_ut() @ trace_data
    if blocks.load is not None:
        rhs = rhs + blocks.load
    M = None
    if preconditioner == "jacobi":
        d = A.diagonal()
        M = lambda r: r / d
    return cg(A, rhs, config, preconditioner=M)


def interpolate(space: VolumeSpace, fn) -> np.ndarray:
    """Nodal interpolation of a callable."""
    return np.array([fn(p) for p in space.dof_coords])


def volume_l2_error(space: VolumeSpace, coeffs: np.ndarray, fn,
                    quad_degree: int | None = None) -> float:
    """L2 distance between a finite element field and a callable."""
    mesh = space.mesh
    deg = quad_degree if quad_degree is not None else 2 * space.degree + 2
    pts, wts = quad.tet_rule(deg)
    bary = quad.tet_bary(pts)
    N = tet_basis(space.degree, bary)
    vols = mesh.tet_volumes()
    v = mesh.vertices[mesh.tets]
    X = np.einsum("qk,ekx->eqx", bary, v)
    uh = np.einsum("qi,ei->eq", N, coeffs[space.dof_map])
    ue = np.array([[fn(X[e, q]) for q in range(X.shape[1])] for e in range(X.shape[0])])
    return float(np.sqrt(np.einsum("q,eq->", wts, (uh - ue) ** 2 * vols[:, None])))
