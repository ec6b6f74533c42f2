"""Tetrahedral volume meshes and their boundary surface triangulations.

Mesh objects are immutable after construction and safe to share between
threads; construction itself is single-threaded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GmshParseError, MeshError

__all__ = [
    "TetMesh",
    "SurfaceMesh",
    "generate_cube_mesh",
    "generate_ball_mesh",
    "import_gmsh",
    "export_gmsh",
    "extract_boundary",
    "mesh_size",
]

# local faces of a tet, ordered so the face normal points out of the tet
_TET_FACES = ((0, 2, 1), (0, 1, 3), (1, 2, 3), (2, 0, 3))


@dataclass(frozen=True, eq=False)
class TetMesh:
    """Conforming tetrahedral mesh with boundary facet linkage.

    ``boundary_facets`` holds outward-oriented vertex triples,
    ``boundary_owner`` the owning tet and ``boundary_local_face`` its
    local face id.
    """

    vertices: np.ndarray
    tets: np.ndarray
    boundary_facets: np.ndarray = field(default=None)
    boundary_owner: np.ndarray = field(default=None)
    boundary_local_face: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=np.float64))
        object.__setattr__(self, "tets", np.asarray(self.tets, dtype=np.int64))
        if self.tets.ndim != 2 or self.tets.shape[1] != 4:
            raise MeshError("tets must be an (n, 4) index array")
        if self.tets.size and self.tets.max() >= len(self.vertices):
            raise MeshError("tet refers to a missing vertex")
        vols = self.tet_volumes()
        if np.any(vols <= 0.0):
            bad = int(np.argmin(vols))
            raise MeshError(f"tet {bad} has non-positive volume {vols[bad]:.3e}")
        if self.boundary_facets is None:
            facets, owner, local = _boundary_from_adjacency(self.tets)
            object.__setattr__(self, "boundary_facets", facets)
            object.__setattr__(self, "boundary_owner", owner)
            object.__setattr__(self, "boundary_local_face", local)
        self.vertices.setflags(write=False)
        self.tets.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    def tet_volumes(self) -> np.ndarray:
        v = self.vertices[self.tets]
        e = v[:, 1:] - v[:, :1]
        return np.einsum("ni,ni->n", e[:, 0], np.cross(e[:, 1], e[:, 2])) / 6.0

    def dump_json(self, path) -> None:
        """Write vertices, tets and boundary facets as a JSON fixture."""
        data = {
            "vertices": self.vertices.tolist(),
            "tets": self.tets.tolist(),
            "boundary_facets": self.boundary_facets.tolist(),
            "boundary_owner": self.boundary_owner.tolist(),
            "boundary_local_face": self.boundary_local_face.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(data, fh)

    @staticmethod
    def load_json(path) -> "TetMesh":
        with open(path) as fh:
            data = json.load(fh)
        return TetMesh(
            np.array(data["vertices"], dtype=np.float64),
            np.array(data["tets"], dtype=np.int64),
            np.array(data["boundary_facets"], dtype=np.int64),
            np.array(data["boundary_owner"], dtype=np.int64),
            np.array(data["boundary_local_face"], dtype=np.int8),
        )


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Oriented boundary triangulation with a map back to the volume mesh.

    ``triangles`` indexes the compacted ``vertices``; ``volume_vertex``
    maps each surface vertex to its volume-mesh index and ``owner_tet``
    links each triangle to the tet it bounds.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    volume_vertex: np.ndarray
    owner_tet: np.ndarray
    normals: np.ndarray
    areas: np.ndarray
    diameters: np.ndarray

    def __post_init__(self):
        for name in ("vertices", "triangles", "volume_vertex", "owner_tet",
                     "normals", "areas", "diameters"):
            getattr(self, name).setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())


def _facet_key(tri):
    return tuple(sorted(tri))


def _boundary_from_adjacency(tets: np.ndarray):
    """Boundary facets of a tet mesh via face counting.

    Every facet must belong to one tet (boundary) or two (interior);
    anything else is a non-manifold configuration.
    """
    seen: dict = {}
    for t, tet in enumerate(tets):
        for f, face in enumerate(_TET_FACES):
            tri = (tet[face[0]], tet[face[1]], tet[face[2]])
            key = _facet_key(tri)
            seen.setdefault(key, []).append((t, f, tri))
    facets, owner, local = [], [], []
    for key, hits in seen.items():
        if len(hits) > 2:
            raise MeshError(f"facet {key} shared by {len(hits)} tets (non-manifold)")
        if len(hits) == 1:
            t, f, tri = hits[0]
            facets.append(tri)
            owner.append(t)
            local.append(f)
    order = np.lexsort(np.array(facets, dtype=np.int64).T[::-1]) if facets else []
    facets = np.array(facets, dtype=np.int64)[order]
    owner = np.array(owner, dtype=np.int64)[order]
    local = np.array(local, dtype=np.int8)[order]
    return facets, owner, local


def generate_cube_mesh(n: int) -> TetMesh:
    """Structured mesh of the unit cube with 6 n^3 tets.

    Each subcube is cut into six tets sharing the main diagonal, which
    keeps the triangulation conforming and deterministic.
    """
    return _structured_cube(n, 0.0, 1.0)


def _structured_cube(n: int, lo: float, hi: float) -> TetMesh:
    if n < 1:
        raise ValueError("subdivision count must be >= 1")
    axis = np.linspace(lo, hi, n + 1)
    X, Y, Z = np.meshgrid(axis, axis, axis, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (n + 1) + j) * (n + 1) + k

    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    tets = []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                c = np.array([i, j, k])
                far = vid(i + 1, j + 1, k + 1)
                for p in perms:
                    a = c.copy()
                    path = [vid(*a)]
                    for ax in p:
                        a[ax] += 1
                        path.append(vid(*a))
                    assert path[3] == far
                    v0, v1, v2, v3 = path
                    # even permutations give positive volume; swap otherwise
                    if _perm_sign(p) < 0:
                        v1, v2 = v2, v1
                    tets.append((v0, v1, v2, v3))
    return TetMesh(verts, np.array(tets, dtype=np.int64))


def _perm_sign(p):
    s = 1
    p = list(p)
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                s = -s
    return s


_BALL_CORE_HALF_WIDTH = 0.2


def _cubed_sphere_point(q: np.ndarray) -> np.ndarray:
    """Smooth map of cube-surface points |q|_inf = 1 onto the unit sphere.

    The componentwise blend compresses the grid near cube corners, which
    keeps the largest tet diameter pinned at the face centres where it
    scales exactly with the subdivision count.
    """
    x, y, z = q[:, 0], q[:, 1], q[:, 2]
    x2, y2, z2 = x * x, y * y, z * z
    return np.column_stack([
        x * np.sqrt(np.maximum(1.0 - y2 / 2 - z2 / 2 + y2 * z2 / 3, 0.0)),
        y * np.sqrt(np.maximum(1.0 - z2 / 2 - x2 / 2 + z2 * x2 / 3, 0.0)),
        z * np.sqrt(np.maximum(1.0 - x2 / 2 - y2 / 2 + x2 * y2 / 3, 0.0)),
    ])


def generate_ball_mesh(n: int) -> TetMesh:
    """Tet mesh of the unit ball: scaled cube core plus prismatic shell.

    ``n`` counts subdivisions per radial axis: the core cube gets 2n cells
    per axis and is wrapped in n layers of prisms interpolating between
    the core surface and the smooth cube-to-sphere image of its vertex
    grid.  Every boundary vertex lands on the unit sphere while no tet has
    all four vertices there (which would degenerate under refinement).
    Prism diagonals follow the global smallest-index rule, keeping the
    split conforming and deterministic.
    """
    if n < 1:
        raise ValueError("subdivision count must be >= 1")
    c = _BALL_CORE_HALF_WIDTH
    core = _structured_cube(2 * n, -c, c)
    n_layers = n

    # the core boundary vertex grid, in core order
    surf_vids = np.unique(core.boundary_facets)
    n_core = core.n_vertices
    n_surf = len(surf_vids)
    local = -np.ones(n_core, dtype=np.int64)
    local[surf_vids] = np.arange(n_surf)

    anchors = core.vertices[surf_vids]
    sphere = _cubed_sphere_point(anchors / c)
    verts = [core.vertices]
    for k in range(1, n_layers + 1):
        t = k / n_layers
        verts.append((1.0 - t) * anchors + t * sphere)
    verts = np.vstack(verts)

    def layer_vid(k, s):
        # k = 0 refers to the core surface itself
        if k == 0:
            return surf_vids[s]
        return n_core + (k - 1) * n_surf + s

    tets = [core.tets]
    for tri in core.boundary_facets:
        s = local[tri]
        for k in range(1, n_layers + 1):
            bottom = [layer_vid(k - 1, si) for si in s]
            top = [layer_vid(k, si) for si in s]
            tets.append(np.array(_split_prism(bottom, top), dtype=np.int64))
    tets = np.vstack(tets)

    v = verts[tets]
    e = v[:, 1:] - v[:, :1]
    vols = np.einsum("ni,ni->n", e[:, 0], np.cross(e[:, 1], e[:, 2]))
    flip = vols < 0
    tets[flip] = tets[flip][:, [0, 2, 1, 3]]
    return TetMesh(verts, tets)


def _split_prism(bottom, top):
    """Split a prism into three tets with the smallest-global-index rule.

    Each lateral quad is cut along the diagonal through its smallest
    vertex id, which matches the choice of the neighbouring prism and
    keeps the triangulation conforming.
    """
    ids = list(bottom) + list(top)
    rot = int(np.argmin(ids)) % 3
    b = [bottom[(rot + i) % 3] for i in range(3)]
    t = [top[(rot + i) % 3] for i in range(3)]
    # quads adjacent to the smallest vertex b[0] are cut through it;
    # the remaining quad (b1 b2 t2 t1) follows its own smallest corner
    if min(b[1], t[2]) < min(b[2], t[1]):
        return [(b[0], b[1], b[2], t[2]), (b[0], b[1], t[2], t[1]),
                (b[0], t[1], t[2], t[0])]
    return [(b[0], b[1], b[2], t[1]), (b[0], t[1], b[2], t[2]),
            (b[0], t[1], t[2], t[0])]


def extract_boundary(mesh: TetMesh) -> SurfaceMesh:
    """Boundary triangulation with outward normals and volume linkage."""
    facets = mesh.boundary_facets
    if len(facets) == 0:
        raise MeshError("mesh has no boundary facets")
    used = np.unique(facets)
    remap = -np.ones(mesh.n_vertices, dtype=np.int64)
    remap[used] = np.arange(len(used))
    tris = remap[facets]
    verts = mesh.vertices[used]

    p = verts[tris]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    if np.any(areas <= 0):
        raise MeshError("degenerate boundary triangle")
    normals = cross / (2.0 * areas[:, None])

    # orient outward: flip triangles whose normal points into the owning tet
    tet_centroids = mesh.vertices[mesh.tets[mesh.boundary_owner]].mean(axis=1)
    tri_centroids = p.mean(axis=1)
    flip = np.einsum("ij,ij->i", normals, tri_centroids - tet_centroids) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    normals[flip] *= -1.0

    e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
    diameters = np.linalg.norm(e, axis=2).max(axis=1)

    _check_closed(tris)
    return SurfaceMesh(verts, tris, used, mesh.boundary_owner.copy(),
                       normals, areas, diameters)


def _check_closed(tris: np.ndarray) -> None:
    """Each edge of a closed orientable surface is used exactly twice."""
    edges = np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    edges.sort(axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    if np.any(counts != 2):
        raise MeshError("boundary surface is not closed/manifold")


def mesh_size(mesh: TetMesh) -> float:
    """Largest tet diameter, measured as the max pairwise vertex distance."""
    if mesh.n_tets == 0:
        raise ValueError("empty mesh")
    v = mesh.vertices[mesh.tets]
    h = 0.0
    for a in range(4):
        for b in range(a + 1, 4):
            d = np.linalg.norm(v[:, a] - v[:, b], axis=1)
            h = max(h, float(d.max()))
    return h


def import_gmsh(path) -> TetMesh:
    """Read a Gmsh ASCII v2.2 file with tetrahedra (and optional triangles).

    Triangles present in the file are only cross-checked against the
    facet-adjacency boundary; points and lines are skipped.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    i = 0
    nline = len(lines)

    def expect(tag):
        nonlocal i
        while i < nline and not lines[i].strip():
            i += 1
        if i >= nline or lines[i].strip() != tag:
            raise GmshParseError(f"expected {tag}", line=i + 1)
        i += 1

    expect("$MeshFormat")
    parts = lines[i].split()
    if not parts or not parts[0].startswith("2."):
        raise GmshParseError(f"unsupported mesh format {lines[i].strip()!r}", line=i + 1)
    i += 1
    expect("$EndMeshFormat")

    expect("$Nodes")
    try:
        n_nodes = int(lines[i].split()[0])
    except (ValueError, IndexError):
        raise GmshParseError("bad node count", line=i + 1)
    i += 1
    tag_to_idx = {}
    coords = np.empty((n_nodes, 3))
    for k in range(n_nodes):
        parts = lines[i].split()
        if len(parts) < 4:
            raise GmshParseError("bad node record", line=i + 1)
        tag_to_idx[int(parts[0])] = k
        coords[k] = [float(parts[1]), float(parts[2]), float(parts[3])]
        i += 1
    expect("$EndNodes")

    expect("$Elements")
    try:
        n_elems = int(lines[i].split()[0])
    except (ValueError, IndexError):
        raise GmshParseError("bad element count", line=i + 1)
    i += 1
    tets = []
    file_tris = []
    for _ in range(n_elems):
        parts = lines[i].split()
        if len(parts) < 3:
            raise GmshParseError("bad element record", line=i + 1)
        etype = int(parts[1])
        ntags = int(parts[2])
        conn = parts[3 + ntags:]
        if etype == 4:
            if len(conn) != 4:
                raise GmshParseError("tetrahedron needs 4 nodes", line=i + 1)
            idx = []
            for c in conn:
                tag = int(c)
                if tag not in tag_to_idx:
                    raise GmshParseError(f"element references missing node {tag}", line=i + 1)
                idx.append(tag_to_idx[tag])
            tets.append(idx)
        elif etype == 2:
            idx = []
            for c in conn:
                tag = int(c)
                if tag not in tag_to_idx:
                    raise GmshParseError(f"element references missing node {tag}", line=i + 1)
                idx.append(tag_to_idx[tag])
            file_tris.append(idx)
        elif etype in (1, 15):
            pass  # lines and points carry no volume information
        else:
            raise GmshParseError(f"unsupported element type {etype}", line=i + 1)
        i += 1
    expect("$EndElements")

    if not tets:
        raise GmshParseError("file contains no tetrahedra")
    tets = np.array(tets, dtype=np.int64)
    # repair inverted tets; Gmsh files in the wild mix orientations
    v = coords[tets]
    e = v[:, 1:] - v[:, :1]
    vols = np.einsum("ni,ni->n", e[:, 0], np.cross(e[:, 1], e[:, 2]))
    bad = vols < 0
    tets[bad] = tets[bad][:, [0, 2, 1, 3]]

    mesh = TetMesh(coords, tets)
    if file_tris:
        boundary = {_facet_key(t) for t in mesh.boundary_facets}
        for tri in file_tris:
            if _facet_key(tri) not in boundary:
                raise GmshParseError(
                    f"surface triangle {sorted(tri)} is not a boundary facet")
    return mesh


def export_gmsh(mesh: TetMesh, path) -> None:
    """Write the mesh (tets + boundary triangles) as Gmsh ASCII v2.2."""
    with open(path, "w") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        fh.write(f"$Nodes\n{mesh.n_vertices}\n")
        for k, p in enumerate(mesh.vertices, start=1):
            fh.write(f"{k} {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        fh.write("$EndNodes\n")
        n_el = mesh.n_tets + len(mesh.boundary_facets)
        fh.write(f"$Elements\n{n_el}\n")
        eid = 1
        for tri in mesh.boundary_facets:
            fh.write(f"{eid} 2 2 0 1 {tri[0] + 1} {tri[1] + 1} {tri[2] + 1}\n")
            eid += 1
        for tet in mesh.tets:
            fh.write(f"{eid} 4 2 0 1 {tet[0] + 1} {tet[1] + 1} {tet[2] + 1} {tet[3] + 1}\n")
            eid += 1
        fh.write("$EndElements\n")
