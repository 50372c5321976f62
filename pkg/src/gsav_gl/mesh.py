"""Structured triangle meshes for the square and the square-with-hole domains,
plus Lagrange P1/P2 degree-of-freedom numbering."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

INTERIOR = 0
ON_VERTICAL_EDGE = 1
ON_HORIZONTAL_EDGE = 2
CORNER = 3

CLASS_NAMES = {
    INTERIOR: "interior",
    ON_VERTICAL_EDGE: "on_vertical_edge",
    ON_HORIZONTAL_EDGE: "on_horizontal_edge",
    CORNER: "corner",
}

# local P2 edge numbering: edge k joins local vertices _LOCAL_EDGES[k]
_LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


class MeshError(ValueError):
    pass


class UnsupportedGeometryError(MeshError):
    pass


@dataclass(frozen=True)
class Mesh:
    """Conforming triangulation of a polygonal 2D domain.

    ``boundary_edges`` rows are ``(v0, v1, loop_tag)`` with ``loop_tag`` 0 for
    the outer loop and 1 for an inner (hole) loop.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    vertex_boundary_class: np.ndarray
    area: float | None = None  # analytic area, when known

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def total_area(self) -> float:
        return float(np.sum(self.signed_areas()))

    def diameter(self) -> float:
        """Largest triangle edge length, the usual mesh size h."""
        p = self.vertices[self.triangles]
        lengths = [np.linalg.norm(p[:, a] - p[:, b], axis=1) for a, b in _LOCAL_EDGES]
        return float(np.max(lengths))

    def n_boundary_loops(self) -> int:
        e = self.boundary_edges[:, :2]
        nv = self.n_vertices
        g = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(nv, nv))
        _, labels = connected_components(g, directed=False)
        return len(np.unique(labels[np.unique(e)]))

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges (sorted vertex pairs) and the per-triangle
        local-edge -> global-edge index table."""
        return _edges(self.triangles)


def _edges(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    local = triangles[:, _LOCAL_EDGES]  # (T, 3, 2)
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
    return uniq, inverse.reshape(-1, 3)


def _classify_boundary(vertices: np.ndarray, bedges: np.ndarray) -> np.ndarray:
    cls = np.zeros(len(vertices), dtype=np.int8)
    if len(bedges) == 0:
        return cls
    d = vertices[bedges[:, 1]] - vertices[bedges[:, 0]]
    vertical = np.isclose(d[:, 0], 0.0, atol=1e-12 * max(1.0, np.abs(d).max()))
    horizontal = np.isclose(d[:, 1], 0.0, atol=1e-12 * max(1.0, np.abs(d).max()))
    has_v = np.zeros(len(vertices), dtype=bool)
    has_h = np.zeros(len(vertices), dtype=bool)
    has_other = np.zeros(len(vertices), dtype=bool)
    for col in (0, 1):
        has_v[bedges[vertical, col]] = True
        has_h[bedges[horizontal, col]] = True
        has_other[bedges[~(vertical | horizontal), col]] = True
    cls[has_v] = ON_VERTICAL_EDGE
    cls[has_h] = ON_HORIZONTAL_EDGE
    cls[has_v & has_h] = CORNER
    # slanted edges cannot carry a componentwise normal constraint; mark as corner
    # so that callers can detect them through ``axis_aligned_boundary``
    cls[has_other] = CORNER
    return cls


def axis_aligned_boundary(mesh: Mesh) -> bool:
    e = mesh.boundary_edges
    if len(e) == 0:
        return True
    d = mesh.vertices[e[:, 1]] - mesh.vertices[e[:, 0]]
    tol = 1e-12 * max(1.0, float(np.abs(d).max()))
    return bool(np.all((np.abs(d[:, 0]) <= tol) | (np.abs(d[:, 1]) <= tol)))


def _boundary_edges(triangles: np.ndarray) -> np.ndarray:
    """Edges used by exactly one triangle, oriented as in that triangle (CCW)."""
    local = triangles[:, _LOCAL_EDGES].reshape(-1, 2)
    pairs = np.sort(local, axis=1)
    _, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
    return local[counts[inverse] == 1]


def _from_cells(x: np.ndarray, y: np.ndarray, active: np.ndarray,
                outer_box: tuple[float, float, float, float], area: float) -> Mesh:
    """Triangulate the active cells of a tensor grid, splitting every cell along
    its bottom-left -> top-right diagonal."""
    nx, ny = len(x) - 1, len(y) - 1
    vid = lambda i, j: j * (nx + 1) + i  # noqa: E731
    tris = []
    for j in range(ny):
        for i in range(nx):
            if not active[j, i]:
                continue
            v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    tris = np.asarray(tris, dtype=np.int64)
    X, Y = np.meshgrid(x, y)
    allv = np.column_stack([X.ravel(), Y.ravel()])

    used = np.unique(tris)
    renum = -np.ones(len(allv), dtype=np.int64)
    renum[used] = np.arange(len(used))
    vertices = allv[used]
    tris = renum[tris]

    be = _boundary_edges(tris)
    x0, x1, y0, y1 = outer_box
    p0, p1 = vertices[be[:, 0]], vertices[be[:, 1]]
    on_outer = (
        (np.isclose(p0[:, 0], x0) & np.isclose(p1[:, 0], x0))
        | (np.isclose(p0[:, 0], x1) & np.isclose(p1[:, 0], x1))
        | (np.isclose(p0[:, 1], y0) & np.isclose(p1[:, 1], y0))
        | (np.isclose(p0[:, 1], y1) & np.isclose(p1[:, 1], y1))
    )
    tags = np.where(on_outer, 0, 1)
    bedges = np.column_stack([be, tags]).astype(np.int64)
    return Mesh(vertices, tris, bedges, _classify_boundary(vertices, bedges), area)


def unit_square_mesh(n: int) -> Mesh:
    """Uniform right-triangle mesh of [0,1]^2 with ``n`` cells per side."""
    if int(n) != n or n < 1:
        raise MeshError(f"unit_square_mesh needs n >= 1, got {n!r}")
    n = int(n)
    t = np.linspace(0.0, 1.0, n + 1)
    return _from_cells(t, t, np.ones((n, n), dtype=bool), (0.0, 1.0, 0.0, 1.0), 1.0)


def multiconnected_mesh(n: int) -> Mesh:
    """Mesh of [-0.5,1]x[-1,0.5] minus the hole [0,0.5]x[-0.5,0].

    ``n`` cells span the 1.5-long side; it must be a multiple of 3 so that the
    hole corners fall on grid nodes.
    """
    if int(n) != n or n < 3 or n % 3:
        raise MeshError(
            f"multiconnected_mesh needs n >= 3 divisible by 3 so the hole "
            f"[0,0.5]x[-0.5,0] is resolved by grid lines, got n={n!r}"
        )
    n = int(n)
    x = np.linspace(-0.5, 1.0, n + 1)
    y = np.linspace(-1.0, 0.5, n + 1)
    xc = 0.5 * (x[:-1] + x[1:])
    yc = 0.5 * (y[:-1] + y[1:])
    XC, YC = np.meshgrid(xc, yc)
    hole = (XC > 0.0) & (XC < 0.5) & (YC > -0.5) & (YC < 0.0)
    return _from_cells(x, y, ~hole, (-0.5, 1.0, -1.0, 0.5), 2.0)


def read_mesh(path: str | Path) -> Mesh:
    """Read the plain-text mesh format.

    Header ``vertices V triangles T bedges B`` followed by V lines ``x y``,
    T lines ``i j k`` and B lines ``i j tag`` (0-based; tag ``outer``/``inner``
    or 0/1).
    """
    path = Path(path)
    lines = [ln.split("#", 1)[0].strip() for ln in path.read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise MeshError(f"{path}: empty mesh file")
    head = lines[0].split()
    try:
        counts = dict(zip(head[0::2], map(int, head[1::2])))
        nv, nt, nb = counts["vertices"], counts["triangles"], counts["bedges"]
    except (KeyError, ValueError) as exc:
        raise MeshError(f"{path}: bad header {lines[0]!r}") from exc
    body = lines[1:]
    if len(body) != nv + nt + nb:
        raise MeshError(f"{path}: expected {nv + nt + nb} data lines, found {len(body)}")
    try:
        vertices = np.array([[float(v) for v in ln.split()] for ln in body[:nv]]).reshape(nv, 2)
        tris = np.array([[int(v) for v in ln.split()] for ln in body[nv:nv + nt]],
                        dtype=np.int64).reshape(nt, 3)
    except ValueError as exc:
        raise MeshError(f"{path}: malformed vertex or triangle line ({exc})") from exc
    tagmap = {"outer": 0, "inner": 1, "0": 0, "1": 1}
    bedges = []
    for ln in body[nv + nt:]:
        i, j, tag = ln.split()
        if tag not in tagmap:
            raise MeshError(f"{path}: unknown boundary tag {tag!r}")
        bedges.append((int(i), int(j), tagmap[tag]))
    bedges = np.array(bedges, dtype=np.int64).reshape(-1, 3)
    mesh = Mesh(vertices, tris, bedges, _classify_boundary(vertices, bedges))
    validate_mesh(mesh)
    return mesh


def write_mesh(mesh: Mesh, path: str | Path) -> None:
    tag = {0: "outer", 1: "inner"}
    with open(path, "w") as fh:
        fh.write(f"vertices {mesh.n_vertices} triangles {mesh.n_triangles} "
                 f"bedges {len(mesh.boundary_edges)}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
        for i, j, t in mesh.boundary_edges:
            fh.write(f"{i} {j} {tag[int(t)]}\n")


def validate_mesh(mesh: Mesh) -> None:
    if mesh.triangles.ndim != 2 or mesh.triangles.shape[1] != 3:
        raise MeshError("triangles must be an (T, 3) index array")
    if mesh.triangles.min() < 0 or mesh.triangles.max() >= mesh.n_vertices:
        raise MeshError("triangle index out of range")
    areas = mesh.signed_areas()
    bad = np.flatnonzero(areas <= 0.0)
    if len(bad):
        raise MeshError(f"triangle {bad[0]} has non-positive signed area {areas[bad[0]]:.3e}")


@dataclass(frozen=True)
class DofMap:
    """Global numbering of Lagrange dofs.

    P2 numbering: vertex dofs first (same index as the vertex), then one dof per
    unique edge.  ``cell_dofs`` lists, per triangle, vertices 0..2 followed by
    the midpoints of local edges (0,1), (1,2), (2,0).
    """

    order: int
    n_dofs: int
    cell_dofs: np.ndarray
    coords: np.ndarray
    boundary_class: np.ndarray
    n_vertices: int = 0
    edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    @property
    def vertex_dofs(self) -> np.ndarray:
        return np.arange(self.n_vertices)


def build_dof_map(mesh: Mesh, order: int) -> DofMap:
    if order not in (1, 2):
        raise ValueError(f"element order must be 1 or 2, got {order!r}")
    validate_mesh(mesh)
    nv = mesh.n_vertices
    edges, tri_edges = mesh.edges()
    if order == 1:
        return DofMap(1, nv, mesh.triangles.copy(), mesh.vertices.copy(),
                      mesh.vertex_boundary_class.copy(), nv, edges)

    cell_dofs = np.hstack([mesh.triangles, nv + tri_edges])
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    coords = np.vstack([mesh.vertices, mid])

    edge_cls = np.zeros(len(edges), dtype=np.int8)
    be = np.sort(mesh.boundary_edges[:, :2], axis=1)
    if len(be):
        key = edges[:, 0] * nv + edges[:, 1]
        pos = np.searchsorted(key, be[:, 0] * nv + be[:, 1])
        d = mesh.vertices[be[:, 1]] - mesh.vertices[be[:, 0]]
        tol = 1e-12 * max(1.0, float(np.abs(d).max()))
        vertical = np.abs(d[:, 0]) <= tol
        horizontal = np.abs(d[:, 1]) <= tol
        edge_cls[pos[vertical]] = ON_VERTICAL_EDGE
        edge_cls[pos[horizontal]] = ON_HORIZONTAL_EDGE
        edge_cls[pos[~(vertical | horizontal)]] = CORNER
    boundary_class = np.concatenate([mesh.vertex_boundary_class, edge_cls])
    return DofMap(2, nv + len(edges), cell_dofs, coords, boundary_class, nv, edges)
