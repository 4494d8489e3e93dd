"""Triangle surface meshes, tetrahedral meshes, file IO, and procedural geometry."""

from __future__ import annotations

import numpy as np

# =============================================================================
# Topology helpers
# =============================================================================


def unique_edges(triangles: np.ndarray) -> np.ndarray:
    """Unique undirected edges of a triangle array.

    Args:
        triangles: (m, 3) integer vertex indices.

    Returns:
        (e, 2) int32 array, each row sorted ascending, rows lexicographically
        sorted so the ordering is deterministic.
    """
    tri = np.asarray(triangles, dtype=np.int64)
    raw = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]], axis=0)
    raw.sort(axis=1)
    edges = np.unique(raw, axis=0)
    return edges.astype(np.int32)


def _directed_edge_counts(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    tri = np.asarray(triangles, dtype=np.int64)
    n = tri.max() + 1 if tri.size else 0
    d = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]], axis=0)
    keys = d[:, 0] * n + d[:, 1]
    uniq, counts = np.unique(keys, return_counts=True)
    return uniq, counts


def is_watertight(triangles: np.ndarray) -> bool:
    """True when every directed edge appears exactly once (closed, consistently
    oriented 2-manifold)."""
    tri = np.asarray(triangles, dtype=np.int64)
    if tri.size == 0:
        return False
    n = tri.max() + 1
    uniq, counts = _directed_edge_counts(tri)
    if (counts != 1).any():
        return False
    # each directed edge must have its opposite present
    rev = (uniq % n) * n + (uniq // n)
    return np.isin(rev, uniq).all()


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    v = vertices
    t = triangles
    c = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    return 0.5 * np.linalg.norm(c, axis=1)


def volume_integrals(
    vertices: np.ndarray, triangles: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Exact monomial integrals over the solid bounded by a watertight surface.

    Uses the signed tetrahedron fan about the origin; exact for the polyhedral
    volume regardless of where the origin sits.

    Returns:
        (volume, integral of x (3,), integral of x x^T (3, 3))
    """
    v0 = vertices[triangles[:, 0]]
    v1 = vertices[triangles[:, 1]]
    v2 = vertices[triangles[:, 2]]
    w = np.einsum("ij,ij->i", v0, np.cross(v1, v2)) / 6.0  # signed tet volumes
    vol = float(w.sum())
    s = v0 + v1 + v2
    first = (w[:, None] * s).sum(axis=0) / 4.0
    outer = (
        np.einsum("ti,tj->tij", v0, v0)
        + np.einsum("ti,tj->tij", v1, v1)
        + np.einsum("ti,tj->tij", v2, v2)
        + np.einsum("ti,tj->tij", s, s)
    )
    second = (w[:, None, None] * outer).sum(axis=0) / 20.0
    return vol, first, second


# =============================================================================
# Mesh containers
# =============================================================================


class SurfaceMesh:
    """Triangle mesh with outward-oriented faces.

    Fields:
        vertices: (n, 3) float64
        triangles: (m, 3) int32, counter-clockwise seen from outside
        edges: (e, 2) int32 unique undirected edges
        uv: optional (n, 2) rest-plane coordinates (present for cloth grids)
    """

    def __init__(self, vertices, triangles, uv=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int32)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError(f"vertices must be (n, 3), got {self.vertices.shape}")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError(f"triangles must be (m, 3), got {self.triangles.shape}")
        if self.triangles.size and self.triangles.max() >= len(self.vertices):
            raise ValueError("triangle index out of range")
        self.edges = unique_edges(self.triangles)
        self.uv = None if uv is None else np.ascontiguousarray(uv, dtype=np.float64)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def is_watertight(self) -> bool:
        return is_watertight(self.triangles)

    def transformed(self, rotation=None, translation=None, scale=None) -> "SurfaceMesh":
        v = self.vertices
        if scale is not None:
            v = v * float(scale)
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=np.float64).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=np.float64)
        return SurfaceMesh(v, self.triangles, uv=self.uv)


class TetMesh:
    """Tetrahedral mesh; tets are reordered so every rest volume is positive.

    Fields:
        vertices: (n, 3) float64
        tets: (m, 4) int32
        surface: SurfaceMesh over the same vertex array (boundary faces)
    """

    def __init__(self, vertices, tets):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.tets = np.ascontiguousarray(tets, dtype=np.int32)
        if self.tets.ndim != 2 or self.tets.shape[1] != 4:
            raise ValueError(f"tets must be (m, 4), got {self.tets.shape}")
        if self.tets.size and self.tets.max() >= len(self.vertices):
            raise ValueError("tet index out of range")
        self._fix_orientation()
        self.surface = SurfaceMesh(self.vertices, self._boundary_triangles())

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    def _fix_orientation(self):
        v = self.vertices
        t = self.tets
        d = np.einsum(
            "ij,ij->i",
            v[t[:, 1]] - v[t[:, 0]],
            np.cross(v[t[:, 2]] - v[t[:, 0]], v[t[:, 3]] - v[t[:, 0]]),
        )
        if (d == 0).any():
            raise ValueError("degenerate tetrahedron (zero rest volume)")
        flip = d < 0
        if flip.any():
            t = t.copy()
            t[flip, 2], t[flip, 3] = t[flip, 3], t[flip, 2].copy()
            self.tets = t

    def _boundary_triangles(self) -> np.ndarray:
        # outward faces of a positively oriented tet (v0, v1, v2, v3)
        t = self.tets.astype(np.int64)
        faces = np.concatenate(
            [t[:, [1, 2, 3]], t[:, [0, 3, 2]], t[:, [0, 1, 3]], t[:, [0, 2, 1]]],
            axis=0,
        )
        key = np.sort(faces, axis=1)
        _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        boundary = faces[counts[inv] == 1]
        # deterministic order
        order = np.lexsort((boundary[:, 2], boundary[:, 1], boundary[:, 0]))
        return boundary[order].astype(np.int32)


# =============================================================================
# File IO
# =============================================================================


def load_obj(path: str) -> SurfaceMesh:
    """Load a Wavefront OBJ (v/f records; polygons fan-triangulated)."""
    vertices = []
    triangles = []
    try:
        fh = open(path, "r")
    except OSError as exc:
        raise FileNotFoundError(f"mesh file not found: {path}") from exc
    with fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                idx = [i - 1 if i > 0 else len(vertices) + i for i in idx]
                for k in range(1, len(idx) - 1):
                    triangles.append([idx[0], idx[k], idx[k + 1]])
    if not vertices:
        raise ValueError(f"no vertices in OBJ file: {path}")
    return SurfaceMesh(
        np.array(vertices, dtype=np.float64),
        np.array(triangles, dtype=np.int32).reshape(-1, 3),
    )


def save_obj(path: str, vertices: np.ndarray, triangles: np.ndarray) -> None:
    """Write an OBJ with 9 significant digits per coordinate."""
    with open(path, "w") as fh:
        for v in np.asarray(vertices, dtype=np.float64):
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in np.asarray(triangles, dtype=np.int64):
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def load_tetgen(node_path: str, ele_path: str) -> TetMesh:
    """Load a TetGen .node/.ele pair (1- or 0-indexed, detected from the file)."""

    def _rows(path):
        try:
            fh = open(path, "r")
        except OSError as exc:
            raise FileNotFoundError(f"mesh file not found: {path}") from exc
        with fh:
            rows = []
            for line in fh:
                line = line.split("#")[0].strip()
                if line:
                    rows.append(line.split())
            return rows

    nrows = _rows(node_path)
    n_pts = int(nrows[0][0])
    body = nrows[1 : 1 + n_pts]
    first_index = int(body[0][0])
    verts = np.array([[float(r[1]), float(r[2]), float(r[3])] for r in body])

    erows = _rows(ele_path)
    n_tet = int(erows[0][0])
    ebody = erows[1 : 1 + n_tet]
    tets = np.array([[int(r[1]), int(r[2]), int(r[3]), int(r[4])] for r in ebody])
    tets -= first_index
    return TetMesh(verts, tets)


# =============================================================================
# Procedural geometry (fixtures and scene primitives)
# =============================================================================


def box_surface(size, center=(0.0, 0.0, 0.0)) -> SurfaceMesh:
    """Axis-aligned box surface: 8 vertices, 12 outward triangles."""
    sx, sy, sz = [0.5 * float(s) for s in np.broadcast_to(size, (3,))]
    cx, cy, cz = center
    corners = np.array(
        [
            [-sx, -sy, -sz], [+sx, -sy, -sz], [+sx, +sy, -sz], [-sx, +sy, -sz],
            [-sx, -sy, +sz], [+sx, -sy, +sz], [+sx, +sy, +sz], [-sx, +sy, +sz],
        ]
    ) + np.array([cx, cy, cz])
    quads = [
        (0, 3, 2, 1),  # -z
        (4, 5, 6, 7),  # +z
        (0, 1, 5, 4),  # -y
        (2, 3, 7, 6),  # +y
        (1, 2, 6, 5),  # +x
        (0, 4, 7, 3),  # -x
    ]
    tris = []
    for a, b, c, d in quads:
        tris.append([a, b, c])
        tris.append([a, c, d])
    return SurfaceMesh(corners, np.array(tris, dtype=np.int32))


def box_tet(size, divisions, center=(0.0, 0.0, 0.0)) -> TetMesh:
    """Structured tetrahedral box: (dx, dy, dz) cells, 6 tets per cell."""
    div = np.broadcast_to(divisions, (3,)).astype(int)
    half = 0.5 * np.broadcast_to(size, (3,)).astype(np.float64)
    axes = [np.linspace(-half[k], half[k], div[k] + 1) for k in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    verts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1) + np.asarray(center)

    nx, ny, nz = div + 1

    def vid(i, j, k):
        return (i * ny + j) * nz + k

    # Kuhn decomposition of each cell into 6 tets (consistent across cells)
    kuhn = [
        (0b000, 0b100, 0b110, 0b111),
        (0b000, 0b110, 0b010, 0b111),
        (0b000, 0b010, 0b011, 0b111),
        (0b000, 0b011, 0b001, 0b111),
        (0b000, 0b001, 0b101, 0b111),
        (0b000, 0b101, 0b100, 0b111),
    ]
    tets = []
    for i in range(div[0]):
        for j in range(div[1]):
            for k in range(div[2]):
                for t in kuhn:
                    tets.append(
                        [
                            vid(i + (c >> 2 & 1), j + (c >> 1 & 1), k + (c & 1))
                            for c in t
                        ]
                    )
    return TetMesh(verts, np.array(tets, dtype=np.int32))


def fibonacci_sphere(n_vertices: int, radius: float = 1.0) -> SurfaceMesh:
    """Watertight sphere with exactly n_vertices, triangulated by convex hull."""
    from scipy.spatial import ConvexHull

    n = int(n_vertices)
    i = np.arange(n, dtype=np.float64)
    golden = (1.0 + 5.0**0.5) / 2.0
    theta = 2.0 * np.pi * i / golden
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    pts = radius * np.stack([r * np.cos(theta), z, r * np.sin(theta)], axis=1)
    hull = ConvexHull(pts)
    tris = hull.simplices.astype(np.int64)
    # orient all faces outward (hull is centered on the origin)
    v = pts
    c = np.cross(v[tris[:, 1]] - v[tris[:, 0]], v[tris[:, 2]] - v[tris[:, 0]])
    centroid = (v[tris[:, 0]] + v[tris[:, 1]] + v[tris[:, 2]]) / 3.0
    flip = np.einsum("ij,ij->i", c, centroid) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    if len(np.unique(tris)) != n:
        raise ValueError("convex hull dropped vertices; use more uniform sampling")
    return SurfaceMesh(pts, tris.astype(np.int32))


def cone_surface(radius: float, height: float, segments: int = 32) -> SurfaceMesh:
    """Closed upright cone: base circle at y=0, apex at y=height."""
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), np.zeros(segments), radius * np.sin(ang)], axis=1)
    verts = np.vstack([ring, [[0.0, height, 0.0]], [[0.0, 0.0, 0.0]]])
    apex = segments
    base = segments + 1
    tris = []
    for k in range(segments):
        nk = (k + 1) % segments
        tris.append([k, apex, nk])   # side, outward
        tris.append([k, nk, base])   # base, outward (-y)
    return SurfaceMesh(verts, np.array(tris, dtype=np.int32))


def cloth_grid(nx: int, nz: int, spacing: float, center=(0.0, 0.0, 0.0)) -> SurfaceMesh:
    """Planar cloth grid in the XZ plane with rest-plane UVs.

    Vertices form an nx-by-nz lattice; diagonals alternate so the mesh has no
    global bias direction.
    """
    xs = (np.arange(nx) - (nx - 1) / 2.0) * spacing
    zs = (np.arange(nz) - (nz - 1) / 2.0) * spacing
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    verts = np.stack([gx.ravel(), np.zeros(nx * nz), gz.ravel()], axis=1)
    verts = verts + np.asarray(center, dtype=np.float64)
    uv = np.stack([gx.ravel(), gz.ravel()], axis=1)

    def vid(i, k):
        return i * nz + k

    tris = []
    for i in range(nx - 1):
        for k in range(nz - 1):
            a, b = vid(i, k), vid(i + 1, k)
            c, d = vid(i + 1, k + 1), vid(i, k + 1)
            if (i + k) % 2 == 0:
                tris += [[a, b, c], [a, c, d]]
            else:
                tris += [[a, b, d], [b, c, d]]
    return SurfaceMesh(verts, np.array(tris, dtype=np.int32), uv=uv)
