"""Mesh proximity queries for grasp evaluation and repair.

Distances between body groups reuse the scene broad phase; containment uses
generalized winding numbers, so the penetration measure works for any
watertight object mesh. Triangle-pair intersection covers the non-coplanar
case (each edge of one triangle tested against the other's interior), which
together with the containment test decides whether two closed surfaces
overlap; exactly coplanar crossings are a measure-zero case the repair
retraction steps past.
"""

from __future__ import annotations

import numpy as np

from ..geometry.broadphase import broad_phase
from ..geometry.bvh import Bvh
from ..geometry.distance import edge_edge_dist2, point_triangle_dist2
from ..geometry.mesh import SurfaceMesh, unique_edges


# =============================================================================
# Distances between body groups inside a scene
# =============================================================================


def _block_indices(scene, bodies) -> set[int]:
    wanted = {id(b) for b in bodies}
    out = {bi for bi, blk in enumerate(scene.state.blocks) if id(blk.body) in wanted}
    if len(out) != len(wanted):
        raise ValueError("a queried body is not part of this scene")
    return out


def min_group_distance(scene, bodies_a, bodies_b, x: np.ndarray | None = None) -> float:
    """Minimum contact-pair distance (m) between two body groups.

    Only pairs within broad-phase reach (dhat) are examined; returns inf when
    the groups are separated by more than dhat everywhere.
    """
    ia, ib = _block_indices(scene, bodies_a), _block_indices(scene, bodies_b)
    xw = scene.world_slots(x)
    cand = broad_phase(
        xw, scene.tables, scene.barrier.dhat, scene.ground_y, scene.bp_cache
    )
    tables = scene.tables
    best = np.inf
    if len(cand.pt):
        vb = tables.vert_body[cand.pt[:, 0]]
        tb = tables.tri_body[cand.pt[:, 1]]
        keep = (np.isin(vb, list(ia)) & np.isin(tb, list(ib))) | (
            np.isin(vb, list(ib)) & np.isin(tb, list(ia))
        )
        if keep.any():
            tri = tables.tris[cand.pt[keep, 1]]
            d2, _ = point_triangle_dist2(
                xw[cand.pt[keep, 0]], xw[tri[:, 0]], xw[tri[:, 1]], xw[tri[:, 2]]
            )
            best = min(best, float(np.sqrt(d2.min())))
    if len(cand.ee):
        b1 = tables.edge_body[cand.ee[:, 0]]
        b2 = tables.edge_body[cand.ee[:, 1]]
        keep = (np.isin(b1, list(ia)) & np.isin(b2, list(ib))) | (
            np.isin(b1, list(ib)) & np.isin(b2, list(ia))
        )
        if keep.any():
            ea = tables.edges[cand.ee[keep, 0]]
            eb = tables.edges[cand.ee[keep, 1]]
            d2, _, _ = edge_edge_dist2(
                xw[ea[:, 0]], xw[ea[:, 1]], xw[eb[:, 0]], xw[eb[:, 1]]
            )
            best = min(best, float(np.sqrt(d2.min())))
    return best


def min_ground_distance(scene, bodies, x: np.ndarray | None = None) -> float:
    """Lowest slot height above the ground plane for the given bodies."""
    if scene.ground_y is None:
        return np.inf
    idx = _block_indices(scene, bodies)
    xw = scene.world_slots(x)
    mask = np.isin(scene.tables.vert_body, list(idx))
    if not mask.any():
        return np.inf
    return float(xw[mask, 1].min() - scene.ground_y)


# =============================================================================
# Triangle-triangle intersection
# =============================================================================


def _segment_triangle_hits(orig, vec, t0, t1, t2):
    """Batched Moller-Trumbore restricted to the segment parameter [0, 1]."""
    eps = 1e-14
    e1 = t1 - t0
    e2 = t2 - t0
    p = np.cross(vec, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > eps
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = orig - t0
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    v = np.einsum("ij,ij->i", vec, q) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    return ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= 0) & (t <= 1)


def ray_hits(orig: np.ndarray, direction: np.ndarray, verts: np.ndarray, tris):
    """Ray crossings with mesh triangles for t > 0.

    Returns (t, tri_ids) sorted by increasing t.
    """
    tris = np.asarray(tris, dtype=np.int64)
    t0, t1, t2 = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    eps = 1e-14
    e1, e2 = t1 - t0, t2 - t0
    p = np.cross(direction[None, :], e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > eps
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = orig[None, :] - t0
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    v = np.einsum("ij,j->i", q, direction) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > eps)
    ids = np.nonzero(hit)[0]
    order = np.argsort(t[hit], kind="stable")
    return t[hit][order], ids[order]


def triangle_pairs_intersect(va, ta, vb, tb) -> np.ndarray:
    """Boolean per pair: does triangle ta[i] of mesh a cross tb[i] of mesh b.

    Arguments are vertex arrays and (n, 3) triangle index rows, one pair per
    row. A pair intersects when any edge of one triangle passes through the
    other triangle.
    """
    a = va[ta]  # (n, 3, 3)
    b = vb[tb]
    hits = np.zeros(len(ta), dtype=bool)
    for i, j in ((0, 1), (1, 2), (2, 0)):
        hits |= _segment_triangle_hits(a[:, i], a[:, j] - a[:, i], b[:, 0], b[:, 1], b[:, 2])
        hits |= _segment_triangle_hits(b[:, i], b[:, j] - b[:, i], a[:, 0], a[:, 1], a[:, 2])
    return hits


def count_mesh_intersections(verts_a, tris_a, verts_b, tris_b) -> int:
    """Number of crossing triangle pairs between two surfaces."""
    tris_a = np.asarray(tris_a, dtype=np.int64)
    tris_b = np.asarray(tris_b, dtype=np.int64)
    if len(tris_a) == 0 or len(tris_b) == 0:
        return 0
    bmin = verts_b[tris_b].min(axis=1)
    bmax = verts_b[tris_b].max(axis=1)
    tree = Bvh(bmin, bmax, margin=0.0)
    qa, pb = tree.query(verts_a[tris_a].min(axis=1), verts_a[tris_a].max(axis=1))
    if len(qa) == 0:
        return 0
    return int(triangle_pairs_intersect(verts_a, tris_a[qa], verts_b, tris_b[pb]).sum())


# =============================================================================
# Containment and penetration depth
# =============================================================================


def winding_numbers(points: np.ndarray, verts: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Generalized winding number of each point w.r.t. a closed surface.

    Values near 1 inside, near 0 outside (watertight outward-oriented mesh).
    Uses the solid-angle formula of van Oosterom and Strackee.
    """
    points = np.atleast_2d(points)
    w = np.zeros(len(points), dtype=np.float64)
    # chunk over triangles to bound the (points x tris) intermediate
    chunk = max(1, int(4e6 // max(len(points), 1)))
    tris = np.asarray(tris, dtype=np.int64)
    for start in range(0, len(tris), chunk):
        t = tris[start : start + chunk]
        a = verts[t[:, 0]][None] - points[:, None]  # (np, nt, 3)
        b = verts[t[:, 1]][None] - points[:, None]
        c = verts[t[:, 2]][None] - points[:, None]
        la = np.linalg.norm(a, axis=2)
        lb = np.linalg.norm(b, axis=2)
        lc = np.linalg.norm(c, axis=2)
        num = np.einsum("ptk,ptk->pt", a, np.cross(b, c))
        den = (
            la * lb * lc
            + np.einsum("ptk,ptk->pt", a, b) * lc
            + np.einsum("ptk,ptk->pt", b, c) * la
            + np.einsum("ptk,ptk->pt", c, a) * lb
        )
        w += np.arctan2(num, den).sum(axis=1)
    return w / (2.0 * np.pi)


def surface_distance(points: np.ndarray, mesh: SurfaceMesh) -> np.ndarray:
    """Unsigned distance (m) from each point to the surface."""
    points = np.atleast_2d(points)
    tris = np.asarray(mesh.triangles, dtype=np.int64)
    best = np.full(len(points), np.inf)
    chunk = max(1, int(2e6 // max(len(tris), 1)))
    for start in range(0, len(points), chunk):
        p = points[start : start + chunk]
        rep_p = np.repeat(p, len(tris), axis=0)
        t0 = np.tile(mesh.vertices[tris[:, 0]], (len(p), 1))
        t1 = np.tile(mesh.vertices[tris[:, 1]], (len(p), 1))
        t2 = np.tile(mesh.vertices[tris[:, 2]], (len(p), 1))
        d2, _ = point_triangle_dist2(rep_p, t0, t1, t2)
        best[start : start + chunk] = np.sqrt(d2.reshape(len(p), len(tris)).min(axis=1))
    return best


def surface_samples(
    verts: np.ndarray, tris: np.ndarray, edges: np.ndarray | None = None
) -> np.ndarray:
    """Vertices plus edge midpoints plus triangle centroids.

    Containment tests on vertices alone miss face-first intrusion into a
    region that holds no mesh vertex (a flat palm pressed into a sphere);
    the midpoints and centroids catch those at coarse mesh resolution.
    """
    tris = np.asarray(tris, dtype=np.int64)
    if edges is None:
        edges = unique_edges(tris)
    edges = np.asarray(edges, dtype=np.int64)
    mids = 0.5 * (verts[edges[:, 0]] + verts[edges[:, 1]])
    cents = verts[tris].mean(axis=1)
    return np.concatenate([verts, mids, cents])


def max_penetration(hand_points: np.ndarray, object_mesh: SurfaceMesh) -> float:
    """Deepest intrusion (m) of the given points into a watertight mesh.

    Zero when no point is contained.
    """
    if len(hand_points) == 0:
        return 0.0
    w = winding_numbers(hand_points, object_mesh.vertices, object_mesh.triangles)
    inside = w > 0.5
    if not inside.any():
        return 0.0
    return float(surface_distance(hand_points[inside], object_mesh).max())
