"""Candidate contact-pair generation over vertex/triangle/edge tables.

Exclusion rules (standard barrier-method practice):
  - pairs within the same rigid (affine) body never collide;
  - pairs of primitives sharing a mesh vertex are topologically adjacent and
    excluded;
  - body pairs listed in `excluded_pairs` never collide (articulated links
    whose surfaces touch at their mounting faces would otherwise start the
    barrier at zero distance);
  - kinematic-ground pairs are excluded: the ground cannot yield, so a
    barrier there would only fight the commanded targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bvh import Bvh

_EMPTY = np.empty((0, 2), dtype=np.int64)


@dataclass
class CollisionTables:
    """Static topology of all collidable surface primitives in a scene.

    Vertex ids index a global surface-vertex table; bodies are integers.
    """

    tris: np.ndarray  # (nt, 3) global vertex ids
    edges: np.ndarray  # (ne, 2) global vertex ids
    vert_body: np.ndarray  # (nv,)
    tri_body: np.ndarray  # (nt,)
    edge_body: np.ndarray  # (ne,)
    body_is_rigid: np.ndarray  # (nb,) bool
    body_is_kinematic: np.ndarray  # (nb,) bool
    excluded_pairs: np.ndarray = field(
        default_factory=lambda: np.empty((0, 2), dtype=np.int64)
    )  # (k, 2) body id pairs, order irrelevant

    @property
    def n_verts(self) -> int:
        return len(self.vert_body)

    def excluded_keys(self) -> np.ndarray:
        """Excluded body pairs encoded as min*nb + max for vectorized lookup."""
        nb = len(self.body_is_rigid)
        p = np.sort(np.asarray(self.excluded_pairs, dtype=np.int64).reshape(-1, 2), axis=1)
        return np.unique(p[:, 0] * nb + p[:, 1])

    def needs_pair_search(self) -> bool:
        """Primitive-vs-primitive search is pointless for a single rigid body."""
        n_bodies = len(self.body_is_rigid)
        if n_bodies >= 2:
            return True
        return bool(n_bodies == 1 and not self.body_is_rigid[0])


@dataclass
class CandidateSet:
    """Deduplicated, lexicographically sorted candidate pairs."""

    pt: np.ndarray = field(default_factory=lambda: _EMPTY.copy())  # (n, 2) vert, tri
    ee: np.ndarray = field(default_factory=lambda: _EMPTY.copy())  # (m, 2) edge i < j
    ground: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def total(self) -> int:
        return len(self.pt) + len(self.ee) + len(self.ground)


class BroadPhaseCache:
    """Keeps BVHs alive across queries; rebuilds only after large motion."""

    def __init__(self):
        self.tri_tree = None
        self.edge_tree = None
        self.built_at = None
        self.margin = None

    def trees(self, x, tables, inflation):
        tmin, tmax = _prim_boxes(x, tables.tris)
        emin, emax = _prim_boxes(x, tables.edges)
        rebuild = (
            self.tri_tree is None
            or self.margin != inflation
            or np.abs(x - self.built_at).max() > 0.5 * inflation
        )
        if rebuild:
            self.tri_tree = Bvh(tmin, tmax, margin=inflation)
            self.edge_tree = Bvh(emin, emax, margin=inflation)
            self.built_at = x.copy()
            self.margin = inflation
        else:
            self.tri_tree.refit(tmin, tmax)
            self.edge_tree.refit(emin, emax)
        return self.tri_tree, self.edge_tree


def _prim_boxes(x: np.ndarray, prims: np.ndarray):
    pts = x[prims]  # (n, k, 3)
    return pts.min(axis=1), pts.max(axis=1)


def _pair_excluded(b1, b2, tables):
    keys = tables.excluded_keys()
    if not len(keys):
        return np.zeros(len(b1), dtype=bool)
    nb = len(tables.body_is_rigid)
    k = np.minimum(b1, b2) * nb + np.maximum(b1, b2)
    return np.isin(k, keys)


def _filter_pt(verts, tris_hit, tables):
    tri_v = tables.tris[tris_hit]
    adjacent = (tri_v == verts[:, None]).any(axis=1)
    vb = tables.vert_body[verts]
    tb = tables.tri_body[tris_hit]
    same_rigid = (vb == tb) & tables.body_is_rigid[vb]
    keep = ~(adjacent | same_rigid | _pair_excluded(vb, tb, tables))
    return verts[keep], tris_hit[keep]


def _filter_ee(ei, ej, tables):
    keep = ei < ej
    ei, ej = ei[keep], ej[keep]
    a = tables.edges[ei]
    b = tables.edges[ej]
    shared = (
        (a[:, 0] == b[:, 0]) | (a[:, 0] == b[:, 1])
        | (a[:, 1] == b[:, 0]) | (a[:, 1] == b[:, 1])
    )
    ba = tables.edge_body[ei]
    bb = tables.edge_body[ej]
    same_rigid = (ba == bb) & tables.body_is_rigid[ba]
    keep = ~(shared | same_rigid | _pair_excluded(ba, bb, tables))
    return ei[keep], ej[keep]


def _ground_candidates(x, dx, tables, inflation, ground_y):
    y = x[:, 1]
    lo = y if dx is None else np.minimum(y, y + dx[:, 1])
    mask = (lo < ground_y + inflation) & ~tables.body_is_kinematic[tables.vert_body]
    return np.nonzero(mask)[0].astype(np.int64)


def _collect(x_lo, x_hi, tables, trees):
    tri_tree, edge_tree = trees
    # point-triangle: query vertex boxes against the triangle tree
    vq, th = tri_tree.query(x_lo, x_hi)
    vq, th = _filter_pt(vq, th, tables)
    pt = np.stack([vq, th], axis=1) if len(vq) else _EMPTY.copy()

    emin = np.minimum(x_lo[tables.edges[:, 0]], x_lo[tables.edges[:, 1]])
    emax = np.maximum(x_hi[tables.edges[:, 0]], x_hi[tables.edges[:, 1]])
    ei, ej = edge_tree.query(emin, emax)
    ei, ej = _filter_ee(ei, ej, tables)
    ee = np.stack([ei, ej], axis=1) if len(ei) else _EMPTY.copy()

    if len(pt):
        pt = pt[np.lexsort((pt[:, 1], pt[:, 0]))]
    if len(ee):
        ee = ee[np.lexsort((ee[:, 1], ee[:, 0]))]
    return pt, ee


def broad_phase(
    x: np.ndarray,
    tables: CollisionTables,
    inflation: float,
    ground_y: float | None = None,
    cache: BroadPhaseCache | None = None,
) -> CandidateSet:
    """All candidate pairs possibly within `inflation` at positions x.

    Superset guarantee: every non-excluded pair with distance < inflation is
    returned (boxes are inflated by the full `inflation`).
    """
    out = CandidateSet()
    if tables.needs_pair_search():
        if cache is None:
            cache = BroadPhaseCache()
        trees = cache.trees(x, tables, inflation)
        out.pt, out.ee = _collect(x, x, tables, trees)
    if ground_y is not None:
        out.ground = _ground_candidates(x, None, tables, inflation, ground_y)
    return out


def broad_phase_ccd(
    x: np.ndarray,
    dx: np.ndarray,
    tables: CollisionTables,
    inflation: float = 1e-9,
    ground_y: float | None = None,
) -> CandidateSet:
    """Candidate pairs over the swept trajectory x -> x + dx.

    Boxes cover both endpoints of every primitive's motion, so any pair that
    could touch along the linear trajectory is included.
    """
    out = CandidateSet()
    if tables.needs_pair_search():
        x_lo = np.minimum(x, x + dx)
        x_hi = np.maximum(x, x + dx)
        tmin, tmax = _prim_boxes(x_lo, tables.tris)
        tmax = np.maximum(tmax, _prim_boxes(x_hi, tables.tris)[1])
        tmin = np.minimum(tmin, _prim_boxes(x_hi, tables.tris)[0])
        tri_tree = Bvh(tmin, tmax, margin=inflation)
        emin, emax = _prim_boxes(x_lo, tables.edges)
        emax = np.maximum(emax, _prim_boxes(x_hi, tables.edges)[1])
        emin = np.minimum(emin, _prim_boxes(x_hi, tables.edges)[0])
        edge_tree = Bvh(emin, emax, margin=inflation)
        out.pt, out.ee = _collect(x_lo, x_hi, tables, (tri_tree, edge_tree))
    if ground_y is not None:
        out.ground = _ground_candidates(x, dx, tables, inflation, ground_y)
    return out
