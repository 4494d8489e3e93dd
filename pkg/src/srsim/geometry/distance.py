"""Point-triangle and edge-edge squared distances with closest-feature regions.

Region codes identify the closest feature so derivative code can apply the
correct reduced formula:

  point-triangle: 0,1,2 = vertex t0/t1/t2; 3,4,5 = edge t0t1/t1t2/t2t0; 6 = face
  edge-edge:      3*ca + cb where ca, cb in {0: endpoint 0, 1: endpoint 1,
                  2: interior}; 8 = interior-interior
"""

from __future__ import annotations

import numpy as np

PT_V0, PT_V1, PT_V2, PT_E01, PT_E12, PT_E20, PT_INT = range(7)
PT_REGIONS = ("v0", "v1", "v2", "e01", "e12", "e20", "interior")
EE_REGIONS = tuple(
    f"{a}-{b}"
    for a in ("a0", "a1", "interior")
    for b in ("b0", "b1", "interior")
)
EE_INT_INT = 8

_DEGENERATE_AREA = 1e-12  # m^2
_DEGENERATE_EDGE = 1e-12  # m
# nearly-parallel threshold on |da x db|^2 relative to |da|^2 |db|^2
PARALLEL_EPS = 1e-3
# below this, a*e - b*b is indistinguishable from roundoff (a few ulps of
# a*e) and the line-line solve returns noise quotients
_EE_DENOM_EPS = 1e-12


# =============================================================================
# Point-triangle
# =============================================================================


def point_triangle_regions(p, t0, t1, t2) -> np.ndarray:
    """Closest-feature region for batches of point-triangle queries.

    All arguments are (n, 3). Returns (n,) int8 region codes. Follows the
    classic closest-point-on-triangle case analysis.
    """
    ab = t1 - t0
    ac = t2 - t0
    ap = p - t0
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - t1
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - t2
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    conds = [
        (d1 <= 0) & (d2 <= 0),
        (d3 >= 0) & (d4 <= d3),
        (d6 >= 0) & (d5 <= d6),
        (vc <= 0) & (d1 >= 0) & (d3 <= 0),
        (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0),
        (vb <= 0) & (d2 >= 0) & (d6 <= 0),
    ]
    codes = [PT_V0, PT_V1, PT_V2, PT_E01, PT_E12, PT_E20]
    return np.select(conds, codes, default=PT_INT).astype(np.int8)


def _point_line_dist2(p, e0, e1):
    e = e1 - e0
    w = p - e0
    cr = np.cross(e, w)
    ee = np.maximum(np.einsum("ij,ij->i", e, e), 1e-300)
    return np.einsum("ij,ij->i", cr, cr) / ee


def point_triangle_dist2(p, t0, t1, t2, regions=None, validate=True):
    """Squared distance from points to closed triangles.

    Args:
        p, t0, t1, t2: (n, 3) float64 arrays (a single query may be passed as
            shape (3,) and is broadcast).
        regions: optional precomputed (n,) region codes.

    Returns:
        (dist2 (n,), regions (n,)). Scalars when the input was unbatched.
    """
    single = np.ndim(p) == 1
    p, t0, t1, t2 = np.atleast_2d(p, t0, t1, t2)
    if validate:
        area = np.linalg.norm(np.cross(t1 - t0, t2 - t0), axis=1) / 2.0
        if (area <= _DEGENERATE_AREA).any():
            raise ValueError("degenerate triangle in point-triangle distance query")
    if regions is None:
        regions = point_triangle_regions(p, t0, t1, t2)
    d2 = np.empty(len(p), dtype=np.float64)

    for code, a in ((PT_V0, t0), (PT_V1, t1), (PT_V2, t2)):
        m = regions == code
        if m.any():
            diff = p[m] - a[m]
            d2[m] = np.einsum("ij,ij->i", diff, diff)
    for code, (a, b) in ((PT_E01, (t0, t1)), (PT_E12, (t1, t2)), (PT_E20, (t2, t0))):
        m = regions == code
        if m.any():
            d2[m] = _point_line_dist2(p[m], a[m], b[m])
    m = regions == PT_INT
    if m.any():
        n = np.cross(t1[m] - t0[m], t2[m] - t0[m])
        w = np.einsum("ij,ij->i", p[m] - t0[m], n)
        d2[m] = w * w / np.maximum(np.einsum("ij,ij->i", n, n), 1e-300)

    if single:
        return float(d2[0]), int(regions[0])
    return d2, regions


# =============================================================================
# Edge-edge
# =============================================================================


def edge_edge_regions(a0, a1, b0, b1):
    """Closest-feature regions and parallel flags for segment-segment queries.

    Returns:
        (regions (n,) int8, parallel (n,) bool). The parallel flag marks pairs
        with |da x db|^2 < PARALLEL_EPS * |da|^2 |db|^2, which the contact
        energy mollifies.
    """
    d1 = a1 - a0
    d2 = b1 - b0
    r = a0 - b0
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    c = np.einsum("ij,ij->i", d1, r)
    b = np.einsum("ij,ij->i", d1, d2)
    denom = a * e - b * b
    parallel = denom < PARALLEL_EPS * a * e

    # when denom is roundoff noise the solve can return quotients that land
    # both parameters interior, and the interior-interior (line-line)
    # distance is meaningless for parallel lines; clamped projection from
    # s = 0 is exact there
    degenerate = denom <= _EE_DENOM_EPS * a * e
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(
            ~degenerate, (b * f - c * e) / np.where(~degenerate, denom, 1.0), 0.0
        )
    s = np.clip(s, 0.0, 1.0)
    t = (b * s + f) / e
    recompute = (t < 0.0) | (t > 1.0)
    t = np.clip(t, 0.0, 1.0)
    s = np.where(recompute, np.clip((b * t - c) / a, 0.0, 1.0), s)

    ca = np.where(s <= 0.0, 0, np.where(s >= 1.0, 1, 2))
    cb = np.where(t <= 0.0, 0, np.where(t >= 1.0, 1, 2))
    regions = (3 * ca + cb).astype(np.int8)
    return regions, parallel


def edge_edge_dist2(a0, a1, b0, b1, regions=None, validate=True):
    """Squared distance between closed segments (a0,a1) and (b0,b1).

    Returns:
        (dist2, regions, parallel). Scalars when the input was unbatched.
    """
    single = np.ndim(a0) == 1
    a0, a1, b0, b1 = np.atleast_2d(a0, a1, b0, b1)
    if validate:
        la = np.einsum("ij,ij->i", a1 - a0, a1 - a0)
        lb = np.einsum("ij,ij->i", b1 - b0, b1 - b0)
        if (la <= _DEGENERATE_EDGE**2).any() or (lb <= _DEGENERATE_EDGE**2).any():
            raise ValueError("degenerate edge in edge-edge distance query")
    if regions is None:
        regions, parallel = edge_edge_regions(a0, a1, b0, b1)
    else:
        _, parallel = edge_edge_regions(a0, a1, b0, b1)

    pts = (a0, a1, b0, b1)
    d2 = np.empty(len(a0), dtype=np.float64)
    for ra in range(3):
        for rb in range(3):
            code = 3 * ra + rb
            m = regions == code
            if not m.any():
                continue
            if ra < 2 and rb < 2:
                diff = pts[ra][m] - pts[2 + rb][m]
                d2[m] = np.einsum("ij,ij->i", diff, diff)
            elif ra < 2:  # endpoint of a against interior of b
                d2[m] = _point_line_dist2(pts[ra][m], b0[m], b1[m])
            elif rb < 2:  # endpoint of b against interior of a
                d2[m] = _point_line_dist2(pts[2 + rb][m], a0[m], a1[m])
            else:  # interior-interior: line-line distance
                n = np.cross(a1[m] - a0[m], b1[m] - b0[m])
                w = np.einsum("ij,ij->i", b0[m] - a0[m], n)
                d2[m] = w * w / np.maximum(np.einsum("ij,ij->i", n, n), 1e-300)

    if single:
        return float(d2[0]), int(regions[0]), bool(parallel[0])
    return d2, regions, parallel
