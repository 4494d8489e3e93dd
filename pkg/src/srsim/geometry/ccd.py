"""Continuous collision detection by per-pair conservative advancement.

Each advance moves time forward by d/l, where d is the current pair distance
and l bounds the relative approach speed, so distance can touch but never
cross zero; the final time is scaled by a 0.9 safety factor. The result may
under-report the impact time but never over-reports.
"""

from __future__ import annotations

import numpy as np

from .broadphase import CandidateSet, CollisionTables
from .distance import edge_edge_dist2, point_triangle_dist2

CONSERVATIVE = 0.9
_STOP_RATIO = 0.01  # stop once distance drops below this fraction of the start
_MAX_ITER = 64


class IntersectionError(RuntimeError):
    """Raised when CCD is asked to advance from an already-touching state."""


def _stencil_dist(px: np.ndarray, kind: str) -> np.ndarray:
    if kind == "pt":
        d2, _ = point_triangle_dist2(px[:, 0], px[:, 1], px[:, 2], px[:, 3],
                                     validate=False)
        return np.sqrt(d2)
    d2, _, _ = edge_edge_dist2(px[:, 0], px[:, 1], px[:, 2], px[:, 3], validate=False)
    return np.sqrt(d2)


def pair_ccd(px: np.ndarray, pdx: np.ndarray, kind: str,
             conservative: float = CONSERVATIVE) -> np.ndarray:
    """Largest safe step fraction per stencil.

    Args:
        px: (n, 4, 3) stencil positions — (p, t0, t1, t2) or (a0, a1, b0, b1).
        pdx: (n, 4, 3) stencil displacements over the full step.
        kind: "pt" or "ee".

    Returns:
        (n,) step fractions in (0, 1].
    """
    n = len(px)
    if n == 0:
        return np.ones(0, dtype=np.float64)
    rel = pdx - pdx.mean(axis=1, keepdims=True)
    speed = np.linalg.norm(rel, axis=2)  # (n, 4)
    if kind == "pt":
        l = speed[:, 0] + speed[:, 1:].max(axis=1)
    else:
        l = speed[:, :2].max(axis=1) + speed[:, 2:].max(axis=1)

    d0 = _stencil_dist(px, kind)
    if (d0 <= 0).any():
        raise IntersectionError("CCD started from a touching or intersecting pair")

    alpha = np.ones(n, dtype=np.float64)
    idx = np.nonzero(l > 1e-300)[0]
    t = np.zeros(len(idx), dtype=np.float64)
    d = d0[idx]
    g = _STOP_RATIO * d0[idx]

    for _ in range(_MAX_ITER):
        if len(idx) == 0:
            break
        t_new = t + d / l[idx]
        done = t_new >= 1.0  # safely crossed the whole step: no impact
        if done.any():
            keep = ~done
            idx, t, t_new, g = idx[keep], t[keep], t_new[keep], g[keep]
            if len(idx) == 0:
                break
        x_new = px[idx] + t_new[:, None, None] * pdx[idx]
        d = _stencil_dist(x_new, kind)
        t = t_new
        hit = d <= g
        if hit.any():
            alpha[idx[hit]] = conservative * t[hit]
            keep = ~hit
            idx, t, d, g = idx[keep], t[keep], d[keep], g[keep]
    # iteration cap: whatever time was safely accumulated, scaled, is still safe
    if len(idx):
        alpha[idx] = np.minimum(1.0, np.maximum(conservative * t, 1e-12))
    return alpha


def ground_ccd(y: np.ndarray, dy: np.ndarray, ground_y: float,
               conservative: float = CONSERVATIVE) -> float:
    """Earliest scaled crossing time of vertices against the ground plane."""
    if len(y) == 0:
        return 1.0
    if (y <= ground_y).any():
        raise IntersectionError("CCD started with a vertex at or below the ground")
    falling = dy < 0
    if not falling.any():
        return 1.0
    t = (y[falling] - ground_y) / -dy[falling]
    t = t[t <= 1.0]
    if len(t) == 0:
        return 1.0
    return float(min(1.0, conservative * t.min()))


def ccd_earliest_alpha(
    x: np.ndarray,
    dx: np.ndarray,
    cand: CandidateSet,
    tables: CollisionTables,
    ground_y: float | None = None,
    conservative: float = CONSERVATIVE,
) -> float:
    """Largest α such that x + t·α·dx, t ∈ [0, 1], keeps all candidate pair
    distances strictly positive. Conservative, never over-reports."""
    alpha = 1.0
    if len(cand.pt):
        v = cand.pt[:, 0]
        tv = tables.tris[cand.pt[:, 1]]
        ids = np.concatenate([v[:, None], tv], axis=1)
        alpha = min(alpha, pair_ccd(x[ids], dx[ids], "pt", conservative).min())
    if len(cand.ee):
        ea = tables.edges[cand.ee[:, 0]]
        eb = tables.edges[cand.ee[:, 1]]
        ids = np.concatenate([ea, eb], axis=1)
        alpha = min(alpha, pair_ccd(x[ids], dx[ids], "ee", conservative).min())
    if ground_y is not None and len(cand.ground):
        g = cand.ground
        alpha = min(alpha, ground_ccd(x[g, 1], dx[g, 1], ground_y, conservative))
    return float(alpha)
