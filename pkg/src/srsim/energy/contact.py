"""Barrier contact energy over broad-phase candidate pairs.

Every candidate whose squared distance falls under shat contributes
kappa * b(s, shat); near-parallel edge pairs are tapered by a mollifier on
the cross-product magnitude so the edge-edge term stays C^1 where the
closest-point pair is ambiguous. Stencil Hessians are projected to PSD at
the surface-vertex level, then lifted to global coordinates: soft vertices
map to their own three DoF, rigid-surface vertices map through the affine
jacobian of their body (congruence keeps the projection PSD).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry.distance import (
    edge_edge_dist2,
    edge_edge_regions,
    point_triangle_dist2,
    point_triangle_regions,
)
from ..geometry.distgrad import dist2_derivatives
from .barrier import BarrierParams, barrier_sq
from .spd import spd_project
from .term import EnergyTerm

# eps_x = scale * rest_len_a^2 * rest_len_b^2: mollifier engages where the
# sine of the angle between the edges falls under 1e-3
EE_MOLLIFIER_SCALE = 1e-6


@dataclass
class ContactIndex:
    """Maps collision-surface slots to global DoF.

    Soft slots own three contiguous state entries; rigid slots share their
    body's 12 affine DoF and carry the rest-pose arm used by the lift.
    """

    is_affine: np.ndarray  # (nv,) bool
    soft_dof: np.ndarray  # (nv, 3) int64; rows for affine slots unused
    body_offset: np.ndarray  # (nv,) int64 affine block starts; soft rows unused
    rest: np.ndarray  # (nv, 3) rest positions (lift arms for affine slots)
    edge_rest_len2: np.ndarray  # (ne,) squared rest lengths of collision edges

    def world_positions(self, x: np.ndarray) -> np.ndarray:
        xw = np.empty((len(self.is_affine), 3), dtype=np.float64)
        soft = ~self.is_affine
        if soft.any():
            xw[soft] = x[self.soft_dof[soft]]
        if self.is_affine.any():
            off = self.body_offset[self.is_affine]
            p = x[off[:, None] + np.arange(3)]
            a = x[off[:, None] + 3 + np.arange(9)].reshape(-1, 3, 3)
            xw[self.is_affine] = p + np.einsum("nij,nj->ni", a, self.rest[self.is_affine])
        return xw


@dataclass
class ContactStats:
    min_dist: float = np.inf  # m, over all candidates
    active: int = 0  # pairs inside the barrier support


# =============================================================================
# Lifting local stencil blocks to global DoF
# =============================================================================


def _lift_vec(g, r):
    """(m, 3) gradient on a rigid-surface point -> (m, 12) on its body."""
    out = np.empty((len(g), 12), dtype=np.float64)
    out[:, :3] = g
    out[:, 3:] = (g[:, :, None] * r[:, None, :]).reshape(-1, 9)
    return out


def _lift_cols(h, r):
    """(m, a, 3) -> (m, a, 12): right-multiply by the affine jacobian."""
    m, a = h.shape[:2]
    out = np.empty((m, a, 12), dtype=np.float64)
    out[:, :, :3] = h
    out[:, :, 3:] = (h[:, :, :, None] * r[:, None, None, :]).reshape(m, a, 9)
    return out


def _lift_rows(h, r):
    """(m, 3, b) -> (m, 12, b): left-multiply by the transposed jacobian."""
    m, b = h.shape[0], h.shape[2]
    out = np.empty((m, 12, b), dtype=np.float64)
    out[:, :3, :] = h
    out[:, 3:, :] = (h[:, :, None, :] * r[:, None, :, None]).reshape(m, 9, b)
    return out


def lift_stencil(slots, grad, hess, cindex: ContactIndex):
    """Scatter per-stencil blocks into EnergyTerm pieces.

    slots: (m, ns) surface-slot ids; grad: (m, 3 ns); hess: (m, 3 ns, 3 ns).
    Rows are grouped by their slot-kind signature so each group assembles as
    one uniform dense block batch. Two slots on the same rigid body emit the
    same 12 DoF twice; assembly accumulates duplicates.
    """
    m, ns = slots.shape
    if m == 0:
        return []
    kinds = cindex.is_affine[slots]  # (m, ns)
    sig = kinds @ (1 << np.arange(ns))
    terms = []
    for key in np.unique(sig):
        rows = np.nonzero(sig == key)[0]
        sl = slots[rows]
        kin = kinds[rows[0]]  # identical across the group
        widths = np.where(kin, 12, 3)
        starts = np.concatenate([[0], np.cumsum(widths)])
        k_total = int(starts[-1])
        nr = len(rows)
        idx = np.empty((nr, k_total), dtype=np.int64)
        g_out = np.empty((nr, k_total), dtype=np.float64)
        h_out = np.empty((nr, k_total, k_total), dtype=np.float64)
        gg = grad[rows]
        hg = hess[rows]
        arms = [cindex.rest[sl[:, i]] if kin[i] else None for i in range(ns)]
        for i in range(ns):
            a, b = starts[i], starts[i + 1]
            gi = gg[:, 3 * i : 3 * i + 3]
            if kin[i]:
                idx[:, a:b] = cindex.body_offset[sl[:, i]][:, None] + np.arange(12)
                g_out[:, a:b] = _lift_vec(gi, arms[i])
            else:
                idx[:, a:b] = cindex.soft_dof[sl[:, i]]
                g_out[:, a:b] = gi
            for j in range(ns):
                c, d = starts[j], starts[j + 1]
                blk = hg[:, 3 * i : 3 * i + 3, 3 * j : 3 * j + 3]
                if kin[j]:
                    blk = _lift_cols(blk, arms[j])
                if kin[i]:
                    blk = _lift_rows(blk, arms[i])
                h_out[:, a:b, c:d] = blk
        terms.append(EnergyTerm.from_blocks(0.0, idx, g_out, h_out))
    return terms


def merge_terms(value: float, terms) -> EnergyTerm:
    out = EnergyTerm(value)
    if terms:
        out.gidx = np.concatenate([t.gidx for t in terms])
        out.gval = np.concatenate([t.gval for t in terms])
        out.hrow = np.concatenate([t.hrow for t in terms])
        out.hcol = np.concatenate([t.hcol for t in terms])
        out.hval = np.concatenate([t.hval for t in terms])
    return out


# =============================================================================
# Edge-edge mollifier on c = |u x v|^2 = |u|^2 |v|^2 - (u . v)^2
# =============================================================================

# maps (u, v) blocks to the 4-point stencil (a0, a1, b0, b1)
_EDGE_EXPAND = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])


def _mollifier(c, eps_x):
    t = c / eps_x
    below = t < 1.0
    e = np.where(below, t * (2.0 - t), 1.0)
    de = np.where(below, (2.0 - 2.0 * t) / eps_x, 0.0)
    d2e = np.where(below, -2.0 / (eps_x * eps_x), 0.0)
    return e, de, d2e


def _cross2_derivatives(u, v):
    """c, dc/dx (m, 12), d2c/dx2 (m, 12, 12) over the (a0, a1, b0, b1) stencil."""
    uu = np.einsum("ij,ij->i", u, u)
    vv = np.einsum("ij,ij->i", v, v)
    uv = np.einsum("ij,ij->i", u, v)
    c = uu * vv - uv * uv
    cu = 2.0 * (vv[:, None] * u - uv[:, None] * v)
    cv = 2.0 * (uu[:, None] * v - uv[:, None] * u)
    eye = np.eye(3)
    cuu = 2.0 * vv[:, None, None] * eye - 2.0 * np.einsum("ni,nj->nij", v, v)
    cvv = 2.0 * uu[:, None, None] * eye - 2.0 * np.einsum("ni,nj->nij", u, u)
    cuv = (
        4.0 * np.einsum("ni,nj->nij", u, v)
        - 2.0 * np.einsum("ni,nj->nij", v, u)
        - 2.0 * uv[:, None, None] * eye
    )
    gw = np.stack([cu, cv], axis=1)  # (m, 2, 3)
    hw = np.empty((len(u), 2, 2, 3, 3), dtype=np.float64)
    hw[:, 0, 0] = cuu
    hw[:, 0, 1] = cuv
    hw[:, 1, 0] = np.transpose(cuv, (0, 2, 1))
    hw[:, 1, 1] = cvv
    grad = np.einsum("ia,mak->mik", _EDGE_EXPAND, gw).reshape(-1, 12)
    hess = np.einsum("ia,jb,mabkl->mikjl", _EDGE_EXPAND, _EDGE_EXPAND, hw).reshape(
        -1, 12, 12
    )
    return c, grad, hess


def _cross2_value(u, v):
    uu = np.einsum("ij,ij->i", u, u)
    vv = np.einsum("ij,ij->i", v, v)
    uv = np.einsum("ij,ij->i", u, v)
    return uu * vv - uv * uv


# =============================================================================
# Contact energy
# =============================================================================


def contact_energy(
    xw: np.ndarray,
    cand,
    tables,
    cindex: ContactIndex,
    bp: BarrierParams,
    ground_y: float | None = None,
    derivatives: bool = True,
):
    """Total barrier energy over a candidate set at surface positions xw.

    Returns (EnergyTerm, ContactStats). With derivatives=False the term
    carries only the value (inf when any candidate distance reaches zero,
    so line searches reject intersecting states; the derivative path raises
    instead since CCD must keep iterates strictly feasible).
    """
    shat = bp.shat
    kappa = bp.kappa
    value = 0.0
    terms = []
    stats = ContactStats()
    min_s = np.inf

    # ---- point-triangle -----------------------------------------------------
    if len(cand.pt):
        v_ids = cand.pt[:, 0]
        tri = tables.tris[cand.pt[:, 1]]
        p, t0, t1, t2 = xw[v_ids], xw[tri[:, 0]], xw[tri[:, 1]], xw[tri[:, 2]]
        regions = point_triangle_regions(p, t0, t1, t2)
        d2, _ = point_triangle_dist2(p, t0, t1, t2, regions=regions, validate=False)
        min_s = min(min_s, d2.min()) if len(d2) else min_s
        act = d2 < shat
        stats.active += int(act.sum())
        if act.any():
            if (d2[act] <= 0).any():
                if derivatives:
                    raise FloatingPointError("zero contact distance in derivative pass")
                return EnergyTerm(np.inf), _finish(stats, min_s)
            slots = np.stack([v_ids, tri[:, 0], tri[:, 1], tri[:, 2]], axis=1)[act]
            if derivatives:
                sten = np.stack([p, t0, t1, t2], axis=1)[act]
                s, gs, hs = dist2_derivatives(sten, regions[act], "pt")
                b, db, d2b = barrier_sq(s, shat)
                value += kappa * b.sum()
                grad = kappa * db[:, None] * gs
                hess = kappa * (
                    d2b[:, None, None] * np.einsum("ni,nj->nij", gs, gs)
                    + db[:, None, None] * hs
                )
                terms += lift_stencil(slots, grad, spd_project(hess), cindex)
            else:
                value += kappa * barrier_sq(d2[act], shat, order=0).sum()

    # ---- edge-edge ----------------------------------------------------------
    if len(cand.ee):
        ea = tables.edges[cand.ee[:, 0]]
        eb = tables.edges[cand.ee[:, 1]]
        a0, a1, b0, b1 = xw[ea[:, 0]], xw[ea[:, 1]], xw[eb[:, 0]], xw[eb[:, 1]]
        regions, _ = edge_edge_regions(a0, a1, b0, b1)
        d2, _, _ = edge_edge_dist2(a0, a1, b0, b1, regions=regions, validate=False)
        min_s = min(min_s, d2.min()) if len(d2) else min_s
        act = d2 < shat
        stats.active += int(act.sum())
        if act.any():
            if (d2[act] <= 0).any():
                if derivatives:
                    raise FloatingPointError("zero contact distance in derivative pass")
                return EnergyTerm(np.inf), _finish(stats, min_s)
            eps_x = (
                EE_MOLLIFIER_SCALE
                * cindex.edge_rest_len2[cand.ee[act, 0]]
                * cindex.edge_rest_len2[cand.ee[act, 1]]
            )
            slots = np.stack([ea[:, 0], ea[:, 1], eb[:, 0], eb[:, 1]], axis=1)[act]
            if derivatives:
                sten = np.stack([a0, a1, b0, b1], axis=1)[act]
                s, gs, hs = dist2_derivatives(sten, regions[act], "ee")
                b, db, d2b = barrier_sq(s, shat)
                c, gc, hc = _cross2_derivatives(
                    sten[:, 1] - sten[:, 0], sten[:, 3] - sten[:, 2]
                )
                e, de, d2e = _mollifier(c, eps_x)
                value += kappa * (e * b).sum()
                grad = kappa * ((de * b)[:, None] * gc + (e * db)[:, None] * gs)
                gcs = np.einsum("ni,nj->nij", gc, gs)
                hess = kappa * (
                    (d2e * b)[:, None, None] * np.einsum("ni,nj->nij", gc, gc)
                    + (de * b)[:, None, None] * hc
                    + (de * db)[:, None, None] * (gcs + np.transpose(gcs, (0, 2, 1)))
                    + (e * d2b)[:, None, None] * np.einsum("ni,nj->nij", gs, gs)
                    + (e * db)[:, None, None] * hs
                )
                terms += lift_stencil(slots, grad, spd_project(hess), cindex)
            else:
                c = _cross2_value(a1[act] - a0[act], b1[act] - b0[act])
                e = np.minimum(c / eps_x, 1.0)
                e = e * (2.0 - e)
                value += kappa * (e * barrier_sq(d2[act], shat, order=0)).sum()

    # ---- ground plane -------------------------------------------------------
    if ground_y is not None and len(cand.ground):
        d = xw[cand.ground, 1] - ground_y
        if (d <= 0).any():
            if derivatives:
                raise FloatingPointError("vertex at or below ground in derivative pass")
            return EnergyTerm(np.inf), _finish(stats, min(min_s, 0.0))
        s = d * d
        min_s = min(min_s, s.min())
        act = s < shat
        stats.active += int(act.sum())
        if act.any():
            if derivatives:
                b, db, d2b = barrier_sq(s[act], shat)
                da = d[act]
                value += kappa * b.sum()
                grad = np.zeros((len(da), 3), dtype=np.float64)
                grad[:, 1] = kappa * db * 2.0 * da
                hess = np.zeros((len(da), 3, 3), dtype=np.float64)
                # PSD projection of a diag(0, h_yy, 0) block is a clamp
                hess[:, 1, 1] = np.maximum(
                    kappa * (d2b * 4.0 * da * da + db * 2.0), 0.0
                )
                terms += lift_stencil(
                    cand.ground[act][:, None], grad, hess, cindex
                )
            else:
                value += kappa * barrier_sq(s[act], shat, order=0).sum()

    return merge_terms(value, terms), _finish(stats, min_s)


def _finish(stats: ContactStats, min_s: float) -> ContactStats:
    stats.min_dist = float(np.sqrt(min_s)) if np.isfinite(min_s) else np.inf
    return stats
