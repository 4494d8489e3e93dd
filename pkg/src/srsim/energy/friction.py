"""Lagged smoothed Coulomb friction.

Normal force magnitudes, contact stencils, mixing weights, and tangent
frames are frozen from the contact state at the start of the step; within
the solve, friction is then a fixed smooth dissipation potential

    D(x) = mu * lam * f0(|u|),   u = T^T sum_i gamma_i (x_i - x_i_start)

with f0 quadratically smoothed on [0, eps_v * h] so static friction has a
well-defined Hessian. The stencil Hessian gamma gamma^T (x) T H_u T^T is PSD
by construction on every branch, so no projection is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry.distance import (
    edge_edge_dist2,
    edge_edge_regions,
    point_triangle_dist2,
    point_triangle_regions,
)
from ..geometry.distgrad import dist2_derivatives
from .barrier import BarrierParams, barrier_sq
from .contact import EE_MOLLIFIER_SCALE, ContactIndex, _cross2_value, lift_stencil, merge_terms
from .term import EnergyTerm

_I0 = np.empty((0, 4), dtype=np.int64)


@dataclass
class FrictionLags:
    """Per-contact data frozen for one step's friction potential."""

    slots: np.ndarray = field(default_factory=lambda: _I0.copy())  # (n, 4)
    gamma: np.ndarray = field(default_factory=lambda: np.empty((0, 4)))
    tangent: np.ndarray = field(default_factory=lambda: np.empty((0, 3, 2)))
    lam: np.ndarray = field(default_factory=lambda: np.empty(0))  # IP units, >= 0
    g_slots: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    g_lam: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def total(self) -> int:
        return len(self.lam) + len(self.g_lam)


def _tangent_basis(n: np.ndarray) -> np.ndarray:
    """(m, 3) unit normals -> (m, 3, 2) orthonormal tangent frames."""
    ref = np.zeros_like(n)
    use_x = np.abs(n[:, 0]) < 0.9
    ref[use_x, 0] = 1.0
    ref[~use_x, 1] = 1.0
    t1 = np.cross(n, ref)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(n, t1)
    return np.stack([t1, t2], axis=2)


def f0(y, eps_h: float):
    """Smoothed |u| integral: matches y above eps_h, C^1 at the seam."""
    y = np.asarray(y, dtype=np.float64)
    inner = y ** 2 / eps_h - y ** 3 / (3.0 * eps_h ** 2) + eps_h / 3.0
    return np.where(y < eps_h, inner, y)


def f1(y, eps_h: float):
    """df0/dy: rises to 1 at eps_h, exactly 1 beyond."""
    y = np.asarray(y, dtype=np.float64)
    return np.where(y < eps_h, 2.0 * y / eps_h - y ** 2 / eps_h ** 2, 1.0)


def update_friction_lags(
    xw: np.ndarray,
    cand,
    tables,
    cindex: ContactIndex,
    bp: BarrierParams,
    ground_y: float | None = None,
) -> FrictionLags:
    """Freeze normal forces and tangent frames from the current contact state.

    Mixing weights come from the squared-distance gradients: each slot's
    gradient is (+/-) 2 d * n times its barycentric weight on the closest
    feature, so dotting with the unit normal recovers the weights in every
    closest-feature region uniformly.
    """
    shat = bp.shat
    out = FrictionLags()
    slots_l, gamma_l, tan_l, lam_l = [], [], [], []

    if len(cand.pt):
        v_ids = cand.pt[:, 0]
        tri = tables.tris[cand.pt[:, 1]]
        p, t0, t1_, t2 = xw[v_ids], xw[tri[:, 0]], xw[tri[:, 1]], xw[tri[:, 2]]
        regions = point_triangle_regions(p, t0, t1_, t2)
        d2, _ = point_triangle_dist2(p, t0, t1_, t2, regions=regions, validate=False)
        act = d2 < shat
        if act.any():
            sten = np.stack([p, t0, t1_, t2], axis=1)[act]
            s, gs, _ = dist2_derivatives(sten, regions[act], "pt")
            d = np.sqrt(s)
            _, db = barrier_sq(s, shat, order=1)
            lam = -bp.kappa * db * 2.0 * d
            n = gs[:, 0:3] / (2.0 * d)[:, None]
            w = -np.einsum("nik,nk->ni", gs.reshape(-1, 4, 3)[:, 1:], n) / (
                2.0 * d
            )[:, None]
            gamma = np.concatenate([np.ones((len(d), 1)), -w], axis=1)
            slots_l.append(
                np.stack([v_ids, tri[:, 0], tri[:, 1], tri[:, 2]], axis=1)[act]
            )
            gamma_l.append(gamma)
            tan_l.append(_tangent_basis(n))
            lam_l.append(lam)

    if len(cand.ee):
        ea = tables.edges[cand.ee[:, 0]]
        eb = tables.edges[cand.ee[:, 1]]
        a0, a1, b0, b1 = xw[ea[:, 0]], xw[ea[:, 1]], xw[eb[:, 0]], xw[eb[:, 1]]
        regions, _ = edge_edge_regions(a0, a1, b0, b1)
        d2, _, _ = edge_edge_dist2(a0, a1, b0, b1, regions=regions, validate=False)
        act = d2 < shat
        if act.any():
            sten = np.stack([a0, a1, b0, b1], axis=1)[act]
            s, gs, _ = dist2_derivatives(sten, regions[act], "ee")
            d = np.sqrt(s)
            _, db = barrier_sq(s, shat, order=1)
            eps_x = (
                EE_MOLLIFIER_SCALE
                * cindex.edge_rest_len2[cand.ee[act, 0]]
                * cindex.edge_rest_len2[cand.ee[act, 1]]
            )
            c = _cross2_value(sten[:, 1] - sten[:, 0], sten[:, 3] - sten[:, 2])
            t = np.minimum(c / eps_x, 1.0)
            moll = t * (2.0 - t)
            lam = -bp.kappa * moll * db * 2.0 * d
            g4 = gs.reshape(-1, 4, 3)
            n = (g4[:, 0] + g4[:, 1]) / (2.0 * d)[:, None]
            wa = np.einsum("nik,nk->ni", g4[:, :2], n) / (2.0 * d)[:, None]
            wb = -np.einsum("nik,nk->ni", g4[:, 2:], n) / (2.0 * d)[:, None]
            gamma = np.concatenate([wa, -wb], axis=1)
            slots_l.append(
                np.stack([ea[:, 0], ea[:, 1], eb[:, 0], eb[:, 1]], axis=1)[act]
            )
            gamma_l.append(gamma)
            tan_l.append(_tangent_basis(n))
            lam_l.append(lam)

    if slots_l:
        out.slots = np.concatenate(slots_l)
        out.gamma = np.concatenate(gamma_l)
        out.tangent = np.concatenate(tan_l)
        out.lam = np.concatenate(lam_l)
        keep = out.lam > 0
        out.slots, out.gamma = out.slots[keep], out.gamma[keep]
        out.tangent, out.lam = out.tangent[keep], out.lam[keep]

    if ground_y is not None and len(cand.ground):
        d = xw[cand.ground, 1] - ground_y
        s = d * d
        act = s < shat
        if act.any():
            _, db = barrier_sq(s[act], shat, order=1)
            lam = -bp.kappa * db * 2.0 * d[act]
            keep = lam > 0
            out.g_slots = cand.ground[act][keep]
            out.g_lam = lam[keep]
    return out


_GROUND_T = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])


def _potential(u3, tangent, lam, mu, eps_h, derivatives):
    """Value, (m, 2) tangential gradient factor, (m, 2, 2) H_u for one batch."""
    u = np.einsum("nkj,nk->nj", tangent, u3)  # (m, 2)
    y = np.linalg.norm(u, axis=1)
    value = float((mu * lam * f0(y, eps_h)).sum())
    if not derivatives:
        return value, None, None
    f1y = f1(y, eps_h)
    # f1/y -> 2/eps_h as y -> 0
    fac = np.where(y > 0, f1y / np.maximum(y, 1e-300), 2.0 / eps_h)
    gu = (mu * lam * fac)[:, None] * u
    df1 = np.where(y < eps_h, 2.0 / eps_h - 2.0 * y / eps_h ** 2, 0.0)
    coef = np.where(y > 1e-300, df1 - fac, 0.0)
    uhat = u / np.maximum(y, 1e-300)[:, None]
    hu = (mu * lam)[:, None, None] * (
        fac[:, None, None] * np.eye(2)
        + coef[:, None, None] * np.einsum("ni,nj->nij", uhat, uhat)
    )
    return value, gu, hu


def friction_term(
    xw: np.ndarray,
    xw_start: np.ndarray,
    lags: FrictionLags,
    mu: float,
    eps_v: float,
    h: float,
    cindex: ContactIndex,
    derivatives: bool = True,
):
    """Friction potential over frozen contacts at surface positions xw."""
    if (lags.lam < 0).any() or (lags.g_lam < 0).any():
        raise ValueError("negative lagged normal force")
    eps_h = eps_v * h
    value = 0.0
    terms = []
    dx = xw - xw_start

    if len(lags.lam):
        u3 = np.einsum("ni,nik->nk", lags.gamma, dx[lags.slots])
        v, gu, hu = _potential(u3, lags.tangent, lags.lam, mu, eps_h, derivatives)
        value += v
        if derivatives:
            g3 = np.einsum("nkj,nj->nk", lags.tangent, gu)  # (m, 3)
            grad = (lags.gamma[:, :, None] * g3[:, None, :]).reshape(-1, 12)
            h3 = np.einsum("naj,njl,nbl->nab", lags.tangent, hu, lags.tangent)
            hess = (
                np.einsum("ni,nj->nij", lags.gamma, lags.gamma)[:, :, None, :, None]
                * h3[:, None, :, None, :]
            ).reshape(-1, 12, 12)
            terms += lift_stencil(lags.slots, grad, hess, cindex)

    if len(lags.g_lam):
        u3 = dx[lags.g_slots]
        tan = np.broadcast_to(_GROUND_T, (len(u3), 3, 2))
        v, gu, hu = _potential(u3, tan, lags.g_lam, mu, eps_h, derivatives)
        value += v
        if derivatives:
            grad = np.einsum("nkj,nj->nk", tan, gu)
            hess = np.einsum("naj,njl,nbl->nab", tan, hu, tan)
            terms += lift_stencil(lags.g_slots[:, None], grad, hess, cindex)

    return merge_terms(value, terms) if derivatives else EnergyTerm(value)
