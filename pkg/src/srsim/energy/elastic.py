"""Hyperelastic tet energies: NeoHookean, StVK, FixedCorotated.

Per-tet deformation gradient F = Ds Dm^-1; Hessians are formed in F-space
(9x9), eigen-projected, then lifted to the 12 stencil coordinates by the
constant linear map dF/dx. Congruence preserves positive semidefiniteness.
"""

from __future__ import annotations

import numpy as np

from ..bodies import SoftBody
from .spd import spd_project
from .term import EnergyTerm


def deformation_gradients(x: np.ndarray, tets: np.ndarray, dm_inv: np.ndarray) -> np.ndarray:
    d = x[tets[:, 1:]] - x[tets[:, :1]]  # (n, 3 edges, 3)
    ds = d.transpose(0, 2, 1)
    return ds @ dm_inv


def _nh_value(f, mu, lam):
    j = np.linalg.det(f)
    if (j <= 0).any():
        return None, j
    ic = np.einsum("nij,nij->n", f, f)
    lnj = np.log(j)
    return 0.5 * mu * (ic - 3.0) - mu * lnj + 0.5 * lam * lnj * lnj, j


def _stvk_value(f, mu, lam):
    ft_f = np.einsum("nji,njk->nik", f, f)
    e = 0.5 * (ft_f - np.eye(3))
    tr = np.trace(e, axis1=1, axis2=2)
    return mu * np.einsum("nij,nij->n", e, e) + 0.5 * lam * tr * tr


def _polar(f):
    u, sig, vt = np.linalg.svd(f)
    # reflection fix keeps R a proper rotation
    neg = np.linalg.det(u @ vt) < 0
    u = u.copy()
    sig = sig.copy()
    u[neg, :, 2] *= -1.0
    sig[neg, 2] *= -1.0
    r = u @ vt
    s = np.einsum("nji,nj,njk->nik", vt, sig, vt)
    return r, s


def _fcr_value(f, mu, lam):
    r, _ = _polar(f)
    j = np.linalg.det(f)
    d = f - r
    return mu * np.einsum("nij,nij->n", d, d) + 0.5 * lam * (j - 1.0) ** 2


def _cof(f):
    return np.stack([
        np.cross(f[:, :, 1], f[:, :, 2], axis=1),
        np.cross(f[:, :, 2], f[:, :, 0], axis=1),
        np.cross(f[:, :, 0], f[:, :, 1], axis=1),
    ], axis=2)


_EPS_LC = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _EPS_LC[_i, _j, _k] = 1.0
    _EPS_LC[_i, _k, _j] = -1.0


def _det_hessian(f):
    """d cof(F)_ij / dF_kl = eps_ikm eps_jlq F_mq, shape (n, 9, 9)."""
    h = np.einsum("ikm,jlq,bmq->bijkl", _EPS_LC, _EPS_LC, f)
    return h.reshape(len(f), 9, 9)


def _nh_hess(f, j, mu, lam):
    b = np.linalg.inv(f).transpose(0, 2, 1)  # F^{-T}
    lnj = np.log(j)
    c = (mu - lam * lnj)[:, None, None, None, None]
    eye9 = np.einsum("ik,jl->ijkl", np.eye(3), np.eye(3))[None]
    h = (
        mu * eye9
        + c * np.einsum("nil,nkj->nijkl", b, b)
        + lam * np.einsum("nij,nkl->nijkl", b, b)
    )
    return h.reshape(-1, 9, 9)


def _nh_pk1(f, j, mu, lam):
    b = np.linalg.inv(f).transpose(0, 2, 1)
    return mu * f + (lam * np.log(j) - mu)[:, None, None] * b


def _stvk_pk1(f, mu, lam):
    ft_f = np.einsum("nji,njk->nik", f, f)
    e = 0.5 * (ft_f - np.eye(3))
    tr = np.trace(e, axis1=1, axis2=2)
    s2 = 2.0 * mu * e + lam * tr[:, None, None] * np.eye(3)
    return f @ s2, s2


def _stvk_hess(f, s2, mu, lam):
    eye = np.eye(3)
    fft = np.einsum("nij,nkj->nik", f, f)
    h = (
        np.einsum("ik,nlj->nijkl", eye, s2)
        + mu * np.einsum("nil,nkj->nijkl", f, f)
        + mu * np.einsum("jl,nik->nijkl", eye, fft)
        + lam * np.einsum("nij,nkl->nijkl", f, f)
    )
    return h.reshape(-1, 9, 9)


def _skew(w):
    n = len(w)
    m = np.zeros((n, 3, 3))
    m[:, 0, 1] = -w[:, 2]
    m[:, 0, 2] = w[:, 1]
    m[:, 1, 0] = w[:, 2]
    m[:, 1, 2] = -w[:, 0]
    m[:, 2, 0] = -w[:, 1]
    m[:, 2, 1] = w[:, 0]
    return m


def _rotation_gradient(r, s):
    """dR/dF as (n, 9, 9): column block for each basis direction dF = e_kl."""
    n = len(r)
    tr_s = np.trace(s, axis1=1, axis2=2)
    m = tr_s[:, None, None] * np.eye(3) - s  # (n,3,3), SPD near rotations
    # rhs for all 9 basis directions: A = R^T e_kl has column l equal to R[k,:]
    # axl(A - A^T) = (A21 - A12, A02 - A20, A10 - A01) with rows=m, cols=n
    bvec = np.zeros((n, 3, 3, 3))  # (n, k, l, axis)
    for k in range(3):
        for l in range(3):
            a = np.zeros((n, 3, 3))
            a[:, :, l] = r[:, k, :]
            bvec[:, k, l, 0] = a[:, 2, 1] - a[:, 1, 2]
            bvec[:, k, l, 1] = a[:, 0, 2] - a[:, 2, 0]
            bvec[:, k, l, 2] = a[:, 1, 0] - a[:, 0, 1]
    rhs = bvec.reshape(n, 9, 3)[..., None]  # one 3-vector per basis direction
    w = np.linalg.solve(m[:, None], rhs)[..., 0]  # (n, 9, 3)
    dr = np.empty((n, 3, 3, 3, 3))  # (n, i, j, k, l)
    for kl in range(9):
        dr[:, :, :, kl // 3, kl % 3] = r @ _skew(w[:, kl])
    return dr.reshape(n, 9, 9)


def _fcr_pk1(f, r, j, mu, lam):
    g = _cof(f)
    return 2.0 * mu * (f - r) + lam * (j - 1.0)[:, None, None] * g, g


def _fcr_hess(f, r, s, j, g, mu, lam):
    n = len(f)
    eye9 = np.eye(9)[None]
    dr = _rotation_gradient(r, s)
    gv = g.reshape(n, 9)
    h = (
        2.0 * mu * (eye9 - dr)
        + lam * gv[:, :, None] * gv[:, None, :]
        + lam * (j - 1.0)[:, None, None] * _det_hessian(f)
    )
    return h


_MODELS = ("NeoHookean", "StVK", "FixedCorotated")


def elastic_energy_density(f: np.ndarray, model: str, mu: float, lam: float):
    """Per-tet energy density (J/m^3); NeoHookean returns None on inversion."""
    if model == "NeoHookean":
        psi, _ = _nh_value(f, mu, lam)
        return psi
    if model == "StVK":
        return _stvk_value(f, mu, lam)
    if model == "FixedCorotated":
        return _fcr_value(f, mu, lam)
    raise ValueError(f"unknown elastic model {model!r}")


def elastic_value(body: SoftBody, x_body: np.ndarray) -> float:
    """Total elastic energy; +inf for NeoHookean at non-positive volume."""
    mu, lam = body.material.lame
    f = deformation_gradients(x_body, body.mesh.tets, body.dm_inv)
    psi = elastic_energy_density(f, body.material.model, mu, lam)
    if psi is None:
        return np.inf
    return float(np.dot(psi, body.rest_volumes))


def _stencil_coeffs(dm_inv: np.ndarray) -> np.ndarray:
    """(n, 4, 3) map C with dF_ij = sum_v C[v, j] dx_{v, i}."""
    n = len(dm_inv)
    c = np.empty((n, 4, 3))
    c[:, 1:, :] = dm_inv  # row k of Dm^-1 pairs with vertex k+1
    c[:, 0, :] = -dm_inv.sum(axis=1)
    return c


def elastic_term(body: SoftBody, x_body: np.ndarray, offset: int,
                 h9_project: bool = True) -> EnergyTerm:
    """Energy, gradient, and SPD-projected Hessian for one soft body.

    `offset` is the body's first global DoF; raises if NeoHookean sees an
    inverted tet (derivatives are only requested at feasible states).
    """
    mu, lam = body.material.lame
    tets = body.mesh.tets
    vols = body.rest_volumes
    model = body.material.model
    f = deformation_gradients(x_body, tets, body.dm_inv)

    if model == "NeoHookean":
        psi, j = _nh_value(f, mu, lam)
        if psi is None:
            raise FloatingPointError("NeoHookean derivatives at inverted tet")
        p = _nh_pk1(f, j, mu, lam)
        h9 = _nh_hess(f, j, mu, lam)
    elif model == "StVK":
        psi = _stvk_value(f, mu, lam)
        p, s2 = _stvk_pk1(f, mu, lam)
        h9 = _stvk_hess(f, s2, mu, lam)
    elif model == "FixedCorotated":
        r, s = _polar(f)
        j = np.linalg.det(f)
        psi = _fcr_value(f, mu, lam)
        p, g = _fcr_pk1(f, r, j, mu, lam)
        h9 = _fcr_hess(f, r, s, j, g, mu, lam)
    else:
        raise ValueError(f"unknown elastic model {model!r}")

    value = float(np.dot(psi, vols))
    c = _stencil_coeffs(body.dm_inv)

    # gradient: dPsi/dx_{v,i} = sum_j P_ij C[v,j], scaled by volume
    grad = np.einsum("n,nij,nvj->nvi", vols, p, c).reshape(-1, 12)

    if h9_project:
        h9 = spd_project(h9)
    h4 = h9.reshape(-1, 3, 3, 3, 3)
    hess = np.einsum("n,nvj,nljmk,nwk->nvlwm", vols, c, h4, c).reshape(-1, 12, 12)

    idx = (offset + 3 * tets[:, :, None] + np.arange(3)).reshape(-1, 12)
    return EnergyTerm.from_blocks(value, idx.astype(np.int64), grad, hess)
