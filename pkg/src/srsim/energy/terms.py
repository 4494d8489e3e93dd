"""Inertia and affine orthogonality energies."""

from __future__ import annotations

import numpy as np

from ..bodies import GlobalState
from .spd import spd_project
from .term import EnergyTerm


def inertia_term(x: np.ndarray, xhat: np.ndarray, state: GlobalState) -> EnergyTerm:
    """1/2 (x - xhat)^T M (x - xhat) with the block mass matrix."""
    d = x - xhat
    value = 0.0
    gidx, gval = [], []
    hrow, hcol, hval = [], [], []
    for blk in state.blocks:
        o = blk.offset
        if blk.is_affine:
            mb = blk.body.M_b
            dq = d[o : o + 12]
            g = mb @ dq
            value += 0.5 * dq @ g
            idx = np.arange(o, o + 12)
            gidx.append(idx)
            gval.append(g)
            hrow.append(np.repeat(idx, 12))
            hcol.append(np.tile(idx, 12))
            hval.append(mb.ravel())
        else:
            m3 = np.repeat(blk.body.mass, 3)
            dx = d[o : o + blk.dof]
            g = m3 * dx
            value += 0.5 * dx @ g
            idx = np.arange(o, o + blk.dof)
            gidx.append(idx)
            gval.append(g)
            hrow.append(idx)
            hcol.append(idx)
            hval.append(m3)
    return EnergyTerm(
        value,
        np.concatenate(gidx) if gidx else np.empty(0, dtype=np.int64),
        np.concatenate(gval) if gval else np.empty(0),
        np.concatenate(hrow) if hrow else np.empty(0, dtype=np.int64),
        np.concatenate(hcol) if hcol else np.empty(0, dtype=np.int64),
        np.concatenate(hval) if hval else np.empty(0),
    )


def inertia_value(x: np.ndarray, xhat: np.ndarray, state: GlobalState) -> float:
    d = x - xhat
    value = 0.0
    for blk in state.blocks:
        o = blk.offset
        if blk.is_affine:
            dq = d[o : o + 12]
            value += 0.5 * dq @ (blk.body.M_b @ dq)
        else:
            dx = d[o : o + blk.dof]
            value += 0.5 * dx @ (np.repeat(blk.body.mass, 3) * dx)
    return value


def _orthogonality_raw(a: np.ndarray, coeff: float):
    """Value, 3x3 gradient, and 9x9 Hessian of coeff * ||A A^T - I||_F^2."""
    m = a @ a.T - np.eye(3)
    value = coeff * np.sum(m * m)
    grad = 4.0 * coeff * (m @ a)
    ata = a.T @ a
    eye = np.eye(3)
    # H[(i,j),(k,l)] = 4 c [ d_ik (A^T A)_lj + A_il A_kj + M_ik d_jl ]
    h = 4.0 * coeff * (
        np.einsum("ik,lj->ijkl", eye, ata)
        + np.einsum("il,kj->ijkl", a, a)
        + np.einsum("ik,jl->ijkl", m, eye)
    )
    return value, grad, h.reshape(9, 9)


def orthogonality_term(x: np.ndarray, state: GlobalState,
                       derivatives: bool = True) -> EnergyTerm:
    """Sum over affine bodies of lambda * V * ||A A^T - I||_F^2."""
    value = 0.0
    idx_all, grad_all, hess_all = [], [], []
    for blk in state.blocks:
        if not blk.is_affine:
            continue
        b = blk.body
        coeff = b.stiffness * b.volume
        a = x[blk.offset + 3 : blk.offset + 12].reshape(3, 3)
        if not derivatives:
            m = a @ a.T - np.eye(3)
            value += coeff * np.sum(m * m)
            continue
        v, g, h = _orthogonality_raw(a, coeff)
        value += v
        idx_all.append(np.arange(blk.offset + 3, blk.offset + 12))
        grad_all.append(g.ravel())
        hess_all.append(spd_project(h))
    if not derivatives or not idx_all:
        return EnergyTerm(value)
    return EnergyTerm.from_blocks(
        value, np.stack(idx_all), np.stack(grad_all), np.stack(hess_all)
    )
