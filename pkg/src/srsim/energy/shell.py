"""Anisotropic membrane energy for cloth: per-triangle stretch along the two
rest-frame directions plus in-plane shear, following the classic
stretch/shear split. Degenerate elements contribute zero with a warning."""

from __future__ import annotations

import logging

import numpy as np

from ..bodies import Shell
from .spd import spd_project
from .term import EnergyTerm

log = logging.getLogger(__name__)

_DEGENERATE_NORM = 1e-10


def _frame_vectors(x_body: np.ndarray, shell: Shell):
    """wu, wv (n,3) from world positions, plus the (n,3,2) vertex coeffs."""
    t = shell.mesh.triangles
    e = np.stack([x_body[t[:, 1]] - x_body[t[:, 0]],
                  x_body[t[:, 2]] - x_body[t[:, 0]]], axis=2)  # (n,3,2)
    w = e @ shell.rest_frame_inv  # columns wu, wv
    cf = np.empty((len(t), 3, 2))
    cf[:, 1:, :] = shell.rest_frame_inv
    cf[:, 0, :] = -shell.rest_frame_inv.sum(axis=1)
    return w[:, :, 0], w[:, :, 1], cf


def shell_components(shell: Shell, x_body: np.ndarray):
    """(stretch energy, shear energy) summed over triangles."""
    wu, wv, _ = _frame_vectors(x_body, shell)
    a = shell.rest_areas
    nu = np.linalg.norm(wu, axis=1)
    nv = np.linalg.norm(wv, axis=1)
    stretch = 0.5 * shell.stretch_stiffness * a * ((nu - 1.0) ** 2 + (nv - 1.0) ** 2)
    shear = 0.5 * shell.shear_stiffness * a * np.einsum("ni,ni->n", wu, wv) ** 2
    return float(stretch.sum()), float(shear.sum())


def shell_value(shell: Shell, x_body: np.ndarray) -> float:
    s, sh = shell_components(shell, x_body)
    return s + sh


def shell_term(shell: Shell, x_body: np.ndarray, offset: int) -> EnergyTerm:
    t = shell.mesh.triangles
    wu, wv, cf = _frame_vectors(x_body, shell)
    a = shell.rest_areas
    ks = shell.stretch_stiffness
    ksh = shell.shear_stiffness

    nu = np.linalg.norm(wu, axis=1)
    nv = np.linalg.norm(wv, axis=1)
    bad = (nu < _DEGENERATE_NORM) | (nv < _DEGENERATE_NORM)
    if bad.any():
        log.warning("%d degenerate shell triangles skipped", int(bad.sum()))
    ok = ~bad
    wu, wv, cf, a = wu[ok], wv[ok], cf[ok], a[ok]
    nu, nv = nu[ok], nv[ok]
    tri = t[ok]
    n = len(tri)
    if n == 0:
        return EnergyTerm(0.0)

    hu = wu / nu[:, None]
    hv = wv / nv[:, None]
    dot = np.einsum("ni,ni->n", wu, wv)

    value = float(np.sum(0.5 * ks * a * ((nu - 1.0) ** 2 + (nv - 1.0) ** 2))
                  + np.sum(0.5 * ksh * a * dot * dot))

    # gradients in (wu, wv)
    gu = (ks * a * (nu - 1.0))[:, None] * hu + (ksh * a * dot)[:, None] * wv
    gv = (ks * a * (nv - 1.0))[:, None] * hv + (ksh * a * dot)[:, None] * wu

    eye = np.eye(3)[None]
    huu = hu[:, :, None] * hu[:, None, :]
    hvv = hv[:, :, None] * hv[:, None, :]
    # stretch curvature: unit-direction projector plus the bending of the norm
    s_uu = (ks * a)[:, None, None] * (
        huu + ((nu - 1.0) / nu)[:, None, None] * (eye - huu)
    )
    s_vv = (ks * a)[:, None, None] * (
        hvv + ((nv - 1.0) / nv)[:, None, None] * (eye - hvv)
    )
    # shear curvature
    sh_uu = (ksh * a)[:, None, None] * wv[:, :, None] * wv[:, None, :]
    sh_vv = (ksh * a)[:, None, None] * wu[:, :, None] * wu[:, None, :]
    sh_uv = (ksh * a)[:, None, None] * (
        wv[:, :, None] * wu[:, None, :]
    ) + (ksh * a * dot)[:, None, None] * eye

    h6 = np.empty((n, 6, 6))
    h6[:, :3, :3] = s_uu + sh_uu
    h6[:, 3:, 3:] = s_vv + sh_vv
    h6[:, :3, 3:] = sh_uv
    h6[:, 3:, :3] = sh_uv.transpose(0, 2, 1)
    h6 = spd_project(h6)

    # lift: dwu/dx_{v,i} = cf[v,0] delta, dwv/dx_{v,i} = cf[v,1] delta
    grad = (cf[:, :, 0:1] * gu[:, None, :] + cf[:, :, 1:2] * gv[:, None, :]).reshape(n, 9)
    h623 = h6.reshape(n, 2, 3, 2, 3)
    hess = np.einsum("nva,naibj,nwb->nviwj", cf, h623, cf).reshape(n, 9, 9)

    idx = (offset + 3 * tri[:, :, None] + np.arange(3)).reshape(n, 9)
    return EnergyTerm.from_blocks(value, idx.astype(np.int64), grad, hess)


# --------------------------------------------------------------------------
# Optional hinge bending (off by default). Derivatives come from autodiff
# since this term is tiny and rarely enabled.

_bend_cache = {}


def _bend_kernels():
    if _bend_cache:
        return _bend_cache["fn"]
    import jax
    import jax.numpy as jnp

    def angle_energy(x, rest_angle):
        # x: (4,3) stencil (e0, e1, wing a, wing b) around hinge edge e0-e1
        e = x[1] - x[0]
        n1 = jnp.cross(e, x[2] - x[0])
        n2 = jnp.cross(x[3] - x[0], e)
        n1n = n1 / jnp.linalg.norm(n1)
        n2n = n2 / jnp.linalg.norm(n2)
        cos_t = jnp.clip(jnp.dot(n1n, n2n), -1.0 + 1e-12, 1.0 - 1e-12)
        sin_t = jnp.dot(jnp.cross(n1n, n2n), e / jnp.linalg.norm(e))
        theta = jnp.arctan2(sin_t, cos_t)
        return (theta - rest_angle) ** 2

    g = jax.grad(angle_energy)
    h = jax.hessian(angle_energy)
    fn = jax.jit(jax.vmap(lambda x, r: (angle_energy(x, r), g(x, r), h(x, r))))
    _bend_cache["fn"] = fn
    return fn


def hinge_stencils(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interior-edge stencils (m, 4): edge verts then the two wing verts."""
    third = {}
    hinges = []
    for tri in triangles:
        for a, b, c in ((tri[0], tri[1], tri[2]),
                        (tri[1], tri[2], tri[0]),
                        (tri[2], tri[0], tri[1])):
            key = (min(a, b), max(a, b))
            if key in third:
                hinges.append((key[0], key[1], third[key], c))
            else:
                third[key] = c
    if not hinges:
        return np.empty((0, 4), dtype=np.int64), np.empty(0)
    return np.array(hinges, dtype=np.int64), np.zeros(len(hinges))


def bending_term(shell: Shell, x_body: np.ndarray, offset: int,
                 stencils: np.ndarray, rest_angles: np.ndarray) -> EnergyTerm:
    if shell.bend_stiffness <= 0 or len(stencils) == 0:
        return EnergyTerm(0.0)
    fn = _bend_kernels()
    pts = x_body[stencils]
    v, g, h = fn(pts, rest_angles)
    k = shell.bend_stiffness
    value = float(k * np.asarray(v).sum())
    grad = k * np.asarray(g).reshape(-1, 12)
    hess = spd_project(k * np.asarray(h).reshape(-1, 12, 12))
    idx = (offset + 3 * stencils[:, :, None] + np.arange(3)).reshape(-1, 12)
    return EnergyTerm.from_blocks(value, idx.astype(np.int64), grad, hess)
