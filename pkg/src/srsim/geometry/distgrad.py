"""Gradients and Hessians of squared-distance kernels.

Within an open closest-feature region the squared distance is a smooth
closed-form function of the active stencil vertices only (derivatives w.r.t.
inactive vertices vanish). Four reduced formulas cover every region:

    PP  point-point        |a - b|^2
    PL  point-line         |e x w|^2 / |e|^2
    PF  point-plane        ((p - t0) . n)^2 / |n|^2
    LL  line-line          ((b0 - a0) . n)^2 / |n|^2

They are differentiated with jax (float64) and evaluated in padded batches
grouped by region code so vmap compiles once per size bucket.
"""

from __future__ import annotations

import numpy as np

import jax

jax.config.update("jax_enable_x64", True)
jax.config.update("jax_platforms", "cpu")

import jax.numpy as jnp

# =============================================================================
# Reduced squared-distance formulas (x: (k, 3) active stencil points)
# =============================================================================


def _pp2(x):
    d = x[0] - x[1]
    return jnp.dot(d, d)


def _pl2(x):
    e = x[2] - x[1]
    c = jnp.cross(e, x[0] - x[1])
    return jnp.dot(c, c) / jnp.dot(e, e)


def _pf2(x):
    n = jnp.cross(x[2] - x[1], x[3] - x[1])
    w = jnp.dot(x[0] - x[1], n)
    return w * w / jnp.dot(n, n)


def _ll2(x):
    n = jnp.cross(x[1] - x[0], x[3] - x[2])
    w = jnp.dot(x[2] - x[0], n)
    return w * w / jnp.dot(n, n)


def _value_grad_hess(f):
    grad = jax.grad(f)
    hess = jax.hessian(f)

    def one(x):
        return f(x), grad(x), hess(x)

    return jax.jit(jax.vmap(one))


_KERNELS = {"pp": _value_grad_hess(_pp2), "pl": _value_grad_hess(_pl2),
            "pf": _value_grad_hess(_pf2), "ll": _value_grad_hess(_ll2)}

# region code -> (kernel name, stencil slots holding the active points)
_PT_TABLE = {
    0: ("pp", (0, 1)),
    1: ("pp", (0, 2)),
    2: ("pp", (0, 3)),
    3: ("pl", (0, 1, 2)),
    4: ("pl", (0, 2, 3)),
    5: ("pl", (0, 3, 1)),
    6: ("pf", (0, 1, 2, 3)),
}
_EE_TABLE = {
    0: ("pp", (0, 2)),
    1: ("pp", (0, 3)),
    2: ("pl", (0, 2, 3)),
    3: ("pp", (1, 2)),
    4: ("pp", (1, 3)),
    5: ("pl", (1, 2, 3)),
    6: ("pl", (2, 0, 1)),
    7: ("pl", (3, 0, 1)),
    8: ("ll", (0, 1, 2, 3)),
}


def _padded_size(n: int) -> int:
    return 1 << max(0, n - 1).bit_length() if n > 1 else 1


def dist2_derivatives(stencils: np.ndarray, regions: np.ndarray, kind: str):
    """Value, gradient, and Hessian of squared distance for a pair batch.

    Args:
        stencils: (n, 4, 3) stencil positions — (p, t0, t1, t2) for
            point-triangle, (a0, a1, b0, b1) for edge-edge.
        regions: (n,) closest-feature codes from the distance module.
        kind: "pt" or "ee".

    Returns:
        d2: (n,) squared distances,
        grad: (n, 12) d(d2)/dx over the flattened stencil,
        hess: (n, 12, 12).
    """
    table = _PT_TABLE if kind == "pt" else _EE_TABLE
    n = len(stencils)
    d2 = np.zeros(n, dtype=np.float64)
    grad = np.zeros((n, 12), dtype=np.float64)
    hess = np.zeros((n, 12, 12), dtype=np.float64)

    for code in np.unique(regions):
        fn_name, slots = table[int(code)]
        idx = np.nonzero(regions == code)[0]
        x = stencils[idx][:, slots, :]  # (m, k, 3)
        m, k = x.shape[0], len(slots)
        pad = _padded_size(m)
        if pad != m:
            x = np.concatenate([x, np.repeat(x[:1], pad - m, axis=0)], axis=0)
        v, g, h = _KERNELS[fn_name](jnp.asarray(x))
        v = np.asarray(v)[:m]
        g = np.asarray(g)[:m]  # (m, k, 3)
        h = np.asarray(h)[:m]  # (m, k, 3, k, 3)
        d2[idx] = v
        for si, s in enumerate(slots):
            grad[idx, 3 * s : 3 * s + 3] = g[:, si, :]
            for sj, t in enumerate(slots):
                hess[idx[:, None, None], np.arange(3 * s, 3 * s + 3)[None, :, None],
                     np.arange(3 * t, 3 * t + 3)[None, None, :]] = h[:, si, :, sj, :]
    return d2, grad, hess
