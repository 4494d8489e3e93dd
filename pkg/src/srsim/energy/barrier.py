"""Log barrier on contact distance.

Public form in meters: b(d, dhat) = -(d - dhat)^2 log(d / dhat) on (0, dhat),
zero beyond. Internally barriers act on squared distance s = d^2 against
shat = dhat^2 with the same functional form, which keeps derivative chains
free of square roots near contact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class BarrierParams:
    dhat: float  # m
    kappa: float

    def __post_init__(self):
        if self.dhat <= 0 or self.kappa <= 0:
            raise ValueError("dhat and kappa must be positive")

    @property
    def shat(self) -> float:
        return self.dhat * self.dhat


def barrier(d, dhat: float):
    """b(d) and db/dd, elementwise; d may be scalar or array. Requires d > 0."""
    d = np.asarray(d, dtype=np.float64)
    if (d <= 0).any():
        raise ValueError("barrier evaluated at non-positive distance")
    scalar = d.ndim == 0
    d = np.atleast_1d(d)
    b = np.zeros_like(d)
    db = np.zeros_like(d)
    m = d < dhat
    if m.any():
        dm = d[m]
        gap = dm - dhat
        ln = np.log(dm / dhat)
        b[m] = -gap * gap * ln
        db[m] = -2.0 * gap * ln - gap * gap / dm
    if scalar:
        return float(b[0]), float(db[0])
    return b, db


def barrier_sq(s, shat: float, order: int = 2):
    """Barrier on squared distance: value and (optionally) ds-derivatives.

    Returns (b, b', b'') for order 2, (b, b') for order 1, b for order 0.
    Requires s > 0.
    """
    s = np.asarray(s, dtype=np.float64)
    if (s <= 0).any():
        raise ValueError("barrier evaluated at non-positive squared distance")
    b = np.zeros_like(s)
    m = s < shat
    sm = s[m]
    gap = sm - shat
    ln = np.log(sm / shat)
    b[m] = -gap * gap * ln
    if order == 0:
        return b
    db = np.zeros_like(s)
    db[m] = -2.0 * gap * ln - gap * gap / sm
    if order == 1:
        return b, db
    d2b = np.zeros_like(s)
    d2b[m] = -2.0 * ln - 4.0 * gap / sm + gap * gap / (sm * sm)
    return b, db, d2b


def kappa_init(avg_vertex_mass: float, dhat: float) -> float:
    """Scene-scaled barrier stiffness."""
    return 1e4 * avg_vertex_mass / (dhat * dhat)


KAPPA_GROWTH_CAP = 1e8  # max kappa / initial kappa


def adapt_kappa(params: BarrierParams, min_dist: float, kappa0: float) -> BarrierParams:
    """Double kappa while contacts are being squeezed too thin."""
    if min_dist < 1e-4 * params.dhat and params.kappa < KAPPA_GROWTH_CAP * kappa0:
        return BarrierParams(params.dhat, min(2.0 * params.kappa, KAPPA_GROWTH_CAP * kappa0))
    return params
