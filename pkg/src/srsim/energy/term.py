"""Energy term container: scalar value plus sparse gradient/Hessian triplets
in global DoF coordinates."""

from __future__ import annotations

import numpy as np

_I0 = np.empty(0, dtype=np.int64)
_F0 = np.empty(0, dtype=np.float64)


class EnergyTerm:
    """Value, gradient entries (gidx, gval), Hessian triplets (hrow, hcol, hval).

    Duplicate indices accumulate on assembly.
    """

    __slots__ = ("value", "gidx", "gval", "hrow", "hcol", "hval")

    def __init__(self, value=0.0, gidx=_I0, gval=_F0, hrow=_I0, hcol=_I0, hval=_F0):
        self.value = float(value)
        self.gidx, self.gval = gidx, gval
        self.hrow, self.hcol, self.hval = hrow, hcol, hval

    @staticmethod
    def from_blocks(value: float, idx: np.ndarray, grad: np.ndarray,
                    hess: np.ndarray | None) -> "EnergyTerm":
        """Batch of dense local blocks: idx (n, k), grad (n, k), hess (n, k, k)."""
        n, k = idx.shape
        t = EnergyTerm(value)
        t.gidx = idx.ravel()
        t.gval = grad.ravel()
        if hess is not None:
            t.hrow = np.broadcast_to(idx[:, :, None], (n, k, k)).ravel()
            t.hcol = np.broadcast_to(idx[:, None, :], (n, k, k)).ravel()
            t.hval = hess.ravel()
        return t

    def scaled(self, c: float) -> "EnergyTerm":
        return EnergyTerm(c * self.value, self.gidx, c * self.gval,
                          self.hrow, self.hcol, c * self.hval)


def combine(terms, n_dof: int):
    """Sum terms into (value, dense gradient, COO triplet arrays)."""
    value = 0.0
    grad = np.zeros(n_dof)
    rows, cols, vals = [], [], []
    for t in terms:
        value += t.value
        if len(t.gidx):
            np.add.at(grad, t.gidx, t.gval)
        if len(t.hrow):
            rows.append(t.hrow)
            cols.append(t.hcol)
            vals.append(t.hval)
    if rows:
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
    else:
        rows, cols, vals = _I0, _I0, _F0
    return value, grad, (rows, cols, vals)
