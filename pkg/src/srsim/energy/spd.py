"""Eigenvalue clamping of local Hessian blocks."""

from __future__ import annotations

import numpy as np


def spd_project(h: np.ndarray) -> np.ndarray:
    """Clamp negative eigenvalues of symmetric blocks to zero.

    Accepts a single (k, k) block or a batch (..., k, k); symmetrizes first.
    """
    h = 0.5 * (h + np.swapaxes(h, -1, -2))
    w, v = np.linalg.eigh(h)
    w = np.maximum(w, 0.0)
    return (v * w[..., None, :]) @ np.swapaxes(v, -1, -2)
