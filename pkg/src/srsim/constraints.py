"""Augmented-Lagrangian kinematic targets, prismatic joints, and springs.

Each constraint contributes an energy term over its bodies' DoF blocks;
multipliers are updated once per converged inner solve, with the penalty
stiffness doubled whenever an update fails to halve the residual (capped).
The minus-sign multiplier convention matches the kinematic target energy

    E_A(q, lam) = (kappa_A / 2) |q - q_target|^2 - sqrt(m_k) lam . (q - q_target)

so lam accumulates -kappa_A / sqrt(m_k) times the running residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bodies import AffineBody
from .energy.spd import spd_project
from .energy.term import EnergyTerm

KAPPA_A_GROWTH_CAP = 1e6  # max penalty growth over the initial value


def default_kinematic_stiffness(body_mass: float, h: float) -> float:
    return 1e6 * body_mass / (h * h)


# =============================================================================
# Kinematic target
# =============================================================================


@dataclass
class KinematicConstraint:
    body: AffineBody
    target: np.ndarray  # q_target (12,)
    kappa: float
    mass_scale: float  # m_k
    lam: np.ndarray = field(default_factory=lambda: np.zeros(12))
    kappa0: float = 0.0
    last_residual: float = np.inf

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kinematic penalty stiffness must be positive")
        if not self.body.kinematic:
            raise ValueError("kinematic constraint on a non-kinematic body")
        self.target = np.asarray(self.target, dtype=np.float64)
        if self.kappa0 == 0.0:
            self.kappa0 = self.kappa


def kinematic_energy(c: KinematicConstraint, q_b: np.ndarray, offset: int) -> EnergyTerm:
    d = q_b - c.target
    sm = np.sqrt(c.mass_scale)
    value = 0.5 * c.kappa * (d @ d) - sm * (c.lam @ d)
    grad = c.kappa * d - sm * c.lam
    hess = c.kappa * np.eye(12)
    idx = offset + np.arange(12, dtype=np.int64)
    return EnergyTerm.from_blocks(value, idx[None], grad[None], hess[None])


# =============================================================================
# Prismatic joint
# =============================================================================

_prism_cache = {}


def _prism_kernels():
    if _prism_cache:
        return _prism_cache["fns"]
    import jax

    jax.config.update("jax_enable_x64", True)
    import jax.numpy as jnp

    def residual(q, anchor, axis):
        q1, q2 = q[:12], q[12:]
        a1 = q1[3:].reshape(3, 3)
        a2 = q2[3:].reshape(3, 3)
        off = (a1 @ anchor + q1[:3]) - (a2 @ anchor + q2[:3])
        return jnp.concatenate([(a1 - a2).ravel(), jnp.cross(off, a1 @ axis)])

    def energy(q, anchor, axis, lam, kappa):
        r = residual(q, anchor, axis)
        return kappa * (r @ r) - lam @ r

    fns = (
        jax.jit(residual),
        jax.jit(jax.value_and_grad(energy)),
        jax.jit(jax.hessian(energy)),
    )
    _prism_cache["fns"] = fns
    return fns


@dataclass
class PrismaticJoint:
    body1: AffineBody
    body2: AffineBody
    axis: np.ndarray  # unit, local frame of body1
    anchor: np.ndarray  # rest centroid of body1, local frame
    kappa: float
    lam: np.ndarray = field(default_factory=lambda: np.zeros(12))
    kappa0: float = 0.0
    last_residual: float = np.inf

    def __post_init__(self):
        self.axis = np.asarray(self.axis, dtype=np.float64)
        self.anchor = np.asarray(self.anchor, dtype=np.float64)
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-9:
            raise ValueError("joint axis must be a unit vector")
        if self.kappa <= 0:
            raise ValueError("joint stiffness must be positive")
        if self.kappa0 == 0.0:
            self.kappa0 = self.kappa


def prismatic_energy(
    j: PrismaticJoint, q1: np.ndarray, q2: np.ndarray, off1: int, off2: int
) -> EnergyTerm:
    _, vg, hess_fn = _prism_kernels()
    q = np.concatenate([q1, q2])
    value, grad = vg(q, j.anchor, j.axis, j.lam, j.kappa)
    h = spd_project(np.asarray(hess_fn(q, j.anchor, j.axis, j.lam, j.kappa)))
    idx = np.concatenate(
        [off1 + np.arange(12, dtype=np.int64), off2 + np.arange(12, dtype=np.int64)]
    )
    return EnergyTerm.from_blocks(
        float(value), idx[None], np.asarray(grad)[None], h[None]
    )


def prismatic_residual(j: PrismaticJoint, q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    res, _, _ = _prism_kernels()
    return np.asarray(res(np.concatenate([q1, q2]), j.anchor, j.axis))


# =============================================================================
# Springs
# =============================================================================


@dataclass
class SpringConstraint:
    body: object  # SoftBody, Shell, or AffineBody
    vertex_ids: np.ndarray | None  # None = every vertex
    x_target: np.ndarray  # (k, 3)
    k_spring: float

    def __post_init__(self):
        if self.k_spring < 0:
            raise ValueError("spring stiffness must be nonnegative")
        self.x_target = np.asarray(self.x_target, dtype=np.float64)

    def ids(self) -> np.ndarray:
        if self.vertex_ids is not None:
            return np.asarray(self.vertex_ids, dtype=np.int64)
        if isinstance(self.body, AffineBody):
            return np.arange(len(self.body.mesh.vertices), dtype=np.int64)
        return np.arange(self.body.n_verts, dtype=np.int64)


def spring_energy(s: SpringConstraint, block: np.ndarray, offset: int) -> EnergyTerm:
    """Energy k |x - x_target|^2 summed over attached vertices.

    `block` is the owning body's DoF block: vertex positions flattened for
    soft bodies and shells, the 12-vector q for affine bodies (attachment
    points ride the body through x = p + A x0).
    """
    ids = s.ids()
    k = s.k_spring
    if isinstance(s.body, AffineBody):
        q = block
        rest = s.body.mesh.vertices[ids]
        a = q[3:].reshape(3, 3)
        x = q[:3] + rest @ a.T
        d = x - s.x_target
        value = k * np.sum(d * d)
        # J_i maps q to the world point; gradient 2k J_i^T d_i summed
        grad = np.zeros(12)
        grad[:3] = 2.0 * k * d.sum(axis=0)
        grad[3:] = 2.0 * k * np.einsum("ki,kj->ij", d, rest).ravel()
        jjt = np.zeros((12, 12))
        n = len(ids)
        jjt[:3, :3] = n * np.eye(3)
        srest = rest.sum(axis=0)
        for i in range(3):
            jjt[i, 3 + 3 * i : 6 + 3 * i] = srest
            jjt[3 + 3 * i : 6 + 3 * i, i] = srest
        rr = rest.T @ rest
        for i in range(3):
            jjt[3 + 3 * i : 6 + 3 * i, 3 + 3 * i : 6 + 3 * i] = rr
        hess = 2.0 * k * jjt
        idx = offset + np.arange(12, dtype=np.int64)
        return EnergyTerm.from_blocks(value, idx[None], grad[None], hess[None])

    x = block.reshape(-1, 3)[ids]
    d = x - s.x_target
    value = k * np.sum(d * d)
    grad = 2.0 * k * d
    hess = np.broadcast_to(2.0 * k * np.eye(3), (len(ids), 3, 3))
    idx = offset + 3 * ids[:, None] + np.arange(3)
    return EnergyTerm.from_blocks(value, idx, grad, hess)


# =============================================================================
# Multiplier updates
# =============================================================================


def multiplier_update(constraint, *blocks) -> float:
    """First-order multiplier step after a converged inner solve.

    Returns the residual norm. Doubles the penalty when the residual failed
    to halve since the previous update, capped at KAPPA_A_GROWTH_CAP times
    the initial stiffness.
    """
    if isinstance(constraint, KinematicConstraint):
        (q_b,) = blocks
        d = q_b - constraint.target
        res = float(np.linalg.norm(d))
        constraint.lam = constraint.lam - constraint.kappa * d / np.sqrt(
            constraint.mass_scale
        )
    elif isinstance(constraint, PrismaticJoint):
        q1, q2 = blocks
        r = prismatic_residual(constraint, q1, q2)
        res = float(np.linalg.norm(r))
        constraint.lam = constraint.lam - 2.0 * constraint.kappa * r
    else:
        raise TypeError(f"no multiplier for {type(constraint).__name__}")

    if res > 0.5 * constraint.last_residual:
        constraint.kappa = min(
            2.0 * constraint.kappa, KAPPA_A_GROWTH_CAP * constraint.kappa0
        )
    constraint.last_residual = res
    return res
