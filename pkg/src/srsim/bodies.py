"""Body state containers and the global DoF vector.

Layout convention: all soft/shell vertex blocks first (3 DoF per vertex,
bodies in insertion order), then all affine bodies (12 DoF each, laid out as
translation p followed by the three rows of A in row-major order).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry.mesh import SurfaceMesh, TetMesh, volume_integrals

GRAVITY = np.array([0.0, -9.8, 0.0])

# elastic model names accepted in scene files
ELASTIC_MODELS = ("NeoHookean", "StVK", "FixedCorotated")


def lame_parameters(youngs_modulus: float, poisson_ratio: float) -> tuple[float, float]:
    e, nu = float(youngs_modulus), float(poisson_ratio)
    mu = e / (2.0 * (1.0 + nu))
    lam = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return mu, lam


@dataclass
class Material:
    model: str = "NeoHookean"
    youngs_modulus: float = 1e5  # Pa
    poisson_ratio: float = 0.3
    density: float = 1000.0  # kg/m^3

    def __post_init__(self):
        if self.model not in ELASTIC_MODELS:
            raise ValueError(f"unknown elastic model {self.model!r}")
        if not 0.0 <= self.poisson_ratio < 0.5:
            raise ValueError("poisson_ratio must lie in [0, 0.5)")
        if self.youngs_modulus <= 0:
            raise ValueError("youngs_modulus must be positive")

    @property
    def lame(self) -> tuple[float, float]:
        return lame_parameters(self.youngs_modulus, self.poisson_ratio)


def _tet_volumes(verts: np.ndarray, tets: np.ndarray) -> np.ndarray:
    d = verts[tets[:, 1:]] - verts[tets[:, :1]]
    return np.linalg.det(d) / 6.0


class SoftBody:
    """Tetrahedral FEM body with lumped diagonal mass."""

    def __init__(self, tet_mesh: TetMesh, material: Material, name: str = ""):
        self.name = name
        self.mesh = tet_mesh
        self.material = material
        n = len(tet_mesh.vertices)
        self.x = tet_mesh.vertices.astype(np.float64).copy()
        self.v = np.zeros((n, 3))

        vols = _tet_volumes(self.x, tet_mesh.tets)
        if (vols <= 0).any():
            raise ValueError("rest tetrahedra must have positive volume")
        self.rest_volumes = vols
        # Dm^-1 per tet, and lumped mass: a quarter of each tet's mass to
        # each of its corners
        d = self.x[tet_mesh.tets[:, 1:]] - self.x[tet_mesh.tets[:, :1]]
        self.dm_inv = np.linalg.inv(d.transpose(0, 2, 1))
        mass = np.zeros(n)
        np.add.at(mass, tet_mesh.tets.ravel(),
                  np.repeat(material.density * vols / 4.0, 4))
        if (mass <= 0).any():
            raise ValueError("every vertex must carry positive mass")
        self.mass = mass

    @property
    def n_verts(self) -> int:
        return len(self.x)

    @property
    def dof(self) -> int:
        return 3 * len(self.x)


class Shell:
    """Triangle-mesh shell (cloth) with a 2D rest frame per triangle."""

    def __init__(
        self,
        surface: SurfaceMesh,
        stretch_stiffness: float = 1e4,
        shear_stiffness: float = 1e3,
        bend_stiffness: float = 0.0,
        density: float = 200.0,
        thickness: float = 1e-3,
        name: str = "",
    ):
        self.name = name
        self.mesh = surface
        self.stretch_stiffness = float(stretch_stiffness)
        self.shear_stiffness = float(shear_stiffness)
        self.bend_stiffness = float(bend_stiffness)
        self.density = float(density)
        self.thickness = float(thickness)
        n = len(surface.vertices)
        self.x = surface.vertices.astype(np.float64).copy()
        self.v = np.zeros((n, 3))

        uv = surface.uv
        if uv is None:
            raise ValueError("shells need per-vertex rest-plane coordinates")
        t = surface.triangles
        du = np.stack([uv[t[:, 1]] - uv[t[:, 0]], uv[t[:, 2]] - uv[t[:, 0]]], axis=2)
        det = np.linalg.det(du)
        if (np.abs(det) < 1e-16).any():
            raise ValueError("degenerate rest frame in shell triangle")
        self.rest_frame_inv = np.linalg.inv(du)
        self.rest_areas = 0.5 * np.abs(det)

        mass = np.zeros(n)
        np.add.at(mass, t.ravel(),
                  np.repeat(self.rest_areas * thickness * density / 3.0, 3))
        if (mass <= 0).any():
            raise ValueError("every shell vertex must carry positive mass")
        self.mass = mass

    @property
    def n_verts(self) -> int:
        return len(self.x)

    @property
    def dof(self) -> int:
        return 3 * len(self.x)


def affine_jacobian(x0: np.ndarray) -> np.ndarray:
    """J with world(q) = J(x0) @ q for q = (p, rows of A)."""
    x0 = np.asarray(x0, dtype=np.float64)
    j = np.zeros((3, 12))
    j[:, :3] = np.eye(3)
    for i in range(3):
        j[i, 3 + 3 * i : 6 + 3 * i] = x0
    return j


def affine_mass_matrix(rest_surface: SurfaceMesh, density: float) -> np.ndarray:
    """12x12 mass matrix from density-weighted monomial volume integrals."""
    if not rest_surface.is_watertight():
        raise ValueError("affine mass matrix needs a watertight surface")
    vol, first, second = volume_integrals(rest_surface.vertices, rest_surface.triangles)
    if vol <= 0:
        raise ValueError("enclosed volume must be positive")
    m = np.zeros((12, 12))
    m[:3, :3] = density * vol * np.eye(3)
    for i in range(3):
        s = slice(3 + 3 * i, 6 + 3 * i)
        m[i, s] = density * first
        m[s, i] = density * first
        m[s, s] = density * second
    return m


class AffineBody:
    """Rigid-intent body with a 12-DoF affine state q = (p, a1, a2, a3)."""

    def __init__(
        self,
        rest_surface: SurfaceMesh,
        density: float = 1000.0,
        stiffness: float = 1e8,
        kinematic: bool = False,
        name: str = "",
    ):
        self.name = name
        self.mesh = rest_surface
        self.density = float(density)
        self.stiffness = float(stiffness)  # orthogonality penalty (Pa)
        self.kinematic = bool(kinematic)
        self.M_b = affine_mass_matrix(rest_surface, density)
        vol, first, _ = volume_integrals(rest_surface.vertices, rest_surface.triangles)
        self.volume = vol
        self.first_moment = first  # geometric (unweighted) first moment
        self.q = np.concatenate([np.zeros(3), np.eye(3).ravel()])
        self.q_dot = np.zeros(12)
        # commanded target for kinematic bodies, set by the driver each step
        self.target_q: np.ndarray | None = None

    @property
    def mass(self) -> float:
        return self.density * self.volume

    @property
    def dof(self) -> int:
        return 12

    def world_vertices(self, q: np.ndarray | None = None) -> np.ndarray:
        q = self.q if q is None else q
        a = q[3:].reshape(3, 3)
        return self.mesh.vertices @ a.T + q[:3]

    def set_pose(self, rotation: np.ndarray, translation: np.ndarray) -> None:
        self.q = np.concatenate([np.asarray(translation, dtype=np.float64),
                                 np.asarray(rotation, dtype=np.float64).ravel()])


@dataclass
class _Block:
    body: object
    offset: int
    dof: int
    is_affine: bool


class GlobalState:
    """Ordered DoF blocks over all bodies plus the surface-vertex table.

    Soft and shell bodies contribute 3 DoF per vertex; affine bodies 12 DoF.
    The surface-vertex table maps every collidable surface vertex to its
    owning body for contact assembly.
    """

    def __init__(self, soft_bodies=(), shells=(), affine_bodies=()):
        self.soft_bodies = list(soft_bodies)
        self.shells = list(shells)
        self.affine_bodies = list(affine_bodies)
        self.blocks: list[_Block] = []
        off = 0
        for b in self.soft_bodies + self.shells:
            self.blocks.append(_Block(b, off, b.dof, False))
            off += b.dof
        for b in self.affine_bodies:
            self.blocks.append(_Block(b, off, 12, True))
            off += 12
        self.n_dof = off
        self.offsets = {id(blk.body): blk.offset for blk in self.blocks}

    def offset_of(self, body) -> int:
        return self.offsets[id(body)]

    def gather(self) -> np.ndarray:
        """Current DoF vector (positions / affine coordinates)."""
        u = np.empty(self.n_dof)
        for blk in self.blocks:
            if blk.is_affine:
                u[blk.offset : blk.offset + 12] = blk.body.q
            else:
                u[blk.offset : blk.offset + blk.dof] = blk.body.x.ravel()
        return u

    def gather_velocity(self) -> np.ndarray:
        u = np.empty(self.n_dof)
        for blk in self.blocks:
            if blk.is_affine:
                u[blk.offset : blk.offset + 12] = blk.body.q_dot
            else:
                u[blk.offset : blk.offset + blk.dof] = blk.body.v.ravel()
        return u

    def scatter(self, u: np.ndarray) -> None:
        for blk in self.blocks:
            if blk.is_affine:
                blk.body.q = u[blk.offset : blk.offset + 12].copy()
            else:
                blk.body.x = u[blk.offset : blk.offset + blk.dof].reshape(-1, 3).copy()

    def mass_diagonal_blocks(self):
        """Per-block mass data: (offset, diag masses) or (offset, 12x12 M_b)."""
        out = []
        for blk in self.blocks:
            if blk.is_affine:
                out.append((blk.offset, blk.body.M_b))
            else:
                out.append((blk.offset, blk.body.mass))
        return out

    def average_vertex_mass(self) -> float:
        """Average lumped vertex mass, affine bodies counted by total mass
        spread over their surface vertices; used to scale barrier stiffness."""
        total, count = 0.0, 0
        for b in self.soft_bodies + self.shells:
            total += b.mass.sum()
            count += b.n_verts
        for b in self.affine_bodies:
            total += b.mass
            count += len(b.mesh.vertices)
        return total / max(count, 1)


def predictor(state: GlobalState, h: float, gravity=GRAVITY) -> np.ndarray:
    """Inertial target x̂ = x + h v + h² M⁻¹ f_ext for every block.

    The affine gravity force is the generalized 12-vector (m g, g_i ρ∫x⁰);
    kinematic bodies get the same formula and are pinned by constraints, not
    by the predictor.
    """
    g = np.asarray(gravity, dtype=np.float64)
    xhat = state.gather() + h * state.gather_velocity()
    for blk in state.blocks:
        b = blk.body
        if blk.is_affine:
            f = np.zeros(12)
            f[:3] = b.mass * g
            rho_first = b.density * b.first_moment
            for i in range(3):
                f[3 + 3 * i : 6 + 3 * i] = g[i] * rho_first
            xhat[blk.offset : blk.offset + 12] += h * h * np.linalg.solve(b.M_b, f)
        else:
            xhat[blk.offset : blk.offset + blk.dof] += (h * h) * np.tile(g, b.n_verts)
    return xhat


def finalize_step(state: GlobalState, x_prev: np.ndarray, x_next: np.ndarray, h: float) -> None:
    """Overwrite positions with x_next and set v = (x_next − x_prev)/h."""
    v = (x_next - x_prev) / h
    for blk in state.blocks:
        b = blk.body
        if blk.is_affine:
            b.q = x_next[blk.offset : blk.offset + 12].copy()
            b.q_dot = v[blk.offset : blk.offset + 12].copy()
        else:
            b.x = x_next[blk.offset : blk.offset + blk.dof].reshape(-1, 3).copy()
            b.v = v[blk.offset : blk.offset + blk.dof].reshape(-1, 3).copy()
