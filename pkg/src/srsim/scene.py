"""Scene container: bodies, collision topology, contact parameters, constraints.

The collision surface is built once from the body list: soft bodies expose
their boundary triangles (interior vertices never become contact slots,
otherwise a body would push against its own surface from inside), shells and
affine surfaces expose everything. Slots index a global surface-vertex table
shared by the broad phase, the barrier assembly, and CCD.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bodies import GRAVITY, AffineBody, GlobalState, SoftBody
from .energy.barrier import BarrierParams, kappa_init
from .energy.contact import ContactIndex
from .energy.shell import hinge_stencils
from .geometry.broadphase import BroadPhaseCache, CollisionTables


def build_collision(
    state: GlobalState, exclude_pairs=()
) -> tuple[CollisionTables, ContactIndex]:
    """Assemble collision tables; exclude_pairs lists body-object pairs that
    must never collide (touching mount faces of articulated links)."""
    tris_all, edges_all = [], []
    vert_body, tri_body, edge_body = [], [], []
    is_affine, soft_dof, body_offset, rest = [], [], [], []
    body_is_rigid, body_is_kinematic = [], []
    base = 0
    for bi, blk in enumerate(state.blocks):
        b = blk.body
        if blk.is_affine:
            surf = b.mesh
            n = len(surf.vertices)
            tris = surf.triangles.astype(np.int64)
            edges = surf.edges.astype(np.int64)
            is_affine.append(np.ones(n, dtype=bool))
            soft_dof.append(np.zeros((n, 3), dtype=np.int64))
            body_offset.append(np.full(n, blk.offset, dtype=np.int64))
            rest.append(surf.vertices.astype(np.float64))
            body_is_rigid.append(True)
            body_is_kinematic.append(b.kinematic)
        else:
            surf = b.mesh.surface if isinstance(b, SoftBody) else b.mesh
            src_tris = surf.triangles.astype(np.int64)
            used = np.unique(src_tris)
            remap = np.full(b.n_verts, -1, dtype=np.int64)
            remap[used] = np.arange(len(used))
            n = len(used)
            tris = remap[src_tris]
            edges = remap[surf.edges.astype(np.int64)]
            is_affine.append(np.zeros(n, dtype=bool))
            soft_dof.append(blk.offset + 3 * used[:, None] + np.arange(3))
            body_offset.append(np.zeros(n, dtype=np.int64))
            rest.append(b.mesh.vertices[used].astype(np.float64))
            body_is_rigid.append(False)
            body_is_kinematic.append(False)
        tris_all.append(tris + base)
        edges_all.append(edges + base)
        vert_body.append(np.full(n, bi, dtype=np.int64))
        tri_body.append(np.full(len(tris), bi, dtype=np.int64))
        edge_body.append(np.full(len(edges), bi, dtype=np.int64))
        base += n

    def cat(parts, width=None):
        if not parts:
            shape = (0,) if width is None else (0, width)
            return np.empty(shape, dtype=np.int64)
        return np.concatenate(parts)

    body_index = {id(blk.body): bi for bi, blk in enumerate(state.blocks)}
    excluded = np.empty((0, 2), dtype=np.int64)
    if exclude_pairs:
        try:
            excluded = np.array(
                [[body_index[id(a)], body_index[id(b)]] for a, b in exclude_pairs],
                dtype=np.int64,
            )
        except KeyError:
            raise ValueError("exclude_pairs references a body not in the state")
    tables = CollisionTables(
        tris=cat(tris_all, 3),
        edges=cat(edges_all, 2),
        vert_body=cat(vert_body),
        tri_body=cat(tri_body),
        edge_body=cat(edge_body),
        body_is_rigid=np.asarray(body_is_rigid, dtype=bool),
        body_is_kinematic=np.asarray(body_is_kinematic, dtype=bool),
        excluded_pairs=excluded,
    )
    rest = (
        np.concatenate(rest) if rest else np.empty((0, 3), dtype=np.float64)
    )
    cindex = ContactIndex(
        is_affine=cat(is_affine).astype(bool),
        soft_dof=cat(soft_dof, 3).reshape(-1, 3),
        body_offset=cat(body_offset),
        rest=rest,
        edge_rest_len2=np.sum(
            (rest[tables.edges[:, 1]] - rest[tables.edges[:, 0]]) ** 2, axis=1
        )
        if len(tables.edges)
        else np.empty(0, dtype=np.float64),
    )
    return tables, cindex


@dataclass
class Scene:
    """Everything one solver instance steps: state, contact data, constraints."""

    state: GlobalState
    tables: CollisionTables
    cindex: ContactIndex
    barrier: BarrierParams
    kappa0: float  # initial barrier stiffness, anchors the adaptation cap
    mu: float = 0.4
    eps_v: float = 1e-3  # m/s
    gravity: np.ndarray = field(default_factory=lambda: np.asarray(GRAVITY))
    ground_y: float | None = None
    constraints: list = field(default_factory=list)
    name: str = ""
    seed: int = 0
    bp_cache: BroadPhaseCache = field(default_factory=BroadPhaseCache)
    hinge_data: dict = field(default_factory=dict)  # id(shell) -> (stencils, angles)

    def world_slots(self, x: np.ndarray | None = None) -> np.ndarray:
        if x is None:
            x = self.state.gather()
        return self.cindex.world_positions(x)

    def bending_stencils(self, shell):
        key = id(shell)
        if key not in self.hinge_data:
            # hinge stencils index body vertices directly (not contact slots)
            self.hinge_data[key] = hinge_stencils(shell.mesh.triangles)
        return self.hinge_data[key]


def make_scene(
    state: GlobalState,
    dhat: float | None = None,
    kappa: float | None = None,
    mu: float = 0.4,
    eps_v: float = 1e-3,
    gravity=GRAVITY,
    ground_y: float | None = None,
    constraints=(),
    name: str = "",
    seed: int = 0,
    exclude_pairs=(),
) -> Scene:
    """Build a scene with contact defaults scaled to its initial geometry.

    dhat defaults to 1e-3 x the bounding-box diagonal of the initial
    collision surface; kappa to 1e4 x average vertex mass / dhat^2.
    """
    tables, cindex = build_collision(state, exclude_pairs=exclude_pairs)
    if dhat is None:
        xw = cindex.world_positions(state.gather())
        if len(xw):
            diag = float(np.linalg.norm(xw.max(axis=0) - xw.min(axis=0)))
        else:
            diag = 1.0
        if ground_y is not None and len(xw):
            diag = max(diag, float(xw[:, 1].max() - ground_y))
        dhat = 1e-3 * diag if diag > 0 else 1e-3
    if kappa is None:
        kappa = kappa_init(state.average_vertex_mass(), dhat)
    return Scene(
        state=state,
        tables=tables,
        cindex=cindex,
        barrier=BarrierParams(dhat, kappa),
        kappa0=kappa,
        mu=mu,
        eps_v=eps_v,
        gravity=np.asarray(gravity, dtype=np.float64),
        ground_y=ground_y,
        constraints=list(constraints),
        name=name,
        seed=seed,
    )
