"""Contact-force readout from the barrier gradient.

The contact energy is assembled on collision-slot world positions and then
lifted to generalized coordinates. Evaluating the same assembly against an
identity slot-to-DoF map yields the raw per-slot gradient, i.e. world-frame
forces before any rigid-body lift. In the incremental potential the barrier
is unscaled while external forces enter times h^2, so the gradient balances
h^2 times the physical load; sensed forces divide that back out to Newtons.
"""

from __future__ import annotations

import numpy as np

from ..energy.contact import ContactIndex, contact_energy
from ..geometry.broadphase import broad_phase


def _identity_index(cindex: ContactIndex) -> ContactIndex:
    n = len(cindex.is_affine)
    return ContactIndex(
        is_affine=np.zeros(n, dtype=bool),
        soft_dof=3 * np.arange(n, dtype=np.int64)[:, None] + np.arange(3),
        body_offset=np.zeros(n, dtype=np.int64),
        rest=cindex.rest,
        edge_rest_len2=cindex.edge_rest_len2,
    )


def slot_contact_forces(scene, h: float, x: np.ndarray | None = None) -> np.ndarray:
    """World-frame contact force (N) on every collision slot at state x."""
    xw = scene.world_slots(x)
    cand = broad_phase(
        xw, scene.tables, scene.barrier.dhat, scene.ground_y, scene.bp_cache
    )
    forces = np.zeros((len(xw), 3), dtype=np.float64)
    if cand.total == 0:
        return forces
    term, _ = contact_energy(
        xw,
        cand,
        scene.tables,
        _identity_index(scene.cindex),
        scene.barrier,
        scene.ground_y,
        derivatives=True,
    )
    np.add.at(forces.ravel(), term.gidx, term.gval)
    return -forces / (h * h)


def body_contact_force(scene, body, h: float, x: np.ndarray | None = None) -> np.ndarray:
    """Resultant contact force (N) on one body: sum of its slot forces."""
    for bi, blk in enumerate(scene.state.blocks):
        if blk.body is body:
            slots = scene.tables.vert_body == bi
            return slot_contact_forces(scene, h, x)[slots].sum(axis=0)
    raise ValueError("body is not part of this scene")


def finger_forces(scene, gripper, h: float, x: np.ndarray | None = None) -> np.ndarray:
    """Per-finger force magnitude (N), ordered by gripper.finger_names."""
    slot_f = slot_contact_forces(scene, h, x)
    body_index = {id(blk.body): bi for bi, blk in enumerate(scene.state.blocks)}
    out = np.zeros(len(gripper.finger_names))
    for k, fname in enumerate(gripper.finger_names):
        total = np.zeros(3)
        for link_name in gripper.finger_groups[fname]:
            body = gripper.links[link_name]
            bi = body_index.get(id(body))
            if bi is None:
                raise ValueError(f"gripper link '{link_name}' is not in the scene")
            total += slot_f[scene.tables.vert_body == bi].sum(axis=0)
        out[k] = np.linalg.norm(total)
    return out
