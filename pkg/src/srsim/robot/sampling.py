"""Antipodal grasp sampling for parallel-jaw pre-grasps.

A sample starts from an area-weighted random surface point, shoots a ray
inward along the negative normal, and keeps the farthest exit point. The
pair is accepted when both surface normals lie inside the friction cone
around the connecting axis. Accepted pairs become pre-grasp poses: the jaw
axis is the gripper x, the approach direction (palm normal) the gripper z,
and the fingertip center stands off from the grasp midpoint along -z.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..geometry.mesh import SurfaceMesh
from .proximity import ray_hits

log = logging.getLogger(__name__)

_WORLD_DOWN = np.array([0.0, -1.0, 0.0])


@dataclass
class GraspSample:
    pose: np.ndarray  # (4, 4) gripper root frame
    width: float  # antipodal gap (m); jaws must open beyond this
    p1: np.ndarray  # first contact point
    p2: np.ndarray  # second contact point


def _triangle_data(mesh: SurfaceMesh):
    tris = np.asarray(mesh.triangles, dtype=np.int64)
    a = mesh.vertices[tris[:, 0]]
    e1 = mesh.vertices[tris[:, 1]] - a
    e2 = mesh.vertices[tris[:, 2]] - a
    n = np.cross(e1, e2)
    areas = 0.5 * np.linalg.norm(n, axis=1)
    normals = n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)
    return tris, areas, normals


def sample_grasps(
    mesh: SurfaceMesh,
    n: int,
    mu: float = 0.4,
    dhat: float = 1e-3,
    tcp_offset: float = 0.0,
    max_width: float = np.inf,
    seed: int = 0,
) -> list[GraspSample]:
    """Sample up to n antipodal parallel-jaw grasps on a closed surface.

    tcp_offset is the distance from the gripper root origin to the fingertip
    center along the palm normal; the returned pose backs the fingertips off
    by 10 * dhat from the grasp midpoint. Pairs wider than max_width (the jaw
    aperture) are infeasible and rejected. Fewer than n samples are returned
    (with a warning) when 100 * n attempts cannot find enough valid pairs.
    """
    if n == 0:
        return []
    rng = np.random.default_rng(seed)
    tris, areas, normals = _triangle_data(mesh)
    weights = areas / areas.sum()
    cone_cos = np.cos(np.arctan(mu))
    out: list[GraspSample] = []
    for _ in range(100 * n):
        if len(out) >= n:
            break
        ti = rng.choice(len(tris), p=weights)
        u, v = rng.random(2)
        if u + v > 1.0:
            u, v = 1.0 - u, 1.0 - v
        t = tris[ti]
        p1 = (
            mesh.vertices[t[0]]
            + u * (mesh.vertices[t[1]] - mesh.vertices[t[0]])
            + v * (mesh.vertices[t[2]] - mesh.vertices[t[0]])
        )
        n1 = normals[ti]
        hit_t, hit_ids = ray_hits(p1, -n1, mesh.vertices, mesh.triangles)
        if len(hit_t) == 0:
            continue
        p2 = p1 - hit_t[-1] * n1  # farthest exit: the opposite side
        width = float(hit_t[-1])
        if width <= 1e-9 or width > max_width:
            continue
        axis = (p2 - p1) / width
        n2 = normals[hit_ids[-1]]
        # both contact forces (along +-axis) must lie in the friction cones
        if (axis @ -n1) < cone_cos or (-axis @ -n2) < cone_cos:
            continue
        approach = _WORLD_DOWN - (_WORLD_DOWN @ axis) * axis
        norm = np.linalg.norm(approach)
        if norm < 1e-6:
            # axis vertical: approach horizontally, seeded choice of heading
            fallback = np.array([1.0, 0.0, 0.0])
            approach = fallback - (fallback @ axis) * axis
            norm = np.linalg.norm(approach)
        approach /= norm
        x_axis = axis
        z_axis = approach
        y_axis = np.cross(z_axis, x_axis)
        mid = 0.5 * (p1 + p2)
        pose = np.eye(4)
        pose[:3, 0], pose[:3, 1], pose[:3, 2] = x_axis, y_axis, z_axis
        pose[:3, 3] = mid - (10.0 * dhat + tcp_offset) * z_axis
        out.append(GraspSample(pose, width, p1.copy(), p2.copy()))
    if len(out) < n:
        log.warning("antipodal sampling found %d of %d requested grasps", len(out), n)
    return out
