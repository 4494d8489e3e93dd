"""Penetrated-grasp repair: open, retract, re-grasp under spring targets.

Input grasps may start with the hand inside the object, which the stepper
rejects outright. Repair first solves the placement geometrically: fingers
open by a fixed joint offset and the whole hand backs away from the object
along the palm normal in millimeter probes until discrete collision checks
report no crossing triangles and no containment. Only then does dynamics
start, with every link's kinematic target left at the original pose so the
constraint springs pull the hand back while the barrier keeps it outside,
and AutoGrasp closes the fingers from there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..solver import SolverConfig
from .grasp import (
    GraspConfig,
    GraspOutcome,
    GraspPhase,
    GraspTrial,
    autograsp,
    build_grasp_scene,
)
from .gripper import Gripper
from .proximity import (
    count_mesh_intersections,
    max_penetration,
    surface_samples,
    winding_numbers,
)

RETRACT_STEP = 1e-3  # m per probe
RETRACT_MAX = 0.5  # m; beyond this the grasp is unsalvageable


@dataclass
class RepairResult:
    trial: GraspTrial
    cleared: bool  # retraction found an intersection-free placement
    retraction_m: float
    penetration_before_m: float
    penetration_after_m: float


def _hand_object_overlap(gripper: Gripper, obj_mesh_world) -> bool:
    """True when any link surface crosses or sits inside the object surface."""
    ov, ot = obj_mesh_world.vertices, obj_mesh_world.triangles
    for body in gripper.bodies():
        hv = body.world_vertices()
        ht = body.mesh.triangles
        if count_mesh_intersections(hv, np.asarray(ht, dtype=np.int64), ov, np.asarray(ot, dtype=np.int64)):
            return True
        if (winding_numbers(hv, ov, ot) > 0.5).any():
            return True
        # a link swallowing the object entirely also counts as overlap
        if (winding_numbers(ov[:1], hv, ht) > 0.5).any():
            return True
    return False


def _world_mesh(obj):
    from ..bodies import SoftBody
    from ..geometry.mesh import SurfaceMesh

    if isinstance(obj, SoftBody):
        return SurfaceMesh(obj.x.copy(), obj.mesh.surface.triangles)
    return SurfaceMesh(obj.world_vertices(), obj.mesh.triangles)


def _hand_points(gripper: Gripper) -> np.ndarray:
    return np.concatenate(
        [
            surface_samples(b.world_vertices(), b.mesh.triangles, b.mesh.edges)
            for b in gripper.bodies()
        ]
    )


def repair_grasp(
    obj,
    gripper: Gripper,
    pose: np.ndarray,
    joint_values,
    open_offset: float = 0.01,
    grasp_cfg: GraspConfig = GraspConfig(),
    solver_cfg: SolverConfig = SolverConfig(),
    **scene_kwargs,
) -> RepairResult:
    """Clear interpenetration, then AutoGrasp with springs to the input pose."""
    pose = np.asarray(pose, dtype=np.float64)
    joint_values = np.asarray(joint_values, dtype=np.float64)
    trial = GraspTrial(pose.copy(), joint_values.copy())
    obj_mesh = _world_mesh(obj)

    gripper.place(pose, joint_values)
    pen_before = max_penetration(_hand_points(gripper), obj_mesh)

    opened = gripper.clamp_joints(joint_values - open_offset)
    normal = gripper.palm_normal(pose)
    retraction = 0.0
    cleared = False
    while retraction <= RETRACT_MAX:
        probe = pose.copy()
        probe[:3, 3] -= retraction * normal
        gripper.place(probe, opened)
        if not _hand_object_overlap(gripper, obj_mesh):
            cleared = True
            break
        retraction += RETRACT_STEP
    trial.retraction_m = retraction

    if not cleared:
        trial.outcome = GraspOutcome.ABORTED
        trial.advance(GraspPhase.DONE)
        return RepairResult(trial, False, retraction, pen_before, pen_before)

    # dynamics: links start at the retracted placement, but their targets are
    # the original-pose transforms, so the constraint springs drive the hand
    # home while the barrier keeps it feasible
    scene = build_grasp_scene(
        obj, gripper, probe, opened, h=solver_cfg.h, **scene_kwargs
    )
    gripper.set_targets(pose=pose)
    autograsp(scene, gripper, trial, grasp_cfg, solver_cfg)

    pen_after = max_penetration(_hand_points(gripper), _world_mesh(obj))
    trial.penetration_m = pen_after
    if trial.outcome is None:
        trial.outcome = GraspOutcome.SUCCESS
        trial.advance(GraspPhase.DONE)
    return RepairResult(trial, True, retraction, pen_before, pen_after)
