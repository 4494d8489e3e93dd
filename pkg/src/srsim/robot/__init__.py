"""Gripper import, force sensing, grasp execution, repair, and metrics."""

from .gripper import Gripper, top_down_pose
from .grasp import (
    GraspConfig,
    GraspOutcome,
    GraspPhase,
    GraspTrial,
    autograsp,
    build_grasp_scene,
    control_step,
    lift_and_shake,
    phi,
    run_grasp_trial,
)
from .metrics import GraspMetrics, grasp_metrics
from .repair import RepairResult, repair_grasp
from .sampling import sample_grasps
from .sensing import body_contact_force, finger_forces, slot_contact_forces
from .urdf import UrdfJoint, UrdfLink, UrdfModel, parse_urdf

__all__ = [
    "Gripper",
    "GraspConfig",
    "GraspMetrics",
    "GraspOutcome",
    "GraspPhase",
    "GraspTrial",
    "RepairResult",
    "UrdfJoint",
    "UrdfLink",
    "UrdfModel",
    "autograsp",
    "body_contact_force",
    "build_grasp_scene",
    "control_step",
    "finger_forces",
    "grasp_metrics",
    "lift_and_shake",
    "parse_urdf",
    "phi",
    "repair_grasp",
    "run_grasp_trial",
    "sample_grasps",
    "slot_contact_forces",
    "top_down_pose",
]
