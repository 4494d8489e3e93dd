"""Kinematic gripper: URDF link tree realized as target-driven affine bodies.

The solver never sees joints. Forward kinematics turns (pose, joint values)
into one rigid transform per link; those become either the links' states
(when placing the gripper) or their kinematic-constraint targets (when
commanding motion). Joint values are commanded quantities, not measured ones:
the constraint solve may leave links short of their targets under contact.
"""

from __future__ import annotations

import logging

import numpy as np

from ..bodies import AffineBody
from ..constraints import KinematicConstraint, default_kinematic_stiffness
from .urdf import UrdfModel

log = logging.getLogger(__name__)


def top_down_pose(target, yaw: float = 0.0, grip_offset: float = 0.075) -> np.ndarray:
    """Pose whose approach axis (local +z) points world-down at `target`.

    The jaw axis lies in the horizontal plane, rotated `yaw` about vertical;
    local (0, 0, grip_offset), the point between the fingertips, lands on
    `target`.
    """
    x = np.array([np.cos(yaw), 0.0, np.sin(yaw)])
    z = np.array([0.0, -1.0, 0.0])
    t = np.eye(4)
    t[:3, :3] = np.column_stack([x, np.cross(z, x), z])
    t[:3, 3] = np.asarray(target, dtype=np.float64) - grip_offset * z
    return t


def _axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    k = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    return np.eye(3) + s * k + (1 - c) * (k @ k)


class Gripper:
    """Link bodies, finger groups, and FK for a parallel-jaw style hand.

    Finger groups default to one group per actuated joint, containing every
    geometric link in that joint's subtree. The palm is the root link; its
    normal (approach direction, local frame) defaults to +z.
    """

    def __init__(
        self,
        model: UrdfModel,
        density: float = 2000.0,
        palm_normal=(0.0, 0.0, 1.0),
        finger_groups: dict[str, tuple[str, ...]] | None = None,
    ):
        self.model = model
        self.palm_link = model.root
        self.palm_normal_local = np.asarray(palm_normal, dtype=np.float64)
        self.palm_normal_local /= np.linalg.norm(self.palm_normal_local)
        self.joints = model.actuated()
        self.joint_names = [j.name for j in self.joints]

        self.links: dict[str, AffineBody] = {}
        for name, link in model.links.items():
            if link.mesh is not None:
                self.links[name] = AffineBody(
                    link.mesh, density=density, kinematic=True, name=name
                )

        if finger_groups is None:
            finger_groups = {
                j.name: tuple(self._subtree_geometric(j.child)) for j in self.joints
            }
            finger_groups = {k: v for k, v in finger_groups.items() if v}
        for fname, members in finger_groups.items():
            # a finger is an actuated joint plus the links it drives, so the
            # grasp controller can map sensed forces back onto joints by name
            if fname not in self.joint_names:
                raise ValueError(f"finger group '{fname}' is not an actuated joint")
            missing = [m for m in members if m not in self.links]
            if missing:
                raise ValueError(f"finger group '{fname}' names non-geometric links {missing}")
        self.finger_groups = dict(finger_groups)
        self.finger_names = sorted(self.finger_groups)

        self.pose = np.eye(4)
        self.joint_values = np.array([j.lower for j in self.joints])

    def _subtree_geometric(self, link: str) -> list[str]:
        out = [link] if self.model.links[link].mesh is not None else []
        for j in self.model.children_of(link):
            out.extend(self._subtree_geometric(j.child))
        return out

    # ------------------------------------------------------------------
    # Kinematics
    # ------------------------------------------------------------------

    def clamp_joints(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(self.joints),):
            raise ValueError(f"expected {len(self.joints)} joint values")
        lo = np.array([j.lower for j in self.joints])
        hi = np.array([j.upper for j in self.joints])
        clamped = np.clip(values, lo, hi)
        if (clamped != values).any():
            bad = [self.joint_names[i] for i in np.nonzero(clamped != values)[0]]
            log.warning("joint targets clamped to limits: %s", ", ".join(bad))
        return clamped

    def fk(self, pose: np.ndarray | None = None, joint_values=None) -> dict:
        """World transform (4, 4) per link for the given commanded state."""
        pose = self.pose if pose is None else np.asarray(pose, dtype=np.float64)
        q = (
            self.joint_values
            if joint_values is None
            else self.clamp_joints(joint_values)
        )
        by_name = dict(zip(self.joint_names, q))
        out = {self.model.root: pose}
        stack = [self.model.root]
        while stack:
            parent = stack.pop()
            for j in self.model.children_of(parent):
                t = out[parent] @ j.origin
                if j.type == "prismatic":
                    motion = np.eye(4)
                    motion[:3, 3] = j.axis * by_name[j.name]
                    t = t @ motion
                elif j.type == "revolute":
                    motion = np.eye(4)
                    motion[:3, :3] = _axis_rotation(j.axis, by_name[j.name])
                    t = t @ motion
                out[j.child] = t
                stack.append(j.child)
        return out

    def palm_normal(self, pose: np.ndarray | None = None) -> np.ndarray:
        pose = self.pose if pose is None else pose
        return pose[:3, :3] @ self.palm_normal_local

    @staticmethod
    def _q12(t: np.ndarray) -> np.ndarray:
        return np.concatenate([t[:3, 3], t[:3, :3].ravel()])

    def place(self, pose: np.ndarray, joint_values) -> None:
        """Set link states (and targets) directly; used before a run starts."""
        self.pose = np.asarray(pose, dtype=np.float64).copy()
        self.joint_values = self.clamp_joints(joint_values)
        for name, t in self.fk().items():
            if name in self.links:
                body = self.links[name]
                body.q = self._q12(t)
                body.q_dot = np.zeros(12)
                body.target_q = body.q.copy()

    def set_targets(self, pose: np.ndarray | None = None, joint_values=None) -> None:
        """Command the next-step kinematic targets without touching states."""
        if pose is not None:
            self.pose = np.asarray(pose, dtype=np.float64).copy()
        if joint_values is not None:
            self.joint_values = self.clamp_joints(joint_values)
        for name, t in self.fk().items():
            if name in self.links:
                self.links[name].target_q = self._q12(t)

    def constraints(self, h: float) -> list[KinematicConstraint]:
        out = []
        for name in sorted(self.links):
            body = self.links[name]
            out.append(
                KinematicConstraint(
                    body,
                    body.q.copy(),
                    kappa=default_kinematic_stiffness(body.mass, h),
                    mass_scale=body.mass,
                )
            )
        return out

    def bodies(self) -> list[AffineBody]:
        return [self.links[n] for n in sorted(self.links)]

    def adjacent_pairs(self) -> list[tuple[AffineBody, AffineBody]]:
        """Geometric link pairs adjacent in the tree, skipping massless
        intermediate frames. Adjacent links mount flush against each other,
        so contact between them would start the barrier at zero distance."""
        parent_of = {j.child: j.parent for j in self.model.joints}
        out = []
        for name in sorted(self.links):
            anc = parent_of.get(name)
            while anc is not None and anc not in self.links:
                anc = parent_of.get(anc)
            if anc is not None:
                out.append((self.links[anc], self.links[name]))
        return out
