"""Grasp execution: force-scaled closing, lift, shake, and outcome scoring.

One control frame equals one solver step. The controller reads per-finger
contact forces after each step and commands joint targets scaled by the
force-decay fraction phi, so fingers approach the hold force smoothly instead
of bouncing off the barrier. A trial advances Init -> AutoGrasp -> Lift ->
Shake -> Done; phases never move backwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..bodies import GlobalState, SoftBody
from ..scene import Scene, make_scene
from ..solver import SolverConfig, step
from .gripper import Gripper
from .proximity import min_ground_distance, min_group_distance
from .sensing import finger_forces

PHASES = ("Init", "AutoGrasp", "Lift", "Shake", "Done")
OUTCOMES = ("Success", "Dropped", "NeverHeld", "Aborted")


class GraspPhase:
    INIT, AUTOGRASP, LIFT, SHAKE, DONE = PHASES


class GraspOutcome:
    SUCCESS, DROPPED, NEVER_HELD, ABORTED = OUTCOMES


@dataclass
class GraspConfig:
    close_rate: float = 1e-3  # m per control frame at phi = 1
    stop_force: float = 1.0  # N per finger, AutoGrasp halt threshold
    phi_k: float = 20.0  # 1/N
    phi_f_star: float = 0.5  # N
    budget: int = 60  # AutoGrasp control frames
    lift_height: float = 0.05  # m
    lift_steps: int = 50
    shake_amplitude: float = 0.02  # m
    shake_hz: float = 2.0
    shake_cycles: int = 2
    settle_steps: int = 10


@dataclass
class GraspTrial:
    pose: np.ndarray  # initial gripper pose (4, 4)
    joint_values: np.ndarray  # initial commanded joints
    phase: str = GraspPhase.INIT
    outcome: str | None = None
    forces: list = field(default_factory=list)  # per frame, per finger (N)
    increments: list = field(default_factory=list)  # per frame, per finger (m)
    penetration_m: float = 0.0
    retraction_m: float = 0.0  # filled by repair
    steps: int = 0

    def advance(self, phase: str) -> None:
        if PHASES.index(phase) < PHASES.index(self.phase):
            raise ValueError(f"phase cannot move backwards: {self.phase} -> {phase}")
        self.phase = phase


def phi(f: float, k: float = 20.0, f_star: float = 0.5) -> float:
    """Force-decay fraction: 1 at no contact, 0 at or beyond the hold force."""
    if f_star <= 0 or k <= 0:
        raise ValueError("phi needs k > 0 and f_star > 0")
    if f < 0:
        raise ValueError("contact force magnitude cannot be negative")
    if f >= f_star:
        return 0.0
    return (math.exp(-k * f) - math.exp(-k * f_star)) / (1.0 - math.exp(-k * f_star))


def control_step(
    gripper: Gripper,
    delta_joint,
    forces,
    k: float = 20.0,
    f_star: float = 0.5,
) -> np.ndarray:
    """Command one force-scaled closing increment; returns the scaled values.

    `delta_joint` and `forces` are per finger (gripper.finger_names order);
    each increment is scaled by phi of that finger's sensed force, so motion
    shrinks smoothly as the force approaches f_star. Targets beyond joint
    limits are clamped (with a warning) by the gripper itself.
    """
    delta = np.asarray(delta_joint, dtype=np.float64)
    scaled = np.array([d * phi(f, k, f_star) for d, f in zip(delta, forces)])
    by_joint = dict(zip(gripper.finger_names, scaled))
    inc = np.array([by_joint.get(n, 0.0) for n in gripper.joint_names])
    gripper.set_targets(joint_values=gripper.joint_values + inc)
    return scaled


def build_grasp_scene(
    obj,
    gripper: Gripper,
    pose: np.ndarray,
    joint_values,
    h: float = 0.01,
    ground_y: float | None = 0.0,
    mu: float = 0.4,
    dhat: float | None = None,
    kappa: float | None = None,
    gravity=None,
    name: str = "",
    seed: int = 0,
) -> Scene:
    """Scene with one object body plus the gripper links under kinematic drive."""
    gripper.place(pose, joint_values)
    soft = [obj] if isinstance(obj, SoftBody) else []
    affine = ([] if soft else [obj]) + gripper.bodies()
    state = GlobalState(soft_bodies=soft, affine_bodies=affine)
    kwargs = dict(
        mu=mu, ground_y=ground_y, constraints=gripper.constraints(h), name=name, seed=seed
    )
    if gravity is not None:
        kwargs["gravity"] = gravity
    return make_scene(
        state, dhat=dhat, kappa=kappa, exclude_pairs=gripper.adjacent_pairs(), **kwargs
    )


def _step(scene: Scene, trial: GraspTrial, config: SolverConfig) -> None:
    step(scene, config)
    trial.steps += 1


def autograsp(
    scene: Scene,
    gripper: Gripper,
    trial: GraspTrial,
    grasp_cfg: GraspConfig = GraspConfig(),
    solver_cfg: SolverConfig = SolverConfig(),
) -> GraspTrial:
    """Close fingers under force feedback until every finger holds stop_force.

    Closing direction is increasing joint value. The loop spends at most
    `budget` control frames; running out marks the trial Aborted.
    """
    trial.advance(GraspPhase.AUTOGRASP)
    h = solver_cfg.h
    reached = False
    for _ in range(grasp_cfg.budget):
        f = finger_forces(scene, gripper, h)
        trial.forces.append(f)
        if (f >= grasp_cfg.stop_force).all():
            reached = True
            break
        rates = np.full(len(gripper.finger_names), grasp_cfg.close_rate)
        steps = control_step(gripper, rates, f, grasp_cfg.phi_k, grasp_cfg.phi_f_star)
        trial.increments.append(steps)
        _step(scene, trial, solver_cfg)
    if not reached:
        f = finger_forces(scene, gripper, h)
        reached = (f >= grasp_cfg.stop_force).all()
        trial.forces.append(f)
    if not reached:
        trial.outcome = GraspOutcome.ABORTED
        trial.advance(GraspPhase.DONE)
    return trial


def lift_and_shake(
    scene: Scene,
    gripper: Gripper,
    obj,
    trial: GraspTrial,
    grasp_cfg: GraspConfig = GraspConfig(),
    solver_cfg: SolverConfig = SolverConfig(),
) -> GraspTrial:
    """Raise the hand, shake it sideways, and score the hold.

    Success requires the object to still be within barrier reach of the hand
    and clear of the ground at the final state.
    """
    if trial.outcome is not None:
        trial.advance(GraspPhase.DONE)
        return trial
    dhat = scene.barrier.dhat
    hand = gripper.bodies()
    if min_group_distance(scene, hand, [obj]) >= dhat:
        trial.outcome = GraspOutcome.NEVER_HELD
        trial.advance(GraspPhase.DONE)
        return trial

    trial.advance(GraspPhase.LIFT)
    pose = gripper.pose.copy()
    for k in range(1, grasp_cfg.lift_steps + 1):
        target = pose.copy()
        target[1, 3] += grasp_cfg.lift_height * k / grasp_cfg.lift_steps
        gripper.set_targets(pose=target)
        _step(scene, trial, solver_cfg)
    lifted = gripper.pose.copy()

    trial.advance(GraspPhase.SHAKE)
    n_shake = int(round(grasp_cfg.shake_cycles / grasp_cfg.shake_hz / solver_cfg.h))
    for k in range(1, n_shake + 1):
        t = k * solver_cfg.h
        target = lifted.copy()
        target[0, 3] += grasp_cfg.shake_amplitude * math.sin(
            2.0 * math.pi * grasp_cfg.shake_hz * t
        )
        gripper.set_targets(pose=target)
        _step(scene, trial, solver_cfg)
    gripper.set_targets(pose=lifted)
    for _ in range(grasp_cfg.settle_steps):
        _step(scene, trial, solver_cfg)

    held = min_group_distance(scene, hand, [obj]) < dhat
    clear = min_ground_distance(scene, [obj]) > dhat
    trial.outcome = GraspOutcome.SUCCESS if held and clear else GraspOutcome.DROPPED
    trial.advance(GraspPhase.DONE)
    return trial


def run_grasp_trial(
    obj,
    gripper: Gripper,
    pose: np.ndarray,
    joint_values,
    grasp_cfg: GraspConfig = GraspConfig(),
    solver_cfg: SolverConfig = SolverConfig(),
    **scene_kwargs,
) -> GraspTrial:
    """Full pipeline on a fresh scene: AutoGrasp, then lift and shake."""
    scene = build_grasp_scene(
        obj, gripper, pose, joint_values, h=solver_cfg.h, **scene_kwargs
    )
    trial = GraspTrial(np.asarray(pose, dtype=np.float64), np.asarray(joint_values))
    autograsp(scene, gripper, trial, grasp_cfg, solver_cfg)
    return lift_and_shake(scene, gripper, obj, trial, grasp_cfg, solver_cfg)
