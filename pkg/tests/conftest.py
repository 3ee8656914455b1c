"""Shared test helpers: a brute-force keyframe oracle and synthetic episode
builders. The oracle restates the keyframe predicate with explicit loops so
the extractor can be checked against an independent evaluation."""

import numpy as np

from voxact.actions import LanguageGoal, Proprio
from voxact.demos import ArmTarget, DemoEpisode, DemoStep
from voxact.geometry import CameraIntrinsics, Pose6D, euler_to_quat
from voxact.rgbd import RgbdFrame, depth_from_millimeters


def brute_force_keyframes(ep, eps_v, buffer):
    """Exhaustive evaluation of the keyframe rules, step by step.

    A step fires on (a) a gripper open-state change from the previous step,
    or (b) all joint speeds below eps_v over the whole buffer window ending
    here with no keyframe in the previous `buffer` steps. The final step is
    always appended.
    """
    T = ep.horizon
    emitted = []
    for t in range(T):
        rule_a = False
        if t > 0:
            prev = ep.steps[t - 1].proprio.gripper_open
            cur = ep.steps[t].proprio.gripper_open
            rule_a = cur != prev
        rule_b = False
        if t >= buffer - 1:
            window_still = True
            for u in range(t - buffer + 1, t + 1):
                if not np.all(np.abs(ep.steps[u].joint_velocities) < eps_v):
                    window_still = False
                    break
            recent = any(k in emitted for k in range(t - buffer, t))
            rule_b = window_still and not recent
        if rule_a or rule_b:
            emitted.append(t)
    if T - 1 not in emitted:
        emitted.append(T - 1)
    return emitted


def make_step(gripper_open=(1, 1), speed=0.5, timestep=0, frames=None,
              left_pos=(1.0, 1.0, 1.0), right_pos=(1.0, 1.0, 1.0)):
    proprio = Proprio(gripper_open=gripper_open,
                      finger_positions=np.zeros((4, 3)), timestep=timestep)
    ident = np.array([1.0, 0, 0, 0])
    actions = (
        ArmTarget(pose=Pose6D(np.asarray(left_pos, float), ident), open=gripper_open[0],
                  collide=0),
        ArmTarget(pose=Pose6D(np.asarray(right_pos, float), ident), open=gripper_open[1],
                  collide=0),
    )
    return DemoStep(frames=frames or {}, proprio=proprio,
                    joint_velocities=np.full((2, 7), speed), actions=actions)


def random_trajectory(rng, min_len=6, max_len=40):
    """Episode with random stillness runs and occasional gripper toggles."""
    T = int(rng.integers(min_len, max_len))
    steps = []
    gripper = [1, 1]
    for t in range(T):
        if rng.random() < 0.12 and t > 0:
            gripper = list(gripper)
            gripper[int(rng.integers(2))] ^= 1
        speed = float(rng.choice([0.0, 2e-4, 5e-4, 0.05, 0.4], p=[0.2, 0.15, 0.15, 0.25, 0.25]))
        step = make_step(gripper_open=tuple(gripper), speed=speed, timestep=t)
        # occasionally let one joint exceed the threshold while others rest
        if rng.random() < 0.15:
            step.joint_velocities[int(rng.integers(2)), int(rng.integers(7))] = 0.02
        steps.append(step)
    return DemoEpisode(steps=steps, goal=LanguageGoal("as", "test"),
                       object_position=np.array([1.0, 1.0, 1.0]), task="open_jar")


def tiny_frame(extr_position=(1.0, 1.0, 0.0), size=16, depth_mm=1200, seed=0):
    """A small constant-depth frame whose cloud lands near (1, 1, 1.2)."""
    rng = np.random.default_rng(seed)
    rgb = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
    depth = depth_from_millimeters(np.full((size, size), depth_mm, dtype=np.uint16))
    intr = CameraIntrinsics(fx=40.0, fy=40.0, cx=size / 2, cy=size / 2,
                            width=size, height=size)
    extr = Pose6D(np.asarray(extr_position, float), euler_to_quat([0, 0, 0]),
                  frame="world", child_frame="camera")
    return RgbdFrame(rgb=rgb, depth=depth, intrinsics=intr, extrinsics=extr)
