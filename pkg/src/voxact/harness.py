"""Desk-scale evaluation: keyframe metrics, success predicates, rollouts.

The success predicates translate the simulator sensor checks into geometry:
a jar is open when some gripper holds the body at a grasp amount inside
(0.5, 0.93) and the lid has risen by at least its own height; a drawer is
open when some gripper sits within 2 cm of the drawer-top stabilization zone
and the extension passes 0.12 m. Harness thresholds (proximity delta, grasp
radius, extension) are package constants, not tuned per episode.

Rollouts run kinematically: each iteration renders the scene, predicts both
arms, snaps the decoded voxel/bin actions into world poses, and applies the
stabilizing arm before the acting arm. Detection happens once per episode on
the first rendered frame; its failure aborts the episode as a failed outcome.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actions import (
    LanguageGoal,
    assign_arms,
    decode_action,
    labels_to_action,
    softmax_maps,
)
from .detector import (
    detect,
    detection_record,
    object_pose_from_detection,
    object_pose_to_world,
    write_fixture,
)
from .errors import ConfigError, DataError, DetectionError, ServiceError
from .geometry import Pose6D, WORLD, bins_to_euler, euler_to_quat
from .policy import Observation
from .roles import HAND_OVER_ITEM, OPEN_DRAWER, OPEN_JAR, PUT_ITEM_IN_DRAWER, alpha_for_task
from .rgbd import deproject
from .toyworld import (
    BASE_SPEC,
    GRASP_RADIUS,
    TASK_QUERY,
    ToyScene,
    apply_arm_action,
    drawer_top_zone,
    front_camera,
    jar_body_center,
    jar_dims,
    jar_lid_closed_center,
    lid_center,
    make_plan,
    point_in_yawed_box,
    render,
    scene_proprio,
    scene_side_of_receiver,
    top_drawer_interior,
    ID_OBJECT,
    ID_ITEM,
)
from .voxel import crop_spec, voxel_to_world, voxelize, world_to_voxel

DRAWER_EXTENSION_SUCCESS = 0.12      # meters
STABILIZE_PROXIMITY = 0.02           # meters to the drawer-top zone
JAR_GRASP_RANGE = (0.5, 0.93)        # gripper open amount while on the body


@dataclass
class EvalMetrics:
    trans_error_mean: float
    trans_error_max: float
    rot_bin_error: tuple[float, float, float]  # circular mean abs per axis
    open_acc: float
    collide_acc: float
    id_acc: float
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "trans_error_mean": self.trans_error_mean,
            "trans_error_max": self.trans_error_max,
            "rot_bin_error": list(self.rot_bin_error),
            "open_acc": self.open_acc,
            "collide_acc": self.collide_acc,
            "id_acc": self.id_acc,
            "n_samples": self.n_samples,
        }


def circular_bin_distance(a: int, b: int, n_bins: int) -> int:
    d = abs(a - b) % n_bins
    return min(d, n_bins - d)


def evaluate_keyframes(policy_pair, dataset, per_sample: list | None = None) -> EvalMetrics:
    """Score an (acting, stabilizing) policy pair on keyframe samples.

    Each sample contributes two predictions, one per role, routed to the
    physical arm that assign_arms picks for the sample's goal. When
    ``per_sample`` is a list, one row dict per prediction is appended to it.
    """
    acting_policy, stabilizing_policy = policy_pair
    trans_errors: list[float] = []
    rot_errors: list[np.ndarray] = []
    open_hits = collide_hits = id_hits = 0
    n = 0
    for sample in dataset:
        acting_arm, stabilizing_arm = assign_arms(sample.goal)
        for policy, labels, arm, role in (
                (acting_policy, sample.acting_label, acting_arm, "acting"),
                (stabilizing_policy, sample.stabilizing_label, stabilizing_arm,
                 "stabilizing")):
            obs = Observation(grid=sample.observation, proprio=sample.proprio,
                              goal=sample.goal, arm_id=arm)
            decoded = decode_action(softmax_maps(policy.predict(obs)))
            want = labels_to_action(labels)
            err = float(np.linalg.norm(
                np.array(decoded.trans_voxel) - np.array(want.trans_voxel)))
            trans_errors.append(err)
            n_bins = labels.y_rot.shape[1]
            rot = np.array([
                circular_bin_distance(decoded.rot_bins.bins[i], want.rot_bins.bins[i], n_bins)
                for i in range(3)], dtype=np.float64)
            rot_errors.append(rot)
            open_hits += decoded.open == want.open
            collide_hits += decoded.collide == want.collide
            id_hits += decoded.arm_id == want.arm_id
            n += 1
            if per_sample is not None:
                per_sample.append({
                    "uid": sample.uid, "role": role, "goal": sample.goal.tag,
                    "trans_error_voxels": err,
                    "rot_bin_error_roll": rot[0], "rot_bin_error_pitch": rot[1],
                    "rot_bin_error_yaw": rot[2],
                    "open_hit": int(decoded.open == want.open),
                    "collide_hit": int(decoded.collide == want.collide),
                    "id_hit": int(decoded.arm_id == want.arm_id),
                })
    if n == 0:
        raise DataError("no samples to evaluate")
    rot = np.stack(rot_errors).mean(axis=0)
    return EvalMetrics(
        trans_error_mean=float(np.mean(trans_errors)),
        trans_error_max=float(np.max(trans_errors)),
        rot_bin_error=tuple(float(r) for r in rot),
        open_acc=open_hits / n,
        collide_acc=collide_hits / n,
        id_acc=id_hits / n,
        n_samples=n,
    )


def keyframe_score(metrics: EvalMetrics) -> float:
    """Scalar used for checkpoint selection: lower errors, higher accuracies."""
    return (-(metrics.trans_error_mean + float(np.mean(metrics.rot_bin_error)))
            + metrics.open_acc + metrics.collide_acc + metrics.id_acc)


# --- success predicates ---

def check_success(scene: ToyScene, task: str | None = None) -> bool:
    task = task or scene.task
    if task == OPEN_JAR:
        lo, hi = JAR_GRASP_RANGE
        body = jar_body_center(scene)
        grasped = any(
            lo < g.open_amount < hi
            and np.linalg.norm(g.pose.position - body) <= GRASP_RADIUS
            for g in scene.grippers)
        lift = lid_center(scene)[2] - jar_lid_closed_center(scene)[2]
        return grasped and lift >= jar_dims(scene)["lid_height"]
    if task == OPEN_DRAWER:
        return (_stabilized(scene)
                and scene.drawer_extension >= DRAWER_EXTENSION_SUCCESS)
    if task == PUT_ITEM_IN_DRAWER:
        if scene.item_position is None or scene.item_holder is not None:
            return False
        center, half, yaw = top_drawer_interior(scene)
        return (_stabilized(scene)
                and point_in_yawed_box(scene.item_position, center, half, yaw))
    if task == HAND_OVER_ITEM:
        receiver = scene_side_of_receiver(scene)
        giver = 1 - receiver
        return (scene.item_holder == receiver
                and scene.grippers[giver].open_flag == 1)
    raise ConfigError(f"unknown task {task!r}")


def _stabilized(scene: ToyScene) -> bool:
    zone = drawer_top_zone(scene)
    return any(np.linalg.norm(g.pose.position - zone) <= STABILIZE_PROXIMITY
               for g in scene.grippers)


# --- rollout ---

@dataclass
class EpisodeOutcome:
    success: bool
    keyframes_used: int
    reason: str = ""
    goal_tag: str = ""


class OracleArmPolicy:
    """Scripted policy that replays the task's phase plan, one phase per
    rollout iteration, encoded into whatever crop the observation uses."""

    def __init__(self, plan, role: str, cursor: list, margin: float = 10.0):
        self.plan = plan
        self.role = role
        self.cursor = cursor
        self.margin = margin
        self._last = None

    def predict(self, obs: Observation):
        from .actions import ArmAction, encode_labels, labels_to_logits
        from .geometry import euler_to_bins, quat_to_euler

        i = min(self.cursor[0], len(self.plan) - 1)
        target = getattr(self.plan[i], self.role)
        if target is None:
            target = self._last
        self._last = target
        if self.role == "acting":
            self.cursor[0] += 1  # acting is asked last each iteration
        spec = obs.grid.spec
        idx = world_to_voxel(spec, target.pose.position)
        if idx is None:
            raise DataError("oracle waypoint fell outside the crop")
        bins = euler_to_bins(quat_to_euler(target.pose.orientation), 5.0)
        action = ArmAction(trans_voxel=idx, rot_bins=bins, open=target.open,
                           collide=target.collide, arm_id=obs.arm_id)
        return labels_to_logits(encode_labels(action, spec), margin=self.margin)


def make_oracle_pair(scene: ToyScene):
    plan = make_plan(scene)
    cursor = [0]
    return (OracleArmPolicy(plan, "acting", cursor),
            OracleArmPolicy(plan, "stabilizing", cursor))


def detect_scene_object(scene: ToyScene, frame, inst, fixture_dir,
                        mode: str = "fixture", endpoint: str | None = None):
    """Detect the task object on a rendered frame.

    In fixture mode the renderer's instance mask is first recorded as the
    fixture (the stand-in for an offline segmenter run), then replayed
    through the ordinary fixture path.
    """
    query = TASK_QUERY[scene.task]
    if mode == "fixture":
        mask = (inst == ID_OBJECT) | (inst == ID_ITEM)
        if not mask.any():
            raise DetectionError("object not visible in the rendered frame")
        vs, us = np.nonzero(mask)
        bbox = (float(us.min()), float(vs.min()), float(us.max()), float(vs.max()))
        write_fixture(fixture_dir, frame.rgb,
                      [detection_record(query, bbox, 1.0, mask)])
    return detect(frame.rgb, query, mode=mode, fixture_dir=fixture_dir,
                  endpoint=endpoint)


def decoded_to_pose(action, spec) -> Pose6D:
    position = voxel_to_world(spec, action.trans_voxel)
    euler = bins_to_euler(action.rot_bins)
    return Pose6D(position, euler_to_quat(euler), frame=WORLD)


def run_episode(policy_pair, scene: ToyScene, max_keyframes: int = 10,
                fixture_dir=None, detector_mode: str = "fixture",
                endpoint: str | None = None, alpha: float | None = None,
                alpha_mode: str = "fixed", base_spec=None,
                image_size: int = 128) -> EpisodeOutcome:
    """Kinematic closed-loop rollout of a policy pair on one scene.

    Terminates on success, on the keyframe budget, or when a decoded pose
    leaves the workspace. A failed detection aborts the episode as a failed
    outcome; an unreachable detection service raises ServiceError so the
    caller can fall back or bail out. With ``alpha_mode="estimated"`` the
    crop fraction comes from the detected object's largest dimension.
    """
    base = base_spec or BASE_SPEC
    intr, extr = front_camera(image_size, image_size)
    acting_policy, stabilizing_policy = policy_pair

    frame, inst = render(scene, intr, extr)
    try:
        det = detect_scene_object(scene, frame, inst, fixture_dir,
                                  mode=detector_mode, endpoint=endpoint)
        obj_cam = object_pose_from_detection(det, frame.depth, intr, extrinsics=extr)
    except DetectionError as e:
        return EpisodeOutcome(False, 0, reason=f"detection-failed: {e}")
    if alpha is None:
        if alpha_mode == "estimated":
            from .roles import estimate_alpha

            alpha = estimate_alpha(obj_cam, float(max(base.span)))
        else:
            alpha = alpha_for_task(scene.task)
    goal = _goal_from_camera_pose(obj_cam, scene.task)
    centroid = object_pose_to_world(obj_cam, extr).position
    spec = crop_spec(base, centroid, alpha)
    acting_arm, stabilizing_arm = assign_arms(goal)

    for it in range(1, max_keyframes + 1):
        frame, _ = render(scene, intr, extr)
        grid = voxelize([deproject(frame)], spec)
        proprio = scene_proprio(scene, it - 1)
        for policy, arm in ((stabilizing_policy, stabilizing_arm),
                            (acting_policy, acting_arm)):
            obs = Observation(grid=grid, proprio=proprio, goal=goal, arm_id=arm)
            try:
                decoded = decode_action(softmax_maps(policy.predict(obs)))
            except DataError as e:
                return EpisodeOutcome(False, it, reason=str(e), goal_tag=goal.tag)
            pose = decoded_to_pose(decoded, spec)
            if world_to_voxel(base, pose.position) is None:
                return EpisodeOutcome(False, it, reason="out-of-reach decode",
                                      goal_tag=goal.tag)
            apply_arm_action(scene, arm, pose, decoded.open)
        if check_success(scene):
            return EpisodeOutcome(True, it, goal_tag=goal.tag)
    return EpisodeOutcome(False, max_keyframes, reason="keyframe budget exhausted",
                          goal_tag=goal.tag)


def _goal_from_camera_pose(obj_cam, task: str) -> LanguageGoal:
    from .roles import assign_goal

    return assign_goal(obj_cam, task)
