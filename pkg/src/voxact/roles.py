"""Arm-role selection from the detected object pose, and crop-fraction choice.

Drawer-family tasks assign roles by which way the drawer faces: positive yaw
(toward the left arm) selects the left-acting goal. Jar and handover tasks
assign roles by which arm the object is closer to. The camera-frame pose
convention puts +y toward the left robot arm, so both rules reduce to a sign
test; ties go to the right-acting goal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actions import GOAL_AS, GOAL_SA, LanguageGoal
from .errors import ConfigError
from .voxel import GridSpec

OPEN_JAR = "open_jar"
OPEN_DRAWER = "open_drawer"
PUT_ITEM_IN_DRAWER = "put_item_in_drawer"
HAND_OVER_ITEM = "hand_over_item"

TASKS = (OPEN_JAR, OPEN_DRAWER, PUT_ITEM_IN_DRAWER, HAND_OVER_ITEM)
DRAWER_TASKS = (OPEN_DRAWER, PUT_ITEM_IN_DRAWER)

ALPHA_MIN = 0.05
DEFAULT_PADDING = 0.05  # meters around the object when estimating alpha

GOAL_TEXT = {
    (GOAL_AS, OPEN_JAR): "grasp the jar with the right gripper and unscrew the lid with the left",
    (GOAL_SA, OPEN_JAR): "grasp the jar with the left gripper and unscrew the lid with the right",
    (GOAL_AS, OPEN_DRAWER): "hold the drawer top with the right gripper and pull the drawer open with the left",
    (GOAL_SA, OPEN_DRAWER): "hold the drawer top with the left gripper and pull the drawer open with the right",
    (GOAL_AS, PUT_ITEM_IN_DRAWER): "hold the drawer with the right gripper; open it and place the item inside with the left",
    (GOAL_SA, PUT_ITEM_IN_DRAWER): "hold the drawer with the left gripper; open it and place the item inside with the right",
    (GOAL_AS, HAND_OVER_ITEM): "pick up the item with the left gripper and hand it to the right",
    (GOAL_SA, HAND_OVER_ITEM): "pick up the item with the right gripper and hand it to the left",
}


@dataclass(frozen=True)
class ObjectPose:
    """Detected object pose. Position is in the front-camera frame unless a
    caller has mapped it to world; +y points toward the left robot arm."""

    position: np.ndarray  # (3,) meters
    yaw_deg: float        # facing direction in the horizontal plane
    extent: np.ndarray    # (3,) meters, bounding dimensions
    label: str = ""

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        ext = np.asarray(self.extent, dtype=np.float64).reshape(3)
        if np.any(ext <= 0):
            raise ConfigError(f"object extent must be positive, got {ext}")
        if not (-180.0 <= self.yaw_deg < 180.0):
            raise ConfigError(f"yaw {self.yaw_deg} outside [-180, 180)")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "extent", ext)


def _check_task(task: str) -> None:
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}, expected one of {TASKS}")


def goal_for_tag(tag: str, task: str) -> LanguageGoal:
    _check_task(task)
    return LanguageGoal(tag, GOAL_TEXT[(tag, task)])


def assign_goal(obj: ObjectPose, task: str) -> LanguageGoal:
    """Pick the language goal (and thereby the arm roles) for a task.

    Drawer tasks test the facing yaw; jar and handover tasks test which arm
    the object sits closer to (sign of camera-frame y).
    """
    _check_task(task)
    if task in DRAWER_TASKS:
        tag = GOAL_AS if obj.yaw_deg > 0 else GOAL_SA
    else:
        tag = GOAL_AS if obj.position[1] > 0 else GOAL_SA
    return goal_for_tag(tag, task)


def alpha_for_task(task: str) -> float:
    """Fixed crop fraction per task: 0.3 for the jar, 0.4 otherwise."""
    _check_task(task)
    return 0.3 if task == OPEN_JAR else 0.4


def estimate_alpha(obj: ObjectPose, workspace_span: float,
                   padding: float = DEFAULT_PADDING) -> float:
    """Crop fraction from the object's largest dimension plus padding.

    alpha = clamp((max(extent) + 2 * padding) / workspace_span, 0.05, 1.0).
    """
    if workspace_span <= 0:
        raise ConfigError("workspace span must be positive")
    alpha = (float(np.max(obj.extent)) + 2.0 * padding) / workspace_span
    return float(np.clip(alpha, ALPHA_MIN, 1.0))


def validate_alpha(obj_at_max_scale: ObjectPose, alpha: float, base: GridSpec) -> bool:
    """True when the object's bounding box, centered at its position, fits
    inside the alpha-cropped span on every axis."""
    if not (0.0 < alpha <= 1.0):
        raise ConfigError(f"alpha {alpha} outside (0, 1]")
    return bool(np.all(obj_at_max_scale.extent <= alpha * base.span))
