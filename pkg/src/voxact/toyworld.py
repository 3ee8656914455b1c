"""Synthetic desk-scale scenes: geometry, rendering, scripts, generation.

The world is a tabletop at z=0 inside a 2 m cubic workspace. One elevated
front camera (on the +x side, pitched down) renders scenes by splatting
surface sample points through the pinhole model with a z-buffer, producing
RGB-D frames plus an instance-id image that stands in for ground-truth
segmentation when recording detection fixtures.

Tasks follow short scripted phase plans (per-role gripper targets). The same
kinematic rules that execute decoded actions at rollout time also drive the
demonstration generator, so demos and rollouts share one state machine:
grippers teleport, closing near a part attaches it, carried parts follow the
gripper, and pulling an attached handle extends the drawer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .actions import LanguageGoal, Proprio
from .demos import ArmTarget, DemoEpisode, DemoStep
from .errors import ConfigError
from .geometry import (
    CAMERA,
    WORLD,
    CameraIntrinsics,
    Pose6D,
    euler_to_quat,
    inverse,
    matrix_to_quat,
    transform_point,
)
from .rgbd import RgbdFrame, depth_from_millimeters
from .roles import (
    HAND_OVER_ITEM,
    OPEN_DRAWER,
    OPEN_JAR,
    PUT_ITEM_IN_DRAWER,
    ObjectPose,
    assign_goal,
)
from .voxel import GridSpec

# workspace: 50^3 voxels spanning 2^3 meters, table surface at z = 0
BASE_SPEC = GridSpec(origin=np.array([-1.0, -1.0, -0.5]),
                     span=np.array([2.0, 2.0, 2.0]), dims=(50, 50, 50))

GRIPPER_MAX_WIDTH = 0.085   # parallel-jaw opening, meters
GRASP_RADIUS = 0.04         # attach distance for closing near a part
MAX_DRAWER_EXTENSION = 0.25

LEFT_START = np.array([-0.35, 0.35, 0.30])
RIGHT_START = np.array([-0.35, -0.35, 0.30])

TASK_QUERY = {OPEN_JAR: "jar", OPEN_DRAWER: "drawer",
              PUT_ITEM_IN_DRAWER: "drawer", HAND_OVER_ITEM: "item"}

# ids in the rendered instance image
ID_TABLE = 0
ID_OBJECT = 1
ID_ITEM = 2
ID_GRIPPER_LEFT = 3
ID_GRIPPER_RIGHT = 4


def front_camera(width: int = 128, height: int = 128) -> tuple[CameraIntrinsics, Pose6D]:
    """Elevated front camera looking down at the table center.

    Mounted so the camera +y axis coincides with world +y (toward the left
    robot arm), which is the pose convention role assignment relies on.
    """
    eye = np.array([0.85, 0.0, 0.85])
    target = np.array([-0.05, 0.0, 0.0])
    z_cam = target - eye
    z_cam = z_cam / np.linalg.norm(z_cam)
    y_cam = np.array([0.0, 1.0, 0.0])
    x_cam = np.cross(y_cam, z_cam)
    R = np.stack([x_cam, y_cam, z_cam], axis=1)
    intr = CameraIntrinsics(fx=110.0, fy=110.0, cx=width / 2.0, cy=height / 2.0,
                            width=width, height=height)
    extr = Pose6D(eye, matrix_to_quat(R), frame=WORLD, child_frame=CAMERA)
    return intr, extr


@dataclass
class GripperState:
    pose: Pose6D
    open_amount: float = 1.0  # 1 fully open, 0 fully closed
    open_flag: int = 1        # commanded binary state


@dataclass
class ToyScene:
    """Full kinematic state of one desk scene."""

    task: str
    object_position: np.ndarray   # base center on the table, z = 0
    object_yaw_deg: float
    scale: float
    grippers: list[GripperState]
    drawer_extension: float = 0.0
    lid_position: np.ndarray | None = None
    lid_holder: int | None = None
    handle_holder: int | None = None
    item_position: np.ndarray | None = None
    item_holder: int | None = None
    receiver_arm: int | None = None  # handover only; fixed when the scene is made

    def __post_init__(self):
        if not (0.9 - 1e-9 <= self.scale <= 1.0 + 1e-9):
            raise ConfigError(f"scale {self.scale} outside [0.9, 1.0]")
        if self.task in (OPEN_DRAWER, PUT_ITEM_IN_DRAWER):
            if abs(self.object_yaw_deg) > 22.5 + 1e-9:
                raise ConfigError(f"drawer yaw {self.object_yaw_deg} outside +/-22.5 deg")
        self.object_position = np.asarray(self.object_position, dtype=np.float64)


# --- object geometry, all scaled ---

def facing(scene: ToyScene) -> np.ndarray:
    rad = math.radians(scene.object_yaw_deg)
    return np.array([math.cos(rad), math.sin(rad), 0.0])


def drawer_dims(scene: ToyScene) -> dict:
    s = scene.scale
    return {
        "depth": 0.36 * s, "width": 0.20 * s, "height": 0.24 * s,
        "bottom_level": 0.065 * s, "top_level": 0.175 * s,
        "compartment_half": np.array([0.16 * s, 0.08 * s, 0.04 * s]),
        "handle_out": 0.02,
    }


def jar_dims(scene: ToyScene) -> dict:
    s = scene.scale
    return {"body_radius": 0.030 * s, "body_height": 0.10 * s,
            "lid_radius": 0.024 * s, "lid_height": 0.03 * s}


ITEM_SIZE = 0.045


def drawer_top_zone(scene: ToyScene) -> np.ndarray:
    d = drawer_dims(scene)
    return scene.object_position + np.array([0.0, 0.0, d["height"]])


def handle_closed_pos(scene: ToyScene, level: str) -> np.ndarray:
    d = drawer_dims(scene)
    z = d["bottom_level"] if level == "bottom" else d["top_level"]
    return (scene.object_position + facing(scene) * (d["depth"] / 2 + d["handle_out"])
            + np.array([0.0, 0.0, z]))


def handle_level_for_task(task: str) -> str:
    return "bottom" if task == OPEN_DRAWER else "top"


def handle_current_pos(scene: ToyScene) -> np.ndarray:
    level = handle_level_for_task(scene.task)
    return handle_closed_pos(scene, level) + facing(scene) * scene.drawer_extension


def jar_body_center(scene: ToyScene) -> np.ndarray:
    d = jar_dims(scene)
    return scene.object_position + np.array([0.0, 0.0, d["body_height"] / 2])


def jar_lid_closed_center(scene: ToyScene) -> np.ndarray:
    d = jar_dims(scene)
    return scene.object_position + np.array([0.0, 0.0, d["body_height"] + d["lid_height"] / 2])


def lid_center(scene: ToyScene) -> np.ndarray:
    return (scene.lid_position if scene.lid_position is not None
            else jar_lid_closed_center(scene))


def top_drawer_interior(scene: ToyScene) -> tuple[np.ndarray, np.ndarray, float]:
    """(center, half-extents in drawer axes, yaw) of the pulled top drawer."""
    d = drawer_dims(scene)
    center = (scene.object_position + facing(scene) * scene.drawer_extension
              + np.array([0.0, 0.0, d["top_level"]]))
    return center, d["compartment_half"], scene.object_yaw_deg


def point_in_yawed_box(pt: np.ndarray, center: np.ndarray, half: np.ndarray,
                       yaw_deg: float) -> bool:
    rel = np.asarray(pt, float) - center
    rad = math.radians(-yaw_deg)
    c, s = math.cos(rad), math.sin(rad)
    local = np.array([c * rel[0] - s * rel[1], s * rel[0] + c * rel[1], rel[2]])
    return bool(np.all(np.abs(local) <= half + 1e-9))


def object_centroid(scene: ToyScene) -> np.ndarray:
    """Ground-truth crop anchor, the 3D center of the object of interest."""
    if scene.task in (OPEN_DRAWER, PUT_ITEM_IN_DRAWER):
        d = drawer_dims(scene)
        return scene.object_position + np.array([0.0, 0.0, d["height"] / 2])
    if scene.task == OPEN_JAR:
        d = jar_dims(scene)
        h = d["body_height"] + d["lid_height"]
        return scene.object_position + np.array([0.0, 0.0, h / 2])
    return np.array(scene.item_position, dtype=np.float64)


def scene_object_pose(scene: ToyScene, extrinsics: Pose6D) -> ObjectPose:
    """Ground-truth object pose in the camera frame (for goal assignment)."""
    cam_pos = transform_point(inverse(extrinsics), object_centroid(scene))
    if scene.task in (OPEN_DRAWER, PUT_ITEM_IN_DRAWER):
        d = drawer_dims(scene)
        extent = np.array([d["depth"], d["width"], d["height"]])
    elif scene.task == OPEN_JAR:
        d = jar_dims(scene)
        extent = np.array([2 * d["body_radius"], 2 * d["body_radius"],
                           d["body_height"] + d["lid_height"]])
    else:
        extent = np.full(3, ITEM_SIZE)
    return ObjectPose(position=cam_pos, yaw_deg=scene.object_yaw_deg,
                      extent=extent, label=TASK_QUERY[scene.task])


def scene_goal(scene: ToyScene, extrinsics: Pose6D) -> LanguageGoal:
    return assign_goal(scene_object_pose(scene, extrinsics), scene.task)


# --- surface sampling and rendering ---

def _box_points(center, size, yaw_deg, spacing, color):
    """Sample all six faces of a yawed box."""
    half = np.asarray(size, float) / 2
    rad = math.radians(yaw_deg)
    c, s = math.cos(rad), math.sin(rad)
    pts = []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            u_ax, v_ax = [a for a in range(3) if a != axis]
            nu = max(2, int(size[u_ax] / spacing) + 1)
            nv = max(2, int(size[v_ax] / spacing) + 1)
            uu, vv = np.meshgrid(np.linspace(-half[u_ax], half[u_ax], nu),
                                 np.linspace(-half[v_ax], half[v_ax], nv))
            face = np.zeros((uu.size, 3))
            face[:, axis] = sign * half[axis]
            face[:, u_ax] = uu.ravel()
            face[:, v_ax] = vv.ravel()
            pts.append(face)
    local = np.concatenate(pts)
    world = np.empty_like(local)
    world[:, 0] = c * local[:, 0] - s * local[:, 1]
    world[:, 1] = s * local[:, 0] + c * local[:, 1]
    world[:, 2] = local[:, 2]
    world += np.asarray(center, float)
    colors = np.tile(np.asarray(color, float), (world.shape[0], 1))
    return world, colors


def _cylinder_points(center, radius, height, spacing, color):
    n_theta = max(8, int(2 * math.pi * radius / spacing))
    n_z = max(2, int(height / spacing) + 1)
    theta = np.linspace(0, 2 * math.pi, n_theta, endpoint=False)
    zs = np.linspace(-height / 2, height / 2, n_z)
    tt, zz = np.meshgrid(theta, zs)
    lateral = np.stack([radius * np.cos(tt).ravel(), radius * np.sin(tt).ravel(),
                        zz.ravel()], axis=1)
    # top disc
    rr = np.linspace(0, radius, max(2, int(radius / spacing) + 1))
    rg, tg = np.meshgrid(rr, theta)
    disc = np.stack([(rg * np.cos(tg)).ravel(), (rg * np.sin(tg)).ravel(),
                     np.full(rg.size, height / 2)], axis=1)
    local = np.concatenate([lateral, disc])
    world = local + np.asarray(center, float)
    colors = np.tile(np.asarray(color, float), (world.shape[0], 1))
    return world, colors


def _gripper_points(g: GripperState, color, spacing=0.009):
    """Body box plus two finger plates whose gap tracks the open amount."""
    R = g.pose.rotation_matrix()
    body_local, colors = _box_points(np.zeros(3), (0.04, 0.06, 0.03), 0.0, spacing, color)
    gap = g.open_amount * GRIPPER_MAX_WIDTH / 2
    fingers = []
    for sign in (-1.0, 1.0):
        f, _ = _box_points((0.0, sign * gap, -0.035), (0.03, 0.008, 0.04), 0.0,
                           spacing, color)
        fingers.append(f)
    local = np.concatenate([body_local] + fingers)
    world = local @ R.T + g.pose.position
    colors = np.tile(np.asarray(color, float), (world.shape[0], 1))
    return world, colors


def finger_positions(scene: ToyScene) -> np.ndarray:
    """(4, 3) finger tips: left arm L/R finger, right arm L/R finger."""
    out = []
    for g in scene.grippers:
        R = g.pose.rotation_matrix()
        gap = g.open_amount * GRIPPER_MAX_WIDTH / 2
        for sign in (1.0, -1.0):
            out.append(g.pose.position + R @ np.array([0.0, sign * gap, -0.04]))
    return np.array(out)


def scene_points(scene: ToyScene, spacing: float = 0.009):
    """All surface samples: (points, colors, instance ids)."""
    chunks = []

    def add(pts, cols, inst):
        chunks.append((pts, cols, np.full(pts.shape[0], inst, dtype=np.int32)))

    # table patch
    xs = np.arange(-0.7, 0.6, 0.012)
    ys = np.arange(-0.55, 0.55, 0.012)
    xx, yy = np.meshgrid(xs, ys)
    table = np.stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)], axis=1)
    add(table, np.tile([0.55, 0.52, 0.50], (table.shape[0], 1)), ID_TABLE)

    if scene.task in (OPEN_DRAWER, PUT_ITEM_IN_DRAWER):
        d = drawer_dims(scene)
        body_center = scene.object_position + [0, 0, d["height"] / 2]
        pts, cols = _box_points(body_center, (d["depth"], d["width"], d["height"]),
                                scene.object_yaw_deg, spacing, (0.45, 0.30, 0.15))
        add(pts, cols, ID_OBJECT)
        # pulled compartment front slab + handle
        level = handle_level_for_task(scene.task)
        z = d["bottom_level" if level == "bottom" else "top_level"]
        front = (scene.object_position + facing(scene)
                 * (d["depth"] / 2 + scene.drawer_extension) + [0, 0, z])
        pts, cols = _box_points(front, (0.015, d["width"] * 0.9, 0.07 * scene.scale),
                                scene.object_yaw_deg, spacing, (0.35, 0.22, 0.10))
        add(pts, cols, ID_OBJECT)
        handle = handle_current_pos(scene)
        pts, cols = _box_points(handle, (0.022, 0.06, 0.022), scene.object_yaw_deg,
                                spacing, (0.1, 0.1, 0.12))
        add(pts, cols, ID_OBJECT)
        if scene.task == PUT_ITEM_IN_DRAWER and scene.item_position is not None:
            pts, cols = _box_points(scene.item_position, (ITEM_SIZE,) * 3, 0.0,
                                    spacing, (0.1, 0.6, 0.15))
            add(pts, cols, ID_ITEM)
    elif scene.task == OPEN_JAR:
        d = jar_dims(scene)
        pts, cols = _cylinder_points(jar_body_center(scene), d["body_radius"],
                                     d["body_height"], spacing * 0.7, (0.2, 0.35, 0.7))
        add(pts, cols, ID_OBJECT)
        pts, cols = _cylinder_points(lid_center(scene), d["lid_radius"],
                                     d["lid_height"], spacing * 0.7, (0.75, 0.15, 0.15))
        add(pts, cols, ID_OBJECT)
    elif scene.task == HAND_OVER_ITEM:
        pts, cols = _box_points(scene.item_position, (ITEM_SIZE,) * 3, 0.0,
                                spacing, (0.1, 0.6, 0.15))
        add(pts, cols, ID_ITEM)

    for arm, color, inst in ((0, (0.55, 0.25, 0.65), ID_GRIPPER_LEFT),
                             (1, (0.85, 0.50, 0.10), ID_GRIPPER_RIGHT)):
        pts, cols = _gripper_points(scene.grippers[arm], color)
        add(pts, cols, inst)

    points = np.concatenate([c[0] for c in chunks])
    colors = np.concatenate([c[1] for c in chunks])
    ids = np.concatenate([c[2] for c in chunks])
    return points, colors, ids


def render(scene: ToyScene, intrinsics: CameraIntrinsics, extrinsics: Pose6D,
           camera_name: str = "front") -> tuple[RgbdFrame, np.ndarray]:
    """Z-buffer point splat; returns the frame and the instance-id image."""
    points, colors, ids = scene_points(scene)
    R = extrinsics.rotation_matrix()
    cam = (points - extrinsics.position) @ R
    z = cam[:, 2]
    keep = z > 0.05
    cam, colors, ids = cam[keep], colors[keep], ids[keep]
    z = z[keep]
    u = np.round(intrinsics.fx * cam[:, 0] / z + intrinsics.cx).astype(np.int64)
    v = np.round(intrinsics.fy * cam[:, 1] / z + intrinsics.cy).astype(np.int64)
    inside = (u >= 0) & (u < intrinsics.width) & (v >= 0) & (v < intrinsics.height)
    u, v, z, colors, ids = u[inside], v[inside], z[inside], colors[inside], ids[inside]

    order = np.argsort(-z)  # far to near; nearest write wins
    u, v, z, colors, ids = u[order], v[order], z[order], colors[order], ids[order]
    h, w = intrinsics.height, intrinsics.width
    depth_mm = np.zeros((h, w), dtype=np.uint16)
    rgb = np.full((h, w, 3), 230, dtype=np.uint8)
    inst = np.full((h, w), -1, dtype=np.int32)
    depth_mm[v, u] = np.clip(np.round(z * 1000.0), 1, 65535).astype(np.uint16)
    rgb[v, u] = np.clip(np.round(colors * 255.0), 0, 255).astype(np.uint8)
    inst[v, u] = ids
    frame = RgbdFrame(rgb=rgb, depth=depth_from_millimeters(depth_mm),
                      intrinsics=intrinsics, extrinsics=extrinsics,
                      camera_name=camera_name)
    return frame, inst


# --- kinematic execution ---

def _part_width(scene: ToyScene, part: str) -> float:
    if part == "jar_body":
        return 2 * jar_dims(scene)["body_radius"]
    if part == "lid":
        return 2 * jar_dims(scene)["lid_radius"]
    if part == "handle":
        return 0.022
    if part == "item":
        return ITEM_SIZE
    return 0.0


def _nearby_part(scene: ToyScene, pos: np.ndarray) -> str | None:
    candidates = []
    if scene.task == OPEN_JAR:
        candidates.append(("jar_body", jar_body_center(scene)))
        if scene.lid_holder is None:
            candidates.append(("lid", lid_center(scene)))
    if scene.task in (OPEN_DRAWER, PUT_ITEM_IN_DRAWER):
        candidates.append(("handle", handle_current_pos(scene)))
    if scene.item_position is not None:
        candidates.append(("item", np.asarray(scene.item_position)))
    best, best_d = None, GRASP_RADIUS
    for name, center in candidates:
        d = float(np.linalg.norm(pos - center))
        if d <= best_d:
            best, best_d = name, d
    return best


def settle_item(scene: ToyScene) -> None:
    """Drop a free item straight down onto whatever is beneath it."""
    if scene.item_position is None or scene.item_holder is not None:
        return
    pos = np.array(scene.item_position, dtype=np.float64)
    if scene.task == PUT_ITEM_IN_DRAWER:
        center, half, yaw = top_drawer_interior(scene)
        flat = np.array([pos[0], pos[1], center[2]])
        if point_in_yawed_box(flat, center, half * [1, 1, 10], yaw):
            pos[2] = center[2]
            scene.item_position = pos
            return
        d = drawer_dims(scene)
        top = drawer_top_zone(scene)
        if point_in_yawed_box(np.array([pos[0], pos[1], top[2]]),
                              scene.object_position + [0, 0, d["height"]],
                              np.array([d["depth"] / 2, d["width"] / 2, 0.02]),
                              scene.object_yaw_deg):
            pos[2] = d["height"] + ITEM_SIZE / 2
            scene.item_position = pos
            return
    pos[2] = ITEM_SIZE / 2
    scene.item_position = pos


def apply_arm_action(scene: ToyScene, arm: int, pose: Pose6D, open_flag: int) -> None:
    """Teleport one gripper and update attachments and carried parts."""
    g = scene.grippers[arm]
    g.pose = pose
    g.open_flag = int(open_flag)
    pos = pose.position

    if open_flag == 1:
        g.open_amount = 1.0
        if scene.lid_holder == arm:
            scene.lid_holder = None
        if scene.handle_holder == arm:
            scene.handle_holder = None
        if scene.item_holder == arm:
            scene.item_holder = None
            settle_item(scene)
        return

    held = None
    if scene.lid_holder == arm:
        held = "lid"
    elif scene.handle_holder == arm:
        held = "handle"
    elif scene.item_holder == arm:
        held = "item"
    if held is None:
        held = _nearby_part(scene, pos)
        if held == "lid":
            scene.lid_holder = arm
        elif held == "handle":
            scene.handle_holder = arm
        elif held == "item":
            scene.item_holder = arm

    g.open_amount = (_part_width(scene, held) / GRIPPER_MAX_WIDTH if held else 0.0)
    if held == "lid":
        scene.lid_position = np.array(pos)
    elif held == "item":
        scene.item_position = np.array(pos)
    elif held == "handle":
        level = handle_level_for_task(scene.task)
        pull = float(np.dot(pos - handle_closed_pos(scene, level), facing(scene)))
        scene.drawer_extension = float(np.clip(pull, 0.0, MAX_DRAWER_EXTENSION))


def scene_proprio(scene: ToyScene, timestep: int) -> Proprio:
    return Proprio(gripper_open=(scene.grippers[0].open_flag,
                                 scene.grippers[1].open_flag),
                   finger_positions=finger_positions(scene), timestep=timestep)


# --- scripted plans ---

@dataclass
class Phase:
    """Per-role gripper targets for one plan step; None means hold."""

    acting: ArmTarget | None
    stabilizing: ArmTarget | None


def _target(pos, euler_deg, open_, collide) -> ArmTarget:
    return ArmTarget(pose=Pose6D(np.asarray(pos, float), euler_to_quat(euler_deg),
                                 frame=WORLD),
                     open=open_, collide=collide)


def make_plan(scene: ToyScene) -> list[Phase]:
    """The task's waypoint script, computed from the initial scene."""
    yaw = scene.object_yaw_deg
    f = facing(scene)
    up = np.array([0.0, 0.0, 1.0])
    if scene.task == OPEN_DRAWER:
        zone = drawer_top_zone(scene)
        handle = handle_closed_pos(scene, "bottom")
        return [
            Phase(acting=_target(handle + f * 0.08, (0, 30, yaw), 1, 1),
                  stabilizing=_target(zone + up * 0.08, (0, 60, yaw), 1, 1)),
            Phase(acting=_target(handle, (0, 30, yaw), 0, 0),
                  stabilizing=_target(zone, (0, 60, yaw), 0, 0)),
            Phase(acting=_target(handle + f * 0.15, (0, 30, yaw), 0, 0),
                  stabilizing=None),
        ]
    if scene.task == OPEN_JAR:
        body = jar_body_center(scene)
        lid = jar_lid_closed_center(scene)
        lift = jar_dims(scene)["lid_height"] + 0.06
        return [
            Phase(acting=_target(lid + up * 0.08, (0, 75, 0), 1, 1),
                  stabilizing=_target(body + np.array([0.09, 0.0, 0.0]), (0, 0, 180), 1, 1)),
            Phase(acting=_target(lid, (0, 75, 0), 0, 0),
                  stabilizing=_target(body, (0, 0, 180), 0, 0)),
            Phase(acting=_target(lid + up * lift, (0, 75, -30), 0, 0),
                  stabilizing=None),
        ]
    if scene.task == PUT_ITEM_IN_DRAWER:
        zone = drawer_top_zone(scene)
        handle = handle_closed_pos(scene, "top")
        pull = 0.15
        item = np.array(scene.item_position)
        drop_xy = (scene.object_position
                   + f * (drawer_dims(scene)["depth"] / 2 + 0.45 * pull))
        drop = np.array([drop_xy[0], drop_xy[1],
                         drawer_dims(scene)["top_level"] + 0.10])
        return [
            Phase(acting=_target(handle + f * 0.08, (0, 30, yaw), 1, 1),
                  stabilizing=_target(zone + up * 0.08, (0, 60, yaw), 1, 1)),
            Phase(acting=_target(handle, (0, 30, yaw), 0, 0),
                  stabilizing=_target(zone, (0, 60, yaw), 0, 0)),
            Phase(acting=_target(handle + f * pull, (0, 30, yaw), 0, 0),
                  stabilizing=None),
            Phase(acting=_target(handle + f * pull + up * 0.07, (0, 30, yaw), 1, 1),
                  stabilizing=None),
            Phase(acting=_target(item + up * 0.07, (0, 75, 0), 1, 1),
                  stabilizing=None),
            Phase(acting=_target(item, (0, 75, 0), 0, 0), stabilizing=None),
            Phase(acting=_target(drop, (0, 75, 0), 0, 0), stabilizing=None),
            Phase(acting=_target(drop, (0, 75, 0), 1, 0), stabilizing=None),
        ]
    if scene.task == HAND_OVER_ITEM:
        item = np.array(scene.item_position)
        meet = np.array([-0.05, 0.0, 0.28])
        # the receiver (stabilizing arm) comes in from its own side
        recv_side = 1.0 if scene_side_of_receiver(scene) == 0 else -1.0
        offset = np.array([0.0, 0.04 * recv_side, 0.0])
        return [
            Phase(acting=_target(item + up * 0.08, (0, 75, 0), 1, 1),
                  stabilizing=_target(meet + offset * 2, (0, 0, -90 * recv_side), 1, 1)),
            Phase(acting=_target(item, (0, 75, 0), 0, 0), stabilizing=None),
            Phase(acting=_target(meet, (0, 75, 0), 0, 0),
                  stabilizing=_target(meet + offset, (0, 0, -90 * recv_side), 1, 0)),
            Phase(acting=None,
                  stabilizing=_target(meet, (0, 0, -90 * recv_side), 0, 0)),
            Phase(acting=_target(meet - offset, (0, 75, 0), 1, 0), stabilizing=None),
        ]
    raise ConfigError(f"no plan for task {scene.task!r}")


def scene_side_of_receiver(scene: ToyScene) -> int:
    """Physical arm id of the receiving (stabilizing) gripper for handover.

    Fixed when the scene is created; the item's live position cannot be used
    because it crosses the centerline during the handover itself.
    """
    if scene.receiver_arm is not None:
        return scene.receiver_arm
    # fallback: item closer to the left arm -> left acts (gives), right receives
    return 1 if scene.item_position[1] > 0 else 0


# --- scene sampling and demonstration generation ---

def sample_scene(task: str, rng: np.random.Generator, force_tag: str) -> ToyScene:
    """Random in-range scene whose geometry forces the requested goal tag."""
    scale = float(rng.uniform(0.9, 1.0))
    grippers = [GripperState(pose=Pose6D(LEFT_START.copy(), euler_to_quat([0, 0, 0]))),
                GripperState(pose=Pose6D(RIGHT_START.copy(), euler_to_quat([0, 0, 0])))]
    if task in (OPEN_DRAWER, PUT_ITEM_IN_DRAWER):
        yaw_mag = float(rng.uniform(4.0, 22.5))
        yaw = yaw_mag if force_tag == "as" else -yaw_mag
        pos = np.array([rng.uniform(-0.30, -0.08), rng.uniform(-0.15, 0.15), 0.0])
        scene = ToyScene(task=task, object_position=pos, object_yaw_deg=yaw,
                         scale=scale, grippers=grippers)
        if task == PUT_ITEM_IN_DRAWER:
            d = drawer_dims(scene)
            item = (pos - facing(scene) * 0.10 * scale
                    + np.array([0.0, 0.0, d["height"] + ITEM_SIZE / 2]))
            scene.item_position = item
        return scene
    if task == OPEN_JAR:
        y_mag = float(rng.uniform(0.08, 0.25))
        y = y_mag if force_tag == "as" else -y_mag
        pos = np.array([rng.uniform(-0.15, 0.08), y, 0.0])
        return ToyScene(task=task, object_position=pos, object_yaw_deg=0.0,
                        scale=scale, grippers=grippers)
    if task == HAND_OVER_ITEM:
        y_mag = float(rng.uniform(0.08, 0.25))
        y = y_mag if force_tag == "as" else -y_mag
        pos = np.array([rng.uniform(-0.25, 0.02), y, ITEM_SIZE / 2])
        return ToyScene(task=task, object_position=pos.copy(), object_yaw_deg=0.0,
                        scale=scale, grippers=grippers, item_position=pos.copy(),
                        receiver_arm=1 if y > 0 else 0)
    raise ConfigError(f"unknown task {task!r}")


def jitter_scene(scene: ToyScene, offset) -> ToyScene:
    """Translate every scene element by a world offset (crop anchors excluded)."""
    offset = np.asarray(offset, dtype=np.float64)
    moved = replace(
        scene,
        object_position=scene.object_position + offset,
        item_position=(None if scene.item_position is None
                       else np.asarray(scene.item_position) + offset),
        lid_position=(None if scene.lid_position is None
                      else np.asarray(scene.lid_position) + offset),
        grippers=[GripperState(pose=Pose6D(g.pose.position + offset,
                                           g.pose.orientation, frame=WORLD),
                               open_amount=g.open_amount, open_flag=g.open_flag)
                  for g in scene.grippers],
    )
    return moved


def _interpolate(a: np.ndarray, b: np.ndarray, frac: float) -> np.ndarray:
    return a + (b - a) * frac


def generate_episode(task: str, seed: int, force_tag: str,
                     move_steps: int = 4, dwell_steps: int = 5,
                     eps_v: float = 1e-3, image_size: int = 128,
                     world_offset=None) -> DemoEpisode:
    """Script one synthetic demonstration and render every step.

    Joint speeds are drawn above eps_v while moving and below it while
    dwelling, so keyframes land on the dwells where poses equal the phase
    targets exactly. ``world_offset`` shifts the whole scene in space, which
    the held-out evaluation uses to jitter scenes against their crop anchor.
    """
    rng = np.random.default_rng(seed)
    scene = sample_scene(task, rng, force_tag)
    if world_offset is not None:
        scene = jitter_scene(scene, world_offset)
    intr, extr = front_camera(image_size, image_size)
    goal = scene_goal(scene, extr)
    if goal.tag != force_tag:
        raise ConfigError(f"scene sampling produced tag {goal.tag}, wanted {force_tag}")
    plan = make_plan(scene)
    from .actions import assign_arms

    acting_arm, stabilizing_arm = assign_arms(goal)

    # role targets unfold into per-arm targets; None holds the previous one
    current_target = {
        0: ArmTarget(pose=scene.grippers[0].pose, open=1, collide=0),
        1: ArmTarget(pose=scene.grippers[1].pose, open=1, collide=0),
    }
    steps: list[DemoStep] = []
    t = 0
    for phase in plan:
        targets = dict(current_target)
        if phase.acting is not None:
            targets[acting_arm] = phase.acting
        if phase.stabilizing is not None:
            targets[stabilizing_arm] = phase.stabilizing
        start_pos = {arm: scene.grippers[arm].pose.position.copy() for arm in (0, 1)}
        start_open = {arm: scene.grippers[arm].open_flag for arm in (0, 1)}
        for k in range(move_steps):
            frac = (k + 1) / (move_steps + 1)
            for arm in (0, 1):
                pose = Pose6D(_interpolate(start_pos[arm], targets[arm].pose.position, frac),
                              targets[arm].pose.orientation, frame=WORLD)
                apply_arm_action(scene, arm, pose, start_open[arm])
            steps.append(_record_step(scene, t, intr, extr, rng,
                                      speed=rng.uniform(0.05, 0.5), targets=targets,
                                      moving=True, start_open=start_open))
            t += 1
        for _ in range(dwell_steps):
            for arm in (0, 1):
                apply_arm_action(scene, arm, targets[arm].pose, targets[arm].open)
            steps.append(_record_step(scene, t, intr, extr, rng,
                                      speed=rng.uniform(0.0, eps_v * 0.5),
                                      targets=targets, moving=False,
                                      start_open=start_open))
            t += 1
        current_target = targets
    return DemoEpisode(steps=steps, goal=goal,
                       object_position=object_centroid(scene), task=task)


def _record_step(scene: ToyScene, t: int, intr, extr, rng, speed, targets,
                 moving, start_open) -> DemoStep:
    frame, _ = render(scene, intr, extr)
    jv = rng.uniform(0.6, 1.0, size=(2, 7)) * speed
    actions = tuple(
        ArmTarget(pose=scene.grippers[arm].pose,
                  open=(start_open[arm] if moving else targets[arm].open),
                  collide=targets[arm].collide)
        for arm in (0, 1))
    return DemoStep(frames={"front": frame}, proprio=scene_proprio(scene, t),
                    joint_velocities=jv, actions=actions)
