"""Demonstration episodes: on-disk schema, keyframing, and augmentation.

A step is a keyframe when either gripper's open state flips, or when both
arms' joint velocities have stayed near zero for a full buffer of steps and
no keyframe fired within the last buffer (the refractory window keeps long
dwells from spamming keyframes). The final step is always a keyframe.

Training samples pair the scene at one keyframe with the action at the next
(next-best-pose supervision), voxelized inside the object-centric crop.
Augmentation applies a yaw about the grid's vertical center axis plus a
translation, both snapped to the rotation-bin / voxel lattice so label
transforms stay exact.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .actions import (
    ArmAction,
    LanguageGoal,
    Proprio,
    LabelSet,
    assign_arms,
    encode_labels,
    labels_to_action,
)
from .errors import ConfigError, DataError
from .geometry import (
    WORLD,
    EulerBins,
    Pose6D,
    euler_to_bins,
    quat_to_euler,
)
from .rgbd import RgbdFrame, deproject, load_frame, save_frame
from .voxel import GridSpec, VoxelGrid, crop_spec, voxel_to_world, voxelize, world_to_voxel

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

DEFAULT_EPS_V = 1e-3       # rad/s, "near zero" joint speed
DEFAULT_BUFFER = 4         # steps of sustained stillness before a keyframe
MAX_TRANSLATION_M = 0.125  # augmentation limits
MAX_YAW_DEG = 45.0
AUGMENT_RETRIES = 10


@dataclass(frozen=True)
class ArmTarget:
    """One arm's action in world-pose form, before discretization."""

    pose: Pose6D
    open: int
    collide: int

    def __post_init__(self):
        if self.open not in (0, 1) or self.collide not in (0, 1):
            raise ConfigError("open/collide must be 0 or 1")


@dataclass
class DemoStep:
    frames: dict[str, RgbdFrame]
    proprio: Proprio
    joint_velocities: np.ndarray  # (2, 7) rad/s, left then right
    actions: tuple[ArmTarget, ArmTarget]  # left, right

    def __post_init__(self):
        jv = np.asarray(self.joint_velocities, dtype=np.float64).reshape(2, 7)
        self.joint_velocities = jv


@dataclass
class DemoEpisode:
    steps: list[DemoStep]
    goal: LanguageGoal
    object_position: np.ndarray  # (3,) world
    task: str

    def __post_init__(self):
        if not self.steps:
            raise DataError("episode has no steps")
        self.object_position = np.asarray(self.object_position, dtype=np.float64).reshape(3)

    @property
    def horizon(self) -> int:
        return len(self.steps)


@dataclass
class Keyframe:
    """One training sample: cropped observation plus both arms' labels."""

    step_index: int
    acting_label: LabelSet
    stabilizing_label: LabelSet
    observation: VoxelGrid
    proprio: Proprio
    goal: LanguageGoal
    uid: str = ""


def extract_keyframes(ep: DemoEpisode, eps_v: float = DEFAULT_EPS_V,
                      buffer: int = DEFAULT_BUFFER) -> list[int]:
    """Indices of keyframe steps, strictly increasing, last step included."""
    if buffer < 1:
        raise ConfigError("buffer must be >= 1")
    if eps_v <= 0:
        raise ConfigError("eps_v must be positive")
    T = ep.horizon
    still = [bool(np.all(np.abs(s.joint_velocities) < eps_v)) for s in ep.steps]
    keyframes: list[int] = []
    last = None
    for t in range(T):
        fire = False
        if t > 0 and ep.steps[t].proprio.gripper_open != ep.steps[t - 1].proprio.gripper_open:
            fire = True
        elif t >= buffer - 1 and all(still[t - buffer + 1:t + 1]):
            if last is None or t - last > buffer:
                fire = True
        if fire:
            keyframes.append(t)
            last = t
    if not keyframes or keyframes[-1] != T - 1:
        keyframes.append(T - 1)
    return keyframes


def _target_to_action(target: ArmTarget, spec: GridSpec, arm_id: int,
                      bin_width_deg: float) -> ArmAction | None:
    idx = world_to_voxel(spec, target.pose.position)
    if idx is None:
        return None
    bins = euler_to_bins(quat_to_euler(target.pose.orientation), bin_width_deg)
    return ArmAction(trans_voxel=idx, rot_bins=bins, open=target.open,
                     collide=target.collide, arm_id=arm_id)


def build_training_samples(ep: DemoEpisode, keyframes: list[int], alpha: float,
                           base_spec: GridSpec, detector_pose=None,
                           bin_width_deg: float = 5.0,
                           uid_prefix: str = "") -> list[Keyframe]:
    """Crop, voxelize, and label each keyframe of an episode.

    The crop centers on the detected object when ``detector_pose`` (world
    frame) is given, else on the episode's recorded object position. Samples
    whose action lands outside the cropped grid are rejected with a warning.
    """
    if not keyframes:
        return []
    if any(k < 0 or k >= ep.horizon for k in keyframes):
        raise DataError(f"keyframe indices {keyframes} outside horizon {ep.horizon}")
    centroid = (np.asarray(detector_pose.position, dtype=np.float64)
                if detector_pose is not None else ep.object_position)
    spec = crop_spec(base_spec, centroid, alpha)
    acting_arm, stabilizing_arm = assign_arms(ep.goal)

    samples: list[Keyframe] = []
    for i, k in enumerate(keyframes):
        obs_step = keyframes[i - 1] if i > 0 else 0
        step = ep.steps[k]
        acting = _target_to_action(step.actions[acting_arm], spec, acting_arm, bin_width_deg)
        stabilizing = _target_to_action(step.actions[stabilizing_arm], spec,
                                        stabilizing_arm, bin_width_deg)
        if acting is None or stabilizing is None:
            logger.warning("rejecting keyframe %d: action outside alpha=%.2f crop", k, alpha)
            continue
        clouds = [deproject(f) for f in ep.steps[obs_step].frames.values()]
        grid = voxelize(clouds, spec)
        samples.append(Keyframe(
            step_index=k,
            acting_label=encode_labels(acting, spec),
            stabilizing_label=encode_labels(stabilizing, spec),
            observation=grid,
            proprio=ep.steps[obs_step].proprio,
            goal=ep.goal,
            uid=f"{uid_prefix}k{k}",
        ))
    return samples


def _snap_translation(t, voxel_size: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    return np.round(t / voxel_size) * voxel_size


def _transform_world_many(pts: np.ndarray, center: np.ndarray, yaw_deg: float,
                          t: np.ndarray) -> np.ndarray:
    """Yaw about the grid's vertical center axis, then translate."""
    rad = np.deg2rad(yaw_deg)
    c, s = np.cos(rad), np.sin(rad)
    rel = np.atleast_2d(pts) - center
    moved = np.empty_like(rel)
    moved[:, 0] = c * rel[:, 0] - s * rel[:, 1]
    moved[:, 1] = s * rel[:, 0] + c * rel[:, 1]
    moved[:, 2] = rel[:, 2]
    return moved + center + t


def _transform_world(pt: np.ndarray, center: np.ndarray, yaw_deg: float,
                     t: np.ndarray) -> np.ndarray:
    return _transform_world_many(pt, center, yaw_deg, t)[0]


def _shift_label(labels: LabelSet, spec: GridSpec, center: np.ndarray,
                 yaw_deg: float, t: np.ndarray, yaw_bins: int) -> LabelSet | None:
    action = labels_to_action(labels, bin_width_deg=360.0 / labels.y_rot.shape[1])
    world = voxel_to_world(spec, action.trans_voxel)
    new_idx = world_to_voxel(spec, _transform_world(world, center, yaw_deg, t))
    if new_idx is None:
        return None
    n = labels.y_rot.shape[1]
    bins = list(action.rot_bins.bins)
    bins[2] = (bins[2] + yaw_bins) % n
    moved = ArmAction(trans_voxel=new_idx,
                      rot_bins=EulerBins(tuple(bins), action.rot_bins.bin_width_deg),
                      open=action.open, collide=action.collide, arm_id=action.arm_id)
    return encode_labels(moved, spec)


def _transform_grid(grid: VoxelGrid, center: np.ndarray, yaw_deg: float,
                    t: np.ndarray) -> VoxelGrid:
    spec = grid.spec
    occ_idx = np.argwhere(grid.occupancy > 0)
    new_occ = np.zeros_like(grid.occupancy)
    colsum = np.zeros(spec.dims + (3,), dtype=np.float64)
    if occ_idx.size:
        counts = grid.occupancy[occ_idx[:, 0], occ_idx[:, 1], occ_idx[:, 2]]
        colors = grid.color[occ_idx[:, 0], occ_idx[:, 1], occ_idx[:, 2]].astype(np.float64)
        world = spec.origin + (occ_idx + 0.5) * spec.voxel_size
        moved = _transform_world_many(world, center, yaw_deg, t)
        new_idx = np.floor((moved - spec.origin) / spec.voxel_size).astype(np.int64)
        ok = np.all((new_idx >= 0) & (new_idx < np.asarray(spec.dims)), axis=1)
        # content leaving the grid is dropped; only labels force rejection
        new_idx, counts, colors = new_idx[ok], counts[ok], colors[ok]
        np.add.at(new_occ, (new_idx[:, 0], new_idx[:, 1], new_idx[:, 2]), counts)
        np.add.at(colsum, (new_idx[:, 0], new_idx[:, 1], new_idx[:, 2]),
                  colors * counts[:, None])
    color = np.zeros_like(colsum)
    filled = new_occ > 0
    color[filled] = colsum[filled] / new_occ[filled, None]
    return VoxelGrid(spec, new_occ, color.astype(np.float32))


def apply_se3(sample: Keyframe, t, yaw_deg: float) -> Keyframe | None:
    """Snapped rigid transform of a sample; None when a label leaves the grid.

    The yaw rotates about the grid's vertical center axis before the
    translation is applied. Both are snapped: translation to whole voxels,
    yaw to whole rotation bins, which makes the label shifts exact.
    """
    spec = sample.observation.spec
    bin_width = 360.0 / sample.acting_label.y_rot.shape[1]
    t_snap = _snap_translation(t, spec.voxel_size)
    yaw_bins = int(round(yaw_deg / bin_width))
    yaw_snap = yaw_bins * bin_width
    center = spec.center
    n_bins = sample.acting_label.y_rot.shape[1]

    acting = _shift_label(sample.acting_label, spec, center, yaw_snap, t_snap, yaw_bins % n_bins)
    stabilizing = _shift_label(sample.stabilizing_label, spec, center, yaw_snap,
                               t_snap, yaw_bins % n_bins)
    if acting is None or stabilizing is None:
        return None
    grid = _transform_grid(sample.observation, center, yaw_snap, t_snap)
    return replace(sample, acting_label=acting, stabilizing_label=stabilizing,
                   observation=grid)


def augment(sample: Keyframe, t, yaw_deg: float,
            rng: np.random.Generator | None = None,
            max_translation: float = MAX_TRANSLATION_M,
            max_yaw: float = MAX_YAW_DEG) -> Keyframe:
    """SE(3)-augment a sample with label-consistent snapped transforms.

    When the requested transform pushes a label outside the grid: with an rng,
    new parameters are resampled up to 10 times; without one, the sample is
    returned unmodified.
    """
    t = np.asarray(t, dtype=np.float64).reshape(3)
    if np.any(np.abs(t) > max_translation + 1e-9):
        raise ConfigError(f"translation {t} exceeds +/-{max_translation} m")
    if abs(yaw_deg) > max_yaw + 1e-9:
        raise ConfigError(f"yaw {yaw_deg} exceeds +/-{max_yaw} deg")
    out = apply_se3(sample, t, yaw_deg)
    if out is not None:
        return out
    if rng is not None:
        for _ in range(AUGMENT_RETRIES):
            t_try = rng.uniform(-max_translation, max_translation, size=3)
            yaw_try = float(rng.uniform(-max_yaw, max_yaw))
            out = apply_se3(sample, t_try, yaw_try)
            if out is not None:
                return out
    return sample


# --- episode IO ---
# episode_<k>/meta.json + steps/<t>/{rgb,depth,calib per camera,
# proprio.json, velocities.json, actions.json}; floats stay decimal in JSON
# and images are lossless, so a round trip is bit-exact.

def _pose_to_json(p: Pose6D) -> dict:
    return {"position": p.position.tolist(), "quaternion": p.orientation.tolist()}


def _pose_from_json(d: dict) -> Pose6D:
    return Pose6D(np.array(d["position"]), np.array(d["quaternion"]), frame=WORLD)


def write_episode(ep: DemoEpisode, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "schema_version": SCHEMA_VERSION,
        "task": ep.task,
        "goal": {"tag": ep.goal.tag, "text": ep.goal.text},
        "horizon": ep.horizon,
        "object_position": ep.object_position.tolist(),
    }
    (path / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1))
    for t, step in enumerate(ep.steps):
        step_dir = path / "steps" / f"{t:04d}"
        step_dir.mkdir(parents=True, exist_ok=True)
        for cam in sorted(step.frames):
            save_frame(step.frames[cam], step_dir, cam)
        proprio = {
            "gripper_open": list(step.proprio.gripper_open),
            "finger_positions": step.proprio.finger_positions.tolist(),
            "timestep": step.proprio.timestep,
        }
        (step_dir / "proprio.json").write_text(json.dumps(proprio, sort_keys=True))
        vel = {"left": step.joint_velocities[0].tolist(),
               "right": step.joint_velocities[1].tolist()}
        (step_dir / "velocities.json").write_text(json.dumps(vel, sort_keys=True))
        actions = {}
        for name, target in zip(("left", "right"), step.actions):
            actions[name] = {**_pose_to_json(target.pose),
                             "open": target.open, "collide": target.collide}
        (step_dir / "actions.json").write_text(json.dumps(actions, sort_keys=True))


def read_episode(path) -> DemoEpisode:
    path = Path(path)
    meta_path = path / "meta.json"
    if not meta_path.exists():
        raise DataError(f"no episode at {path}")
    meta = json.loads(meta_path.read_text())
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"unsupported episode schema version {meta.get('schema_version')!r}, "
                        f"expected {SCHEMA_VERSION}")
    steps_dir = path / "steps"
    step_dirs = sorted(steps_dir.iterdir()) if steps_dir.exists() else []
    if len(step_dirs) != meta["horizon"]:
        raise DataError(f"{path}: horizon {meta['horizon']} but {len(step_dirs)} step dirs")
    steps = []
    for step_dir in step_dirs:
        cams = sorted(p.stem.replace("rgb_", "") for p in step_dir.glob("rgb_*.png"))
        frames = {cam: load_frame(step_dir, cam) for cam in cams}
        pro = json.loads((step_dir / "proprio.json").read_text())
        proprio = Proprio(gripper_open=tuple(pro["gripper_open"]),
                          finger_positions=np.array(pro["finger_positions"]),
                          timestep=int(pro["timestep"]))
        vel = json.loads((step_dir / "velocities.json").read_text())
        jv = np.array([vel["left"], vel["right"]], dtype=np.float64)
        act = json.loads((step_dir / "actions.json").read_text())
        targets = tuple(
            ArmTarget(pose=_pose_from_json(act[name]), open=int(act[name]["open"]),
                      collide=int(act[name]["collide"]))
            for name in ("left", "right"))
        steps.append(DemoStep(frames=frames, proprio=proprio,
                              joint_velocities=jv, actions=targets))
    goal = LanguageGoal(meta["goal"]["tag"], meta["goal"]["text"])
    return DemoEpisode(steps=steps, goal=goal,
                       object_position=np.array(meta["object_position"]),
                       task=meta["task"])


def list_episodes(dataset_dir) -> list[Path]:
    dataset_dir = Path(dataset_dir)
    if not dataset_dir.exists():
        raise DataError(f"dataset directory {dataset_dir} does not exist")
    eps = sorted(p for p in dataset_dir.iterdir()
                 if p.is_dir() and p.name.startswith("episode_"))
    if not eps:
        raise DataError(f"no episode_* directories in {dataset_dir}")
    return eps
