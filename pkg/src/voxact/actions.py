"""Discretized two-arm action space: value maps, labels, decoding, losses.

Each arm's action is a voxel index, three rotation-bin indices, and three
binary flags (gripper open, collision-avoid, arm ID). A policy emits one
probability map per component; training targets are one-hot label sets built
from demonstration keyframes. The loss is a plain sum of per-component
cross-entropies, and the two-arm total is the sum of the acting and
stabilizing arm losses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .geometry import EulerBins, num_rotation_bins
from .voxel import GridSpec

LEFT = 0
RIGHT = 1

# goal tags: "as" = left arm acting / right stabilizing, "sa" = the reverse
GOAL_AS = "as"
GOAL_SA = "sa"
GOAL_TAGS = (GOAL_AS, GOAL_SA)

LOG_CLAMP = 1e-12
DELTA_LOGIT_MARGIN = 10.0

PROPRIO_SLOTS = 15  # 2 gripper-open flags + 4 finger positions x 3 + timestep


@dataclass(frozen=True)
class LanguageGoal:
    """Which physical arm acts, plus the instruction text."""

    tag: str
    text: str = ""

    def __post_init__(self):
        if self.tag not in GOAL_TAGS:
            raise ConfigError(f"goal tag must be one of {GOAL_TAGS}, got {self.tag!r}")

    def one_hot(self) -> np.ndarray:
        return np.array([1.0, 0.0]) if self.tag == GOAL_AS else np.array([0.0, 1.0])

    def flipped(self) -> "LanguageGoal":
        return LanguageGoal(GOAL_SA if self.tag == GOAL_AS else GOAL_AS, self.text)


def assign_arms(goal: LanguageGoal) -> tuple[int, int]:
    """(acting arm, stabilizing arm) physical IDs for a goal tag.

    "as" assigns the left arm (0) to acting and the right (1) to stabilizing;
    "sa" is the reverse.
    """
    return (LEFT, RIGHT) if goal.tag == GOAL_AS else (RIGHT, LEFT)


@dataclass(frozen=True, eq=False)
class Proprio:
    """Both arms' gripper state plus finger positions and the timestep.

    Finger order: left arm left finger, left arm right finger, right arm left
    finger, right arm right finger. Flattens to 15 scalar slots.
    """

    gripper_open: tuple[int, int]
    finger_positions: np.ndarray  # (4, 3) meters
    timestep: int

    def __eq__(self, other):
        if not isinstance(other, Proprio):
            return NotImplemented
        return (self.gripper_open == other.gripper_open
                and self.timestep == other.timestep
                and np.array_equal(self.finger_positions, other.finger_positions))

    def __post_init__(self):
        fp = np.asarray(self.finger_positions, dtype=np.float64).reshape(4, 3)
        if self.timestep < 0:
            raise ConfigError("timestep must be >= 0")
        if any(g not in (0, 1) for g in self.gripper_open):
            raise ConfigError("gripper_open entries must be 0 or 1")
        object.__setattr__(self, "finger_positions", fp)
        object.__setattr__(self, "gripper_open", tuple(int(g) for g in self.gripper_open))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([
            np.asarray(self.gripper_open, dtype=np.float64),
            self.finger_positions.ravel(),
            [float(self.timestep)],
        ])


@dataclass(frozen=True)
class ArmAction:
    """One arm's discretized action."""

    trans_voxel: tuple[int, int, int]
    rot_bins: EulerBins
    open: int
    collide: int
    arm_id: int

    def __post_init__(self):
        for name in ("open", "collide", "arm_id"):
            if getattr(self, name) not in (0, 1):
                raise ConfigError(f"{name} must be 0 or 1")
        object.__setattr__(self, "trans_voxel", tuple(int(v) for v in self.trans_voxel))


@dataclass
class ValueMaps:
    """Softmax-normalized distributions over each action component."""

    v_trans: np.ndarray    # (L, W, H)
    v_rot: np.ndarray      # (3, 360/R)
    v_open: np.ndarray     # (2,)
    v_collide: np.ndarray  # (2,)
    v_id: np.ndarray       # (2,)

    def validate(self, tol: float = 1e-5) -> None:
        checks = [
            ("v_trans", self.v_trans.sum()),
            *[(f"v_rot[{i}]", self.v_rot[i].sum()) for i in range(3)],
            ("v_open", self.v_open.sum()),
            ("v_collide", self.v_collide.sum()),
            ("v_id", self.v_id.sum()),
        ]
        for name, total in checks:
            if abs(total - 1.0) > tol:
                raise DataError(f"{name} sums to {total}, not 1")


@dataclass
class LabelSet:
    """One-hot training targets for the five action components."""

    y_trans: np.ndarray    # (L, W, H)
    y_rot: np.ndarray      # (3, 360/R)
    y_open: np.ndarray     # (2,)
    y_collide: np.ndarray  # (2,)
    y_id: np.ndarray       # (2,)

    def components(self):
        return (self.y_trans, self.y_rot, self.y_open, self.y_collide, self.y_id)


@dataclass
class RawMaps:
    """Unnormalized policy outputs with the same shapes as ValueMaps."""

    q_trans: np.ndarray
    q_rot: np.ndarray
    q_open: np.ndarray
    q_collide: np.ndarray
    q_id: np.ndarray


def _stable_softmax(x: np.ndarray, axis=None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_maps(raw: RawMaps) -> ValueMaps:
    """Normalize raw Q maps; rotation is normalized per axis."""
    for name, arr in (("q_trans", raw.q_trans), ("q_rot", raw.q_rot),
                      ("q_open", raw.q_open), ("q_collide", raw.q_collide),
                      ("q_id", raw.q_id)):
        if not np.all(np.isfinite(arr)):
            raise DataError(f"non-finite values in {name}")
    flat = _stable_softmax(raw.q_trans.ravel())
    return ValueMaps(
        v_trans=flat.reshape(raw.q_trans.shape),
        v_rot=_stable_softmax(raw.q_rot, axis=1),
        v_open=_stable_softmax(raw.q_open),
        v_collide=_stable_softmax(raw.q_collide),
        v_id=_stable_softmax(raw.q_id),
    )


def decode_action(maps: ValueMaps, bin_width_deg: float = 5.0) -> ArmAction:
    """Componentwise argmax; ties break to the lowest linear index.

    The decoded arm ID is kept in the result; rollout callers ignore it and
    route actions by the assigned roles instead.
    """
    trans = np.unravel_index(int(np.argmax(maps.v_trans)), maps.v_trans.shape)
    bins = tuple(int(np.argmax(maps.v_rot[i])) for i in range(3))
    return ArmAction(
        trans_voxel=tuple(int(t) for t in trans),
        rot_bins=EulerBins(bins, bin_width_deg),
        open=int(np.argmax(maps.v_open)),
        collide=int(np.argmax(maps.v_collide)),
        arm_id=int(np.argmax(maps.v_id)),
    )


def encode_labels(action: ArmAction, spec: GridSpec) -> LabelSet:
    """One-hot labels for an action under a grid spec."""
    dims = spec.dims
    if any(not (0 <= v < d) for v, d in zip(action.trans_voxel, dims)):
        raise ConfigError(f"voxel {action.trans_voxel} outside grid {dims}")
    n_bins = action.rot_bins.num_bins

    y_trans = np.zeros(dims)
    y_trans[action.trans_voxel] = 1.0
    y_rot = np.zeros((3, n_bins))
    for axis, b in enumerate(action.rot_bins.bins):
        y_rot[axis, b] = 1.0
    y_open = np.zeros(2)
    y_open[action.open] = 1.0
    y_collide = np.zeros(2)
    y_collide[action.collide] = 1.0
    y_id = np.zeros(2)
    y_id[action.arm_id] = 1.0
    return LabelSet(y_trans, y_rot, y_open, y_collide, y_id)


def labels_to_logits(labels: LabelSet, margin: float = DELTA_LOGIT_MARGIN) -> RawMaps:
    """Raw maps with ``margin`` at each label index and 0 elsewhere.

    With margin 10 the label keeps softmax mass e^10 / (e^10 + N - 1), above
    0.994 even for a 50^3 translation map, so decode recovers the action
    exactly.
    """
    return RawMaps(
        q_trans=labels.y_trans * margin,
        q_rot=labels.y_rot * margin,
        q_open=labels.y_open * margin,
        q_collide=labels.y_collide * margin,
        q_id=labels.y_id * margin,
    )


def labels_to_action(labels: LabelSet, bin_width_deg: float = 5.0) -> ArmAction:
    """Recover the discrete action a one-hot label set encodes."""
    trans = np.unravel_index(int(np.argmax(labels.y_trans)), labels.y_trans.shape)
    bins = tuple(int(np.argmax(labels.y_rot[i])) for i in range(3))
    return ArmAction(
        trans_voxel=tuple(int(t) for t in trans),
        rot_bins=EulerBins(bins, bin_width_deg),
        open=int(np.argmax(labels.y_open)),
        collide=int(np.argmax(labels.y_collide)),
        arm_id=int(np.argmax(labels.y_id)),
    )


def _cross_entropy(y: np.ndarray, v: np.ndarray) -> float:
    if y.shape != v.shape:
        raise DataError(f"label shape {y.shape} != map shape {v.shape}")
    return float(-(y * np.log(np.maximum(v, LOG_CLAMP))).sum())


def arm_loss(maps: ValueMaps, labels: LabelSet) -> float:
    """Sum of the five cross-entropy terms for one arm.

    The rotation term sums over the three axes; logs are clamped at 1e-12 so
    degenerate maps stay finite.
    """
    return (
        _cross_entropy(labels.y_trans, maps.v_trans)
        + _cross_entropy(labels.y_rot, maps.v_rot)
        + _cross_entropy(labels.y_open, maps.v_open)
        + _cross_entropy(labels.y_collide, maps.v_collide)
        + _cross_entropy(labels.y_id, maps.v_id)
    )


def total_loss(acting: float, stabilizing: float) -> float:
    """Two-arm training loss: exact sum of the per-arm losses."""
    if acting < 0 or stabilizing < 0:
        raise ConfigError("per-arm losses must be non-negative")
    return acting + stabilizing


def uniform_maps(dims: tuple[int, int, int], bin_width_deg: float = 5.0) -> ValueMaps:
    """Maximum-entropy maps, handy as a degenerate baseline in tests."""
    n_vox = int(np.prod(dims))
    n_bins = num_rotation_bins(bin_width_deg)
    return ValueMaps(
        v_trans=np.full(dims, 1.0 / n_vox),
        v_rot=np.full((3, n_bins), 1.0 / n_bins),
        v_open=np.full(2, 0.5),
        v_collide=np.full(2, 0.5),
        v_id=np.full(2, 0.5),
    )
