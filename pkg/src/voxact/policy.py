"""Policy interface and a nearest-neighbor behavior-cloning baseline.

A policy maps an Observation (cropped voxel grid, proprioception, language
goal, arm ID) to raw Q maps; callers softmax and argmax-decode them. The
baseline memorizes training keyframes as weighted feature vectors and, at
query time, emits large-margin delta logits at its nearest neighbor's action,
so decoding recovers stored actions exactly (1-NN self-retrieval).

Checkpoint pairs are picked in two greedy phases: every acting candidate is
scored against the latest stabilizing candidate, then every stabilizing
candidate against the phase-1 winner. That is |A| + |S| evaluations instead
of the full |A| x |S| grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .actions import (
    ArmAction,
    LanguageGoal,
    Proprio,
    RawMaps,
    labels_to_action,
    labels_to_logits,
    encode_labels,
)
from .demos import Keyframe
from .errors import ConfigError, DataError
from .voxel import VoxelGrid, downsample

ROLE_ACTING = "acting"
ROLE_STABILIZING = "stabilizing"

DEFAULT_WEIGHTS = (1.0, 1.0, 5.0)  # grid, proprio, goal


@dataclass
class Observation:
    grid: VoxelGrid
    proprio: Proprio
    goal: LanguageGoal
    arm_id: int

    def __post_init__(self):
        if self.arm_id not in (0, 1):
            raise ConfigError("arm_id must be 0 or 1")


class Policy(Protocol):
    """Anything that turns an Observation into raw Q maps."""

    def predict(self, obs: Observation) -> RawMaps: ...


def observation_features(grid: VoxelGrid, proprio: Proprio, goal: LanguageGoal,
                         factor: int, weights=DEFAULT_WEIGHTS) -> np.ndarray:
    w_grid, w_proprio, w_goal = weights
    occ = downsample(grid, factor).occupancy.astype(np.float64).ravel()
    return np.concatenate([w_grid * occ,
                           w_proprio * proprio.as_vector(),
                           w_goal * goal.one_hot()])


@dataclass
class KnnModel:
    features: np.ndarray        # (N, D) float64
    actions: list[ArmAction]
    source_ids: list[str]
    downsample_factor: int
    weights: tuple[float, float, float]
    grid_dims: tuple[int, int, int]
    bin_width_deg: float
    role: str
    margin: float = 10.0

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise DataError("model must hold at least one entry")
        if len(self.actions) != self.features.shape[0]:
            raise DataError("feature/action count mismatch")

    def predict(self, obs: Observation) -> RawMaps:
        return knn_predict(self, obs)


def knn_fit(samples, role: str, downsample_factor: int = 5,
            weights=DEFAULT_WEIGHTS, margin: float = 10.0) -> KnnModel:
    """Memorize one arm-role's labels across the training keyframes.

    ``samples`` may be any iterable of Keyframes; it is consumed once and
    grids are not retained, so datasets can be streamed from disk.
    """
    if role not in (ROLE_ACTING, ROLE_STABILIZING):
        raise ConfigError(f"role must be acting or stabilizing, got {role!r}")
    dims = None
    bin_width = None
    feats, actions, ids = [], [], []
    for i, s in enumerate(samples):
        if dims is None:
            dims = s.observation.spec.dims
            bin_width = 360.0 / s.acting_label.y_rot.shape[1]
        elif s.observation.spec.dims != dims:
            raise DataError("inconsistent grid dims across samples")
        labels = s.acting_label if role == ROLE_ACTING else s.stabilizing_label
        feats.append(observation_features(s.observation, s.proprio, s.goal,
                                          downsample_factor, weights))
        actions.append(labels_to_action(labels, bin_width))
        ids.append(s.uid or f"sample{i}")
    if not feats:
        raise DataError("cannot fit on an empty sample list")
    return KnnModel(features=np.stack(feats), actions=actions, source_ids=ids,
                    downsample_factor=downsample_factor, weights=tuple(weights),
                    grid_dims=dims, bin_width_deg=bin_width, role=role, margin=margin)


def knn_predict(model: KnnModel, obs: Observation) -> RawMaps:
    """Delta logits at the nearest stored action (squared Euclidean, ties to
    the lowest entry id)."""
    q = observation_features(obs.grid, obs.proprio, obs.goal,
                             model.downsample_factor, model.weights)
    if q.shape[0] != model.features.shape[1]:
        raise DataError(f"feature dim {q.shape[0]} != model dim {model.features.shape[1]}")
    d2 = ((model.features - q) ** 2).sum(axis=1)
    best = int(np.argmin(d2))  # argmin returns the first (lowest) index on ties
    action = model.actions[best]
    labels = encode_labels(action, obs.grid.spec)
    return labels_to_logits(labels, margin=model.margin)


def select_checkpoints(acting_cands: Sequence, stabilizing_cands: Sequence,
                       validation, evaluator: Callable) -> tuple:
    """Two-phase greedy pair selection.

    Phase 1 pairs each acting candidate with the LAST stabilizing candidate
    and keeps the best (ties favor the latest candidate). Phase 2 pairs each
    stabilizing candidate with that winner. ``evaluator(acting, stabilizing,
    validation)`` returns a scalar score, higher is better.
    """
    if not acting_cands or not stabilizing_cands:
        raise ConfigError("candidate lists must be non-empty")
    latest_stab = stabilizing_cands[-1]
    best_acting, best_score = None, -np.inf
    for cand in acting_cands:
        score = evaluator(cand, latest_stab, validation)
        if score >= best_score:  # >= keeps the latest on ties
            best_acting, best_score = cand, score
    best_stab, best_score = None, -np.inf
    for cand in stabilizing_cands:
        score = evaluator(best_acting, cand, validation)
        if score >= best_score:
            best_stab, best_score = cand, score
    return best_acting, best_stab


# --- persistence: JSON header line + little-endian feature/action arrays ---

_ACTION_RECORD_LEN = 9  # trans(3) + bins(3) + open + collide + arm_id


def save_model(model: KnnModel, path) -> None:
    header = {
        "format": "knn-v1",
        "n": model.features.shape[0],
        "feature_dim": model.features.shape[1],
        "downsample_factor": model.downsample_factor,
        "weights": list(model.weights),
        "grid_dims": list(model.grid_dims),
        "bin_width_deg": model.bin_width_deg,
        "role": model.role,
        "margin": model.margin,
        "source_ids": model.source_ids,
    }
    records = np.array([
        [*a.trans_voxel, *a.rot_bins.bins, a.open, a.collide, a.arm_id]
        for a in model.actions], dtype="<i4")
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        f.write(model.features.astype("<f8").tobytes(order="C"))
        f.write(records.tobytes(order="C"))


def load_model(path) -> KnnModel:
    from .geometry import EulerBins

    path = Path(path)
    if not path.exists():
        raise DataError(f"no model file at {path}")
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        if header.get("format") != "knn-v1":
            raise DataError(f"unknown model format {header.get('format')!r}")
        n, dim = header["n"], header["feature_dim"]
        feats = np.frombuffer(f.read(n * dim * 8), dtype="<f8").reshape(n, dim).copy()
        raw = np.frombuffer(f.read(n * _ACTION_RECORD_LEN * 4), dtype="<i4")
    records = raw.reshape(n, _ACTION_RECORD_LEN)
    actions = [
        ArmAction(trans_voxel=tuple(int(v) for v in r[:3]),
                  rot_bins=EulerBins(tuple(int(v) for v in r[3:6]),
                                     header["bin_width_deg"]),
                  open=int(r[6]), collide=int(r[7]), arm_id=int(r[8]))
        for r in records]
    return KnnModel(features=feats, actions=actions, source_ids=header["source_ids"],
                    downsample_factor=header["downsample_factor"],
                    weights=tuple(header["weights"]),
                    grid_dims=tuple(header["grid_dims"]),
                    bin_width_deg=header["bin_width_deg"], role=header["role"],
                    margin=header["margin"])


@dataclass
class DeltaPolicy:
    """Stub policy that always emits one fixed action; useful in tests and
    as the shape contract for the policy interface."""

    action: ArmAction
    margin: float = 10.0

    def predict(self, obs: Observation) -> RawMaps:
        return labels_to_logits(encode_labels(self.action, obs.grid.spec),
                                margin=self.margin)


def num_features(dims: tuple[int, int, int], factor: int) -> int:
    """Feature dimension: (dims/factor)^3 + 15 proprio slots + 2 goal slots."""
    l, w, h = (d // factor for d in dims)
    return l * w * h + 15 + 2
