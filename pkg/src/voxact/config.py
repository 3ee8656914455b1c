"""Run configuration: one declarative JSON file, mirrored by CLI flags.

Defaults follow the reference hyperparameters: a 50^3 grid spanning 2 m per
axis, 5-degree rotation bins, per-task fixed crop fractions, keyframe
thresholds eps_v=1e-3 rad/s with a 4-step buffer, and SE(3) augmentation
ranges of +/-0.125 m translation and +/-45 degrees yaw.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import ConfigError
from .roles import TASKS

DETECTOR_MODES = ("fixture", "service")
ALPHA_MODES = ("fixed", "estimated")


@dataclass
class RunConfig:
    task: str = "open_drawer"
    alpha_mode: str = "fixed"
    alpha_override: float | None = None
    grid_dims: tuple[int, int, int] = (50, 50, 50)
    base_origin: tuple[float, float, float] = (-1.0, -1.0, -0.5)
    base_span: tuple[float, float, float] = (2.0, 2.0, 2.0)
    rotation_bin_deg: float = 5.0
    eps_v: float = 1e-3
    buffer: int = 4
    aug_translation: float = 0.125
    aug_yaw: float = 45.0
    seed: int = 0
    n_episodes: int = 20
    max_keyframes: int = 10
    downsample_factors: tuple[int, ...] = (10, 5)
    knn_weights: tuple[float, float, float] = (1.0, 1.0, 5.0)
    detector_mode: str = "fixture"
    detector_endpoint: str | None = None
    fixture_dir: str | None = None
    data_dir: str = "data"
    model_dir: str | None = None
    out_dir: str = "out"
    image_size: int = 128
    move_steps: int = 4
    dwell_steps: int = 5
    jitter_voxels: int = 0

    def __post_init__(self):
        self.grid_dims = tuple(int(d) for d in self.grid_dims)
        self.base_origin = tuple(float(v) for v in self.base_origin)
        self.base_span = tuple(float(v) for v in self.base_span)
        self.downsample_factors = tuple(int(f) for f in self.downsample_factors)
        self.knn_weights = tuple(float(w) for w in self.knn_weights)
        self.validate()

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.alpha_mode not in ALPHA_MODES:
            raise ConfigError(f"alpha_mode must be one of {ALPHA_MODES}")
        if self.alpha_override is not None and not (0.0 < self.alpha_override <= 1.0):
            raise ConfigError(f"alpha override {self.alpha_override} outside (0, 1]")
        if self.detector_mode not in DETECTOR_MODES:
            raise ConfigError(f"detector_mode must be one of {DETECTOR_MODES}")
        if 360.0 % self.rotation_bin_deg > 1e-9:
            raise ConfigError("rotation_bin_deg must divide 360")
        if self.eps_v <= 0 or self.buffer < 1:
            raise ConfigError("eps_v must be > 0 and buffer >= 1")
        if self.n_episodes < 0 or self.max_keyframes < 1:
            raise ConfigError("n_episodes must be >= 0 and max_keyframes >= 1")
        if any(d <= 0 for d in self.grid_dims):
            raise ConfigError("grid dims must be positive")
        for f in self.downsample_factors:
            if any(d % f for d in self.grid_dims):
                raise ConfigError(f"downsample factor {f} does not divide {self.grid_dims}")
        if not (0.0 <= self.aug_translation <= 0.125 + 1e-9):
            raise ConfigError("aug_translation must stay within +/-0.125 m")
        if not (0.0 <= self.aug_yaw <= 45.0 + 1e-9):
            raise ConfigError("aug_yaw must stay within +/-45 deg")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid_dims"] = list(self.grid_dims)
        d["downsample_factors"] = list(self.downsample_factors)
        return d

    @property
    def base_spec(self):
        from .voxel import GridSpec
        import numpy as np

        return GridSpec(origin=np.array(self.base_origin),
                        span=np.array(self.base_span), dims=self.grid_dims)

    def resolve_alpha(self, obj=None) -> float:
        from .roles import alpha_for_task, estimate_alpha

        if self.alpha_override is not None:
            return self.alpha_override
        if self.alpha_mode == "estimated":
            if obj is None:
                raise ConfigError("estimated alpha mode needs a detected object pose")
            return estimate_alpha(obj, float(max(self.base_span)))
        return alpha_for_task(self.task)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Config file plus flag overrides; unknown keys are config errors."""
    data: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} does not exist")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {p} is not valid JSON: {e}") from e
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    valid = set(RunConfig.__dataclass_fields__)
    unknown = set(data) - valid
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(**data)
    if cfg.detector_endpoint is None:
        cfg.detector_endpoint = os.environ.get("DETECTOR_ENDPOINT")
    if cfg.fixture_dir is None:
        cfg.fixture_dir = os.environ.get("FIXTURE_DIR")
    return cfg
