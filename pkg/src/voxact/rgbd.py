"""RGB-D frame IO and pinhole deprojection into world-frame point clouds.

On disk a frame is `rgb_<cam>.png` (8-bit RGB), `depth_<cam>.png` (16-bit,
millimeters), and `calib_<cam>.json` (intrinsics plus extrinsics as position
and quaternion). Depth 0 and non-finite values mark invalid pixels and are
skipped, not clamped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import IngestError
from .geometry import CAMERA, WORLD, CameraIntrinsics, Pose6D, transform_points

DEPTH_SCALE = 0.001  # stored uint16 millimeters -> float meters


@dataclass
class RgbdFrame:
    rgb: np.ndarray        # (H, W, 3) uint8
    depth: np.ndarray      # (H, W) float32 meters; 0 or non-finite = invalid
    intrinsics: CameraIntrinsics
    extrinsics: Pose6D     # camera -> world
    camera_name: str = "front"

    def __post_init__(self):
        if self.rgb.shape[:2] != self.depth.shape:
            raise IngestError(
                f"rgb {self.rgb.shape[:2]} and depth {self.depth.shape} sizes differ")


@dataclass
class PointCloud:
    points: np.ndarray  # (N, 3) float64 meters, world frame
    colors: np.ndarray  # (N, 3) float64 in [0, 1]

    def __post_init__(self):
        if self.points.shape != self.colors.shape or self.points.ndim != 2:
            raise IngestError("points and colors must both be (N, 3)")


def depth_from_millimeters(mm: np.ndarray) -> np.ndarray:
    return mm.astype(np.float32) * np.float32(DEPTH_SCALE)


def valid_depth_mask(depth: np.ndarray) -> np.ndarray:
    return np.isfinite(depth) & (depth > 0)


def deproject(frame: RgbdFrame) -> PointCloud:
    """Back-project every valid pixel through the pinhole model.

    Camera point for pixel (u, v) with depth d is
    ((u - cx)/fx * d, (v - cy)/fy * d, d); points are then mapped to the
    world frame by the extrinsics. Output order is row-major pixel order.
    """
    k = frame.intrinsics
    depth = frame.depth.astype(np.float64)
    valid = valid_depth_mask(depth)
    vs, us = np.nonzero(valid)  # row-major order
    d = depth[vs, us]
    x = (us - k.cx) / k.fx * d
    y = (vs - k.cy) / k.fy * d
    cam_pts = np.stack([x, y, d], axis=1)
    world_pts = transform_points(frame.extrinsics, cam_pts)
    colors = frame.rgb[vs, us].astype(np.float64) / 255.0
    return PointCloud(world_pts, colors)


def project(points_world: np.ndarray, intrinsics: CameraIntrinsics,
            extrinsics: Pose6D) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forward pinhole model: world points to (u, v, depth).

    Points behind the camera get depth <= 0 and should be discarded by the
    caller.
    """
    R = extrinsics.rotation_matrix()
    cam = (np.asarray(points_world, dtype=np.float64) - extrinsics.position) @ R
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intrinsics.fx * cam[:, 0] / z + intrinsics.cx
        v = intrinsics.fy * cam[:, 1] / z + intrinsics.cy
    return u, v, z


def save_frame(frame: RgbdFrame, step_dir, cam: str | None = None) -> None:
    step_dir = Path(step_dir)
    step_dir.mkdir(parents=True, exist_ok=True)
    cam = cam or frame.camera_name
    Image.fromarray(frame.rgb, mode="RGB").save(step_dir / f"rgb_{cam}.png")
    mm = np.round(frame.depth.astype(np.float64) / DEPTH_SCALE)
    mm = np.clip(np.nan_to_num(mm, nan=0.0, posinf=0.0, neginf=0.0), 0, 65535)
    Image.fromarray(mm.astype(np.uint16)).save(step_dir / f"depth_{cam}.png")
    k = frame.intrinsics
    calib = {
        "intrinsics": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
                       "width": k.width, "height": k.height},
        "extrinsics": {
            "position": frame.extrinsics.position.tolist(),
            "quaternion": frame.extrinsics.orientation.tolist(),
        },
    }
    with open(step_dir / f"calib_{cam}.json", "w") as f:
        json.dump(calib, f, sort_keys=True, indent=1)


def load_frame(step_dir, cam: str) -> RgbdFrame:
    """Load one camera's frame from a step directory.

    Raises IngestError for missing files, undecodable images, or calibration
    that does not match the image size.
    """
    step_dir = Path(step_dir)
    rgb_path = step_dir / f"rgb_{cam}.png"
    depth_path = step_dir / f"depth_{cam}.png"
    calib_path = step_dir / f"calib_{cam}.json"
    for p in (rgb_path, depth_path, calib_path):
        if not p.exists():
            raise IngestError(f"missing frame file {p}")
    try:
        rgb = np.asarray(Image.open(rgb_path).convert("RGB"), dtype=np.uint8)
        depth_raw = np.asarray(Image.open(depth_path))
    except (UnidentifiedImageError, OSError) as e:
        raise IngestError(f"cannot decode image under {step_dir}: {e}") from e
    try:
        calib = json.loads(calib_path.read_text())
        ki = calib["intrinsics"]
        ke = calib["extrinsics"]
        intr = CameraIntrinsics(fx=ki["fx"], fy=ki["fy"], cx=ki["cx"], cy=ki["cy"],
                                width=int(ki["width"]), height=int(ki["height"]))
        extr = Pose6D(np.array(ke["position"]), np.array(ke["quaternion"]),
                      frame=WORLD, child_frame=CAMERA)
    except (KeyError, ValueError, json.JSONDecodeError) as e:
        raise IngestError(f"bad calibration {calib_path}: {e}") from e
    if (intr.height, intr.width) != rgb.shape[:2]:
        raise IngestError(
            f"calibration size {(intr.height, intr.width)} != image {rgb.shape[:2]}")
    if depth_raw.shape != rgb.shape[:2]:
        raise IngestError(f"depth shape {depth_raw.shape} != rgb {rgb.shape[:2]}")
    return RgbdFrame(rgb=rgb, depth=depth_from_millimeters(depth_raw),
                     intrinsics=intr, extrinsics=extr, camera_name=cam)
