"""Client for the two-stage detect-then-segment pipeline.

Two modes: ``service`` talks HTTP to the detection microservice; ``fixture``
replays recorded detections from ``<fixture_dir>/detections/<image_id>.json``,
where the image id is the SHA-256 of the decoded RGB pixel bytes. Masks
travel as run-length encodings over row-major pixels, counts alternating
zeros/ones and starting with the zero run (possibly 0).

A detection's mask centroid plus the depth image yields the object pose in
the camera frame; without a mask the bounding-box center is used instead
(the degraded, detector-box-only path).
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests
from PIL import Image

from .errors import ConfigError, DetectionError, ServiceError
from .geometry import CameraIntrinsics, Pose6D, transform_point
from .rgbd import valid_depth_mask
from .roles import ObjectPose

SCORE_THRESHOLD = 0.1
DEPTH_SEARCH_RADIUS_PX = 5


@dataclass(frozen=True)
class Detection:
    bbox: tuple[float, float, float, float]  # (u_min, v_min, u_max, v_max)
    score: float
    query: str
    mask: np.ndarray | None = None  # (H, W) bool

    def __post_init__(self):
        u0, v0, u1, v1 = self.bbox
        if u1 < u0 or v1 < v0:
            raise ConfigError(f"degenerate bbox {self.bbox}")


# --- mask run-length codec (row-major, zero run first) ---

def mask_to_rle(mask: np.ndarray) -> dict:
    flat = np.asarray(mask, dtype=bool).ravel(order="C")
    counts = []
    run_value = False
    run_len = 0
    changes = np.nonzero(np.diff(flat))[0]
    prev = 0
    # first run is zeros by convention; emit 0 if the mask starts with ones
    if flat.size and flat[0]:
        counts.append(0)
        run_value = True
    for c in changes:
        counts.append(int(c + 1 - prev))
        prev = c + 1
    if flat.size:
        counts.append(int(flat.size - prev))
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": counts}


def rle_to_mask(rle: dict) -> np.ndarray:
    h, w = rle["size"]
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for count in rle["counts"]:
        if value:
            flat[pos:pos + count] = True
        pos += count
        value = not value
    if pos != h * w:
        raise ConfigError(f"RLE covers {pos} pixels, image has {h * w}")
    return flat.reshape(h, w)


def image_id(rgb: np.ndarray) -> str:
    """SHA-256 of the decoded pixel bytes; keys the fixture store."""
    arr = np.ascontiguousarray(np.asarray(rgb, dtype=np.uint8))
    return hashlib.sha256(arr.tobytes()).hexdigest()


def encode_image_png(rgb: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _detection_from_record(rec: dict, query: str) -> Detection:
    mask = rle_to_mask(rec["mask_rle"]) if rec.get("mask_rle") else None
    return Detection(bbox=tuple(float(x) for x in rec["bbox"]),
                     score=float(rec["score"]), query=query, mask=mask)


def fixture_path(fixture_dir, img_id: str) -> Path:
    return Path(fixture_dir) / "detections" / f"{img_id}.json"


def write_fixture(fixture_dir, rgb: np.ndarray, records: list[dict]) -> Path:
    """Record detections for an image; used when capturing fixtures."""
    path = fixture_path(fixture_dir, image_id(rgb))
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"image_id": image_id(rgb), "detections": records}
    path.write_text(json.dumps(payload, sort_keys=True, indent=1))
    return path


def detection_record(query: str, bbox, score: float, mask: np.ndarray | None = None) -> dict:
    return {
        "query": query,
        "bbox": [float(x) for x in bbox],
        "score": float(score),
        "mask_rle": mask_to_rle(mask) if mask is not None else None,
    }


def detect(rgb: np.ndarray, query: str, mode: str, fixture_dir=None,
           endpoint: str | None = None, want_mask: bool = True,
           timeout: float = 10.0) -> Detection:
    """Top-scoring detection for ``query``, from fixtures or the service.

    Raises DetectionError when nothing scores above the threshold,
    ServiceError when the service cannot be reached, and ConfigError for a
    bad mode or missing fixture directory.
    """
    if mode == "fixture":
        if fixture_dir is None:
            raise ConfigError("fixture mode requires a fixture directory")
        path = fixture_path(fixture_dir, image_id(rgb))
        if not path.exists():
            raise DetectionError(f"no recorded fixture {path}")
        records = json.loads(path.read_text())["detections"]
    elif mode == "service":
        if not endpoint:
            raise ConfigError("service mode requires an endpoint")
        body = {"image": encode_image_png(rgb), "query": query, "want_mask": want_mask}
        try:
            resp = requests.post(endpoint.rstrip("/") + "/detect", json=body, timeout=timeout)
        except requests.RequestException as e:
            raise ServiceError(f"detector service unreachable at {endpoint}: {e}") from e
        if resp.status_code != 200:
            raise ServiceError(f"detector service returned {resp.status_code}: {resp.text[:200]}")
        try:
            records = resp.json().get("detections", [])
        except ValueError as e:
            raise ServiceError(f"detector service sent non-JSON body: {e}") from e
    else:
        raise ConfigError(f"unknown detector mode {mode!r}")

    candidates = [r for r in records
                  if r.get("query", query) == query and float(r["score"]) >= SCORE_THRESHOLD]
    if not candidates:
        raise DetectionError(f"no detection for query {query!r} above {SCORE_THRESHOLD}")
    best = max(candidates, key=lambda r: float(r["score"]))
    return _detection_from_record(best, query)


def mask_centroid(d: Detection) -> tuple[float, float]:
    """Mean (u, v) of mask pixels; bbox center when no mask is present."""
    if d.mask is None:
        u0, v0, u1, v1 = d.bbox
        return ((u0 + u1) / 2.0, (v0 + v1) / 2.0)
    vs, us = np.nonzero(d.mask)
    if vs.size == 0:
        raise DetectionError("detection mask is empty")
    return (float(us.mean()), float(vs.mean()))


def _depth_at(depth: np.ndarray, u: float, v: float) -> float:
    """Depth at the nearest valid pixel within a small search radius."""
    h, w = depth.shape
    ui, vi = int(round(u)), int(round(v))
    valid = valid_depth_mask(depth)
    best, best_d2 = None, None
    r = DEPTH_SEARCH_RADIUS_PX
    for dv in range(-r, r + 1):
        for du in range(-r, r + 1):
            uu, vv = ui + du, vi + dv
            if 0 <= uu < w and 0 <= vv < h and valid[vv, uu]:
                d2 = du * du + dv * dv
                if best_d2 is None or d2 < best_d2:
                    best, best_d2 = float(depth[vv, uu]), d2
    if best is None:
        raise DetectionError(f"no valid depth within {r} px of ({u:.1f}, {v:.1f})")
    return best


def mask_principal_angle(mask: np.ndarray) -> float:
    """Principal-axis angle of the mask's pixel spread, degrees in [-90, 90).

    Measured from the +u axis toward +v. Symmetric distributions (equal
    second moments) return 0 by convention.
    """
    vs, us = np.nonzero(mask)
    if vs.size == 0:
        raise DetectionError("detection mask is empty")
    u = us - us.mean()
    v = vs - vs.mean()
    cov_uu = float((u * u).mean())
    cov_vv = float((v * v).mean())
    cov_uv = float((u * v).mean())
    if abs(cov_uv) < 1e-12 and abs(cov_uu - cov_vv) < 1e-12:
        return 0.0
    angle = 0.5 * np.degrees(np.arctan2(2.0 * cov_uv, cov_uu - cov_vv))
    return float(np.mod(angle + 90.0, 180.0) - 90.0)


def object_pose_from_detection(d: Detection, depth: np.ndarray,
                               intrinsics: CameraIntrinsics,
                               extrinsics: Pose6D | None = None,
                               label: str | None = None) -> ObjectPose:
    """Camera-frame object pose from a detection plus the depth image.

    Position deprojects the centroid pixel; extent deprojects the bbox at the
    centroid depth, with the depth spread over the detection as the third
    dimension. Yaw is the principal-axis angle of the deprojected mask points
    in the horizontal plane when extrinsics are given, else the image-plane
    principal angle (with the bbox aspect as fallback when there is no mask).
    """
    u_c, v_c = mask_centroid(d)
    z = _depth_at(depth, u_c, v_c)
    pos = np.array([(u_c - intrinsics.cx) / intrinsics.fx * z,
                    (v_c - intrinsics.cy) / intrinsics.fy * z,
                    z])

    u0, v0, u1, v1 = d.bbox
    extent_u = max(u1 - u0, 1.0) * z / intrinsics.fx
    extent_v = max(v1 - v0, 1.0) * z / intrinsics.fy
    region = valid_depth_mask(depth)
    sel = d.mask if d.mask is not None else _bbox_mask(depth.shape, d.bbox)
    region = region & sel
    depths = depth[region]
    extent_d = float(depths.max() - depths.min()) if depths.size else min(extent_u, extent_v)
    extent = np.array([extent_u, extent_v, max(extent_d, 1e-3)])

    if d.mask is None:
        yaw = 0.0 if (u1 - u0) >= (v1 - v0) else -90.0
    elif extrinsics is not None:
        yaw = _world_plane_angle(d.mask, depth, intrinsics, extrinsics)
    else:
        yaw = mask_principal_angle(d.mask)
    return ObjectPose(position=pos, yaw_deg=yaw, extent=extent,
                      label=label if label is not None else d.query)


def _bbox_mask(shape, bbox) -> np.ndarray:
    u0, v0, u1, v1 = [int(round(x)) for x in bbox]
    m = np.zeros(shape, dtype=bool)
    m[max(v0, 0):v1 + 1, max(u0, 0):u1 + 1] = True
    return m


def _world_plane_angle(mask: np.ndarray, depth: np.ndarray,
                       intrinsics: CameraIntrinsics, extrinsics: Pose6D) -> float:
    """Principal axis of the mask's deprojected points in the world xy plane."""
    vs, us = np.nonzero(mask & valid_depth_mask(depth))
    if vs.size < 2:
        return 0.0
    z = depth[vs, us].astype(np.float64)
    cam = np.stack([(us - intrinsics.cx) / intrinsics.fx * z,
                    (vs - intrinsics.cy) / intrinsics.fy * z, z], axis=1)
    world = cam @ extrinsics.rotation_matrix().T + extrinsics.position
    xy = world[:, :2] - world[:, :2].mean(axis=0)
    cov = xy.T @ xy / xy.shape[0]
    if abs(cov[0, 1]) < 1e-12 and abs(cov[0, 0] - cov[1, 1]) < 1e-12:
        return 0.0
    angle = 0.5 * np.degrees(np.arctan2(2.0 * cov[0, 1], cov[0, 0] - cov[1, 1]))
    return float(np.mod(angle + 90.0, 180.0) - 90.0)


def object_pose_to_world(obj: ObjectPose, extrinsics: Pose6D) -> ObjectPose:
    """Re-express a camera-frame object pose in the world frame.

    The yaw is kept as-is when it was already measured in the world
    horizontal plane (the extrinsics-aware path above).
    """
    return ObjectPose(position=transform_point(extrinsics, obj.position),
                      yaw_deg=obj.yaw_deg, extent=obj.extent, label=obj.label)
