"""Detection backends: recorded fixtures for CI, real models for live use.

The live backend chains an open-vocabulary box detector with a promptable
segmenter (the top box prompts the segmenter). Models load lazily on first
use and inference is serialized behind a lock since there is one device.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path

import numpy as np

from . import rle

DEFAULT_SCORE_THRESHOLD = 0.1
DETECTOR_MODEL = "google/owlvit-base-patch32"
SEGMENTER_MODEL = "facebook/sam-vit-base"


class BackendError(RuntimeError):
    pass


class ModelsNotLoaded(BackendError):
    pass


def image_hash(rgb: np.ndarray) -> str:
    """SHA-256 over decoded pixel bytes; the fixture-store key."""
    arr = np.ascontiguousarray(np.asarray(rgb, dtype=np.uint8))
    return hashlib.sha256(arr.tobytes()).hexdigest()


class FixtureBackend:
    """Replays recorded detections keyed by image hash.

    Store layout: ``<fixture_dir>/detections/<sha256>.json`` holding
    ``{"image_id": ..., "detections": [{query, bbox, score, mask_rle}]}``.
    An unknown image hash yields an empty detection list, not an error.
    """

    mode = "fixture"

    def __init__(self, fixture_dir):
        if fixture_dir is None:
            raise BackendError("fixture mode needs FIXTURE_DIR")
        self.fixture_dir = Path(fixture_dir)

    def model_info(self) -> list[str]:
        return [f"fixture:{self.fixture_dir}"]

    def ready(self) -> bool:
        return True

    def detect(self, rgb: np.ndarray, query: str, want_mask: bool,
               threshold: float) -> list[dict]:
        path = self.fixture_dir / "detections" / f"{image_hash(rgb)}.json"
        if not path.exists():
            return []
        records = json.loads(path.read_text()).get("detections", [])
        out = []
        h, w = rgb.shape[:2]
        for rec in records:
            if rec.get("query", query) != query:
                continue
            score = float(rec["score"])
            if score < threshold:
                continue
            u0, v0, u1, v1 = (float(x) for x in rec["bbox"])
            bbox = [max(0.0, min(u0, w - 1.0)), max(0.0, min(v0, h - 1.0)),
                    max(0.0, min(u1, w - 1.0)), max(0.0, min(v1, h - 1.0))]
            mask_rle = rec.get("mask_rle") if want_mask else None
            out.append({"bbox": bbox, "score": score, "mask_rle": mask_rle})
        out.sort(key=lambda r: -r["score"])
        return out

    def record(self, rgb: np.ndarray, records: list[dict]) -> Path:
        path = self.fixture_dir / "detections" / f"{image_hash(rgb)}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps({"image_id": image_hash(rgb),
                                    "detections": records},
                                   sort_keys=True, indent=1))
        return path


class LiveBackend:
    """Open-vocabulary detection plus box-prompted segmentation.

    Heavy imports and weight loading happen on first detect; callers should
    treat ModelsNotLoaded as a 503.
    """

    mode = "live"

    def __init__(self, detector_model: str = DETECTOR_MODEL,
                 segmenter_model: str = SEGMENTER_MODEL):
        self.detector_model = detector_model
        self.segmenter_model = segmenter_model
        self._lock = threading.Lock()
        self._models = None
        self._load_error: str | None = None

    def _load(self):
        if self._models is not None:
            return self._models
        if self._load_error is not None:
            raise ModelsNotLoaded(self._load_error)
        try:
            import torch
            from transformers import (
                OwlViTForObjectDetection,
                OwlViTProcessor,
                SamModel,
                SamProcessor,
            )

            det_proc = OwlViTProcessor.from_pretrained(self.detector_model)
            det = OwlViTForObjectDetection.from_pretrained(self.detector_model).eval()
            seg_proc = SamProcessor.from_pretrained(self.segmenter_model)
            seg = SamModel.from_pretrained(self.segmenter_model).eval()
            self._models = (torch, det_proc, det, seg_proc, seg)
        except Exception as e:  # import failure, missing weights, no network
            self._load_error = f"cannot load models: {e}"
            raise ModelsNotLoaded(self._load_error) from e
        return self._models

    def ready(self) -> bool:
        try:
            self._load()
            return True
        except ModelsNotLoaded:
            return False

    def model_info(self) -> list[str]:
        return [self.detector_model, self.segmenter_model]

    def detect(self, rgb: np.ndarray, query: str, want_mask: bool,
               threshold: float) -> list[dict]:
        torch, det_proc, det, seg_proc, seg = self._load()
        from PIL import Image

        image = Image.fromarray(rgb, mode="RGB")
        with self._lock, torch.no_grad():
            inputs = det_proc(text=[[query]], images=image, return_tensors="pt")
            outputs = det(**inputs)
            target_size = torch.tensor([[image.height, image.width]])
            results = det_proc.post_process_grounded_object_detection(
                outputs=outputs, target_sizes=target_size, threshold=threshold)[0]
            detections = []
            order = torch.argsort(results["scores"], descending=True)
            for i in order:
                box = [float(x) for x in results["boxes"][i].tolist()]
                score = float(results["scores"][i])
                mask_rle = None
                if want_mask:
                    seg_inputs = seg_proc(image, input_boxes=[[box]],
                                          return_tensors="pt")
                    seg_out = seg(**seg_inputs, multimask_output=False)
                    masks = seg_proc.image_processor.post_process_masks(
                        seg_out.pred_masks.cpu(),
                        seg_inputs["original_sizes"].cpu(),
                        seg_inputs["reshaped_input_sizes"].cpu())[0]
                    mask = masks[0, 0].numpy().astype(bool)
                    mask_rle = rle.encode(mask)
                h, w = rgb.shape[:2]
                bbox = [max(0.0, min(box[0], w - 1.0)), max(0.0, min(box[1], h - 1.0)),
                        max(0.0, min(box[2], w - 1.0)), max(0.0, min(box[3], h - 1.0))]
                detections.append({"bbox": bbox, "score": score, "mask_rle": mask_rle})
        return detections
