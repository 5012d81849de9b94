"""Detector boundary and post-processing (score floor, clipping, NMS)."""

import functools
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import _kernels, backends
from .annotations import parse_predictions
from .backends import BackendError
from .boxes import BoundingBox, Detection, detection_order, sort_detections

logger = logging.getLogger(__name__)

DETECTOR_KINDS = ("model", "precomputed")
OUTPUT_FORMATS = {"xyxy_score_class": 6, "xyxy_score": 5}


class MissingPredictionsWarning(UserWarning):
    """A precomputed predictions file has no entry for an image."""


@dataclass(frozen=True)
class DetectorConfig:
    kind: str = "precomputed"
    model_path: str | None = None
    predictions_path: str | None = None
    score_floor: float = 0.001
    nms_iou: float = 0.7

    def __post_init__(self):
        if self.kind not in DETECTOR_KINDS:
            raise ValueError(f"detector kind must be one of {DETECTOR_KINDS}, got {self.kind!r}")
        need = "model_path" if self.kind == "model" else "predictions_path"
        other = "predictions_path" if self.kind == "model" else "model_path"
        if getattr(self, need) is None:
            raise ValueError(f"detector kind {self.kind!r} requires {need}")
        if getattr(self, other) is not None:
            raise ValueError(f"detector kind {self.kind!r} does not take {other}")
        floor, thr = float(self.score_floor), float(self.nms_iou)
        if not 0.0 <= floor <= 1.0:
            raise ValueError(f"score_floor must lie in [0, 1], got {self.score_floor}")
        if not 0.0 < thr < 1.0:
            raise ValueError(f"nms_iou must lie in (0, 1), got {self.nms_iou}")
        object.__setattr__(self, "score_floor", floor)
        object.__setattr__(self, "nms_iou", thr)


def clip_box(box, width, height):
    """Clamp ``box`` to ``[0, width] x [0, height]``; ``None`` if nothing is left."""
    x1 = min(max(box.x_min, 0.0), float(width))
    y1 = min(max(box.y_min, 0.0), float(height))
    x2 = min(max(box.x_max, 0.0), float(width))
    y2 = min(max(box.y_max, 0.0), float(height))
    if not (x1 < x2 and y1 < y2):
        return None
    if (x1, y1, x2, y2) == box.as_tuple():
        return box
    return BoundingBox(x1, y1, x2, y2)


def nms(dets, iou_thresh):
    """Greedy per-class non-maximum suppression.

    Detections are visited by score (ties broken on box corners); each kept
    one suppresses same-class detections whose IoU with it exceeds
    ``iou_thresh``. The survivors come back in that same order.
    """
    ordered = sort_detections(dets)
    if len(ordered) < 2:
        return ordered
    boxes = np.array([d.box.as_tuple() for d in ordered], dtype=np.float64)
    classes = np.array([d.class_id for d in ordered], dtype=np.int64)
    keep = _kernels.nms_sorted(boxes, classes, iou_thresh)
    return [ordered[i] for i in keep]


def postprocess(dets, width, height, score_floor, nms_iou):
    kept = []
    for d in dets:
        if d.score < score_floor:
            continue
        box = clip_box(d.box, width, height)
        if box is None:
            continue
        kept.append(d if box is d.box else Detection(box, d.score, d.class_id))
    return nms(kept, nms_iou)


class PrecomputedDetector:
    """Serves detections from a JSON-lines predictions file."""

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.is_file():
            raise FileNotFoundError(f"{self.path}: predictions file not found")
        self.predictions = parse_predictions(self.path)

    def __contains__(self, image_id):
        return image_id in self.predictions

    def __call__(self, img, image_id):
        if image_id not in self.predictions:
            warnings.warn(f"{self.path}: no predictions for image {image_id!r}",
                          MissingPredictionsWarning, stacklevel=3)
            return []
        return list(self.predictions[image_id])


class ModelDetector:
    """ONNX detector whose outputs are already decoded boxes.

    The manifest's ``output_format`` is ``xyxy_score_class`` or
    ``xyxy_score`` (rows of 6 or 5 values, optionally with a leading batch
    axis). If it declares ``input_width``/``input_height`` the image is
    resized to that size and boxes are scaled back to image pixels.
    """

    def __init__(self, model_path):
        self.model_path = Path(model_path)
        if not self.model_path.is_file():
            raise BackendError(f"{self.model_path}: model file not found")
        man = backends.read_manifest(model_path)
        self.layout = man["input_layout"]
        self.output_format = man.get("output_format", "xyxy_score_class")
        if self.output_format not in OUTPUT_FORMATS:
            raise BackendError(f"{model_path}: output_format must be one of {sorted(OUTPUT_FORMATS)}")
        self.input_size = None
        if "input_width" in man or "input_height" in man:
            try:
                self.input_size = (int(man["input_width"]), int(man["input_height"]))
            except (KeyError, ValueError) as exc:
                raise BackendError(f"{model_path}: input_width and input_height must both be integers") from exc
        backends.load_session(model_path)

    def __call__(self, img, image_id):
        x = img.data
        sx = sy = 1.0
        if self.input_size is not None and self.input_size != (img.width, img.height):
            iw, ih = self.input_size
            pil = Image.fromarray(np.floor(x * 255.0 + 0.5).astype(np.uint8)).resize((iw, ih), Image.BILINEAR)
            x = np.asarray(pil, dtype=np.float64) / 255.0
            sx, sy = img.width / iw, img.height / ih
        out = backends.run_model(self.model_path, x, self.layout)
        ncols = OUTPUT_FORMATS[self.output_format]
        if out.ndim == 3 and out.shape[0] == 1:
            out = out[0]
        if out.ndim != 2 or (out.size and out.shape[1] != ncols):
            raise BackendError(f"{self.model_path}: expected (N, {ncols}) detections, got {out.shape}")
        dets = []
        for row in out.reshape(-1, ncols):
            x1, y1, x2, y2, score = (float(v) for v in row[:5])
            if not all(math.isfinite(v) for v in (x1, y1, x2, y2, score)):
                raise BackendError(f"{self.model_path}: non-finite detection output for {image_id}")
            if not 0.0 <= score <= 1.0:
                raise BackendError(f"{self.model_path}: score {score} outside [0, 1] for {image_id}")
            x1, x2, y1, y2 = x1 * sx, x2 * sx, y1 * sy, y2 * sy
            if not (x1 < x2 and y1 < y2):
                continue
            cls = int(round(float(row[5]))) if ncols == 6 else 0
            dets.append(Detection(BoundingBox(x1, y1, x2, y2), score, cls))
        return dets


@functools.lru_cache(maxsize=4)
def _cached_detector(kind, path, stamp):
    return ModelDetector(path) if kind == "model" else PrecomputedDetector(path)


def make_detector(cfg):
    path = Path(cfg.model_path if cfg.kind == "model" else cfg.predictions_path).resolve()
    try:
        st = path.stat()
        stamp = (st.st_mtime_ns, st.st_size)
    except OSError:
        stamp = None
    return _cached_detector(cfg.kind, str(path), stamp)


def detect(img, image_id, cfg, detector=None):
    """Detections for one image after score floor, clipping and NMS.

    An image absent from a precomputed file yields ``[]`` and a
    :class:`MissingPredictionsWarning`. Output is sorted by score descending,
    then ``x_min``, then ``y_min``, independent of input order.
    """
    detector = make_detector(cfg) if detector is None else detector
    raw = detector(img, image_id)
    return postprocess(raw, img.width, img.height, cfg.score_floor, cfg.nms_iou)


__all__ = [
    "BoundingBox",
    "Detection",
    "DetectorConfig",
    "MissingPredictionsWarning",
    "ModelDetector",
    "PrecomputedDetector",
    "clip_box",
    "detect",
    "detection_order",
    "make_detector",
    "nms",
]
