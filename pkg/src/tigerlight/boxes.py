"""Box and detection value types shared by the parsers, detector and metrics."""

import math
from dataclasses import dataclass


@dataclass(frozen=True, order=True)
class BoundingBox:
    """Axis-aligned box in pixel coordinates, origin top-left, real-valued."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = [float(v) for v in (self.x_min, self.y_min, self.x_max, self.y_max)]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"box coordinates must be finite, got {tuple(vals)}")
        if not (vals[0] < vals[2] and vals[1] < vals[3]):
            raise ValueError(f"box must have positive area, got {tuple(vals)}")
        for name, v in zip(("x_min", "y_min", "x_max", "y_max"), vals):
            object.__setattr__(self, name, v)

    def as_tuple(self):
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    @property
    def area(self):
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    score: float
    class_id: int = 0

    def __post_init__(self):
        s = float(self.score)
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score!r}")
        object.__setattr__(self, "score", s)
        object.__setattr__(self, "class_id", int(self.class_id))


def detection_order(det):
    """Sort key: score descending, then box corners ascending, then class."""
    b = det.box
    return (-det.score, b.x_min, b.y_min, b.x_max, b.y_max, det.class_id)


def sort_detections(dets):
    return sorted(dets, key=detection_order)
