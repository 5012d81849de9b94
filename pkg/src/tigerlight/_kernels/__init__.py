"""Hot loops behind a stable facade.

The compiled extension is used when it imports; otherwise the pure-Python
twin is. Set ``TIGERLIGHT_PURE_PYTHON=1`` to force the fallback, or call
:func:`set_backend` at runtime (the benchmark does this).
"""

import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_impl = None
BACKEND = None


def available_backends():
    return ["cython", "python"] if _ckernels is not None else ["python"]


def set_backend(name):
    """Select ``"cython"`` or ``"python"`` kernels for subsequent calls."""
    global _impl, BACKEND
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        _impl = _ckernels
    elif name == "python":
        _impl = _pykernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    BACKEND = name


def _as_boxes(x):
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64).reshape(-1, 4))


def iou_xyxy(ax1, ay1, ax2, ay2, bx1, by1, bx2, by2):
    return _impl.iou_xyxy(float(ax1), float(ay1), float(ax2), float(ay2),
                          float(bx1), float(by1), float(bx2), float(by2))


def iou_matrix(a, b):
    """``(N, 4) x (M, 4) -> (N, M)`` float64 IoU matrix."""
    a = _as_boxes(a)
    b = _as_boxes(b)
    if _impl is _ckernels:
        return _ckernels.iou_matrix(a, b)
    return np.array(_pykernels.iou_matrix(a.tolist(), b.tolist()),
                    dtype=np.float64).reshape(len(a), len(b))


def nms_sorted(boxes, class_ids, thresh):
    """Kept indices of greedy per-class NMS over boxes in priority order."""
    boxes = _as_boxes(boxes)
    cls = np.ascontiguousarray(np.asarray(class_ids, dtype=np.int64))
    if _impl is _ckernels:
        return _ckernels.nms_sorted(boxes, cls, float(thresh))
    return _pykernels.nms_sorted(boxes.tolist(), cls.tolist(), float(thresh))


def greedy_match(ious, gt_difficult, thresh, strict=True):
    """Greedy detection to ground-truth assignment; see ``_pykernels.greedy_match``."""
    ious = np.ascontiguousarray(np.asarray(ious, dtype=np.float64))
    diff = np.ascontiguousarray(np.asarray(gt_difficult, dtype=np.uint8).reshape(-1))
    if ious.ndim != 2:
        ious = ious.reshape(-1, len(diff))
    if _impl is _ckernels:
        return _ckernels.greedy_match(ious, diff, float(thresh), bool(strict))
    return _pykernels.greedy_match(ious.tolist(), diff.tolist(), float(thresh), bool(strict))


set_backend("python" if os.environ.get("TIGERLIGHT_PURE_PYTHON") or _ckernels is None else "cython")
