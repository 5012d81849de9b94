"""ONNX model loading and sidecar manifests.

A model ``foo.onnx`` is described by ``foo.manifest`` next to it, a flat
key-value file. Keys understood by the enhancement stage are
``input_layout`` (``nchw`` or ``nhwc``), ``raw_min``, ``raw_max`` and
``output_kind`` (``residual`` or ``final``). The detector additionally
reads ``output_format`` and optionally ``input_width``/``input_height``.

``onnxruntime.InferenceSession.run`` is safe to call from several threads,
so one cached session per model file is shared by all workers.
"""

import functools
import logging
from pathlib import Path

import numpy as np

from .kvfile import KeyValueError, read_kv

logger = logging.getLogger(__name__)

LAYOUTS = ("nchw", "nhwc")


class BackendError(RuntimeError):
    """A model or its manifest could not be loaded or executed."""


def manifest_path(model_path):
    return Path(model_path).with_suffix(".manifest")


def read_manifest(model_path):
    path = manifest_path(model_path)
    if not path.is_file():
        raise BackendError(f"{model_path}: missing manifest {path}")
    try:
        kv = read_kv(path)
    except (OSError, KeyValueError) as exc:
        raise BackendError(f"{path}: {exc}") from exc
    layout = kv.get("input_layout", "nchw").lower()
    if layout not in LAYOUTS:
        raise BackendError(f"{path}: input_layout must be one of {LAYOUTS}, got {layout!r}")
    kv["input_layout"] = layout
    return kv


@functools.lru_cache(maxsize=8)
def _session(path_str):
    try:
        import onnxruntime as ort
    except ImportError as exc:
        raise BackendError("model backends need onnxruntime (pip install onnxruntime)") from exc
    opts = ort.SessionOptions()
    opts.log_severity_level = 3
    try:
        return ort.InferenceSession(path_str, sess_options=opts, providers=["CPUExecutionProvider"])
    except Exception as exc:  # onnxruntime raises its own exception hierarchy
        raise BackendError(f"{path_str}: cannot load model ({exc})") from exc


def load_session(model_path):
    path = Path(model_path)
    if not path.is_file():
        raise BackendError(f"{path}: model file not found")
    return _session(str(path.resolve()))


def run_model(model_path, hwc, layout):
    """Run a single-input model on one ``(H, W, C)`` array; returns the first output."""
    sess = load_session(model_path)
    x = np.asarray(hwc, dtype=np.float32)
    x = x.transpose(2, 0, 1)[None] if layout == "nchw" else x[None]
    x = np.ascontiguousarray(x)
    name = sess.get_inputs()[0].name
    try:
        out = sess.run(None, {name: x})[0]
    except Exception as exc:
        declared = sess.get_inputs()[0].shape
        raise BackendError(
            f"{model_path}: execution failed for input {x.shape} (model declares {declared}): {exc}"
        ) from exc
    return np.asarray(out, dtype=np.float64)
