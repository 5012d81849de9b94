"""Raster images, illumination maps and attention-guided composition.

Images are held as float64 numpy arrays in ``[0, 1]``: ``(H, W, 3)`` for
:class:`RasterImage` and ``(H, W)`` for :class:`ScalarMap`. Both are
immutable; their arrays are flagged read-only on construction.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

ILLUMINATION = "illumination"
SELF_REGULARIZED = "self-regularized"
MAP_SELECTORS = (ILLUMINATION, SELF_REGULARIZED)


class ImageLoadError(OSError):
    """A raster file is missing, unreadable or in an unsupported format."""

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = Path(path)
        self.reason = reason


def _frozen(arr, ndim, name):
    arr = np.array(arr, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"{name} expects a {ndim}-d array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be at least 1x1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class RasterImage:
    """RGB image with intensities in ``[0, 1]``, shape ``(height, width, 3)``."""

    data: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.data, 3, "RasterImage")
        if arr.shape[2] != 3:
            raise ValueError(f"RasterImage needs 3 channels, got {arr.shape[2]}")
        object.__setattr__(self, "data", arr)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ScalarMap:
    """Single-channel map with values in ``[0, 1]``, shape ``(height, width)``."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data, 2, "ScalarMap"))

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, ScalarMap):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


def load_image(path):
    """Decode a PNG or JPEG into a :class:`RasterImage` (``v / 255`` scaling).

    Grayscale sources are replicated to three channels; alpha is dropped.
    """
    path = Path(path)
    if not path.is_file():
        raise ImageLoadError(path, "no such file")
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise ImageLoadError(path, f"unsupported format {im.format}")
            if im.mode in ("I;16", "I;16B", "I;16L", "I", "F"):
                raise ImageLoadError(path, f"unsupported bit depth (mode {im.mode})")
            rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except ImageLoadError:
        raise
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise ImageLoadError(path, f"cannot decode image ({exc})") from exc
    return RasterImage(rgb.astype(np.float64) / 255.0)


def to_uint8(img):
    """Encode to 8-bit, rounding ``v * 255`` half away from zero."""
    return np.floor(img.data * 255.0 + 0.5).astype(np.uint8)


def save_image(img, path):
    """Write ``img`` as 8-bit; the format follows the file extension."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(img), mode="RGB").save(path)
    return path


def illumination_map(img):
    """Per-pixel max over R, G, B."""
    return ScalarMap(img.data.max(axis=2))


def self_regularized_map(illum):
    """The attention map ``1 - I``."""
    return ScalarMap(1.0 - illum.data)


def _check_same_hw(*items):
    shapes = [it.shape for it in items]
    if len({s[:2] for s in shapes}) != 1:
        raise ValueError("dimension mismatch: " + ", ".join(str(s) for s in shapes))


def compose_enhanced(input_a, residual_a_prime, illum_i, multiply_with=ILLUMINATION):
    """Combine a generator residual with its input: ``clip(A' * M + A, 0, 1)``.

    ``M`` is the illumination map itself, or ``1 - I`` when
    ``multiply_with == "self-regularized"``.
    """
    _check_same_hw(input_a, residual_a_prime, illum_i)
    if multiply_with == ILLUMINATION:
        m = illum_i.data
    elif multiply_with == SELF_REGULARIZED:
        m = 1.0 - illum_i.data
    else:
        raise ValueError(f"multiply_with must be one of {MAP_SELECTORS}, got {multiply_with!r}")
    out = residual_a_prime.data * m[:, :, None] + input_a.data
    return RasterImage(np.clip(out, 0.0, 1.0))


def concat_generator_input(input_a, attn):
    """Stack RGB and the attention map into an ``(H, W, 4)`` float64 array.

    Flattened row-major, element ``(y, x, c)`` sits at ``(y * W + x) * 4 + c``.
    """
    _check_same_hw(input_a, attn)
    return np.concatenate([input_a.data, attn.data[:, :, None]], axis=2)
