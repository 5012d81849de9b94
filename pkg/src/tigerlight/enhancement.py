"""Image enhancement stage: identity, classical baselines and the generator path."""

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import backends
from .backends import BackendError
from .imagecore import (
    ILLUMINATION,
    MAP_SELECTORS,
    ImageLoadError,
    RasterImage,
    compose_enhanced,
    concat_generator_input,
    illumination_map,
    load_image,
    self_regularized_map,
)
from .kvfile import KeyValueError, read_kv

KINDS = ("identity", "gamma", "hist-equalization", "generator-model", "precomputed")
OUTPUT_KINDS = ("residual", "final")
PRECOMPUTED_MANIFEST = "manifest.txt"
HIST_BINS = 256

_REQUIRED = {
    "identity": (),
    "gamma": ("gamma",),
    "hist-equalization": (),
    "generator-model": ("model_path",),
    "precomputed": ("precomputed_dir",),
}


class EnhancementError(RuntimeError):
    """Enhancement of a single image failed (bad or missing input data)."""

    def __init__(self, image_id, reason):
        super().__init__(f"{image_id}: {reason}")
        self.image_id = image_id
        self.reason = reason


@dataclass(frozen=True)
class EnhancerConfig:
    kind: str = "identity"
    gamma: float | None = None
    model_path: str | None = None
    precomputed_dir: str | None = None
    multiply_with: str = ILLUMINATION

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"enhancer kind must be one of {KINDS}, got {self.kind!r}")
        if self.multiply_with not in MAP_SELECTORS:
            raise ValueError(f"multiply_with must be one of {MAP_SELECTORS}, got {self.multiply_with!r}")
        required = _REQUIRED[self.kind]
        for name in ("gamma", "model_path", "precomputed_dir"):
            present = getattr(self, name) is not None
            if name in required and not present:
                raise ValueError(f"enhancer kind {self.kind!r} requires {name}")
            if name not in required and present:
                raise ValueError(f"enhancer kind {self.kind!r} does not take {name}")
        if self.kind == "gamma":
            g = float(self.gamma)
            if not (math.isfinite(g) and g > 0):
                raise ValueError(f"gamma must be a positive finite number, got {self.gamma!r}")
            object.__setattr__(self, "gamma", g)

    def settings(self):
        """Plain dict of the fields that matter for this kind (used for cache hashes)."""
        d = {k: v for k, v in asdict(self).items() if v is not None}
        if self.kind not in ("generator-model", "precomputed"):
            d.pop("multiply_with")
        return d


@dataclass(frozen=True)
class LossComponents:
    """The four generator loss terms: self-feature-preserving and adversarial, global and local."""

    sfp_global: float
    sfp_local: float
    adv_global: float
    adv_local: float

    def __post_init__(self):
        for name in ("sfp_global", "sfp_local", "adv_global", "adv_local"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"loss component {name} must be finite, got {v}")
            object.__setattr__(self, name, v)


def total_enlighten_loss(c):
    """Unweighted sum of the four loss terms.

    ``math.fsum`` rounds once, so the result does not depend on term order.
    """
    return math.fsum((c.sfp_global, c.sfp_local, c.adv_global, c.adv_local))


def gamma_correct(img, gamma):
    gamma = float(gamma)
    if not (math.isfinite(gamma) and gamma > 0):
        raise ValueError(f"gamma must be positive, got {gamma}")
    return RasterImage(np.power(img.data, gamma))


def _hist_bins(values):
    return np.minimum(np.floor(values * (HIST_BINS - 1) + 0.5), HIST_BINS - 1).astype(np.intp)


def histogram_equalize(img):
    """Equalize the max-channel illumination and rescale each pixel's RGB by it.

    The cdf over 256 bins is normalized as ``(cdf - cdf_min) / (n - cdf_min)``;
    when only one bin is occupied the image is returned unchanged. Pixels
    with zero illumination pass through.
    """
    illum = img.data.max(axis=2)
    bins = _hist_bins(illum)
    hist = np.bincount(bins.ravel(), minlength=HIST_BINS)
    cdf = np.cumsum(hist)
    total = int(cdf[-1])
    cdf_min = int(cdf[np.flatnonzero(hist)[0]])
    if total == cdf_min:
        return img
    lut = (cdf - cdf_min) / float(total - cdf_min)
    new_illum = lut[bins]
    scale = np.ones_like(illum)
    lit = illum > 0
    scale[lit] = new_illum[lit] / illum[lit]
    return RasterImage(np.clip(img.data * scale[:, :, None], 0.0, 1.0))


def _affine_unit(raw, raw_min, raw_max, where):
    if not raw_max > raw_min:
        raise BackendError(f"{where}: manifest raw_max must exceed raw_min")
    # clip absorbs float32 rounding at the range ends
    return np.clip((raw - raw_min) / (raw_max - raw_min), 0.0, 1.0)


def run_generator_backend(input, model_path):
    """Run the generator on an ``(H, W, 4)`` array and map its output into ``[0, 1]``.

    The manifest beside the model declares the raw output range; values are
    mapped with ``(raw - raw_min) / (raw_max - raw_min)``.
    """
    input = np.asarray(input, dtype=np.float64)
    if input.ndim != 3 or input.shape[2] != 4:
        raise ValueError(f"generator input must be (H, W, 4), got {input.shape}")
    man = backends.read_manifest(model_path)
    try:
        raw_min = float(man.get("raw_min", 0.0))
        raw_max = float(man.get("raw_max", 1.0))
    except ValueError as exc:
        raise BackendError(f"{model_path}: bad raw range in manifest ({exc})") from exc
    out = backends.run_model(model_path, input, man["input_layout"])
    h, w = input.shape[:2]
    if man["input_layout"] == "nchw":
        if out.shape != (1, 3, h, w):
            raise BackendError(f"{model_path}: expected output (1, 3, {h}, {w}), got {out.shape}")
        out = out[0].transpose(1, 2, 0)
    else:
        if out.shape != (1, h, w, 3):
            raise BackendError(f"{model_path}: expected output (1, {h}, {w}, 3), got {out.shape}")
        out = out[0]
    return RasterImage(_affine_unit(out, raw_min, raw_max, model_path))


def _output_kind(kv, where):
    kind = kv.get("output_kind", "residual").lower()
    if kind not in OUTPUT_KINDS:
        raise BackendError(f"{where}: output_kind must be one of {OUTPUT_KINDS}, got {kind!r}")
    return kind


def precomputed_output_kind(directory):
    """``output_kind`` from ``<dir>/manifest.txt``; ``residual`` when there is no manifest."""
    path = Path(directory) / PRECOMPUTED_MANIFEST
    if not path.is_file():
        return "residual"
    try:
        return _output_kind(read_kv(path), path)
    except KeyValueError as exc:
        raise BackendError(str(exc)) from exc


def _attention_pathway(img, cfg):
    illum = illumination_map(img)
    attn = self_regularized_map(illum)
    man = backends.read_manifest(cfg.model_path)
    a_prime = run_generator_backend(concat_generator_input(img, attn), cfg.model_path)
    if _output_kind(man, cfg.model_path) == "final":
        return a_prime
    return compose_enhanced(img, a_prime, illum, cfg.multiply_with)


def _precomputed(img, cfg, image_id):
    path = Path(cfg.precomputed_dir) / f"{image_id}.png"
    try:
        stored = load_image(path)
    except ImageLoadError as exc:
        raise EnhancementError(image_id, f"precomputed output unavailable: {exc}") from exc
    if stored.shape != img.shape:
        raise EnhancementError(image_id, f"precomputed {path} has shape {stored.shape}, input is {img.shape}")
    if precomputed_output_kind(cfg.precomputed_dir) == "final":
        return stored
    return compose_enhanced(img, stored, illumination_map(img), cfg.multiply_with)


def enhance(img, cfg, image_id):
    """Apply the configured enhancer to one image.

    Raises :class:`EnhancementError` for missing or inconsistent data and
    :class:`~tigerlight.backends.BackendError` when a model cannot run;
    callers processing a batch record these per image.
    """
    if cfg.kind == "identity":
        return img
    if cfg.kind == "gamma":
        return gamma_correct(img, cfg.gamma)
    if cfg.kind == "hist-equalization":
        return histogram_equalize(img)
    if cfg.kind == "generator-model":
        return _attention_pathway(img, cfg)
    return _precomputed(img, cfg, image_id)


__all__ = [
    "EnhancerConfig",
    "EnhancementError",
    "LossComponents",
    "enhance",
    "gamma_correct",
    "histogram_equalize",
    "precomputed_output_kind",
    "run_generator_backend",
    "total_enlighten_loss",
]
