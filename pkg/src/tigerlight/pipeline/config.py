"""Run configuration: defaults < config file < environment < command line."""

import os
from dataclasses import dataclass, field
from pathlib import Path

from ..annotations import DEFAULT_CLASSES
from ..detection import DetectorConfig
from ..enhancement import EnhancerConfig
from ..kvfile import KeyValueError, read_kv
from ..metrics import COCO_THRESHOLDS, THRESHOLD_RULES

DATASET_ROOT_ENV = "TIGERLIGHT_DATASET_ROOT"

PATH_KEYS = {
    "dataset_root", "split_list", "annotations_dir", "images_dir", "output_dir",
    "enhancer.model_path", "enhancer.precomputed_dir",
    "detector.model_path", "detector.predictions_path",
}
KNOWN_KEYS = PATH_KEYS | {
    "workers", "thresholds", "threshold_rule", "ignore_difficult", "classes",
    "enhancer.kind", "enhancer.gamma", "enhancer.multiply_with",
    "detector.kind", "detector.score_floor", "detector.nms_iou",
}


class ConfigError(ValueError):
    pass


def parse_thresholds(text):
    """``"0.5:0.05:0.95"`` (inclusive range) or a comma list like ``"0.5,0.75"``."""
    text = str(text).strip()
    try:
        if ":" in text:
            start, step, stop = (float(s) for s in text.split(":"))
            if step <= 0:
                raise ConfigError(f"threshold step must be positive: {text!r}")
            n = int(round((stop - start) / step)) + 1
            return tuple(round(start + i * step, 10) for i in range(n))
        return tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(f"bad thresholds {text!r}: {exc}") from None


def _parse_bool(text, key):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


@dataclass(frozen=True)
class RunConfig:
    dataset_root: Path
    output_dir: Path
    enhancer: EnhancerConfig = field(default_factory=EnhancerConfig)
    detector: DetectorConfig | None = None
    split_list: Path | None = None
    annotations_dir: Path | None = None
    images_dir: Path | None = None
    thresholds: tuple = COCO_THRESHOLDS
    threshold_rule: str = "strict"
    worker_count: int = 1
    ignore_difficult: bool = True
    class_table: dict = field(default_factory=lambda: dict(DEFAULT_CLASSES))

    def __post_init__(self):
        ts = tuple(float(t) for t in self.thresholds)
        if not ts or any(not 0.0 < t < 1.0 for t in ts) or any(a >= b for a, b in zip(ts, ts[1:])):
            raise ConfigError(f"thresholds must be strictly increasing values in (0, 1), got {list(ts)}")
        object.__setattr__(self, "thresholds", ts)
        if self.threshold_rule not in THRESHOLD_RULES:
            raise ConfigError(f"threshold_rule must be one of {THRESHOLD_RULES}, got {self.threshold_rule!r}")
        if int(self.worker_count) < 1:
            raise ConfigError(f"workers must be a positive integer, got {self.worker_count}")
        object.__setattr__(self, "worker_count", int(self.worker_count))
        root = Path(self.dataset_root)
        object.__setattr__(self, "dataset_root", root)
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        if self.annotations_dir is None:
            object.__setattr__(self, "annotations_dir", root / "Annotations")
        if self.images_dir is None:
            object.__setattr__(self, "images_dir", root / "JPEGImages")


def _resolve(value, base):
    p = Path(value).expanduser()
    return p if p.is_absolute() or base is None else base / p


def build_run_config(file_values=None, overrides=None, base_dir=None, env=None):
    """Merge settings; later sources win. Relative paths in the file resolve against ``base_dir``."""
    env = os.environ if env is None else env
    values = {}
    for k, v in (file_values or {}).items():
        values[k] = str(_resolve(v, base_dir)) if k in PATH_KEYS else v
    if env.get(DATASET_ROOT_ENV):
        values["dataset_root"] = env[DATASET_ROOT_ENV]
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    unknown = sorted(set(values) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    if "dataset_root" not in values:
        raise ConfigError(f"dataset_root is required (config file, --dataset-root or ${DATASET_ROOT_ENV})")

    def get(key, default=None):
        return values.get(key, default)

    try:
        enhancer = EnhancerConfig(
            kind=get("enhancer.kind", "identity"),
            gamma=float(get("enhancer.gamma")) if get("enhancer.gamma") is not None else None,
            model_path=get("enhancer.model_path"),
            precomputed_dir=get("enhancer.precomputed_dir"),
            multiply_with=get("enhancer.multiply_with", "illumination"),
        )
        detector = None
        if get("detector.kind") or get("detector.predictions_path") or get("detector.model_path"):
            detector = DetectorConfig(
                kind=get("detector.kind", "model" if get("detector.model_path") else "precomputed"),
                model_path=get("detector.model_path"),
                predictions_path=get("detector.predictions_path"),
                score_floor=float(get("detector.score_floor", 0.001)),
                nms_iou=float(get("detector.nms_iou", 0.7)),
            )
        classes = get("classes")
        class_table = dict(DEFAULT_CLASSES)
        if classes:
            names = [c.strip() for c in str(classes).split(",") if c.strip()]
            class_table = {n: i for i, n in enumerate(names)}
        thresholds = get("thresholds", COCO_THRESHOLDS)
        if isinstance(thresholds, str):
            thresholds = parse_thresholds(thresholds)
        return RunConfig(
            dataset_root=Path(get("dataset_root")),
            output_dir=Path(get("output_dir", "tigerlight-out")),
            enhancer=enhancer,
            detector=detector,
            split_list=Path(get("split_list")) if get("split_list") else None,
            annotations_dir=Path(get("annotations_dir")) if get("annotations_dir") else None,
            images_dir=Path(get("images_dir")) if get("images_dir") else None,
            thresholds=thresholds,
            threshold_rule=get("threshold_rule", "strict"),
            worker_count=int(get("workers", 1)),
            ignore_difficult=_parse_bool(get("ignore_difficult", "true"), "ignore_difficult"),
            class_table=class_table,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_run_config(path=None, overrides=None, env=None):
    file_values, base = {}, None
    if path is not None:
        path = Path(path)
        try:
            file_values = read_kv(path)
        except (OSError, KeyValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        base = path.resolve().parent
    return build_run_config(file_values, overrides, base_dir=base, env=env)
