"""Pipeline stages: enhance -> detect -> evaluate, and A/B comparison."""

import hashlib
import json
import logging
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..annotations import (
    AnnotationError,
    dataset_stats,
    load_voc_dir,
    parse_predictions,
    prediction_lines,
    read_split_list,
)
from ..backends import BackendError
from ..boxes import detection_order
from ..detection import PrecomputedDetector, detect, make_detector
from ..enhancement import EnhancementError, enhance
from ..imagecore import ImageLoadError, load_image, save_image
from ..metrics import evaluate, pr_curve_csv, report_csv, report_text
from .report import (
    ComparisonReport,
    bar_chart_svg,
    comparison_csv,
    comparison_table,
)

logger = logging.getLogger(__name__)

IMAGE_EXTS = (".jpg", ".jpeg", ".png", ".JPG", ".JPEG", ".PNG")
ENHANCE_MANIFEST = "manifest.json"


class DataError(RuntimeError):
    """Input data is missing or unusable for a whole command."""


def _fan_out(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def resolve_image_ids(cfg):
    """Split-list ids, else annotation stems, else image file stems (sorted)."""
    if cfg.split_list is not None:
        try:
            return read_split_list(cfg.split_list)
        except OSError as exc:
            raise DataError(f"cannot read split list {cfg.split_list}: {exc}") from exc
    if cfg.annotations_dir.is_dir():
        return sorted(p.stem for p in cfg.annotations_dir.glob("*.xml"))
    if cfg.images_dir.is_dir():
        return sorted({p.stem for p in cfg.images_dir.iterdir() if p.suffix in IMAGE_EXTS})
    raise DataError(f"no split list, annotations or images found under {cfg.dataset_root}")


def find_image(directory, image_id):
    for ext in IMAGE_EXTS:
        p = Path(directory) / f"{image_id}{ext}"
        if p.is_file():
            return p
    return None


def _sha256(*chunks):
    h = hashlib.sha256()
    for c in chunks:
        h.update(c)
    return h.hexdigest()


def _settings_blob(enhancer):
    return json.dumps(enhancer.settings(), sort_keys=True).encode()


@dataclass
class EnhanceResult:
    out_dir: Path
    manifest: dict
    outputs: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    cached: int = 0

    @property
    def exit_code(self):
        if self.errors and not self.outputs:
            backend = all(e.get("kind") == "backend" for e in self.errors.values())
            return 3 if backend else 2
        return 0


def cmd_enhance(cfg):
    """Enhance every split image into ``<output_dir>/enhanced``.

    Re-runs skip images whose (source bytes, enhancer settings) hash matches
    the previous manifest entry and whose output still exists.
    """
    ids = resolve_image_ids(cfg)
    out_dir = cfg.output_dir / "enhanced"
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / ENHANCE_MANIFEST
    previous = {}
    if manifest_path.is_file():
        try:
            previous = json.loads(manifest_path.read_text(encoding="utf-8")).get("images", {})
        except (OSError, ValueError):
            previous = {}

    settings = _settings_blob(cfg.enhancer)
    extra = b""
    if cfg.enhancer.kind == "generator-model":
        try:
            extra = Path(cfg.enhancer.model_path).read_bytes()
        except OSError:
            extra = b""

    def one(image_id):
        src = find_image(cfg.images_dir, image_id)
        if src is None:
            return image_id, {"status": "error", "kind": "data",
                              "error": f"no image for {image_id} in {cfg.images_dir}"}
        try:
            data = src.read_bytes()
            side = b""
            if cfg.enhancer.kind == "precomputed":
                pre = Path(cfg.enhancer.precomputed_dir) / f"{image_id}.png"
                side = pre.read_bytes() if pre.is_file() else b""
            digest = _sha256(data, settings, extra, side)
            dest = out_dir / (f"{image_id}{src.suffix}" if cfg.enhancer.kind == "identity" else f"{image_id}.png")
            old = previous.get(image_id, {})
            if old.get("hash") == digest and old.get("status") in ("ok", "cached") and dest.is_file():
                return image_id, {**old, "status": "cached"}
            if cfg.enhancer.kind == "identity":
                shutil.copyfile(src, dest)
            else:
                img = load_image(src)
                save_image(enhance(img, cfg.enhancer, image_id), dest)
            return image_id, {"status": "ok", "source": str(src), "output": str(dest), "hash": digest}
        except BackendError as exc:
            return image_id, {"status": "error", "kind": "backend", "error": str(exc)}
        except (EnhancementError, ImageLoadError, OSError) as exc:
            return image_id, {"status": "error", "kind": "data", "error": str(exc)}

    result = EnhanceResult(out_dir, {})
    entries = {}
    for image_id, entry in _fan_out(one, ids, cfg.worker_count):
        entries[image_id] = entry
        if entry["status"] == "error":
            logger.warning("enhance %s failed: %s", image_id, entry["error"])
            result.errors[image_id] = entry
        else:
            result.outputs[image_id] = Path(entry["output"])
            result.cached += entry["status"] == "cached"
    manifest = {
        "enhancer": cfg.enhancer.settings(),
        "settings_hash": _sha256(settings),
        "images": entries,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    result.manifest = manifest
    return result


@dataclass
class DetectResult:
    predictions_path: Path
    predictions: dict
    warnings: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)


def cmd_detect(cfg, images_dir=None, out_path=None):
    """Run the detector over split images and write canonical JSON lines."""
    if cfg.detector is None:
        raise DataError("no detector configured (set detector.kind and its path)")
    images_dir = Path(images_dir) if images_dir is not None else cfg.images_dir
    out_path = Path(out_path) if out_path is not None else cfg.output_dir / "predictions.jsonl"
    ids = resolve_image_ids(cfg)
    try:
        detector = make_detector(cfg.detector)
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc

    def one(image_id):
        src = find_image(images_dir, image_id)
        if src is None:
            return image_id, None, f"no image for {image_id} in {images_dir}", None
        if isinstance(detector, PrecomputedDetector) and image_id not in detector:
            return image_id, [], None, f"no precomputed predictions for {image_id}"
        try:
            img = load_image(src)
            return image_id, detect(img, image_id, cfg.detector, detector), None, None
        except (ImageLoadError, BackendError) as exc:
            return image_id, None, str(exc), None

    result = DetectResult(out_path, {})
    for image_id, dets, err, warn in _fan_out(one, ids, cfg.worker_count):
        if err is not None:
            logger.warning("detect %s: %s", image_id, err)
            result.errors[image_id] = err
            continue
        if warn is not None:
            logger.warning("detect %s: %s", image_id, warn)
            result.warnings[image_id] = warn
        result.predictions[image_id] = sorted(dets, key=detection_order)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(prediction_lines(result.predictions), encoding="utf-8")
    log = {"errors": result.errors, "warnings": result.warnings}
    out_path.with_name(out_path.stem + ".log.json").write_text(
        json.dumps(log, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return result


def load_ground_truth(cfg):
    ids = resolve_image_ids(cfg) if cfg.split_list is not None else None
    return load_voc_dir(cfg.annotations_dir, ids, cfg.class_table)


def evaluate_predictions(cfg, predictions_path, gts=None):
    gts = load_ground_truth(cfg) if gts is None else gts
    preds = parse_predictions(predictions_path)
    return evaluate(preds, gts, cfg.thresholds, cfg.threshold_rule, cfg.ignore_difficult,
                    class_ids=sorted(cfg.class_table.values())), gts


def write_eval_report(report, out_dir, class_names=None, extra=None):
    out_dir = Path(out_dir)
    (out_dir / "pr").mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(report_text(report, class_names, extra), encoding="utf-8")
    (out_dir / "report.csv").write_text(report_csv(report, class_names), encoding="utf-8")
    for (t, c), curve in sorted(report.pr_curves.items()):
        (out_dir / "pr" / f"pr_t{t:.2f}_c{c}.csv").write_text(pr_curve_csv(curve), encoding="utf-8")
    return out_dir


def cmd_eval(cfg, predictions_path, out_dir=None):
    """Evaluate a predictions file against the configured ground truth."""
    report, gts = evaluate_predictions(cfg, predictions_path)
    write_eval_report(report, out_dir or cfg.output_dir / "eval", gts.class_names,
                      extra={"image_count": len(gts)})
    return report


def run_pipeline(cfg):
    """enhance -> detect -> eval for one configuration; returns the EvalReport."""
    enh = cmd_enhance(cfg)
    if enh.exit_code:
        raise DataError(f"enhancement failed for every image ({len(enh.errors)} errors)")
    det = cmd_detect(cfg, images_dir=enh.out_dir)
    return cmd_eval(cfg, det.predictions_path)


def _same_ground_truth(a, b):
    return a.records == b.records and a.boxes == b.boxes


def cmd_compare(cfg_a, cfg_b, labels=("A", "B"), predictions_a=None, predictions_b=None,
                reference_rows=(), out_dir=None):
    """Evaluate two runs identically and tabulate them with their delta.

    With prediction files the detector stages are skipped; otherwise each
    configuration runs the full pipeline into its own output directory.
    """
    gts_a = load_ground_truth(cfg_a)
    gts_b = gts_a if cfg_b is cfg_a else load_ground_truth(cfg_b)
    if not _same_ground_truth(gts_a, gts_b):
        raise DataError("the two runs are evaluated against different ground truth sets")
    classes = sorted(cfg_a.class_table.values())

    def run(cfg, preds_path, gts):
        if preds_path is not None:
            preds = parse_predictions(preds_path)
            return evaluate(preds, gts, cfg_a.thresholds, cfg_a.threshold_rule, cfg_a.ignore_difficult,
                            class_ids=classes)
        return run_pipeline(cfg)

    report_a = run(cfg_a, predictions_a, gts_a)
    report_b = run(cfg_b, predictions_b, gts_b)
    comp = ComparisonReport.from_runs(labels[0], report_a.map_coco, labels[1], report_b.map_coco, reference_rows)
    out_dir = Path(out_dir) if out_dir is not None else cfg_a.output_dir / "compare"
    out_dir.mkdir(parents=True, exist_ok=True)
    for label, rep in zip(labels, (report_a, report_b)):
        write_eval_report(rep, out_dir / _slug(label), gts_a.class_names)
    (out_dir / "table.txt").write_text(comparison_table(comp), encoding="utf-8")
    (out_dir / "comparison.csv").write_text(comparison_csv(comp), encoding="utf-8")
    (out_dir / "comparison.svg").write_text(
        bar_chart_svg(comp.all_rows, highlight=set(labels)), encoding="utf-8")
    return comp


def _slug(label):
    s = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in label)
    return s or "run"


def cmd_stats(cfg):
    return dataset_stats(load_ground_truth(cfg))


__all__ = [
    "AnnotationError",
    "DataError",
    "cmd_compare",
    "cmd_detect",
    "cmd_enhance",
    "cmd_eval",
    "cmd_stats",
    "run_pipeline",
]
