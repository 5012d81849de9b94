"""Command-line entry point: ``tigerlight {enhance,detect,eval,compare,stats}``.

Exit codes: 0 success (warnings allowed), 1 usage or config error,
2 data error, 3 backend error.
"""

import argparse
import logging
import sys
from pathlib import Path

from ..annotations import AnnotationError
from ..backends import BackendError
from ..imagecore import ImageLoadError
from ..metrics import EvaluationError
from .commands import (
    DataError,
    cmd_compare,
    cmd_detect,
    cmd_enhance,
    cmd_eval,
    cmd_stats,
)
from .config import ConfigError, load_run_config
from .report import comparison_table, format_delta

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3

_DOTTED = [
    ("enhancer.kind", "identity | gamma | hist-equalization | generator-model | precomputed"),
    ("enhancer.gamma", "exponent for the gamma enhancer"),
    ("enhancer.model_path", "ONNX generator model (manifest alongside)"),
    ("enhancer.precomputed_dir", "directory of <image_id>.png residuals or finals"),
    ("enhancer.multiply_with", "illumination | self-regularized"),
    ("detector.kind", "model | precomputed"),
    ("detector.model_path", "ONNX detector model (manifest alongside)"),
    ("detector.predictions_path", "JSON-lines predictions file"),
    ("detector.score_floor", "drop detections scoring below this"),
    ("detector.nms_iou", "NMS IoU threshold"),
]


def _common(p):
    p.add_argument("--config", type=Path, help="flat key = value run config")
    p.add_argument("--dataset-root", dest="dataset_root")
    p.add_argument("--split", dest="split_list", help="file with one image id per line")
    p.add_argument("--out", dest="output_dir", help="output directory")
    p.add_argument("--workers", type=int, help="parallel workers for enhance/detect")
    p.add_argument("--thresholds", help='IoU thresholds, "0.5:0.05:0.95" or "0.5,0.75"')
    p.add_argument("--threshold-rule", dest="threshold_rule", choices=["strict", "non-strict"])
    p.add_argument("--classes", help="comma-separated class names, ids by position")
    for key, help_ in _DOTTED:
        p.add_argument(f"--{key}", dest=key, metavar="VALUE", help=help_)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tigerlight",
        description="Low-light enhancement, detection and COCO-style mAP evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enhance", help="enhance split images into <out>/enhanced")
    _common(p)

    p = sub.add_parser("detect", help="run the detector and write predictions JSON lines")
    _common(p)
    p.add_argument("--images", type=Path, help="image directory (default: dataset images)")
    p.add_argument("--output", type=Path, help="predictions file (default: <out>/predictions.jsonl)")

    p = sub.add_parser("eval", help="evaluate predictions against ground truth")
    _common(p)
    p.add_argument("--predictions", type=Path, help="default: <out>/predictions.jsonl")

    p = sub.add_parser("compare", help="evaluate two runs and tabulate mAP with the delta")
    _common(p)
    p.add_argument("--config-b", type=Path, help="config for the second run (default: same as --config)")
    p.add_argument("--predictions-a", type=Path)
    p.add_argument("--predictions-b", type=Path)
    p.add_argument("--labels", nargs=2, default=["A", "B"], metavar=("LABEL_A", "LABEL_B"))
    p.add_argument("--reference", action="append", default=[], metavar="LABEL=MAP",
                   help="extra fixed row for the table and chart (repeatable)")

    p = sub.add_parser("stats", help="image and box counts of the ground truth")
    _common(p)
    return parser


_OVERRIDE_KEYS = ["dataset_root", "split_list", "output_dir", "workers", "thresholds",
                  "threshold_rule", "classes"] + [k for k, _ in _DOTTED]


def _overrides(args):
    return {k: getattr(args, k) for k in _OVERRIDE_KEYS if getattr(args, k, None) is not None}


def _reference_rows(items):
    rows = []
    for item in items:
        label, sep, value = item.rpartition("=")
        if not sep or not label:
            raise ConfigError(f"--reference expects LABEL=MAP, got {item!r}")
        try:
            rows.append((label, float(value)))
        except ValueError:
            raise ConfigError(f"--reference value is not a number: {item!r}") from None
    return rows


def _run(args):
    cfg = load_run_config(args.config, _overrides(args))
    if args.command == "enhance":
        res = cmd_enhance(cfg)
        print(f"enhanced {len(res.outputs)} images ({res.cached} cached), {len(res.errors)} errors -> {res.out_dir}")
        return res.exit_code
    if args.command == "detect":
        res = cmd_detect(cfg, images_dir=args.images, out_path=args.output)
        n = sum(len(v) for v in res.predictions.values())
        print(f"{n} detections on {len(res.predictions)} images -> {res.predictions_path}")
        if res.errors and not res.predictions:
            return EXIT_DATA
        return EXIT_OK
    if args.command == "eval":
        preds = args.predictions or cfg.output_dir / "predictions.jsonl"
        report = cmd_eval(cfg, preds)
        print(f"{report.map_coco:.3f}")
        return EXIT_OK
    if args.command == "compare":
        cfg_b = load_run_config(args.config_b, _overrides(args)) if args.config_b else cfg
        comp = cmd_compare(cfg, cfg_b, labels=tuple(args.labels), predictions_a=args.predictions_a,
                           predictions_b=args.predictions_b, reference_rows=_reference_rows(args.reference))
        sys.stdout.write(comparison_table(comp))
        print(f"delta: {format_delta(comp.delta)}")
        return EXIT_OK
    stats = cmd_stats(cfg)
    print(f"images: {stats.image_count}")
    print(f"boxes: {stats.box_count}")
    for name, n in stats.per_class.items():
        print(f"  {name}: {n}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (DataError, AnnotationError, EvaluationError, ImageLoadError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
