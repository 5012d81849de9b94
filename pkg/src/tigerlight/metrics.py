"""IoU, greedy matching, precision-recall curves, AP and COCO-style mAP.

Conventions
-----------
* A detection is correct for a ground truth when ``IoU > t`` (``strict``,
  the default) or ``IoU >= t`` (``non-strict``).
* Matching is greedy in confidence order; each ground truth is consumed
  at most once per image and threshold.
* AP is the all-point interpolated area under the PR curve: the precision
  envelope is made non-increasing from the right and summed over recall
  increments, starting from recall 0.
* Difficult ground truths are left out of recall denominators, and
  detections that only match them are dropped from the PR walk.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .annotations import GroundTruthBox
from .boxes import BoundingBox, sort_detections

logger = logging.getLogger(__name__)

STRICT = "strict"
NON_STRICT = "non-strict"
THRESHOLD_RULES = (STRICT, NON_STRICT)
COCO_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))


class EvaluationError(ValueError):
    pass


def iou(b1, b2):
    """Intersection area over union area; 0 for disjoint boxes."""
    return _kernels.iou_xyxy(b1.x_min, b1.y_min, b1.x_max, b1.y_max,
                             b2.x_min, b2.y_min, b2.x_max, b2.y_max)


def _check_rule(rule):
    if rule not in THRESHOLD_RULES:
        raise ValueError(f"threshold rule must be one of {THRESHOLD_RULES}, got {rule!r}")
    return rule == STRICT


def is_correct(p, g, t, rule=STRICT):
    v = iou(p, g)
    return v > t if _check_rule(rule) else v >= t


@dataclass(frozen=True)
class MatchFlags:
    """Verdicts for one image's detections, in descending-score order.

    ``ignored`` marks detections that matched only a difficult ground truth;
    they are neither true nor false positives.
    """

    scores: tuple
    is_true_positive: tuple
    matched_gt: tuple
    ignored: tuple
    gt_total: int

    @property
    def tp(self):
        return sum(self.is_true_positive)

    @property
    def fp(self):
        return sum(1 for t, ig in zip(self.is_true_positive, self.ignored) if not t and not ig)

    def pairs(self):
        """``(score, is_tp)`` for every non-ignored detection."""
        return [(s, t) for s, t, ig in zip(self.scores, self.is_true_positive, self.ignored) if not ig]


def _gt_parts(gts):
    boxes, difficult = [], []
    for g in gts:
        if isinstance(g, GroundTruthBox):
            boxes.append(g.box)
            difficult.append(g.difficult)
        else:
            boxes.append(g)
            difficult.append(False)
    return boxes, difficult


def _box_array(boxes):
    return np.array([b.as_tuple() for b in boxes], dtype=np.float64).reshape(-1, 4)


def match_detections(dets, gts, t, rule=STRICT):
    """Greedy matching of one image's detections against its ground truths.

    ``gts`` may hold plain :class:`BoundingBox` objects or
    :class:`~tigerlight.annotations.GroundTruthBox` entries (whose
    ``difficult`` flag is honoured). Detections are taken in canonical
    order; each one claims the unmatched ground truth of highest IoU if the
    threshold rule accepts it.
    """
    strict = _check_rule(rule)
    dets = sort_detections(dets)
    boxes, difficult = _gt_parts(gts)
    ious = _kernels.iou_matrix(_box_array([d.box for d in dets]), _box_array(boxes))
    matched, state = _kernels.greedy_match(ious, difficult, t, strict)
    return MatchFlags(
        scores=tuple(d.score for d in dets),
        is_true_positive=tuple(s == 1 for s in state),
        matched_gt=tuple(m if m >= 0 else None for m in matched),
        ignored=tuple(s == -1 for s in state),
        gt_total=sum(1 for d in difficult if not d),
    )


@dataclass(frozen=True)
class PrPoint:
    recall: float
    precision: float
    score_cut: float


def pr_curve(flags, gt_total):
    """Cumulative precision/recall after each detection.

    ``flags`` is a sequence of ``(score, is_tp)`` pairs (or a
    :class:`MatchFlags`) already in descending-score order. With no ground
    truth the curve is empty.
    """
    if isinstance(flags, MatchFlags):
        flags = flags.pairs()
    if gt_total <= 0:
        return []
    curve = []
    tp = fp = 0
    for score, hit in flags:
        if hit:
            tp += 1
        else:
            fp += 1
        curve.append(PrPoint(tp / gt_total, tp / (tp + fp), float(score)))
    return curve


def average_precision(curve):
    """All-point interpolated area under a PR curve (0 for an empty curve)."""
    if not curve:
        return 0.0
    recall = np.array([p.recall for p in curve], dtype=np.float64)
    precision = np.array([p.precision for p in curve], dtype=np.float64)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(recall, prepend=0.0)
    ap = 0.0
    for dr, p in zip(steps.tolist(), envelope.tolist()):
        ap += dr * p
    return ap


def mean_average_precision(aps):
    """Arithmetic mean of per-class APs."""
    aps = [float(a) for a in aps]
    if not aps:
        raise ValueError("mean_average_precision needs at least one AP value")
    total = 0.0
    for a in aps:
        total += a
    return total / len(aps)


@dataclass(frozen=True)
class EvalReport:
    """Outcome of :func:`evaluate`.

    ``map_single`` is the mAP at the first threshold; ``map_coco`` is the mean
    of the per-threshold mAPs over all thresholds (0.50:0.05:0.95 by default).
    """

    thresholds: tuple
    class_ids: tuple
    per_threshold_ap: dict
    per_threshold_map: dict
    map_single: float
    map_coco: float
    pr_curves: dict
    gt_totals: dict
    detection_counts: dict
    config: dict
    warnings: tuple = field(default=())


def _validate_thresholds(thresholds):
    ts = [float(t) for t in thresholds]
    if not ts:
        raise ValueError("at least one IoU threshold is required")
    for a, b in zip(ts, ts[1:]):
        if not a < b:
            raise ValueError(f"thresholds must be strictly increasing, got {ts}")
    if ts[0] < 0.0 or ts[-1] >= 1.0:
        raise ValueError(f"thresholds must lie in [0, 1), got {ts}")
    return tuple(ts)


def evaluate(preds, gts, thresholds=COCO_THRESHOLDS, rule=STRICT, ignore_difficult=True,
             class_ids=None):
    """Score predictions against ground truth at each IoU threshold.

    ``preds`` maps image ids to detection lists and ``gts`` is a
    :class:`~tigerlight.annotations.GroundTruthSet`. Predictions for images
    absent from the ground truth are rejected; ground-truth images without
    predictions still count towards recall. Classes default to every class
    seen in either input (class 0 if neither has any).
    """
    strict = _check_rule(rule)
    thresholds = _validate_thresholds(thresholds)
    unknown = sorted(set(preds) - set(gts.records))
    if unknown:
        raise EvaluationError(f"predictions reference {len(unknown)} unknown image ids, e.g. {unknown[:5]}")

    if class_ids is None:
        seen = {g.class_id for bs in gts.boxes.values() for g in bs}
        seen |= {d.class_id for ds in preds.values() for d in ds}
        class_ids = sorted(seen) or [0]
    class_ids = tuple(int(c) for c in class_ids)

    image_ids = sorted(gts.records)
    warnings = []
    per_threshold_ap = {t: {} for t in thresholds}
    pr_curves = {}
    gt_totals = {}
    det_counts = {}

    for c in class_ids:
        # per-image state that does not depend on the threshold
        images = []
        order = []
        gt_total = 0
        for image_id in image_ids:
            dets = sort_detections(d for d in preds.get(image_id, ()) if d.class_id == c)
            gboxes = [g for g in gts.boxes.get(image_id, ()) if g.class_id == c]
            difficult = [bool(g.difficult) and ignore_difficult for g in gboxes]
            gt_total += sum(1 for d in difficult if not d)
            ious = _kernels.iou_matrix(_box_array([d.box for d in dets]), _box_array([g.box for g in gboxes]))
            slot = len(images)
            images.append((ious, difficult))
            for k, d in enumerate(dets):
                b = d.box
                order.append(((-d.score, image_id, b.x_min, b.y_min, b.x_max, b.y_max), slot, k, d.score))
        order.sort(key=lambda e: e[0])
        gt_totals[c] = gt_total
        det_counts[c] = len(order)
        if gt_total == 0:
            msg = f"class {c}: no ground truth; AP defined as 0"
            logger.warning(msg)
            warnings.append(msg)

        for t in thresholds:
            states = [_kernels.greedy_match(ious, difficult, t, strict)[1] for ious, difficult in images]
            flags = [(score, states[slot][k] == 1) for _, slot, k, score in order if states[slot][k] != -1]
            curve = pr_curve(flags, gt_total)
            pr_curves[(t, c)] = curve
            per_threshold_ap[t][c] = average_precision(curve)

    per_threshold_map = {t: mean_average_precision([per_threshold_ap[t][c] for c in class_ids])
                         for t in thresholds}
    map_coco = mean_average_precision([per_threshold_map[t] for t in thresholds])
    return EvalReport(
        thresholds=thresholds,
        class_ids=class_ids,
        per_threshold_ap=per_threshold_ap,
        per_threshold_map=per_threshold_map,
        map_single=per_threshold_map[thresholds[0]],
        map_coco=map_coco,
        pr_curves=pr_curves,
        gt_totals=gt_totals,
        detection_counts=det_counts,
        config={"threshold_rule": rule, "ignore_difficult": bool(ignore_difficult),
                "thresholds": list(thresholds), "class_ids": list(class_ids)},
        warnings=tuple(warnings),
    )


def _num(v):
    return repr(float(v))


def report_text(report, class_names=None, extra=None):
    """Key-value header followed by a per-threshold table."""
    names = class_names or {}
    lines = [f"map_coco: {_num(report.map_coco)}", f"map_single: {_num(report.map_single)}"]
    for k, v in sorted({**report.config, **(extra or {})}.items()):
        lines.append(f"{k}: {v}")
    for w in report.warnings:
        lines.append(f"warning: {w}")
    lines.append("")
    lines.append("threshold\tclass\tap\tgt_total\tdetections")
    for t in report.thresholds:
        for c in report.class_ids:
            lines.append("\t".join([f"{t:.2f}", names.get(c, str(c)), _num(report.per_threshold_ap[t][c]),
                                    str(report.gt_totals[c]), str(report.detection_counts[c])]))
    lines.append("")
    lines.append("threshold\tmap")
    for t in report.thresholds:
        lines.append(f"{t:.2f}\t{_num(report.per_threshold_map[t])}")
    return "\n".join(lines) + "\n"


def report_csv(report, class_names=None):
    """One row per threshold per class."""
    names = class_names or {}
    rows = ["threshold,class_id,class_name,ap,map"]
    for t in report.thresholds:
        for c in report.class_ids:
            rows.append(f"{t:.2f},{c},{names.get(c, str(c))},{_num(report.per_threshold_ap[t][c])},"
                        f"{_num(report.per_threshold_map[t])}")
    return "\n".join(rows) + "\n"


def pr_curve_csv(curve):
    rows = ["score_cut,recall,precision"]
    rows.extend(f"{_num(p.score_cut)},{_num(p.recall)},{_num(p.precision)}" for p in curve)
    return "\n".join(rows) + "\n"


__all__ = [
    "BoundingBox",
    "COCO_THRESHOLDS",
    "EvalReport",
    "EvaluationError",
    "MatchFlags",
    "PrPoint",
    "average_precision",
    "evaluate",
    "iou",
    "is_correct",
    "match_detections",
    "mean_average_precision",
    "pr_curve",
    "pr_curve_csv",
    "report_csv",
    "report_text",
]
