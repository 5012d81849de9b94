"""Ground-truth and prediction file formats.

VOC XML annotations use 1-based inclusive pixel indices. On ingest
``xmin``/``ymin`` are shifted down by one so boxes live in a 0-based
continuous frame where area is plain ``(x_max - x_min) * (y_max - y_min)``.
The writer applies the inverse shift.
"""

import json
import math
import os
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .boxes import BoundingBox, Detection

DEFAULT_CLASSES = {"tiger": 0}


class AnnotationError(ValueError):
    """A ground-truth or prediction file could not be parsed."""


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    file_path: str
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"{self.image_id}: image size must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class GroundTruthBox:
    box: BoundingBox
    class_id: int = 0
    difficult: bool = False


@dataclass
class GroundTruthSet:
    """Per-image ground truth; treat as immutable once built."""

    records: dict = field(default_factory=dict)
    boxes: dict = field(default_factory=dict)
    class_names: dict = field(default_factory=lambda: {v: k for k, v in DEFAULT_CLASSES.items()})

    def __post_init__(self):
        missing = set(self.boxes) - set(self.records)
        if missing:
            raise ValueError(f"boxes given for images without a record: {sorted(missing)[:5]}")
        for image_id in self.records:
            self.boxes.setdefault(image_id, [])

    def add(self, record, gt_boxes):
        if record.image_id in self.records:
            raise ValueError(f"duplicate image_id {record.image_id!r}")
        self.records[record.image_id] = record
        self.boxes[record.image_id] = list(gt_boxes)

    @property
    def image_ids(self):
        return sorted(self.records)

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class DatasetStats:
    image_count: int
    box_count: int
    per_class: dict


def _text(elem, tag, where):
    child = elem.find(tag)
    if child is None or child.text is None or not child.text.strip():
        raise AnnotationError(f"{where}: missing <{tag}>")
    return child.text.strip()


def _number(elem, tag, where):
    raw = _text(elem, tag, where)
    try:
        v = float(raw)
    except ValueError:
        raise AnnotationError(f"{where}: <{tag}> is not a number: {raw!r}") from None
    if not math.isfinite(v):
        raise AnnotationError(f"{where}: <{tag}> is not finite: {raw!r}")
    return v


def parse_voc_xml(path, class_table=None):
    """Read one VOC annotation file.

    Returns ``(ImageRecord, [GroundTruthBox, ...])``. The image id is the
    stem of ``<filename>`` (or of the XML file when that element is absent).
    """
    path = Path(path)
    class_table = DEFAULT_CLASSES if class_table is None else class_table
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        raise AnnotationError(f"{path}: malformed XML ({exc})") from exc
    except OSError as exc:
        raise AnnotationError(f"{path}: cannot read ({exc})") from exc
    if root.tag != "annotation":
        raise AnnotationError(f"{path}: root element is <{root.tag}>, expected <annotation>")

    fname_el = root.find("filename")
    if fname_el is not None and fname_el.text and fname_el.text.strip():
        file_path = fname_el.text.strip()
    else:
        file_path = path.stem
    size = root.find("size")
    if size is None:
        raise AnnotationError(f"{path}: missing <size>")
    w, h = _number(size, "width", f"{path} <size>"), _number(size, "height", f"{path} <size>")
    if w != int(w) or h != int(h) or w < 1 or h < 1:
        raise AnnotationError(f"{path}: invalid image size {w}x{h}")
    record = ImageRecord(Path(file_path).stem, file_path, int(w), int(h))

    gt = []
    for idx, obj in enumerate(root.findall("object")):
        where = f"{path} object #{idx}"
        name = _text(obj, "name", where)
        if name not in class_table:
            raise AnnotationError(f"{where}: unknown class {name!r}")
        diff_el = obj.find("difficult")
        difficult = False
        if diff_el is not None and diff_el.text and diff_el.text.strip():
            if diff_el.text.strip() not in ("0", "1"):
                raise AnnotationError(f"{where}: <difficult> must be 0 or 1")
            difficult = diff_el.text.strip() == "1"
        bb = obj.find("bndbox")
        if bb is None:
            raise AnnotationError(f"{where}: missing <bndbox>")
        xmin, ymin = _number(bb, "xmin", where), _number(bb, "ymin", where)
        xmax, ymax = _number(bb, "xmax", where), _number(bb, "ymax", where)
        if xmax <= xmin or ymax <= ymin:
            raise AnnotationError(
                f"{where} ({name}): degenerate box xmin={xmin:g} ymin={ymin:g} xmax={xmax:g} ymax={ymax:g}"
            )
        gt.append(GroundTruthBox(BoundingBox(xmin - 1.0, ymin - 1.0, xmax, ymax), class_table[name], difficult))
    return record, gt


def _fmt(v):
    return repr(float(v)) if v != int(v) else str(int(v))


def write_voc_xml(record, boxes, path, class_table=None):
    """Write ``record`` and its ground-truth boxes as VOC XML.

    Boxes narrower or shorter than one pixel cannot be expressed (VOC needs
    ``xmax > xmin`` after the 1-based shift) and are rejected.
    """
    class_table = DEFAULT_CLASSES if class_table is None else class_table
    names = {v: k for k, v in class_table.items()}
    root = ET.Element("annotation")
    ET.SubElement(root, "filename").text = record.file_path
    size = ET.SubElement(root, "size")
    ET.SubElement(size, "width").text = str(record.width)
    ET.SubElement(size, "height").text = str(record.height)
    ET.SubElement(size, "depth").text = "3"
    for idx, g in enumerate(boxes):
        b = g.box
        xmin, ymin = b.x_min + 1.0, b.y_min + 1.0
        if not (b.x_max > xmin and b.y_max > ymin):
            raise ValueError(f"object #{idx}: box {b.as_tuple()} is under one pixel wide/high, not VOC-representable")
        if g.class_id not in names:
            raise ValueError(f"object #{idx}: class id {g.class_id} missing from class table")
        obj = ET.SubElement(root, "object")
        ET.SubElement(obj, "name").text = names[g.class_id]
        ET.SubElement(obj, "difficult").text = "1" if g.difficult else "0"
        bb = ET.SubElement(obj, "bndbox")
        for tag, v in (("xmin", xmin), ("ymin", ymin), ("xmax", b.x_max), ("ymax", b.y_max)):
            ET.SubElement(bb, tag).text = _fmt(v)
    ET.indent(root)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ET.ElementTree(root).write(path, encoding="utf-8", xml_declaration=True)
    return path


_PRED_KEYS = ("image_id", "x_min", "y_min", "x_max", "y_max", "score")


def parse_predictions(path):
    """Read JSON-lines detections into ``{image_id: [Detection, ...]}`` (file order kept)."""
    path = Path(path)
    out = {}
    try:
        fh = path.open(encoding="utf-8")
    except OSError as exc:
        raise AnnotationError(f"{path}: cannot read ({exc})") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AnnotationError(f"{where}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise AnnotationError(f"{where}: expected a JSON object")
            missing = [k for k in _PRED_KEYS if k not in obj]
            if missing:
                raise AnnotationError(f"{where}: missing keys {missing}")
            try:
                score = float(obj["score"])
                if not 0.0 <= score <= 1.0:
                    raise AnnotationError(f"{where}: score {obj['score']!r} outside [0, 1]")
                box = BoundingBox(obj["x_min"], obj["y_min"], obj["x_max"], obj["y_max"])
                class_id = obj.get("class_id", 0)
                if isinstance(class_id, bool) or not isinstance(class_id, int):
                    raise AnnotationError(f"{where}: class_id must be an integer")
                det = Detection(box, score, class_id)
            except (TypeError, ValueError) as exc:
                if isinstance(exc, AnnotationError):
                    raise
                raise AnnotationError(f"{where}: {exc}") from None
            out.setdefault(str(obj["image_id"]), []).append(det)
    return out


def prediction_lines(preds):
    """JSON-lines text for ``preds``; images sorted, per-image order preserved."""
    lines = []
    for image_id in sorted(preds):
        for d in preds[image_id]:
            b = d.box
            lines.append(json.dumps({
                "image_id": image_id, "x_min": b.x_min, "y_min": b.y_min,
                "x_max": b.x_max, "y_max": b.y_max, "score": d.score, "class_id": d.class_id,
            }))
    return "".join(line + "\n" for line in lines)


def write_predictions(preds, path):
    """Write ``{image_id: [Detection]}`` as JSON lines.

    Images with no detections produce no lines and so do not survive a
    round trip as keys.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(prediction_lines(preds), encoding="utf-8")
    return path


def read_split_list(path):
    """Image ids, one per line; blank lines and ``#`` comments ignored."""
    ids = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            ids.append(line)
    if len(set(ids)) != len(ids):
        dup = sorted(k for k, n in Counter(ids).items() if n > 1)
        raise AnnotationError(f"{path}: duplicate ids {dup[:5]}")
    return ids


def load_voc_dir(ann_dir, image_ids=None, class_table=None):
    """Build a :class:`GroundTruthSet` from ``<ann_dir>/<image_id>.xml`` files.

    Without ``image_ids`` every ``*.xml`` in the directory is read.
    """
    ann_dir = Path(ann_dir)
    class_table = DEFAULT_CLASSES if class_table is None else class_table
    if image_ids is None:
        paths = sorted(ann_dir.glob("*.xml"))
    else:
        paths = [ann_dir / f"{i}.xml" for i in image_ids]
    gts = GroundTruthSet(class_names={v: k for k, v in class_table.items()})
    for p in paths:
        if not p.is_file():
            raise AnnotationError(f"{p}: annotation file not found")
        record, boxes = parse_voc_xml(p, class_table)
        if record.image_id != p.stem:
            # split lists and prediction files key on the XML stem
            record = ImageRecord(p.stem, record.file_path, record.width, record.height)
        gts.add(record, boxes)
    return gts


def dataset_stats(gts):
    """Image count, box count and a per-class-name box histogram."""
    hist = Counter()
    for image_id in gts.records:
        for g in gts.boxes.get(image_id, []):
            hist[gts.class_names.get(g.class_id, str(g.class_id))] += 1
    return DatasetStats(len(gts.records), sum(hist.values()), dict(sorted(hist.items())))


def atrw_root_from_env():
    """Location of a local ATRW detection annotation directory, if configured."""
    root = os.environ.get("TIGERLIGHT_ATRW_ROOT")
    return Path(root) if root else None
