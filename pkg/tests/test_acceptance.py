"""Exit criteria for the package, one test per criterion.

Each test carries ``@pytest.mark.acceptance(name)``; the conftest hook prints
a PASS/FAIL/SKIP line per criterion (with any measured value) at the end of
the run. Run just this suite with ``pytest -m acceptance``.
"""

import random
import time

import numpy as np
import pytest

from instances import random_instance, to_ref
from reference_eval import ref_evaluate
from stubs import detector_model, generator_model, make_dataset, write_jsonl
from tigerlight.annotations import (
    GroundTruthBox,
    GroundTruthSet,
    ImageRecord,
    atrw_root_from_env,
    dataset_stats,
    load_voc_dir,
    parse_predictions,
    parse_voc_xml,
    write_predictions,
    write_voc_xml,
)
from tigerlight.boxes import BoundingBox, Detection
from tigerlight.enhancement import gamma_correct, histogram_equalize
from tigerlight.imagecore import (
    ILLUMINATION,
    MAP_SELECTORS,
    RasterImage,
    ScalarMap,
    compose_enhanced,
    illumination_map,
)
from tigerlight.metrics import (
    COCO_THRESHOLDS,
    NON_STRICT,
    STRICT,
    evaluate,
    iou,
    is_correct,
    mean_average_precision,
    report_text,
)
from tigerlight.pipeline import build_run_config, cmd_compare, run_pipeline
from tigerlight.pipeline.report import format_delta

pytestmark = pytest.mark.acceptance


def _note(record_property, text):
    record_property("measured", text)
    print(text)


@pytest.mark.acceptance("metric oracle equivalence")
def test_metric_oracle_equivalence(record_property):
    rng = random.Random(20240501)
    n, worst = 600, 0.0
    started = time.perf_counter()
    for k in range(n):
        classes = 2 if k % 3 == 0 else 1
        preds, gts = random_instance(rng, 4, 3, 4, difficult=True, classes=classes, ties=k % 2 == 0)
        strict = k % 4 != 3
        class_ids = tuple(range(classes))
        r = evaluate(preds, gts, rule=STRICT if strict else NON_STRICT, class_ids=class_ids)
        ref = ref_evaluate(*to_ref(preds, gts), COCO_THRESHOLDS, strict=strict, classes=class_ids)
        for t in COCO_THRESHOLDS:
            for c in class_ids:
                worst = max(worst, abs(r.per_threshold_ap[t][c] - ref[t][c]))
    elapsed = time.perf_counter() - started
    _note(record_property, f"{n} instances, max |AP - ref| = {worst:.3g}, {elapsed:.2f} s")
    assert worst <= 1e-9
    assert elapsed < 10.0


@pytest.mark.acceptance("IoU properties")
def test_iou_properties(record_property):
    rng = np.random.default_rng(7)
    xy = rng.uniform(-100, 100, (10_000, 2, 2))
    wh = rng.uniform(0.01, 80, (10_000, 2, 2))
    shift = rng.uniform(-500, 500, (10_000, 2))
    scale = rng.uniform(0.05, 20, 10_000)
    worst_t = worst_s = 0.0
    for i in range(10_000):
        a = BoundingBox(*xy[i, 0], *(xy[i, 0] + wh[i, 0]))
        b = BoundingBox(*xy[i, 1], *(xy[i, 1] + wh[i, 1]))
        v = iou(a, b)
        assert v == iou(b, a)
        assert 0.0 <= v <= 1.0
        dx, dy = shift[i]
        ta = BoundingBox(a.x_min + dx, a.y_min + dy, a.x_max + dx, a.y_max + dy)
        tb = BoundingBox(b.x_min + dx, b.y_min + dy, b.x_max + dx, b.y_max + dy)
        s = scale[i]
        sa = BoundingBox(*(c * s for c in a.as_tuple()))
        sb = BoundingBox(*(c * s for c in b.as_tuple()))
        worst_t = max(worst_t, abs(iou(ta, tb) - v))
        worst_s = max(worst_s, abs(iou(sa, sb) - v))
    worked = iou(BoundingBox(0, 0, 2, 2), BoundingBox(1, 0, 3, 2))
    _note(record_property, f"translation {worst_t:.3g}, scaling {worst_s:.3g}, worked case {worked!r}")
    assert worst_t <= 1e-12 and worst_s <= 1e-12
    assert abs(worked - 1 / 3) <= 1e-12


@pytest.mark.acceptance("threshold strictness")
def test_threshold_strictness():
    g = BoundingBox(0, 0, 10, 10)
    cases = [(BoundingBox(0, 0, 10, 5), 0.5), (BoundingBox(0, 0, 10, 7.5), 0.75),
             (BoundingBox(0, 0, 10, 9), 0.9), (BoundingBox(0, 0, 10, 6), 0.6)]
    for p, t in cases:
        assert iou(p, g) == t
        assert not is_correct(p, g, t)
        assert is_correct(p, g, t, rule=NON_STRICT)
    # the same boundary carried through a full evaluation
    gts = GroundTruthSet()
    gts.add(ImageRecord("a", "a.png", 20, 20), [GroundTruthBox(g)])
    preds = {"a": [Detection(BoundingBox(0, 0, 10, 5), 0.9)]}
    assert evaluate(preds, gts, thresholds=[0.5]).map_single == 0.0
    assert evaluate(preds, gts, thresholds=[0.5], rule=NON_STRICT).map_single == 1.0


@pytest.mark.acceptance("mAP[0.5:0.95] composition")
def test_map_composition():
    assert len(COCO_THRESHOLDS) == 10
    rng = random.Random(3)
    for k in range(300):
        classes = 1 + k % 3
        preds, gts = random_instance(rng, 4, 3, 4, classes=classes)
        r = evaluate(preds, gts, class_ids=tuple(range(classes)))
        total = 0.0
        for t in r.thresholds:
            total += r.per_threshold_map[t]
        assert r.map_coco == total / 10
        if classes == 1:
            for t in r.thresholds:
                assert r.per_threshold_map[t] == r.per_threshold_ap[t][0]
    for x in [0.0, 1.0, 1 / 3, 0.1, *(rng.random() for _ in range(1000))]:
        assert mean_average_precision([x]) == x


@pytest.mark.acceptance("composition identities")
def test_composition_identities():
    rng = np.random.default_rng(11)
    for _ in range(100):
        h, w = rng.integers(1, 65, 2)
        a = RasterImage(rng.random((h, w, 3)))
        residual = RasterImage(rng.random((h, w, 3)))
        zeros_rgb = RasterImage(np.zeros((h, w, 3)))
        illum = illumination_map(a)
        for sel in MAP_SELECTORS:
            assert np.array_equal(compose_enhanced(a, zeros_rgb, illum, sel).data, a.data)
            out = compose_enhanced(a, residual, illum, sel).data
            assert out.min() >= 0.0 and out.max() <= 1.0
        dark = ScalarMap(np.zeros((h, w)))
        assert np.array_equal(compose_enhanced(a, residual, dark, ILLUMINATION).data, a.data)


@pytest.mark.acceptance("enhancement baselines")
def test_enhancement_baselines(record_property):
    rng = np.random.default_rng(5)
    for _ in range(50):
        h, w = rng.integers(1, 40, 2)
        img = RasterImage(rng.random((h, w, 3)))
        assert np.max(np.abs(gamma_correct(img, 1.0).data - img.data)) <= 1e-12
    # diagonal ramp: every tone from 0 to 1, with a strongly non-uniform histogram
    y, x = np.mgrid[0:256, 0:256]
    ramp = (x + y) / 510.0
    out = illumination_map(histogram_equalize(RasterImage(np.repeat(ramp[:, :, None], 3, axis=2)))).data
    bins = 16
    counts = np.bincount(np.minimum((out.ravel() * bins).astype(int), bins - 1), minlength=bins)
    ratio = counts.max() / counts.min() if counts.min() else float("inf")
    before = np.bincount(np.minimum((ramp.ravel() * bins).astype(int), bins - 1), minlength=bins)
    _note(record_property, f"{bins}-bin occupancy ratio {before.max() / before.min():.2f} -> {ratio:.3f}")
    assert ratio <= 2.0
    for v in (0.0, 0.2, 128 / 255, 1.0):
        for shape in ((1, 1, 3), (7, 5, 3)):
            const = RasterImage(np.full(shape, v))
            assert histogram_equalize(const) == const


def _close(a, b, tol=1e-6):
    return all(abs(p - q) <= tol for p, q in zip(a, b))


@pytest.mark.acceptance("parser round trips")
def test_parser_round_trips(tmp_path):
    rng = random.Random(99)
    table = {"tiger": 0, "leopard": 1, "a&b <c>": 2}
    for k in range(1000):
        rec = ImageRecord(f"img{k}", f"img{k}.{rng.choice(['jpg', 'png'])}", rng.randint(1, 5000), rng.randint(1, 5000))
        boxes = []
        for _ in range(rng.randint(0, 6)):
            x, y = rng.uniform(-50, 4000), rng.uniform(-50, 4000)
            boxes.append(GroundTruthBox(BoundingBox(x, y, x + rng.uniform(1.0, 800), y + rng.uniform(1.0, 800)),
                                        rng.randrange(3), rng.random() < 0.3))
        got_rec, got = parse_voc_xml(write_voc_xml(rec, boxes, tmp_path / "a.xml", table), table)
        assert got_rec == rec and len(got) == len(boxes)
        for g, b in zip(got, boxes):
            assert (g.class_id, g.difficult) == (b.class_id, b.difficult)
            assert _close(g.box.as_tuple(), b.box.as_tuple())
    for k in range(1000):
        preds = {}
        for i in rng.sample(range(50), rng.randint(0, 5)):
            dets = []
            for _ in range(rng.randint(1, 5)):
                x, y = rng.uniform(-1e4, 1e4), rng.uniform(-1e4, 1e4)
                box = BoundingBox(x, y, x + rng.uniform(1e-3, 1e3), y + rng.uniform(1e-3, 1e3))
                dets.append(Detection(box, rng.choice([0.0, 1.0, rng.random()]), rng.randrange(4)))
            preds[f"id-{i}"] = dets
        got = parse_predictions(write_predictions(preds, tmp_path / "p.jsonl"))
        assert sorted(got) == sorted(preds)
        for image_id, dets in preds.items():
            assert len(got[image_id]) == len(dets)
            for g, d in zip(got[image_id], dets):
                assert (g.score, g.class_id) == (d.score, d.class_id)
                assert _close(g.box.as_tuple(), d.box.as_tuple())


def _stub_config(root, out, tmp_path, workers):
    values = {"dataset_root": str(root), "output_dir": str(out), "workers": str(workers)}
    try:
        import onnx  # noqa: F401
        import onnxruntime  # noqa: F401
    except ImportError:
        rows = [{"image_id": f"{i:04d}", "x_min": 2 * i, "y_min": 1, "x_max": 30 + i, "y_max": 40, "score": 0.5,
                 "class_id": 0} for i in range(10)]
        values.update({"enhancer.kind": "gamma", "enhancer.gamma": "0.6",
                       "detector.predictions_path": str(write_jsonl(tmp_path / "stub.jsonl", rows))})
    else:
        gen = tmp_path / "gen.onnx"
        det = tmp_path / "det.onnx"
        if not gen.exists():
            generator_model(gen, "echo")
            detector_model(det, [[0, 0, 40, 30, 0.9, 0], [5, 5, 60, 45, 0.8, 0], [6, 5, 60, 45, 0.7, 0],
                                 [10, 2, 30, 20, 0.6, 0], [-5, -5, 70, 70, 0.3, 0], [20, 10, 63, 47, 0.2, 0]])
        values.update({"enhancer.kind": "generator-model", "enhancer.model_path": str(gen),
                       "detector.kind": "model", "detector.model_path": str(det)})
    return build_run_config(overrides=values, env={})


@pytest.mark.acceptance("pipeline determinism")
def test_pipeline_determinism(tmp_path, record_property):
    root, _ = make_dataset(tmp_path / "data", n_images=10, seed=42)
    texts, blobs = [], []
    for workers in (1, 4, 8):
        out = tmp_path / f"run{workers}"
        report = run_pipeline(_stub_config(root, out, tmp_path, workers))
        texts.append(report_text(report))
        eval_dir = out / "eval"
        blobs.append({p.relative_to(eval_dir).as_posix(): p.read_bytes()
                      for p in sorted(eval_dir.rglob("*")) if p.is_file()}
                     | {"predictions.jsonl": (out / "predictions.jsonl").read_bytes()})
    _note(record_property, f"map_coco {report.map_coco:.4f}, {len(blobs[0])} artefacts per run")
    assert texts[0] == texts[1] == texts[2]
    assert blobs[0] == blobs[1] == blobs[2]


def _ref_map(preds_path, gts_by_id):
    preds = {k: [(d.score, d.box.as_tuple(), d.class_id) for d in v]
             for k, v in parse_predictions(preds_path).items()}
    ref = ref_evaluate(preds, gts_by_id, COCO_THRESHOLDS)
    total = 0.0
    for t in COCO_THRESHOLDS:
        total += ref[t][0]
    return total / len(COCO_THRESHOLDS)


@pytest.mark.acceptance("delta mechanics")
def test_delta_mechanics(tmp_path, record_property):
    deltas = []
    for seed in range(8):
        rng = random.Random(seed)
        root, gts = make_dataset(tmp_path / f"d{seed}", n_images=6, seed=seed)
        gts_ref = {k: [(b, 0, False) for b in v] for k, v in gts.items()}
        flat = [(k, b) for k, v in sorted(gts.items()) for b in v]
        held_out = rng.randrange(len(flat))
        rows = []
        for j, (image_id, (x1, y1, x2, y2)) in enumerate(flat):
            if j == held_out:
                continue
            jitter = rng.choice([0, 1, 2, 4])
            rows.append({"image_id": image_id, "x_min": x1 + jitter, "y_min": y1, "x_max": x2, "y_max": y2,
                         "score": round(rng.uniform(0.1, 0.95), 3), "class_id": 0})
            if rng.random() < 0.5:
                rows.append({"image_id": image_id, "x_min": 0, "y_min": 0, "x_max": 3, "y_max": 3,
                             "score": round(rng.uniform(0.1, 0.95), 3), "class_id": 0})
        image_id, (x1, y1, x2, y2) = flat[held_out]
        extra = {"image_id": image_id, "x_min": x1, "y_min": y1, "x_max": x2, "y_max": y2, "score": 1.0,
                 "class_id": 0}
        pa = write_jsonl(tmp_path / f"a{seed}.jsonl", rows)
        pb = write_jsonl(tmp_path / f"b{seed}.jsonl", rows + [extra])
        cfg = build_run_config(overrides={"dataset_root": str(root), "output_dir": str(tmp_path / f"o{seed}")},
                               env={})
        comp = cmd_compare(cfg, cfg, ("A", "B"), pa, pb)
        expected = _ref_map(pb, gts_ref) - _ref_map(pa, gts_ref)
        assert abs(comp.delta - expected) <= 1e-12
        assert format_delta(comp.delta) == format_delta(expected)
        assert (tmp_path / f"o{seed}" / "compare" / "table.txt").read_text().rstrip().endswith(
            format_delta(expected))
        deltas.append(comp.delta)
        same = cmd_compare(cfg, cfg, ("A", "A again"), pa, pa)
        assert same.delta == 0.0 and format_delta(same.delta) == "0.000"
    _note(record_property, "deltas " + ", ".join(format_delta(d) for d in deltas))
    assert all(d > 0 for d in deltas)


@pytest.mark.acceptance("dataset stats (ATRW)")
def test_atrw_dataset_stats(record_property):
    root = atrw_root_from_env()
    if root is None:
        pytest.skip("TIGERLIGHT_ATRW_ROOT not set")
    ann = root / "Annotations" if (root / "Annotations").is_dir() else root
    stats = dataset_stats(load_voc_dir(ann))
    _note(record_property, f"{stats.image_count} images, {stats.box_count} boxes")
    assert (stats.image_count, stats.box_count) == (4434, 9496)
