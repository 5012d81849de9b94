"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--boxes 300]

Each row is the best of ``--repeat`` runs. Before timing, the two backends
are checked to give identical results on the same inputs.
"""

import argparse
import random
import sys
import timeit

import numpy as np

from tigerlight import _kernels
from tigerlight.annotations import GroundTruthBox, GroundTruthSet, ImageRecord
from tigerlight.boxes import BoundingBox, Detection
from tigerlight.metrics import evaluate


def random_boxes(rng, n):
    xy = rng.uniform(0, 600, (n, 2))
    wh = rng.uniform(5, 120, (n, 2))
    return np.concatenate([xy, xy + wh], axis=1)


def random_eval_case(seed, n_images, per_image):
    rng = random.Random(seed)
    gts = GroundTruthSet()
    preds = {}
    for i in range(n_images):
        image_id = f"img{i:04d}"
        boxes = []
        for _ in range(rng.randint(1, 4)):
            x, y = rng.uniform(0, 500), rng.uniform(0, 400)
            boxes.append(GroundTruthBox(BoundingBox(x, y, x + rng.uniform(20, 140), y + rng.uniform(20, 140))))
        gts.add(ImageRecord(image_id, f"{image_id}.jpg", 640, 480), boxes)
        dets = []
        for _ in range(per_image):
            g = rng.choice(boxes).box
            j = [rng.gauss(0, 8) for _ in range(4)]
            x1, y1 = g.x_min + j[0], g.y_min + j[1]
            dets.append(Detection(BoundingBox(x1, y1, max(g.x_max + j[2], x1 + 1), max(g.y_max + j[3], y1 + 1)),
                                  rng.random()))
        preds[image_id] = dets
    return preds, gts


def workloads(n_boxes):
    rng = np.random.default_rng(0)
    a, b = random_boxes(rng, n_boxes), random_boxes(rng, n_boxes)
    order = np.argsort(-rng.random(n_boxes), kind="stable")
    sorted_boxes = a[order]
    classes = rng.integers(0, 3, n_boxes)
    ious = _kernels.iou_matrix(a, b[: n_boxes // 4])
    difficult = (rng.random(ious.shape[1]) < 0.1).astype(np.uint8)
    preds, gts = random_eval_case(1, 200, 20)
    return {
        f"iou_matrix {n_boxes}x{n_boxes}": lambda: _kernels.iou_matrix(a, b),
        f"nms_sorted n={n_boxes}": lambda: _kernels.nms_sorted(sorted_boxes, classes, 0.5),
        f"greedy_match {ious.shape[0]}x{ious.shape[1]}": lambda: _kernels.greedy_match(ious, difficult, 0.5),
        "evaluate 200 images x 20 dets": lambda: evaluate(preds, gts).map_coco,
    }


def _result_key(value):
    if isinstance(value, np.ndarray):
        return value.tobytes()
    if isinstance(value, tuple):
        return tuple(_result_key(v) for v in value)
    if isinstance(value, list):
        return [_result_key(v) for v in value]
    return value


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--boxes", type=int, default=300)
    args = parser.parse_args(argv)

    backends = _kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels are not built; timing the Python fallback only", file=sys.stderr)
    previous = _kernels.BACKEND
    jobs = workloads(args.boxes)
    results = {}
    timings = {}
    try:
        for backend in backends:
            _kernels.set_backend(backend)
            for name, fn in jobs.items():
                results[backend, name] = _result_key(fn())
                timings[backend, name] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
    finally:
        _kernels.set_backend(previous)

    width = max(len(n) for n in jobs)
    header = f"{'workload'.ljust(width)}  " + "  ".join(f"{b:>10}" for b in backends)
    if len(backends) == 2:
        header += f"  {'speedup':>8}"
    print(header)
    for name in jobs:
        row = f"{name.ljust(width)}  " + "  ".join(f"{timings[b, name] * 1e3:>8.2f}ms" for b in backends)
        if len(backends) == 2:
            row += f"  {timings['python', name] / timings['cython', name]:>7.1f}x"
            if results["python", name] != results["cython", name]:
                row += "  MISMATCH"
        print(row)
    mismatched = len(backends) == 2 and any(results["python", n] != results["cython", n] for n in jobs)
    return 1 if mismatched else 0


if __name__ == "__main__":
    sys.exit(main())
