"""Pure-Python kernels.

Arithmetic is written in the same order as the Cython twin in
``_ckernels.pyx`` so both produce bit-identical doubles.
"""


def iou_xyxy(ax1, ay1, ax2, ay2, bx1, by1, bx2, by2):
    ix1 = ax1 if ax1 > bx1 else bx1
    iy1 = ay1 if ay1 > by1 else by1
    ix2 = ax2 if ax2 < bx2 else bx2
    iy2 = ay2 if ay2 < by2 else by2
    iw = ix2 - ix1
    ih = iy2 - iy1
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0.0:
        return 0.0
    r = inter / union
    return 1.0 if r > 1.0 else r


def iou_matrix(a, b):
    """IoU of every row of ``a`` against every row of ``b``.

    Both arguments are sequences of ``(x1, y1, x2, y2)``; returns a list of
    lists shaped ``len(a) x len(b)``.
    """
    out = []
    for ra in a:
        ax1, ay1, ax2, ay2 = float(ra[0]), float(ra[1]), float(ra[2]), float(ra[3])
        row = []
        for rb in b:
            row.append(iou_xyxy(ax1, ay1, ax2, ay2,
                                float(rb[0]), float(rb[1]), float(rb[2]), float(rb[3])))
        out.append(row)
    return out


def nms_sorted(boxes, class_ids, thresh):
    """Greedy suppression over boxes already in priority order.

    Returns the kept indices, ascending.
    """
    n = len(boxes)
    suppressed = [False] * n
    keep = []
    for i in range(n):
        if suppressed[i]:
            continue
        keep.append(i)
        bi = boxes[i]
        ax1, ay1, ax2, ay2 = float(bi[0]), float(bi[1]), float(bi[2]), float(bi[3])
        ci = class_ids[i]
        for j in range(i + 1, n):
            if suppressed[j] or class_ids[j] != ci:
                continue
            bj = boxes[j]
            if iou_xyxy(ax1, ay1, ax2, ay2,
                        float(bj[0]), float(bj[1]), float(bj[2]), float(bj[3])) > thresh:
                suppressed[j] = True
    return keep


def greedy_match(ious, gt_difficult, thresh, strict):
    """Assign detections (rows, in priority order) to ground truths (columns).

    Each detection takes the unmatched non-difficult ground truth with the
    highest IoU (lowest index on ties). If that IoU passes the threshold the
    detection is a true positive. Otherwise, if it passes against any
    difficult ground truth, it is ignored; else it is a false positive.

    Returns ``(matched, state)``: ``matched[i]`` is the gt index or -1,
    ``state[i]`` is 1 (TP), 0 (FP) or -1 (ignored).
    """
    n = len(ious)
    m = len(gt_difficult)
    taken = [False] * m
    matched = [-1] * n
    state = [0] * n
    for i in range(n):
        row = ious[i]
        best = -1
        best_iou = -1.0
        for j in range(m):
            if taken[j] or gt_difficult[j]:
                continue
            v = float(row[j])
            if v > best_iou:
                best_iou = v
                best = j
        if best >= 0 and (best_iou > thresh if strict else best_iou >= thresh):
            taken[best] = True
            matched[i] = best
            state[i] = 1
            continue
        dbest = -1
        dbest_iou = -1.0
        for j in range(m):
            if not gt_difficult[j]:
                continue
            v = float(row[j])
            if v > dbest_iou:
                dbest_iou = v
                dbest = j
        if dbest >= 0 and (dbest_iou > thresh if strict else dbest_iou >= thresh):
            matched[i] = dbest
            state[i] = -1
    return matched, state
