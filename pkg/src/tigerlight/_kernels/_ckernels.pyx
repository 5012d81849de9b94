# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for box overlap, suppression and matching.

Mirrors ``_pykernels`` operation for operation; no fast-math, so results
are bit-identical to the Python twin.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double _iou(double ax1, double ay1, double ax2, double ay2,
                        double bx1, double by1, double bx2, double by2) nogil:
    cdef double ix1 = ax1 if ax1 > bx1 else bx1
    cdef double iy1 = ay1 if ay1 > by1 else by1
    cdef double ix2 = ax2 if ax2 < bx2 else bx2
    cdef double iy2 = ay2 if ay2 < by2 else by2
    cdef double iw = ix2 - ix1
    cdef double ih = iy2 - iy1
    cdef double inter, union, r
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0.0:
        return 0.0
    r = inter / union
    return 1.0 if r > 1.0 else r


def iou_xyxy(double ax1, double ay1, double ax2, double ay2,
             double bx1, double by1, double bx2, double by2):
    return _iou(ax1, ay1, ax2, ay2, bx1, by1, bx2, by2)


def iou_matrix(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], i, j
    out = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(m):
                o[i, j] = _iou(a[i, 0], a[i, 1], a[i, 2], a[i, 3],
                               b[j, 0], b[j, 1], b[j, 2], b[j, 3])
    return out


def nms_sorted(const double[:, ::1] boxes, const long long[::1] class_ids, double thresh):
    cdef Py_ssize_t n = boxes.shape[0], i, j
    sup = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] s = sup
    keep = []
    for i in range(n):
        if s[i]:
            continue
        keep.append(i)
        with nogil:
            for j in range(i + 1, n):
                if s[j] or class_ids[j] != class_ids[i]:
                    continue
                if _iou(boxes[i, 0], boxes[i, 1], boxes[i, 2], boxes[i, 3],
                        boxes[j, 0], boxes[j, 1], boxes[j, 2], boxes[j, 3]) > thresh:
                    s[j] = 1
    return keep


def greedy_match(const double[:, ::1] ious, const unsigned char[::1] gt_difficult,
                 double thresh, bint strict):
    cdef Py_ssize_t n = ious.shape[0], m = gt_difficult.shape[0], i, j, best, dbest
    cdef double v, best_iou, dbest_iou
    taken_arr = np.zeros(m, dtype=np.uint8)
    matched_arr = np.full(n, -1, dtype=np.int64)
    state_arr = np.zeros(n, dtype=np.int64)
    cdef unsigned char[::1] taken = taken_arr
    cdef long long[::1] matched = matched_arr
    cdef long long[::1] state = state_arr
    with nogil:
        for i in range(n):
            best = -1
            best_iou = -1.0
            for j in range(m):
                if taken[j] or gt_difficult[j]:
                    continue
                v = ious[i, j]
                if v > best_iou:
                    best_iou = v
                    best = j
            if best >= 0 and ((best_iou > thresh) if strict else (best_iou >= thresh)):
                taken[best] = 1
                matched[i] = best
                state[i] = 1
                continue
            dbest = -1
            dbest_iou = -1.0
            for j in range(m):
                if not gt_difficult[j]:
                    continue
                v = ious[i, j]
                if v > dbest_iou:
                    dbest_iou = v
                    dbest = j
            if dbest >= 0 and ((dbest_iou > thresh) if strict else (dbest_iou >= thresh)):
                matched[i] = dbest
                state[i] = -1
    return matched_arr.tolist(), state_arr.tolist()
