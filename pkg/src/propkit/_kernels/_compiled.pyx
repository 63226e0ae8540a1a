# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: pairwise IoU, greedy NMS and window edge scoring.

Mirrors the contracts of ``propkit._kernels._fallback`` exactly; the
package selects one of the two at import time.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fmax, fmin

cnp.import_array()


def cross_iou(double[:, ::1] a, double[:, ::1] b):
    """Pairwise IoU between two box arrays of shape (N, 4) and (M, 4)."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    cdef Py_ssize_t i, j
    out_arr = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double ax0, ay0, ax1, ay1, area_a, ix, iy, inter
    with nogil:
        for i in range(n):
            ax0 = a[i, 0]; ay0 = a[i, 1]; ax1 = a[i, 2]; ay1 = a[i, 3]
            area_a = (ax1 - ax0) * (ay1 - ay0)
            for j in range(m):
                ix = fmin(ax1, b[j, 2]) - fmax(ax0, b[j, 0])
                if ix <= 0:
                    continue
                iy = fmin(ay1, b[j, 3]) - fmax(ay0, b[j, 1])
                if iy <= 0:
                    continue
                inter = ix * iy
                out[i, j] = inter / (
                    area_a + (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1]) - inter
                )
    return out_arr


def nms_keep(double[:, ::1] boxes, cnp.int64_t[::1] order, double iou_threshold,
             Py_ssize_t max_keep=0):
    """Greedy suppression walking ``order``; keeps boxes whose IoU with every
    previously kept box is <= iou_threshold. Returns kept indices in walk
    order; a positive ``max_keep`` stops after that many boxes.
    """
    cdef Py_ssize_t n = boxes.shape[0]
    cdef Py_ssize_t i, j, ii, jj, nkept = 0
    suppressed_arr = np.zeros(n, dtype=np.uint8)
    kept_arr = np.empty(n, dtype=np.int64)
    cdef cnp.uint8_t[::1] suppressed = suppressed_arr
    cdef cnp.int64_t[::1] kept = kept_arr
    cdef double x0, y0, x1, y1, area_i, ix, iy, inter, iou
    with nogil:
        for i in range(n):
            ii = order[i]
            if suppressed[ii]:
                continue
            kept[nkept] = ii
            nkept += 1
            if max_keep > 0 and nkept >= max_keep:
                break
            x0 = boxes[ii, 0]; y0 = boxes[ii, 1]; x1 = boxes[ii, 2]; y1 = boxes[ii, 3]
            area_i = (x1 - x0) * (y1 - y0)
            for j in range(i + 1, n):
                jj = order[j]
                if suppressed[jj]:
                    continue
                ix = fmin(x1, boxes[jj, 2]) - fmax(x0, boxes[jj, 0])
                if ix <= 0:
                    continue
                iy = fmin(y1, boxes[jj, 3]) - fmax(y0, boxes[jj, 1])
                if iy <= 0:
                    continue
                inter = ix * iy
                iou = inter / (
                    area_i
                    + (boxes[jj, 2] - boxes[jj, 0]) * (boxes[jj, 3] - boxes[jj, 1])
                    - inter
                )
                if iou > iou_threshold:
                    suppressed[jj] = 1
    return kept_arr[:nkept].copy()


def window_edge_scores(double[:, ::1] integral, cnp.int64_t[:, ::1] windows, int band):
    """Score windows on a summed-area table of an edge-magnitude map.

    For each window (x0, y0, x1, y1): score = (inside - border) / perimeter,
    where inside is the edge mass at least ``band`` px from every window side
    and border is the remaining mass inside the window.
    """
    cdef Py_ssize_t k = windows.shape[0]
    cdef Py_ssize_t i
    out_arr = np.zeros(k, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef cnp.int64_t x0, y0, x1, y1, bx0, by0, bx1, by1
    cdef double total, inner, perim
    with nogil:
        for i in range(k):
            x0 = windows[i, 0]; y0 = windows[i, 1]
            x1 = windows[i, 2]; y1 = windows[i, 3]
            total = (integral[y1, x1] - integral[y0, x1]
                     - integral[y1, x0] + integral[y0, x0])
            bx0 = x0 + band; by0 = y0 + band
            bx1 = x1 - band; by1 = y1 - band
            if bx1 > bx0 and by1 > by0:
                inner = (integral[by1, bx1] - integral[by0, bx1]
                         - integral[by1, bx0] + integral[by0, bx0])
            else:
                inner = 0.0
            perim = 2.0 * ((x1 - x0) + (y1 - y0))
            out[i] = (2.0 * inner - total) / perim
    return out_arr
