"""Pure-NumPy implementations of the hot kernels.

Same contracts as the compiled module; used when the extension is not
built or when ``PROPKIT_PURE_PYTHON=1`` is set.
"""

import numpy as np


def cross_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two box arrays of shape (N, 4) and (M, 4)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    ix = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    iy = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(ix, 0, None) * np.clip(iy, 0, None)
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=inter > 0)
    return out


def nms_keep(
    boxes: np.ndarray, order: np.ndarray, iou_threshold: float, max_keep: int = 0
) -> np.ndarray:
    """Greedy suppression walking ``order``; keeps boxes whose IoU with every
    previously kept box is <= iou_threshold. Returns kept indices in walk
    order; a positive ``max_keep`` stops after that many boxes.
    """
    boxes = np.asarray(boxes, dtype=np.float64)
    order = np.asarray(order, dtype=np.int64)
    suppressed = np.zeros(boxes.shape[0], dtype=bool)
    kept: list[int] = []
    for pos, ii in enumerate(order):
        if suppressed[ii]:
            continue
        kept.append(ii)
        if max_keep > 0 and len(kept) >= max_keep:
            break
        rest = order[pos + 1:]
        rest = rest[~suppressed[rest]]
        if rest.size == 0:
            continue
        ious = cross_iou(boxes[ii][None, :], boxes[rest])[0]
        suppressed[rest[ious > iou_threshold]] = True
    return np.asarray(kept, dtype=np.int64)


def window_edge_scores(integral: np.ndarray, windows: np.ndarray, band: int) -> np.ndarray:
    """Score windows on a summed-area table of an edge-magnitude map.

    For each window (x0, y0, x1, y1): score = (inside - border) / perimeter,
    where inside is the edge mass at least ``band`` px from every window side
    and border is the remaining mass inside the window.
    """
    integral = np.asarray(integral, dtype=np.float64)
    w = np.asarray(windows, dtype=np.int64)
    x0, y0, x1, y1 = w[:, 0], w[:, 1], w[:, 2], w[:, 3]

    def rect_sum(rx0, ry0, rx1, ry1):
        return (integral[ry1, rx1] - integral[ry0, rx1]
                - integral[ry1, rx0] + integral[ry0, rx0])

    total = rect_sum(x0, y0, x1, y1)
    bx0, by0 = x0 + band, y0 + band
    bx1, by1 = x1 - band, y1 - band
    valid = (bx1 > bx0) & (by1 > by0)
    inner = np.zeros_like(total)
    if np.any(valid):
        inner[valid] = rect_sum(bx0[valid], by0[valid], bx1[valid], by1[valid])
    perim = 2.0 * ((x1 - x0) + (y1 - y0))
    return (2.0 * inner - total) / perim
