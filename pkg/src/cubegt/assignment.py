"""Bipartite matching: optimal Hungarian assignment and the greedy
score-ordered matching used for detection evaluation.
"""

from __future__ import annotations

import numpy as np


def hungarian(cost):
    """Minimum-cost assignment of min(n, m) pairs for an n x m cost matrix.

    O(n^2 m) potentials implementation. Returns (row, col) pairs sorted by
    row. Raises ValueError on non-finite costs.
    """
    matrix = np.asarray(cost, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"cost must be 2D, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("cost matrix contains non-finite values")
    n, m = matrix.shape
    if n == 0 or m == 0:
        return []
    if n > m:
        return sorted((r, c) for c, r in hungarian(matrix.T))

    # Potentials + shortest augmenting paths, 1-based working arrays.
    a = matrix
    inf = np.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    match = [0] * (m + 1)  # match[j] = row assigned to column j
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0, delta, j1 = match[j0], inf, 0
            for j in range(1, m + 1):
                if used[j]:
                    continue
                cur = a[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    return sorted((match[j] - 1, j - 1) for j in range(1, m + 1) if match[j])


def greedy_match(detections, gts, iou_fn, threshold):
    """COCO-style greedy matching of score-sorted detections to ground truth.

    ``detections`` must already be sorted by descending score (ties broken
    by ascending detection id); each detection takes the highest-IoU
    still-unmatched ground truth with IoU >= threshold. Returns
    (det_to_gt, gt_matched): det_to_gt[i] is the matched gt index or None
    (a false positive), gt_matched[j] tells whether gt j was matched.
    """
    gt_matched = [False] * len(gts)
    det_to_gt = []
    for det in detections:
        best_j, best_iou = None, -1.0
        for j, gt in enumerate(gts):
            if gt_matched[j]:
                continue
            value = iou_fn(det, gt)
            if value >= threshold and value > best_iou:
                best_j, best_iou = j, value
        if best_j is not None:
            gt_matched[best_j] = True
        det_to_gt.append(best_j)
    return det_to_gt, gt_matched
