"""Compiled k-NN selection; plain arithmetic so ties resolve exactly."""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def knn_select(points, k, offset, out):
    """Write each row's k nearest other points (by distance, then index) into ``out``."""
    n = points.shape[0]
    best_d = np.empty(k)
    best_i = np.empty(k, dtype=np.int64)
    for i in range(n):
        filled = 0
        xi, yi, zi = points[i, 0], points[i, 1], points[i, 2]
        for j in range(n):
            if j == i:
                continue
            dx = points[j, 0] - xi
            dy = points[j, 1] - yi
            dz = points[j, 2] - zi
            dj = dx * dx + dy * dy + dz * dz
            # j ascends, so an equal distance never displaces an earlier index
            if filled == k and dj >= best_d[k - 1]:
                continue
            pos = filled if filled < k else k - 1
            while pos > 0 and best_d[pos - 1] > dj:
                if pos < k:
                    best_d[pos] = best_d[pos - 1]
                    best_i[pos] = best_i[pos - 1]
                pos -= 1
            if filled < k:
                filled += 1
            best_d[pos] = dj
            best_i[pos] = j
        for q in range(k):
            out[i, q] = best_i[q] + offset
