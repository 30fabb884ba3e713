"""Connected components where two active cells connect when within Euclidean distance R."""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


@lru_cache(maxsize=64)
def half_disk_offsets(radius: float) -> tuple[tuple[int, int], ...]:
    """Offsets ``(dy, dx)`` with ``0 < dy^2 + dx^2 <= radius^2``, one of each +/- pair."""
    r = int(math.floor(radius))
    out = []
    for dy in range(0, r + 1):
        for dx in range(-r, r + 1):
            if dy == 0 and dx <= 0:
                continue
            if dy * dy + dx * dx <= radius * radius:
                out.append((dy, dx))
    return tuple(out)


def _seed_labels(mask: np.ndarray, radius: float) -> tuple[np.ndarray, int]:
    if radius >= math.sqrt(2):
        structure = np.ones((3, 3), dtype=bool)
    elif radius >= 1:
        structure = ndimage.generate_binary_structure(2, 1)
    else:
        labels = np.zeros(mask.shape, dtype=np.int64)
        labels[mask] = np.arange(1, int(mask.sum()) + 1)
        return labels, int(mask.sum())
    labels, n = ndimage.label(mask, structure=structure)
    return labels.astype(np.int64), int(n)


def label_components(mask: np.ndarray, radius: float, periodic: bool = True) -> tuple[np.ndarray, int]:
    """Label the components of ``mask`` under radius-``radius`` adjacency.

    With ``periodic`` the grid wraps around in both axes (torus); otherwise
    opposite borders are not adjacent. Returns ``(labels, n)`` with labels in
    ``1..n`` for active cells and 0 elsewhere; labels are numbered in raster
    order of each component's first cell.
    """
    mask = np.asarray(mask, dtype=bool)
    labels, n = _seed_labels(mask, radius)
    if n <= 1:
        return labels, n
    H, W = mask.shape
    src, dst = [], []
    for dy, dx in half_disk_offsets(float(radius)):
        if periodic:
            other = np.roll(labels, (-dy, -dx), axis=(0, 1))
            a, b = labels, other
        else:
            if dy >= H or abs(dx) >= W:
                continue
            ys, ye = 0, H - dy
            xs, xe = max(0, -dx), min(W, W - dx)
            a = labels[ys:ye, xs:xe]
            b = labels[ys + dy:ye + dy, xs + dx:xe + dx]
        sel = (a > 0) & (b > 0) & (a != b)
        if sel.any():
            src.append(a[sel])
            dst.append(b[sel])
    if not src:
        return labels, n
    s = np.concatenate(src) - 1
    d = np.concatenate(dst) - 1
    graph = coo_matrix((np.ones(len(s), dtype=np.int8), (s, d)), shape=(n, n))
    ncomp, comp = connected_components(graph, directed=False)
    # renumber so components appear in raster order of their first cell
    order = {}
    for c in comp:
        if c not in order:
            order[c] = len(order) + 1
    remap = np.zeros(n + 1, dtype=np.int64)
    remap[1:] = [order[c] for c in comp]
    return remap[labels], ncomp
