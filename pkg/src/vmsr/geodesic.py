"""Geodesic (shortest obstacle-avoiding path) distance fields over free cells.

8-connected grid metric with diagonal cost cell_size * sqrt(2). The sparse
graph per map is built once and cached by map identity; the Dijkstra solve
is delegated to scipy's compiled implementation.
"""

from __future__ import annotations

import math
import weakref
from typing import Iterable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .maze import MazeMap

_SQRT2 = math.sqrt(2.0)

_GRAPH_CACHE: "weakref.WeakKeyDictionary[MazeMap, tuple]" = weakref.WeakKeyDictionary()


def _grid_graph(map_: MazeMap):
    cached = _GRAPH_CACHE.get(map_)
    if cached is not None:
        return cached
    occ = map_.occupancy
    h, w = occ.shape
    free = ~occ
    node_id = np.full((h, w), -1, dtype=np.int64)
    rows, cols = np.nonzero(free)
    node_id[rows, cols] = np.arange(len(rows))
    cs = map_.cell_size

    src_list, dst_list, w_list = [], [], []
    # enumerate each undirected edge once (east, south, and the two diagonals)
    offsets = ((0, 1, cs), (1, 0, cs), (1, 1, cs * _SQRT2), (1, -1, cs * _SQRT2))
    for dr, dc, weight in offsets:
        r0 = max(0, -dr)
        r1 = h - max(0, dr)
        c0 = max(0, -dc)
        c1 = w - max(0, dc)
        a = free[r0:r1, c0:c1]
        b = free[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
        ok = a & b
        rr, cc = np.nonzero(ok)
        rr = rr + r0
        cc = cc + c0
        src_list.append(node_id[rr, cc])
        dst_list.append(node_id[rr + dr, cc + dc])
        w_list.append(np.full(len(rr), weight))
    src = np.concatenate(src_list)
    dst = np.concatenate(dst_list)
    weights = np.concatenate(w_list)
    n = len(rows)
    csr = coo_matrix((weights, (src, dst)), shape=(n, n)).tocsr()
    entry = (csr, node_id, rows, cols)
    _GRAPH_CACHE[map_] = entry
    return entry


def geodesic_field(map_: MazeMap, sources: Iterable[tuple[int, int]]) -> np.ndarray:
    """Multi-source shortest-path distances in meters, (H, W) float64.

    Obstacle cells and cells unreachable from every source are +inf.
    """
    src = list(sources)
    if not src:
        raise ValueError("geodesic_field needs at least one source cell")
    csr, node_id, rows, cols = _grid_graph(map_)
    idx = []
    for r, c in src:
        if map_.occupancy[r, c]:
            raise ValueError(f"source cell ({r}, {c}) is not free")
        idx.append(int(node_id[r, c]))
    dist = dijkstra(csr, directed=False, indices=np.asarray(idx, dtype=np.int64),
                    min_only=True)
    field = np.full((map_.height, map_.width), np.inf)
    field[rows, cols] = dist
    return field


def field_at(field: np.ndarray, map_: MazeMap, x: float, y: float) -> float:
    cs = map_.cell_size
    r, c = int(y // cs), int(x // cs)
    if not (0 <= r < map_.height and 0 <= c < map_.width):
        return math.inf
    return float(field[r, c])
