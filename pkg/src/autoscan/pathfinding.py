"""Grid search on the 8-connected navigation mask."""
from __future__ import annotations

import heapq
import math

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

SQRT2 = math.sqrt(2.0)
NEIGHBOURS = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0),
              (1, 1, 1), (1, -1, 1), (-1, 1, 1), (-1, -1, 1)]


class Unreachable(Exception):
    pass


def _octile(a, b) -> float:
    dx = abs(a[0] - b[0])
    dy = abs(a[1] - b[1])
    return (max(dx, dy) - min(dx, dy)) + SQRT2 * min(dx, dy)


def astar_path(mask: np.ndarray, a, b, allow_start_blocked: bool = False):
    """Shortest 8-connected path from ``a`` to ``b`` as ``(cells, straight, diagonal)``.

    Costs are tracked as integer (straight, diagonal) step counts so that
    the final length ``straight + sqrt(2) * diagonal`` is reproducible
    bit for bit regardless of expansion order. Returns None if no path.
    """
    a, b = tuple(a), tuple(b)
    w, h = mask.shape
    if not (0 <= b[0] < w and 0 <= b[1] < h) or not mask[b]:
        return None
    if not (0 <= a[0] < w and 0 <= a[1] < h):
        return None
    if not mask[a] and not allow_start_blocked:
        return None
    if a == b:
        return [a], 0, 0

    best = {a: (0, 0)}
    parent = {}
    tie = 0
    open_heap = [(_octile(a, b), 0.0, tie, a)]
    while open_heap:
        _f, g, _t, cur = heapq.heappop(open_heap)
        ns, nd = best[cur]
        if g > ns + SQRT2 * nd:
            continue
        if cur == b:
            path = [cur]
            while cur in parent:
                cur = parent[cur]
                path.append(cur)
            path.reverse()
            return path, ns, nd
        for di, dj, diag in NEIGHBOURS:
            nxt = (cur[0] + di, cur[1] + dj)
            if not (0 <= nxt[0] < w and 0 <= nxt[1] < h) or not mask[nxt]:
                continue
            cand = (ns, nd + 1) if diag else (ns + 1, nd)
            gc = cand[0] + SQRT2 * cand[1]
            old = best.get(nxt)
            if old is None or gc < old[0] + SQRT2 * old[1]:
                best[nxt] = cand
                parent[nxt] = cur
                tie += 1
                heapq.heappush(open_heap, (gc + _octile(nxt, b), gc, tie, nxt))
    return None


def astar_distance(mask: np.ndarray, a, b, resolution: float = 1.0) -> float:
    """Path length in meters between two cells, ``inf`` when disconnected."""
    found = astar_path(mask, a, b)
    if found is None:
        return math.inf
    _path, ns, nd = found
    return (ns + SQRT2 * nd) * resolution


def path_length(path, resolution: float) -> float:
    ns = nd = 0
    for (i0, j0), (i1, j1) in zip(path, path[1:]):
        if i0 != i1 and j0 != j1:
            nd += 1
        else:
            ns += 1
    return (ns + SQRT2 * nd) * resolution


def grid_graph(mask: np.ndarray, resolution: float) -> sparse.csr_matrix:
    """Sparse adjacency of navigable cells (flat index i * H + j)."""
    w, h = mask.shape
    idx = np.arange(w * h).reshape(w, h)
    rows, cols, vals = [], [], []
    for di, dj, diag in NEIGHBOURS:
        si = slice(max(0, -di), w - max(0, di))
        sj = slice(max(0, -dj), h - max(0, dj))
        ti = slice(max(0, di), w - max(0, -di))
        tj = slice(max(0, dj), h - max(0, -dj))
        ok = mask[si, sj] & mask[ti, tj]
        s = idx[si, sj][ok]
        rows.append(s)
        cols.append(idx[ti, tj][ok])
        vals.append(np.full(len(s), (SQRT2 if diag else 1.0) * resolution))
    return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(w * h, w * h))


def distance_fields(mask: np.ndarray, resolution: float, sources, min_only: bool = False,
                    graph=None) -> np.ndarray:
    """Dijkstra distance fields from each source cell, shaped (n, W, H).

    Sources that are not navigable get an all-inf field. With ``min_only``
    returns a single (W, H) field of the distance to the nearest source.
    """
    w, h = mask.shape
    sources = [tuple(s) for s in sources]
    graph = grid_graph(mask, resolution) if graph is None else graph
    good = [k for k, s in enumerate(sources) if 0 <= s[0] < w and 0 <= s[1] < h and mask[s]]
    flat = [sources[k][0] * h + sources[k][1] for k in good]
    if min_only:
        if not flat:
            return np.full((w, h), np.inf)
        d = csgraph.dijkstra(graph, directed=True, indices=flat, min_only=True)
        return d.reshape(w, h)
    out = np.full((len(sources), w, h), np.inf)
    if flat:
        d = csgraph.dijkstra(graph, directed=True, indices=flat)
        out[good] = d.reshape(len(flat), w, h)
    return out


def connected_to(mask: np.ndarray, cells) -> np.ndarray:
    """Cells of ``mask`` in the same 8-connected component as any of ``cells``."""
    lab, _n = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    keep = sorted({int(lab[tuple(c)]) for c in cells
                   if 0 <= c[0] < mask.shape[0] and 0 <= c[1] < mask.shape[1] and lab[tuple(c)] > 0})
    return np.isin(lab, keep) if keep else np.zeros_like(mask, dtype=bool)


class NavIndex:
    """Nearest-navigable-cell queries for a fixed navigation mask."""

    def __init__(self, mask: np.ndarray, resolution: float):
        self.mask = mask
        self.resolution = resolution
        self.cells = np.argwhere(mask)
        self.centers = (self.cells + 0.5) * resolution
        self.tree = cKDTree(self.centers) if len(self.cells) else None

    def nearest(self, x, y):
        """(cell, distance) of the nearest navigable cell centre, or (None, inf)."""
        if self.tree is None:
            return None, math.inf
        _d, k = self.tree.query([x, y])
        c = self.centers[k]
        return (int(self.cells[k][0]), int(self.cells[k][1])), math.hypot(x - c[0], y - c[1])


def escape_path(free: np.ndarray, nav: np.ndarray, start):
    """BFS through free cells from ``start`` to the closest navigable cell.

    Used when a newly seen obstacle inflates over a robot's current cell.
    """
    start = tuple(start)
    if nav[start]:
        return [start]
    w, h = free.shape
    prev = {start: None}
    frontier = [start]
    while frontier:
        nxt_frontier = []
        for cur in frontier:
            for di, dj, _ in NEIGHBOURS:
                n = (cur[0] + di, cur[1] + dj)
                if n in prev or not (0 <= n[0] < w and 0 <= n[1] < h) or not free[n]:
                    continue
                prev[n] = cur
                if nav[n]:
                    path = [n]
                    while prev[path[-1]] is not None:
                        path.append(prev[path[-1]])
                    return path[::-1]
                nxt_frontier.append(n)
        frontier = nxt_frontier
    return None
