"""Shared builders and brute-force oracles for the tests."""
import heapq
import math

import numpy as np

from autoscan.scene import parse_scene

SQRT2 = math.sqrt(2.0)


def border(w, h):
    return [[0, 0, w - 1, 0], [0, h - 1, w - 1, h - 1], [0, 0, 0, h - 1], [w - 1, 0, w - 1, h - 1]]


def make_scene(w=30, h=30, res=0.1, walls=None, objects=None, robots=((1.55, 1.55, 0.0),), closed=True):
    """Small synthetic scene; ``objects`` are generator dicts with an ``id``."""
    doc = {"resolution": res, "size": [w, h],
           "walls": (border(w, h) if closed else []) + list(walls or []),
           "objects": [{"id": o.pop("id"), "class": o.pop("class", "thing"), "generator": o}
                       for o in [dict(x) for x in (objects or [])]],
           "robots": [list(r) for r in robots]}
    return parse_scene(doc, name="synthetic")


def box(oid, cx, cy, sx=0.4, sy=0.4, sz=0.6, samples=400):
    return {"id": oid, "type": "box", "center": [cx, cy], "size": [sx, sy, sz], "samples": samples}


def seg_hits_box(ax, ay, bx, by, x0, y0, x1, y1, eps=1e-12):
    """Liang-Barsky: does segment A->B cross the open box with positive length?"""
    dx, dy = bx - ax, by - ay
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, ax - x0), (dx, x1 - ax), (-dy, ay - y0), (dy, y1 - ay)):
        if p == 0:
            if q <= 0:
                return False
            continue
        r = q / p
        if p < 0:
            t0 = max(t0, r)
        else:
            t1 = min(t1, r)
    return t1 - t0 > eps


def los_blocked(ax, ay, bx, by, blocking, res, ignore=None, eps=1e-12):
    """Brute force over every blocking cell (plus out-of-map), Liang-Barsky per box."""
    w, h = blocking.shape
    if not (0 <= bx < w * res and 0 <= by < h * res and 0 <= ax < w * res and 0 <= ay < h * res):
        return True
    mask = blocking if ignore is None else blocking & ~ignore
    ij = np.argwhere(mask).astype(float)
    if len(ij) == 0:
        return False
    ax, ay, bx, by = ax / res, ay / res, bx / res, by / res
    dx, dy = bx - ax, by - ay
    t0 = np.zeros(len(ij))
    t1 = np.ones(len(ij))
    hit = np.ones(len(ij), dtype=bool)
    for p, q in ((-dx, ax - ij[:, 0]), (dx, ij[:, 0] + 1 - ax), (-dy, ay - ij[:, 1]), (dy, ij[:, 1] + 1 - ay)):
        if p == 0:
            hit &= q > 0
            continue
        r = q / p
        if p < 0:
            t0 = np.maximum(t0, r)
        else:
            t1 = np.minimum(t1, r)
    return bool((hit & (t1 - t0 > eps)).any())


def random_mask(rng, shape=(30, 30), p=0.25):
    return rng.random(shape) > p


def angdiff(a, b):
    d = (a - b + math.pi) % (2 * math.pi) - math.pi
    return abs(d)


def generation_round(seed, k_max=6):
    """One exploration round on a random partially explored map.

    Returns (grid, frontiers, tasks, coverage, config).
    """
    from autoscan.config import RunConfig
    from autoscan.exploration import extract_frontiers, generate_candidates, select_exploration_viewpoints
    from autoscan.scene import ObservationRecord, OccupancyGrid, default_profiles, initial_turnaround
    from autoscan.tasks import Mode, RobotState

    rng = np.random.default_rng(seed)
    w, h = int(rng.integers(25, 41)), int(rng.integers(25, 41))
    walls = []
    for _ in range(int(rng.integers(2, 9))):
        i, j = int(rng.integers(2, w - 3)), int(rng.integers(2, h - 3))
        walls.append([i, j, min(i + int(rng.integers(0, 8)), w - 2), min(j + int(rng.integers(0, 3)), h - 2)])
    occ = set()
    for i0, j0, i1, j1 in walls:
        occ |= {(i, j) for i in range(i0, i1 + 1) for j in range(j0, j1 + 1)}
    free = [(i, j) for i in range(1, w - 1) for j in range(1, h - 1) if (i, j) not in occ]
    starts = [free[k] for k in rng.permutation(len(free))[:int(rng.integers(1, 4))]]
    robots_xy = [((i + 0.5) * 0.1, (j + 0.5) * 0.1, float(rng.uniform(0, 6.28))) for i, j in starts]
    scene = make_scene(w, h, walls=walls, robots=robots_xy)
    cfg = RunConfig(k_max=k_max)
    prof = default_profiles(cfg)[Mode.EXPLORER]
    grid = OccupancyGrid.for_scene(scene)
    rec = ObservationRecord(scene)
    robots = [RobotState(k, x, y, th) for k, (x, y, th) in enumerate(robots_xy)]
    for r in robots:
        # a partial turnaround leaves plenty of unknown space
        initial_turnaround(scene, grid, rec, r, prof, headings=int(rng.integers(1, 4)))
    nav = grid.navigation_mask(cfg.robot_radius)
    frontiers = extract_frontiers(grid, cfg.frontier_max, cfg.frontier_spacing)
    cands = generate_candidates(grid, frontiers, robots, nav, cfg.view_dmin, cfg.view_dmax)
    fov = math.radians(cfg.explorer_fov_deg)
    tasks, coverage = select_exploration_viewpoints(cands, frontiers, cfg.k_max, fov, grid, cfg.view_dmax,
                                                    return_coverage=True)
    return grid, frontiers, tasks, coverage, cfg


def cone_oracle(grid, frontier_cells, vx, vy, theta, fov, d_max):
    """Frontier cells in a viewpoint's 2D vision cone, recomputed from scratch."""
    from autoscan.scene import FREE
    res = grid.resolution
    out = set()
    for c in frontier_cells:
        fx, fy = (c[0] + 0.5) * res, (c[1] + 0.5) * res
        d = math.hypot(fx - vx, fy - vy)
        if d > d_max + 1e-9:
            continue
        if d > 0 and angdiff(math.atan2(fy - vy, fx - vx), theta) > fov / 2 + 1e-12:
            continue
        if not los_blocked(vx, vy, fx, fy, grid.cells != FREE, res):
            out.add(tuple(c))
    return out


def audit_one_cover(grid, frontiers, tasks, coverage, cfg):
    """Every target is covered by its own task only; every frontier at most once."""
    cells = [f.cell for f in frontiers]
    fov = math.radians(cfg.explorer_fov_deg)
    seen = set()
    for t, cov in zip(tasks, coverage):
        target = tuple(t.frontier)
        if target in seen:
            return False
        mine = cone_oracle(grid, cells, t.x, t.y, t.theta, fov, cfg.view_dmax) | {target}
        if set(map(tuple, cov)) != mine - seen or len(cov) != len(set(map(tuple, cov))):
            return False
        seen |= mine
    return True


def dijkstra_counts(mask, a):
    """Plain 8-connected Dijkstra that keeps (straight, diagonal) step counts."""
    w, h = mask.shape
    best = {a: (0, 0)}
    heap = [(0.0, a)]
    done = set()
    while heap:
        d, cur = heapq.heappop(heap)
        if cur in done:
            continue
        done.add(cur)
        ns, nd = best[cur]
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == dj == 0:
                    continue
                n = (cur[0] + di, cur[1] + dj)
                if not (0 <= n[0] < w and 0 <= n[1] < h) or not mask[n]:
                    continue
                c = (ns, nd + 1) if di and dj else (ns + 1, nd)
                v = c[0] + SQRT2 * c[1]
                if n not in best or v < best[n][0] + SQRT2 * best[n][1]:
                    best[n] = c
                    heapq.heappush(heap, (v, n))
    return best
