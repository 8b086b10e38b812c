"""Frontier extraction and greedy exploration viewpoint selection."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import angle_diff, segments_blocked
from .pathfinding import NavIndex, distance_fields
from .scene import FREE, UNKNOWN, OccupancyGrid
from .tasks import ExplorationTask, wrap_angle


@dataclass
class Frontier:
    cell: tuple[int, int]
    covered: bool = False


@dataclass
class CandidateViewpoint:
    cell: tuple[int, int]
    target_frontier: Frontier
    validity: float
    d_r: float
    d_f: float


class CandidateSet:
    """Column storage for candidate viewpoints (one row per cell/frontier pair)."""

    def __init__(self, frontiers, ci, cj, fidx, d_r, d_f, validity):
        self.frontiers = frontiers
        self.ci, self.cj, self.fidx = ci, cj, fidx
        self.d_r, self.d_f, self.validity = d_r, d_f, validity

    def __len__(self):
        return len(self.ci)

    def __getitem__(self, k) -> CandidateViewpoint:
        return CandidateViewpoint((int(self.ci[k]), int(self.cj[k])), self.frontiers[int(self.fidx[k])],
                                  float(self.validity[k]), float(self.d_r[k]), float(self.d_f[k]))

    def __iter__(self):
        return (self[k] for k in range(len(self)))


def raw_frontier_cells(cells: np.ndarray) -> np.ndarray:
    """Free cells with an Unknown 4-neighbour, in (i, j) order."""
    unknown = cells == UNKNOWN
    near = np.zeros_like(unknown)
    near[1:, :] |= unknown[:-1, :]
    near[:-1, :] |= unknown[1:, :]
    near[:, 1:] |= unknown[:, :-1]
    near[:, :-1] |= unknown[:, 1:]
    return np.argwhere((cells == FREE) & near)


def extract_frontiers(grid: OccupancyGrid, f_max: int = 40, spacing: float = 2.0,
                      exclude=None) -> list[Frontier]:
    """Frontier cells thinned by farthest-point sampling.

    Sampling starts at the lowest (i, j) frontier and stops after ``f_max``
    points or when no remaining cell is at least ``spacing`` cells from
    every chosen one.
    """
    raw = raw_frontier_cells(grid.cells)
    if exclude:
        keep = np.array([(int(i), int(j)) not in exclude for i, j in raw], dtype=bool)
        raw = raw[keep] if len(raw) else raw
    if len(raw) == 0 or f_max <= 0:
        return []
    pts = raw.astype(float)
    chosen = [0]
    mind = np.hypot(*(pts - pts[0]).T)
    while len(chosen) < f_max:
        k = int(np.argmax(mind))
        if mind[k] < spacing:
            break
        chosen.append(k)
        mind = np.minimum(mind, np.hypot(*(pts - pts[k]).T))
    return [Frontier((int(raw[k][0]), int(raw[k][1]))) for k in chosen]


def obstacle_distance(grid: OccupancyGrid) -> np.ndarray:
    """Meters from each cell centre to the nearest non-free cell (map edge counts)."""
    free = np.pad(grid.cells == FREE, 1, constant_values=False)
    return ndimage.distance_transform_edt(free)[1:-1, 1:-1] * grid.resolution


def robot_cells(robots, nav_index: NavIndex, grid: OccupancyGrid):
    out = []
    for r in robots:
        c = grid.cell_of(r.x, r.y)
        if not (grid.in_bounds(c) and nav_index.mask[c]):
            c, _ = nav_index.nearest(r.x, r.y)
        if c is not None:
            out.append(c)
    return out


def generate_candidates(grid: OccupancyGrid, frontiers: list[Frontier], robots, nav_mask: np.ndarray,
                        d_min: float = 1.0, d_max: float = 4.0,
                        validity_sign: str = "obstacle_minus_robot", d_r_field=None) -> CandidateSet:
    """Navigable cells seeing a frontier from a distance in [d_min, d_max].

    ``validity`` is ``d_f - d_r`` (``d_r - d_f`` with ``validity_sign="robot_minus_obstacle"``)
    where ``d_r`` is the travel distance to the nearest robot and ``d_f`` the
    distance to the nearest non-free cell.
    """
    res = grid.resolution
    empty = np.zeros(0, dtype=np.int64), np.zeros(0)
    if not frontiers:
        return CandidateSet(frontiers, empty[0], empty[0], empty[0], empty[1], empty[1], empty[1])
    if d_r_field is None:
        nav_index = NavIndex(nav_mask, res)
        d_r_field = distance_fields(nav_mask, res, robot_cells(robots, nav_index, grid), min_only=True)
    d_f_field = obstacle_distance(grid)
    blocking = grid.cells != FREE

    pool = np.argwhere(nav_mask & np.isfinite(d_r_field))
    centers = (pool + 0.5) * res
    out = {k: [] for k in ("ci", "cj", "f")}
    for k, f in enumerate(frontiers):
        fx, fy = (f.cell[0] + 0.5) * res, (f.cell[1] + 0.5) * res
        d = np.hypot(centers[:, 0] - fx, centers[:, 1] - fy)
        sel = np.flatnonzero((d >= d_min - 1e-9) & (d <= d_max + 1e-9))
        if len(sel) == 0:
            continue
        blocked = segments_blocked(centers[sel, 0], centers[sel, 1], fx, fy, res, blocking)
        sel = sel[~blocked]
        out["ci"].append(pool[sel, 0])
        out["cj"].append(pool[sel, 1])
        out["f"].append(np.full(len(sel), k))
    if not out["ci"]:
        return CandidateSet(frontiers, empty[0], empty[0], empty[0], empty[1], empty[1], empty[1])
    ci = np.concatenate(out["ci"])
    cj = np.concatenate(out["cj"])
    fidx = np.concatenate(out["f"])
    d_r = d_r_field[ci, cj]
    d_f = d_f_field[ci, cj]
    validity = d_r - d_f if validity_sign == "robot_minus_obstacle" else d_f - d_r
    return CandidateSet(frontiers, ci, cj, fidx, d_r, d_f, validity)


def frontiers_in_view(grid: OccupancyGrid, frontiers, cell, theta: float, fov: float, d_max: float):
    """Indices of frontiers inside the vision cone of a viewpoint at ``cell``."""
    res = grid.resolution
    if not frontiers:
        return np.zeros(0, dtype=np.int64)
    vx, vy = (cell[0] + 0.5) * res, (cell[1] + 0.5) * res
    fc = (np.array([f.cell for f in frontiers], dtype=float) + 0.5) * res
    d = np.hypot(fc[:, 0] - vx, fc[:, 1] - vy)
    ang = np.arctan2(fc[:, 1] - vy, fc[:, 0] - vx)
    inside = (d <= d_max + 1e-9) & ((np.abs(angle_diff(ang, theta)) <= fov / 2 + 1e-12) | (d == 0))
    idx = np.flatnonzero(inside)
    if len(idx):
        blocked = segments_blocked(vx, vy, fc[idx, 0], fc[idx, 1], res, grid.cells != FREE)
        idx = idx[~blocked]
    return idx


def select_exploration_viewpoints(candidates: CandidateSet, frontiers, k_max: int, explorer_fov: float,
                                  grid: OccupancyGrid, d_max: float = 4.0, return_coverage: bool = False):
    """Greedy selection with each frontier covered at most once.

    Frontiers already flagged ``covered`` (e.g. by queued tasks) are never
    targeted. The loop picks the best remaining candidate, marks every
    frontier in its Explorer vision cone as covered and drops all candidates
    aiming at covered frontiers or sitting on an already chosen cell.
    """
    res = grid.resolution
    n = len(candidates)
    tasks, coverage = [], []
    if n == 0 or k_max < 1:
        return (tasks, coverage) if return_coverage else tasks
    covered = np.array([f.covered for f in frontiers], dtype=bool)
    alive = np.isfinite(candidates.validity) & ~covered[candidates.fidx]
    order = np.lexsort((candidates.fidx, candidates.cj, candidates.ci, -candidates.validity))
    used_cells = set()
    for k in order:
        if len(tasks) >= k_max:
            break
        if not alive[k]:
            continue
        cell = (int(candidates.ci[k]), int(candidates.cj[k]))
        f = frontiers[int(candidates.fidx[k])]
        vx, vy = (cell[0] + 0.5) * res, (cell[1] + 0.5) * res
        fx, fy = (f.cell[0] + 0.5) * res, (f.cell[1] + 0.5) * res
        theta = wrap_angle(math.atan2(fy - vy, fx - vx))
        seen = frontiers_in_view(grid, frontiers, cell, theta, explorer_fov, d_max)
        seen = np.union1d(seen, [int(candidates.fidx[k])]).astype(np.int64)
        newly = seen[~covered[seen]]
        covered[seen] = True
        for s in seen:
            frontiers[s].covered = True
        used_cells.add(cell)
        alive &= ~covered[candidates.fidx]
        alive &= ~((candidates.ci == cell[0]) & (candidates.cj == cell[1]))
        tasks.append(ExplorationTask(vx, vy, theta, cell=cell, frontier=f.cell))
        coverage.append([frontiers[s].cell for s in newly])
    return (tasks, coverage) if return_coverage else tasks


def exploration_round(grid: OccupancyGrid, robots, nav_mask, config, exclude=None, pending=()):
    """Frontiers -> candidates -> selected tasks, with queued tasks pre-covering frontiers."""
    frontiers = extract_frontiers(grid, config.frontier_max, config.frontier_spacing, exclude)
    if not frontiers:
        return [], frontiers
    fov = math.radians(config.explorer_fov_deg)
    for t in pending:
        for s in frontiers_in_view(grid, frontiers, t.cell, t.theta, fov, config.view_dmax):
            frontiers[s].covered = True
    cands = generate_candidates(grid, frontiers, robots, nav_mask, config.view_dmin, config.view_dmax,
                                config.validity_sign)
    tasks = select_exploration_viewpoints(cands, frontiers, config.k_max, fov, grid, config.view_dmax)
    return tasks, frontiers
