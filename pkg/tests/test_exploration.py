import math

import numpy as np
import pytest

from autoscan.exploration import (CandidateSet, Frontier, extract_frontiers, generate_candidates,
                                  obstacle_distance, raw_frontier_cells, select_exploration_viewpoints)
from autoscan.pathfinding import distance_fields
from autoscan.scene import FREE, OCCUPIED, UNKNOWN, OccupancyGrid
from autoscan.tasks import RobotState
from helpers import audit_one_cover, generation_round, los_blocked

FOV = math.radians(70.0)


def grid_from(cells, res=0.1):
    g = OccupancyGrid(*cells.shape, res)
    g.cells[:] = cells
    return g


def brute_raw_frontiers(cells):
    w, h = cells.shape
    out = set()
    for i in range(w):
        for j in range(h):
            if cells[i, j] != FREE:
                continue
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                a, b = i + di, j + dj
                if 0 <= a < w and 0 <= b < h and cells[a, b] == UNKNOWN:
                    out.add((i, j))
    return out


def random_partial(rng, shape=(30, 30)):
    cells = np.full(shape, UNKNOWN, dtype=np.int8)
    known = rng.random(shape) < 0.5
    cells[known] = np.where(rng.random(known.sum()) < 0.8, FREE, OCCUPIED)
    return cells


def test_fully_explored_has_no_frontiers():
    cells = np.full((20, 20), FREE, dtype=np.int8)
    cells[0] = OCCUPIED
    assert extract_frontiers(grid_from(cells)) == []


def test_straight_boundary():
    cells = np.full((30, 30), UNKNOWN, dtype=np.int8)
    cells[:15] = FREE
    fr = extract_frontiers(grid_from(cells))
    assert fr and all(f.cell[0] == 14 for f in fr)


def test_frontier_sampling_against_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(20):
        cells = random_partial(rng)
        raw = brute_raw_frontiers(cells)
        assert {tuple(c) for c in raw_frontier_cells(cells)} == raw
        fr = extract_frontiers(grid_from(cells), f_max=10, spacing=2.0)
        pts = [f.cell for f in fr]
        assert len(pts) == min(10, len(raw))
        assert set(pts) <= raw
        for a in range(len(pts)):
            for b in range(a):
                assert math.dist(pts[a], pts[b]) >= 2.0


def test_frontier_sampling_is_maximal_when_short():
    # a short frontier segment: sampling stops only when nothing is 2 cells away
    cells = np.full((10, 10), OCCUPIED, dtype=np.int8)
    cells[2:8, 2:5] = FREE
    cells[2:8, 5] = UNKNOWN
    fr = extract_frontiers(grid_from(cells), f_max=10, spacing=2.0)
    pts = [f.cell for f in fr]
    for c in brute_raw_frontiers(cells):
        assert min(math.dist(c, p) for p in pts) < 2.0


def open_map(res=0.1, size=60):
    cells = np.full((size, size), FREE, dtype=np.int8)
    cells[:, size // 2:] = UNKNOWN
    return grid_from(cells, res)


def test_robot_cell_has_best_validity():
    g = open_map()
    nav = g.cells == FREE
    f = [Frontier((40, 29))]
    robot = RobotState(0, 2.05, 2.95, 0.0)   # 2 m from the frontier
    cs = generate_candidates(g, f, [robot], nav, 1.0, 4.0)
    d_f = obstacle_distance(g)
    here = [k for k in range(len(cs)) if (cs.ci[k], cs.cj[k]) == (20, 29)]
    assert here
    k = here[0]
    same = np.isclose(d_f[cs.ci, cs.cj], d_f[20, 29])
    assert cs.validity[k] == cs.validity[same].max()


def test_frontier_behind_wall_not_candidate():
    g = open_map()
    g.cells[30, 20:30] = OCCUPIED
    nav = g.cells == FREE
    f = [Frontier((40, 29))]
    cs = generate_candidates(g, f, [RobotState(0, 2.05, 2.95, 0.0)], nav, 1.0, 4.0)
    assert len(cs) and (20, 29) not in {(int(i), int(j)) for i, j in zip(cs.ci, cs.cj)}


def test_candidates_match_brute_force():
    rng = np.random.default_rng(5)
    cells = np.full((20, 20), UNKNOWN, dtype=np.int8)
    cells[:12] = FREE
    cells[4:7, 3:10] = OCCUPIED
    cells[9, 12:18] = OCCUPIED
    g = grid_from(cells, 0.2)
    nav = g.cells == FREE
    robots = [RobotState(0, 0.3, 0.3, 0.0), RobotState(1, 2.1, 3.7, 0.0)]
    fr = extract_frontiers(g, 40, 2.0)
    cs = generate_candidates(g, fr, robots, nav, 1.0, 4.0)
    got = {(int(i), int(j), int(k)) for i, j, k in zip(cs.ci, cs.cj, cs.fidx)}
    d_r = distance_fields(nav, 0.2, [(1, 1), (10, 18)], min_only=True)
    blocking = g.cells != FREE
    want = set()
    for i, j in np.argwhere(nav):
        if not np.isfinite(d_r[i, j]):
            continue
        cx, cy = (i + 0.5) * 0.2, (j + 0.5) * 0.2
        for k, f in enumerate(fr):
            fx, fy = (f.cell[0] + 0.5) * 0.2, (f.cell[1] + 0.5) * 0.2
            d = math.hypot(fx - cx, fy - cy)
            if 1.0 - 1e-9 <= d <= 4.0 + 1e-9 and not los_blocked(cx, cy, fx, fy, blocking, 0.2):
                want.add((int(i), int(j), k))
    assert got == want and len(got) > 0
    # validity: clearance minus travel distance
    pad = np.pad(blocking, 1, constant_values=True)
    obst = (np.argwhere(pad) - 1 + 0.5) * 0.2
    for k in rng.choice(len(cs), 30, replace=False):
        c = (np.array([cs.ci[k], cs.cj[k]]) + 0.5) * 0.2
        d_f = np.hypot(*(obst - c).T).min()
        assert cs.validity[k] == pytest.approx(d_f - d_r[cs.ci[k], cs.cj[k]])


def test_single_candidate_single_task():
    g = open_map()
    fr = [Frontier((40, 29))]
    cs = CandidateSet(fr, np.array([20]), np.array([20]), np.array([0]), np.array([0.0]), np.array([1.0]),
                      np.array([1.0]))
    tasks = select_exploration_viewpoints(cs, fr, 5, FOV, g)
    assert len(tasks) == 1
    t = tasks[0]
    assert t.theta == pytest.approx(math.atan2(29 - 20, 40 - 20) % (2 * math.pi))
    assert fr[0].covered


def test_one_candidate_covers_two_frontiers():
    g = open_map()
    fr = [Frontier((40, 29)), Frontier((42, 29))]
    cs = CandidateSet(fr, np.array([20, 20]), np.array([26, 26]), np.array([0, 1]), np.zeros(2),
                      np.ones(2), np.array([2.0, 1.0]))
    tasks, cov = select_exploration_viewpoints(cs, fr, 5, FOV, g, return_coverage=True)
    assert len(tasks) == 1 and sorted(cov[0]) == [(40, 29), (42, 29)]
    assert all(f.covered for f in fr)


def test_precovered_frontiers_are_skipped():
    g = open_map()
    fr = [Frontier((40, 29), covered=True)]
    cs = CandidateSet(fr, np.array([20]), np.array([20]), np.array([0]), np.zeros(1), np.ones(1), np.ones(1))
    assert select_exploration_viewpoints(cs, fr, 5, FOV, g) == []


@pytest.mark.parametrize("seed", range(10))
def test_fixture_one_cover_audit(seed):
    grid, frontiers, tasks, coverage, cfg = generation_round(seed, k_max=5)
    assert len(tasks) <= 5
    assert audit_one_cover(grid, frontiers, tasks, coverage, cfg)
