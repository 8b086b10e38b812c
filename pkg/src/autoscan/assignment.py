"""Multi-robot task assignment: the modified multi-depot multiple-TSP solver.

Pipeline per round: task graph -> proportional mode split + k-means ->
simulated annealing over robot modes with capacity-weighted GMM
re-clustering -> per-robot open-path TSP -> exact-energy local search ->
hop-length truncation of each new sequence.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pathfinding import NavIndex, distance_fields, grid_graph
from .tasks import Mode
from .tsp import path_cost, tsp_order
from .tsp import tsp_order as _tsp_order  # unmemoized, for refine

log = logging.getLogger(__name__)

EXP, REC = Mode.EXPLORER, Mode.RECONSTRUCTOR


class InfeasibleSolution(ValueError):
    pass


@dataclass
class TaskGraph:
    """Nodes ``0..T-1`` are new tasks, ``T..T+R-1`` one end node per robot."""
    types: list            # Mode per new task
    pos: np.ndarray        # (T + R, 2)
    dist: np.ndarray       # (T + R, T + R)
    rest: np.ndarray       # (R,) queued-but-unfinished task count per robot
    end_modes: list        # Mode of each robot's end node
    payload: list = field(default_factory=list)   # the task objects, aligned with types

    @property
    def n_tasks(self) -> int:
        return len(self.types)

    @property
    def n_robots(self) -> int:
        return len(self.rest)

    def end(self, r: int) -> int:
        return self.n_tasks + r

    def has_both_types(self) -> bool:
        return EXP in self.types and REC in self.types


@dataclass
class EnergyTerms:
    e_d: float
    e_c: float
    c_avg: float
    total: float


@dataclass
class AssignmentSolution:
    sequences: list        # per robot, list of task indices into the graph
    modes: list            # per robot Mode
    energy: EnergyTerms | None = None
    dropped: list = field(default_factory=list)
    approx_energy: float = math.nan

    def tasks_for(self, g: TaskGraph, r: int):
        return [g.payload[k] for k in self.sequences[r]]


# -- graph ---------------------------------------------------------------------

def graph_from_points(task_types, task_xy, end_xy, rest, end_modes, dist=None, payload=None) -> TaskGraph:
    pos = np.vstack([np.reshape(task_xy, (-1, 2)), np.reshape(end_xy, (-1, 2))]).astype(float)
    if dist is None:
        dist = np.hypot(*(pos[:, None, :] - pos[None, :, :]).transpose(2, 0, 1))
    return TaskGraph(list(task_types), pos, np.asarray(dist, dtype=float), np.asarray(rest, dtype=np.int64),
                     list(end_modes), list(payload) if payload is not None else [])


def end_node(robot, grid_res: float):
    """Position, cell and mode of the robot's last unfinished task (its pose when idle)."""
    last = robot.queue[-1] if robot.queue else robot.current
    if last is not None:
        return (last.x, last.y), tuple(last.cell), last.mode
    return (robot.x, robot.y), (int(math.floor(robot.x / grid_res)), int(math.floor(robot.y / grid_res))), robot.mode


def build_graph(tasks_exp, tasks_rec, robots, nav_mask: np.ndarray, resolution: float) -> TaskGraph:
    """Task graph with navigation distances between every pair of nodes.

    Reconstruction tasks are placed at their base cell. End nodes off the
    navigation mask snap to the nearest navigable cell.
    """
    if not robots:
        raise ValueError("build_graph needs at least one robot")
    tasks = list(tasks_exp) + list(tasks_rec)
    nav_index = NavIndex(nav_mask, resolution)
    cells, xy = [], []
    for t in tasks:
        cells.append(tuple(t.cell))
        xy.append((t.x, t.y))
    ends, end_modes = [], []
    for r in robots:
        (x, y), c, m = end_node(r, resolution)
        if not (0 <= c[0] < nav_mask.shape[0] and 0 <= c[1] < nav_mask.shape[1] and nav_mask[c]):
            snapped, _ = nav_index.nearest(x, y)
            c = snapped if snapped is not None else c
        cells.append(c)
        ends.append((x, y))
        end_modes.append(m)
    n = len(cells)
    uniq = sorted(set(cells))
    where = {c: k for k, c in enumerate(uniq)}
    fields_ = distance_fields(nav_mask, resolution, uniq, graph=grid_graph(nav_mask, resolution))
    dist = np.empty((n, n))
    for a in range(n):
        fa = fields_[where[cells[a]]]
        for b in range(n):
            dist[a, b] = fa[cells[b]]
    np.fill_diagonal(dist, 0.0)
    # enforce exact symmetry against float summation order
    dist = np.minimum(dist, dist.T)
    types = [t.mode for t in tasks]
    g = graph_from_points(types, np.array(xy).reshape(-1, 2), np.array(ends), [len(r.rest) for r in robots],
                          end_modes, dist=dist, payload=tasks)
    return g


# -- energies ------------------------------------------------------------------

def capacity_term(counts, rest) -> tuple[float, float]:
    load = np.asarray(counts, dtype=float) + np.asarray(rest, dtype=float)
    c_avg = float(load.mean()) if len(load) else 0.0
    return float(((load - c_avg) ** 2).sum()), c_avg


def check_solution(sol: AssignmentSolution, g: TaskGraph, cover: bool = True):
    seen = []
    for r, seq in enumerate(sol.sequences):
        kinds = {g.types[k] for k in seq}
        if len(kinds) > 1:
            raise InfeasibleSolution(f"robot {r} mixes task types")
        if kinds and sol.modes[r] not in kinds:
            raise InfeasibleSolution(f"robot {r} declared {sol.modes[r]} but holds other tasks")
        seen.extend(seq)
    if len(seen) != len(set(seen)):
        raise InfeasibleSolution("a task is assigned twice")
    if cover and set(seen) | set(sol.dropped) != set(range(g.n_tasks)):
        raise InfeasibleSolution("not every task is assigned")


def energy_exact(sol: AssignmentSolution, g: TaskGraph, w_c: float = 1.0, check: bool = True) -> EnergyTerms:
    """Sum of chain lengths from each end node plus the weighted capacity penalty."""
    if check:
        check_solution(sol, g, cover=False)
    e_d = sum(path_cost(g.dist, g.end(r), seq) for r, seq in enumerate(sol.sequences))
    e_c, c_avg = capacity_term([len(s) for s in sol.sequences], g.rest)
    return EnergyTerms(float(e_d), e_c, c_avg, float(e_d + w_c * e_c))


def energy_approx(labels, modes, g: TaskGraph, speeds: dict, w_c: float = 1.0) -> float:
    """Centroid-based travel time plus the capacity penalty.

    Each robot's cluster is summarized by its Euclidean centroid; task
    distances to it are divided by the speed of the task's mode and the end
    node's distance by the speed of the end node's mode.
    """
    labels = np.asarray(labels)
    tpos = g.pos[:g.n_tasks]
    e = 0.0
    counts = np.zeros(g.n_robots, dtype=np.int64)
    for r in range(g.n_robots):
        idx = np.flatnonzero(labels == r)
        counts[r] = len(idx)
        if len(idx) == 0:
            continue
        w = tpos[idx].mean(axis=0)
        v = np.array([speeds[g.types[k]] for k in idx])
        e += float((np.hypot(*(tpos[idx] - w).T) / v).sum())
        e += math.dist(g.pos[g.end(r)], w) / speeds[g.end_modes[r]]
    e_c, _ = capacity_term(counts, g.rest)
    return e + w_c * e_c


# -- clustering ----------------------------------------------------------------

def compatible(g: TaskGraph, modes) -> np.ndarray:
    """(T, R) mask: robot mode matches task type and the task is reachable."""
    t = np.array([[g.types[k] == m for m in modes] for k in range(g.n_tasks)], dtype=bool).reshape(g.n_tasks, -1)
    reach = np.isfinite(g.dist[:g.n_tasks, g.n_tasks:])
    return t & reach


def mode_split(g: TaskGraph, rng, n_robots: int) -> list:
    """Modes in proportion to the task mix, each present type getting at least one robot."""
    n_exp = sum(1 for t in g.types if t == EXP)
    n_rec = g.n_tasks - n_exp
    if n_rec == 0:
        modes = [EXP] * n_robots
    elif n_exp == 0:
        modes = [REC] * n_robots
    else:
        n_e = int(math.floor(n_robots * n_exp / g.n_tasks + 0.5))
        if n_robots >= 2:
            n_e = min(max(n_e, 1), n_robots - 1)
        modes = [EXP] * n_e + [REC] * (n_robots - n_e)
    return [modes[k] for k in rng.permutation(n_robots)]


def kmeans(points: np.ndarray, init: np.ndarray, iters: int = 20):
    cent = init.astype(float).copy()
    labels = np.zeros(len(points), dtype=np.int64)
    if len(points) == 0:
        return labels, cent
    for _ in range(iters):
        d = ((points[:, None, :] - cent[None, :, :]) ** 2).sum(-1)
        labels = np.argmin(d, axis=1)
        for c in range(len(cent)):
            m = labels == c
            if m.any():
                cent[c] = points[m].mean(axis=0)
    return labels, cent


def _nearest_compatible(g, k, comp, labels):
    """Robot for task ``k``: the compatible robot whose cluster centroid (or end node) is closest."""
    best, best_d = -1, math.inf
    for r in np.flatnonzero(comp[k]):
        members = np.flatnonzero(labels == r)
        anchor = g.pos[:g.n_tasks][members].mean(axis=0) if len(members) else g.pos[g.end(r)]
        d = math.dist(g.pos[k], anchor)
        if d < best_d:
            best, best_d = int(r), d
    return best


def initial_clustering(g: TaskGraph, rng, modes=None, iters: int = 20):
    """Proportional mode split, k-means seeded at end nodes, greedy cluster-to-robot matching."""
    R = g.n_robots
    if modes is None:
        modes = mode_split(g, rng, R)
    labels = np.full(g.n_tasks, -1, dtype=np.int64)
    if g.n_tasks == 0:
        return list(modes), labels
    comp = compatible(g, modes)
    tpos = g.pos[:g.n_tasks]
    km, cent = kmeans(tpos, g.pos[g.n_tasks:], iters)

    pairs = []
    for c in range(R):
        members = np.flatnonzero(km == c)
        if len(members) == 0:
            continue
        n_e = sum(1 for k in members if g.types[k] == EXP)
        ctype = EXP if n_e * 2 >= len(members) else REC
        for r in range(R):
            if modes[r] == ctype:
                pairs.append((math.dist(g.pos[g.end(r)], cent[c]), c, r))
    pairs.sort()
    used_c, used_r = set(), set()
    for _d, c, r in pairs:
        if c in used_c or r in used_r:
            continue
        used_c.add(c)
        used_r.add(r)
        for k in np.flatnonzero(km == c):
            if comp[k, r]:
                labels[k] = r
    for k in range(g.n_tasks):
        if labels[k] < 0:
            labels[k] = _nearest_compatible(g, k, comp, labels)
    return list(modes), labels


def gmm_cluster(g: TaskGraph, modes, sigma: float = 2.0, lam: float = 0.5, iters: int = 10):
    """Soft clustering with a load penalty on each robot's likelihood.

    Responsibilities are ``exp(-|t - w|^2 / 2 sigma^2 - lam * load)`` over
    compatible robots, where ``load`` is the soft cluster size plus the
    robot's queued tasks. Means are anchored by the end node at unit weight.
    Returns a hard assignment (-1 for tasks with no compatible robot).
    """
    T, R = g.n_tasks, g.n_robots
    if T == 0:
        return np.zeros(0, dtype=np.int64)
    comp = compatible(g, modes)
    tpos = g.pos[:T]
    ends = g.pos[T:]
    means = ends.copy()
    load = g.rest.astype(float).copy()
    resp = np.zeros((T, R))
    for _ in range(iters):
        d2 = ((tpos[:, None, :] - means[None, :, :]) ** 2).sum(-1)
        logit = -d2 / (2 * sigma ** 2) - lam * load[None, :]
        logit = np.where(comp, logit, -np.inf)
        top = logit.max(axis=1, keepdims=True)
        top = np.where(np.isfinite(top), top, 0.0)
        resp = np.exp(logit - top)
        s = resp.sum(axis=1, keepdims=True)
        resp = np.divide(resp, s, out=np.zeros_like(resp), where=s > 0)
        mass = resp.sum(axis=0)
        means = (ends + resp.T @ tpos) / (1.0 + mass)[:, None]
        load = g.rest + mass
    labels = np.where(comp.any(axis=1), np.argmax(np.where(comp, resp, -1.0), axis=1), -1)
    return labels.astype(np.int64)


def anneal(g: TaskGraph, modes, labels, rng, speeds: dict, config, frozen: bool = False, visited=None):
    """Simulated annealing over robot modes; each state is re-clustered with the GMM.

    Perturbations: Exchange swaps the modes of one Explorer and one
    Reconstructor; Reassign flips a robot of the strictly larger category.
    Returns the best (modes, labels, energy) seen. With ``visited`` (a
    dict) every evaluated state is recorded there keyed by its mode tuple.
    """
    w_c = config.w_c
    cur_modes, cur_labels = list(modes), labels
    # a state leaving tasks without a compatible robot is never preferred
    cur_e = math.inf if (cur_labels < 0).any() else energy_approx(cur_labels, cur_modes, g, speeds, w_c)
    best = (list(cur_modes), cur_labels.copy(), cur_e)
    cache = {} if visited is None else visited

    def evaluate(ms):
        key = tuple(m.value for m in ms)
        if key not in cache:
            lab = gmm_cluster(g, ms, config.sigma_g, config.lambda_c, config.gmm_iters)
            if (lab < 0).any():
                cache[key] = (lab, math.inf)
            else:
                cache[key] = (lab, energy_approx(lab, ms, g, speeds, w_c))
        return cache[key]

    if frozen:
        lab, e = evaluate(cur_modes)
        if e < best[2]:
            best = (list(cur_modes), lab, e)
        return best
    if not g.has_both_types() or g.n_robots < 2:
        return best

    temp = max(cur_e / 10.0, 1e-9)
    for _ in range(config.sa_iters):
        e_idx = [r for r, m in enumerate(cur_modes) if m == EXP]
        r_idx = [r for r, m in enumerate(cur_modes) if m == REC]
        moves = []
        if e_idx and r_idx:
            moves.append("exchange")
        if len(e_idx) != len(r_idx) and max(len(e_idx), len(r_idx)) >= 2:
            moves.append("reassign")
        if not moves:
            break
        move = moves[int(rng.integers(len(moves)))]
        new = list(cur_modes)
        if move == "exchange":
            a = e_idx[int(rng.integers(len(e_idx)))]
            b = r_idx[int(rng.integers(len(r_idx)))]
            new[a], new[b] = new[b], new[a]
        else:
            big = e_idx if len(e_idx) > len(r_idx) else r_idx
            a = big[int(rng.integers(len(big)))]
            new[a] = REC if new[a] == EXP else EXP
        lab, e = evaluate(new)
        accept = e < cur_e or (math.isfinite(e) and rng.random() < math.exp(-(e - cur_e) / temp))
        if accept:
            cur_modes, cur_labels, cur_e = new, lab, e
            if e < best[2]:
                best = (list(new), lab.copy(), e)
        temp *= config.sa_cool
    return best


# -- sequencing ----------------------------------------------------------------

def apply_energy_constraint(sequence, dist, start: int, d_max: float = 8.0, k0: int = 1):
    """Cut the sequence at the first hop (into position >= k0) longer than ``d_max``."""
    seq = list(sequence)
    prev = start
    for i, k in enumerate(seq):
        if i >= k0 and dist[prev][k] > d_max:
            return seq[:i]
        prev = k
    return seq


def _insert_cost(dist, start, seq, k):
    """Cheapest insertion of ``k`` into an open path; returns (delta, position)."""
    best, pos = math.inf, 0
    route = [start] + list(seq)
    for i in range(len(route)):
        a = route[i]
        if i + 1 < len(route):
            b = route[i + 1]
            delta = dist[a][k] + dist[k][b] - dist[a][b]
        else:
            delta = dist[a][k]
        if delta < best:
            best, pos = delta, i
    return best, pos


def refine(g: TaskGraph, sequences, modes, w_c: float, fixed_modes: bool, exact_max: int = 12, rounds: int = 50):
    """First-improvement relocate/swap local search on the exact energy.

    A task may move to a robot holding tasks of its own type, or to an
    empty robot when that robot's mode may change (dynamic policy). Tours
    are re-optimized with the TSP solver after every accepted move.
    """
    seqs = [list(s) for s in sequences]
    modes = list(modes)
    R = g.n_robots
    d = g.dist
    memo = {}

    def tsp_order(dd, start, nodes, em):
        key = (start, frozenset(nodes))
        if key not in memo:
            memo[key] = _tsp_order(dd, start, nodes, em)
        return list(memo[key])

    def cost_r(r):
        return path_cost(d, g.end(r), seqs[r])

    def total():
        e_c, _ = capacity_term([len(s) for s in seqs], g.rest)
        return sum(cost_r(r) for r in range(R)) + w_c * e_c

    def can_take(r, ttype, leaving=None):
        others = [k for k in seqs[r] if k != leaving]
        if others:
            return g.types[others[0]] == ttype
        return modes[r] == ttype or not fixed_modes

    cur = total()
    for _ in range(rounds):
        improved = False
        for a in range(R):
            for k in list(seqs[a]):
                for b in range(R):
                    if b == a or not can_take(b, g.types[k]) or not math.isfinite(d[g.end(b)][k]):
                        continue
                    old_a, old_b = seqs[a], seqs[b]
                    seqs[a] = tsp_order(d, g.end(a), [x for x in old_a if x != k], exact_max)
                    seqs[b] = tsp_order(d, g.end(b), old_b + [k], exact_max)
                    e = total()
                    if e < cur - 1e-9:
                        cur = e
                        improved = True
                        if len(old_b) == 0:
                            modes[b] = g.types[k]
                        break
                    seqs[a], seqs[b] = old_a, old_b
                if improved:
                    break
            if improved:
                break
        if not improved and not fixed_modes:
            # hand a whole sequence to another robot (swapping theirs back)
            for a in range(R):
                for b in range(a + 1, R):
                    if not (seqs[a] or seqs[b]):
                        continue
                    if not (all(math.isfinite(d[g.end(a)][k]) for k in seqs[b])
                            and all(math.isfinite(d[g.end(b)][k]) for k in seqs[a])):
                        continue
                    old_a, old_b = seqs[a], seqs[b]
                    seqs[a] = tsp_order(d, g.end(a), old_b, exact_max)
                    seqs[b] = tsp_order(d, g.end(b), old_a, exact_max)
                    e = total()
                    if e < cur - 1e-9:
                        cur = e
                        improved = True
                        break
                    seqs[a], seqs[b] = old_a, old_b
                if improved:
                    break
        if not improved:
            for a in range(R):
                for b in range(a + 1, R):
                    for ka in list(seqs[a]):
                        for kb in list(seqs[b]):
                            if g.types[ka] != g.types[kb]:
                                continue
                            if not (math.isfinite(d[g.end(a)][kb]) and math.isfinite(d[g.end(b)][ka])):
                                continue
                            old_a, old_b = seqs[a], seqs[b]
                            seqs[a] = tsp_order(d, g.end(a), [x for x in old_a if x != ka] + [kb], exact_max)
                            seqs[b] = tsp_order(d, g.end(b), [x for x in old_b if x != kb] + [ka], exact_max)
                            e = total()
                            if e < cur - 1e-9:
                                cur = e
                                improved = True
                                break
                            seqs[a], seqs[b] = old_a, old_b
                        if improved:
                            break
                    if improved:
                        break
                if improved:
                    break
        if not improved:
            break
    for r in range(R):
        if seqs[r]:
            modes[r] = g.types[seqs[r][0]]
    return seqs, modes


def drop_infeasible(g: TaskGraph, modes_available=None):
    """Indices of tasks unreachable from every end node."""
    reach = np.isfinite(g.dist[:g.n_tasks, g.n_tasks:]).any(axis=1)
    return [int(k) for k in np.flatnonzero(~reach)]


def subgraph(g: TaskGraph, keep) -> TaskGraph:
    keep = list(keep)
    idx = keep + list(range(g.n_tasks, g.n_tasks + g.n_robots))
    return TaskGraph([g.types[k] for k in keep], g.pos[idx], g.dist[np.ix_(idx, idx)], g.rest.copy(),
                     list(g.end_modes), [g.payload[k] for k in keep] if g.payload else [])


def assign_graph(g: TaskGraph, config, rng=None, speeds=None, frozen_modes=None) -> AssignmentSolution:
    """Solve one round on a prepared graph. Indices in the result refer to ``g``."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    if speeds is None:
        speeds = {EXP: config.explorer_speed, REC: config.reconstructor_speed}
    R = g.n_robots
    dropped = drop_infeasible(g)
    for k in dropped:
        log.warning("task %d unreachable from every robot; dropped", k)
    keep = [k for k in range(g.n_tasks) if k not in set(dropped)]

    types_kept = {g.types[k] for k in keep}
    if frozen_modes is None and R == 1 and len(types_kept) == 2:
        n_e = sum(1 for k in keep if g.types[k] == EXP)
        major = EXP if 2 * n_e >= len(keep) else REC
        extra = [k for k in keep if g.types[k] != major]
        log.warning("single robot with mixed task types; dropping %d %s tasks", len(extra), "reconstruction"
                    if major == EXP else "exploration")
        dropped += extra
        keep = [k for k in keep if g.types[k] == major]
    if frozen_modes is not None:
        # tasks whose type no robot can take are dropped
        have = set(frozen_modes)
        extra = [k for k in keep if g.types[k] not in have]
        dropped += extra
        keep = [k for k in keep if g.types[k] in have]

    sub = subgraph(g, keep)
    if sub.n_tasks == 0:
        modes = list(frozen_modes) if frozen_modes is not None else list(g.end_modes)
        sol = AssignmentSolution([[] for _ in range(R)], modes, dropped=sorted(dropped))
        sol.energy = energy_exact(sol, g, config.w_c, check=False)
        sol.approx_energy = 0.0
        return sol

    modes, labels = initial_clustering(sub, rng, modes=frozen_modes, iters=config.kmeans_iters)
    init = (list(modes), labels)
    visited = {}
    modes, labels, e_approx = anneal(sub, modes, labels, rng, speeds, config, frozen=frozen_modes is not None,
                                     visited=visited)
    for k in np.flatnonzero(labels < 0):
        # reachable, but not by a robot that may hold its mode; regenerated next round
        log.info("task %d has no compatible robot; dropped", keep[k])
        dropped.append(keep[k])

    # polish the annealer's best state and, with refine on, the next best
    # distinct mode configurations; keep the lowest exact energy
    starts = [(modes, labels)]
    if config.refine:
        ranked = sorted(((e, key) for key, (lab, e) in visited.items() if math.isfinite(e)), key=lambda t: t[0])
        for _e, key in ranked:
            if len(starts) >= config.polish_starts:
                break
            ms = [Mode(v) for v in key]
            if ms != list(modes):
                starts.append((ms, visited[key][0]))
        if init[0] != list(modes) and (init[1] >= 0).all():
            starts.append(init)
    best_seqs, best_modes, best_e = None, None, math.inf
    for ms, lab in starts:
        seqs = []
        for r in range(R):
            members = [int(k) for k in np.flatnonzero(lab == r)]
            seqs.append(tsp_order(sub.dist, sub.end(r), members, config.tsp_exact_max) if members else [])
        ms = list(ms)
        if config.refine:
            seqs, ms = refine(sub, seqs, ms, config.w_c, frozen_modes is not None, config.tsp_exact_max)
        e = energy_exact(AssignmentSolution(seqs, ms), sub, config.w_c, check=False).total
        if e < best_e:
            best_seqs, best_modes, best_e = seqs, ms, e
    seqs, modes = best_seqs, best_modes

    out = []
    for r in range(R):
        s = apply_energy_constraint(seqs[r], sub.dist, sub.end(r), config.d_max, config.k0)
        dropped += [keep[k] for k in seqs[r][len(s):]]
        out.append([keep[k] for k in s])
    sol = AssignmentSolution(out, list(modes), dropped=sorted(dropped), approx_energy=e_approx)
    check_solution(sol, g, cover=True)
    sol.energy = energy_exact(sol, g, config.w_c)
    return sol


def assign(tasks_exp, tasks_rec, robots, nav_mask, resolution: float, config, rng=None, frozen_modes=None):
    """End-to-end: returns (solution, graph); ``solution.tasks_for(graph, r)`` gives the objects."""
    g = build_graph(tasks_exp, tasks_rec, robots, nav_mask, resolution)
    return assign_graph(g, config, rng, frozen_modes=frozen_modes), g


# -- instance files ------------------------------------------------------------

def load_instance(path) -> TaskGraph:
    """JSON instance: ``nodes`` with id/type/x/y (end nodes add robot/rest/mode), optional ``dist``."""
    doc = json.loads(Path(path).read_text())
    return instance_from_doc(doc)


def instance_from_doc(doc: dict) -> TaskGraph:
    nodes = doc["nodes"]
    tasks = [n for n in nodes if n["type"] in ("exp", "rec")]
    ends = sorted((n for n in nodes if n["type"] == "end"), key=lambda n: n["robot"])
    if not ends:
        raise ValueError("instance needs at least one end node")
    order = tasks + ends
    types = [EXP if n["type"] == "exp" else REC for n in tasks]
    xy = np.array([[n["x"], n["y"]] for n in order], dtype=float)
    dist = None
    if doc.get("dist") is not None:
        ids = [n["id"] for n in nodes]
        pos = {i: k for k, i in enumerate(ids)}
        full = np.array([[math.inf if v is None else v for v in row] for row in doc["dist"]], dtype=float)
        sel = [pos[n["id"]] for n in order]
        dist = full[np.ix_(sel, sel)]
    end_modes = [Mode.from_short(n.get("mode", "E")) for n in ends]
    return graph_from_points(types, xy[:len(tasks)], xy[len(tasks):], [int(n.get("rest", 0)) for n in ends],
                             end_modes, dist=dist)


def instance_to_doc(g: TaskGraph, with_dist: bool = True) -> dict:
    nodes = []
    for k in range(g.n_tasks):
        nodes.append({"id": k, "type": "exp" if g.types[k] == EXP else "rec",
                      "x": float(g.pos[k, 0]), "y": float(g.pos[k, 1])})
    for r in range(g.n_robots):
        e = g.end(r)
        nodes.append({"id": e, "type": "end", "x": float(g.pos[e, 0]), "y": float(g.pos[e, 1]),
                      "robot": r, "rest": int(g.rest[r]), "mode": g.end_modes[r].short})
    doc = {"nodes": nodes}
    if with_dist:
        doc["dist"] = [[float(v) if math.isfinite(v) else None for v in row] for row in g.dist]
    return doc


def random_instance(rng, n_robots: int = 3, n_tasks: int = 6, size: float = 20.0, max_rest: int = 0) -> TaskGraph:
    """Uniform positions in a square; both task types present when n_tasks >= 2."""
    types = [EXP if rng.random() < 0.5 else REC for _ in range(n_tasks)]
    if n_tasks >= 2 and len(set(types)) < 2:
        types[int(rng.integers(n_tasks))] = REC if types[0] == EXP else EXP
    txy = rng.uniform(0, size, (n_tasks, 2))
    exy = rng.uniform(0, size, (n_robots, 2))
    rest = rng.integers(0, max_rest + 1, n_robots)
    end_modes = [EXP if rng.random() < 0.5 else REC for _ in range(n_robots)]
    return graph_from_points(types, txy, exy, rest, end_modes)
