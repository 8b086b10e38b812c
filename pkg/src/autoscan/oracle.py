"""Exhaustive reference solver for small assignment instances."""
from __future__ import annotations

import itertools
import math

from .assignment import AssignmentSolution, TaskGraph, capacity_term, energy_exact
from .tasks import Mode
from .tsp import brute_force_order


class OracleTooLarge(ValueError):
    pass


def exhaustive_optimum(g: TaskGraph, w_c: float = 1.0, max_robots: int = 3, max_tasks: int = 7):
    """Best energy over every task-to-robot map and every visiting order.

    Each robot may hold only one task type. Orders come from brute-force
    permutations, memoized per (robot, task subset).
    """
    R, T = g.n_robots, g.n_tasks
    if R > max_robots or T > max_tasks:
        raise OracleTooLarge(f"exhaustive enumeration refused for {R} robots / {T} tasks "
                             f"(cap {max_robots}/{max_tasks})")
    memo = {}

    def tour(r, subset):
        key = (r, subset)
        if key not in memo:
            memo[key] = brute_force_order(g.dist, g.end(r), subset)
        return memo[key]

    best_e, best = math.inf, None
    for labels in itertools.product(range(R), repeat=T):
        groups = [[] for _ in range(R)]
        for k, r in enumerate(labels):
            groups[r].append(k)
        if any(len({g.types[k] for k in grp}) > 1 for grp in groups):
            continue
        e_c, _ = capacity_term([len(s) for s in groups], g.rest)
        e = w_c * e_c
        if e >= best_e:
            continue
        orders = []
        for r, grp in enumerate(groups):
            order, cost = tour(r, tuple(grp))
            e += cost
            orders.append(order)
            if e >= best_e:
                break
        if e < best_e:
            best_e, best = e, orders
    if best is None:
        best = [[] for _ in range(R)]
    modes = [g.types[s[0]] if s else g.end_modes[r] for r, s in enumerate(best)]
    sol = AssignmentSolution([list(s) for s in best], modes)
    sol.energy = energy_exact(sol, g, w_c)
    return sol
