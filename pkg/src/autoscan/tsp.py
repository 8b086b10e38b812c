"""Open-path TSP from a fixed start node: Held-Karp DP, NN + 2-opt fallback."""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np


def path_cost(dist, start: int, order) -> float:
    cost, cur = 0.0, start
    for k in order:
        cost += dist[cur][k]
        cur = k
    return cost


@lru_cache(maxsize=None)
def _layers(n: int):
    """Per popcount layer: (subset mask, last node) pairs with the last node inside the mask."""
    masks = np.arange(1 << n)
    pop = np.zeros(1 << n, dtype=np.int64)
    for b in range(n):
        pop += (masks >> b) & 1
    out = []
    for k in range(2, n + 1):
        layer = masks[pop == k]
        m = np.concatenate([layer[(layer >> b) & 1 == 1] for b in range(n)])
        last = np.repeat(np.arange(n), len(m) // n)
        out.append((m, last, m ^ (1 << last)))
    return out


def held_karp(dist, start: int, nodes) -> list[int]:
    """Exact shortest open path from ``start`` through all ``nodes``.

    Subsets are processed one popcount layer at a time so each layer is a
    handful of array operations.
    """
    nodes = list(nodes)
    n = len(nodes)
    if n <= 1:
        return nodes
    d = np.asarray(dist, dtype=float)
    sub = d[np.ix_(nodes, nodes)]
    full = 1 << n
    cost = np.full((full, n), np.inf)
    parent = np.full((full, n), -1, dtype=np.int64)
    bits = 1 << np.arange(n)
    cost[bits, np.arange(n)] = d[start, nodes]
    for m, last, prev in _layers(n):
        cand = cost[prev] + sub[:, last].T
        best = np.argmin(cand, axis=1)
        cost[m, last] = cand[np.arange(len(m)), best]
        parent[m, last] = best
    last = int(np.argmin(cost[full - 1]))
    if cost[full - 1, last] == np.inf:
        raise ValueError("disconnected task in TSP instance")
    out, mask = [], full - 1
    while True:
        out.append(nodes[last])
        prev = int(parent[mask, last])
        mask &= ~(1 << last)
        if mask == 0:
            break
        last = prev
    return out[::-1]


def nearest_neighbor(dist, start: int, nodes) -> list[int]:
    left = list(nodes)
    out, cur = [], start
    while left:
        k = min(range(len(left)), key=lambda i: (dist[cur][left[i]], i))
        cur = left.pop(k)
        out.append(cur)
    return out


def two_opt(dist, start: int, order) -> list[int]:
    """Segment reversals on the open path until no move improves it."""
    route = [start] + list(order)
    n = len(route)
    improved = True
    while improved:
        improved = False
        for i in range(1, n - 1):
            for j in range(i + 1, n):
                a, b = route[i - 1], route[i]
                c = route[j]
                d_next = route[j + 1] if j + 1 < n else None
                before = dist[a][b] + (dist[c][d_next] if d_next is not None else 0.0)
                after = dist[a][c] + (dist[b][d_next] if d_next is not None else 0.0)
                if after < before - 1e-12:
                    route[i:j + 1] = route[i:j + 1][::-1]
                    improved = True
    return route[1:]


def tsp_order(dist, start: int, nodes, exact_max: int = 12) -> list[int]:
    nodes = list(nodes)
    if len(nodes) <= 1:
        return nodes
    if len(nodes) <= exact_max:
        return held_karp(dist, start, nodes)
    return two_opt(dist, start, nearest_neighbor(dist, start, nodes))


def brute_force_order(dist, start: int, nodes):
    """Reference: best open path over all permutations (small n only)."""
    best, best_cost = list(nodes), math.inf
    for perm in itertools.permutations(nodes):
        c = path_cost(dist, start, perm)
        if c < best_cost:
            best, best_cost = list(perm), c
    return best, best_cost
