"""Acceptance suite: one test per headline criterion, each printing a PASS/FAIL line.

Simulation runs are cached per module so the determinism, completeness and
ablation checks share work. Every cached run goes through an audited
simulation that records append-only violations at each central wake.
"""
import itertools
import math
import time

import numpy as np
import pytest

from autoscan import assignment
from autoscan.assignment import assign_graph, check_solution, random_instance
from autoscan.config import RunConfig
from autoscan.metrics import compute_metrics
from autoscan.oracle import exhaustive_optimum
from autoscan.pathfinding import astar_distance
from autoscan.reconstruction import ObjectScanState, incompleteness_scores, is_complete
from autoscan.scene import bundled_scenes, load_scene
from autoscan.simulator import Simulation
from autoscan.tasks import Mode
from autoscan.tsp import brute_force_order, held_karp, path_cost
from helpers import SQRT2, audit_one_cover, dijkstra_counts, generation_round, random_mask

SCENES = ["apartment_s", "office_s", "lab_s", "studio_s"]
PAIRS = [(n, s) for s in range(3) for n in SCENES][:10]
NOISE_FREE = dict(explorer_sigma0=0.0, explorer_sigma1=0.0)


def verdict(capsys, name, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, detail


# -- shared simulation cache ---------------------------------------------------

class Audited(Simulation):
    """Counts central wakes and records any queue that was not extended at the tail."""

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self.audited, self.violations = 0, []

    def on_center_wake(self, t, data):
        before = [(r.current, list(r.queue)) for r in self.robots]
        super().on_center_wake(t, data)
        for (cur, q), r in zip(before, self.robots):
            if cur is not None and not (r.current is cur and r.queue[:len(q)] == q):
                self.violations.append((t, r.id))
        self.audited += 1


class Runs:
    def __init__(self):
        self.scenes, self.cache = {}, {}

    def scene(self, name):
        if name not in self.scenes:
            self.scenes[name] = load_scene(name)
        return self.scenes[name]

    def get(self, name, seed=0, **over):
        key = (name, seed, tuple(sorted(over.items())))
        if key not in self.cache:
            scene, cfg = self.scene(name), RunConfig(seed=seed, **over)
            t0 = time.perf_counter()
            sim = Audited(scene, cfg)
            rep = sim.run()
            rep.metrics = compute_metrics(scene, rep, cfg)
            rep.wall = time.perf_counter() - t0
            rep.audited, rep.violations = sim.audited, sim.violations
            self.cache[key] = rep
        return self.cache[key]


@pytest.fixture(scope="module")
def runs():
    return Runs()


# -- 1. solver optimality gap --------------------------------------------------

def test_solver_optimality_gap(capsys):
    cfg = RunConfig(d_max=math.inf)
    gaps, solve_time = [], 0.0
    for s in range(100):
        g = random_instance(np.random.default_rng(s), 3, 6)
        t0 = time.perf_counter()
        sol = assign_graph(g, cfg, np.random.default_rng(1000 + s))
        solve_time += time.perf_counter() - t0
        opt = exhaustive_optimum(g).energy.total
        gaps.append((sol.energy.total - opt) / opt)
    within = sum(gap <= 0.05 for gap in gaps)
    # one robot: a single mode, so every task shares the type
    single = []
    for s in range(20):
        g = random_instance(np.random.default_rng(500 + s), 1, 6)
        g.types = [g.end_modes[0]] * 6
        sol = assign_graph(g, cfg, np.random.default_rng(s))
        opt = exhaustive_optimum(g).energy.total
        single.append(abs(sol.energy.total - opt) / opt)
    ok = within >= 90 and max(single) <= 1e-12 and solve_time < 10.0
    verdict(capsys, "solver optimality gap", ok,
            f"{within}/100 within 5% (worst {max(gaps):.3%}), R=1 worst gap {max(single):.1e}, "
            f"batch solve {solve_time:.2f}s")


# -- 2. constraint soundness ---------------------------------------------------

def test_constraint_soundness(capsys, monkeypatch):
    calls = []
    real = assignment.apply_energy_constraint

    def spy(seq, dist, start, d_max=8.0, k0=1):
        out = real(seq, dist, start, d_max, k0)
        calls.append((list(seq), out, dist, start, d_max, k0))
        return out

    monkeypatch.setattr(assignment, "apply_energy_constraint", spy)
    rng = np.random.default_rng(42)
    bad, truncated = [], 0
    for call in range(1000):
        R, T = int(rng.integers(1, 5)), int(rng.integers(0, 10))
        g = random_instance(rng, R, T, size=float(rng.uniform(5, 25)), max_rest=int(rng.integers(0, 3)))
        if T and rng.random() < 0.15:
            k = int(rng.integers(T))        # a task nobody can reach
            g.dist[k, :] = g.dist[:, k] = math.inf
            g.dist[k, k] = 0.0
        d_max = float(rng.choice([math.inf, 8.0, rng.uniform(2.0, 15.0)]))
        k0 = int(rng.integers(0, 3))
        frozen = None
        if rng.random() < 0.2:
            frozen = [Mode.EXPLORER if rng.random() < 0.5 else Mode.RECONSTRUCTOR for _ in range(R)]
        cfg = RunConfig(seed=call, d_max=d_max, k0=k0)
        del calls[:]
        sol = assign_graph(g, cfg, np.random.default_rng(call), frozen_modes=frozen)
        try:
            check_solution(sol, g, cover=True)
            flat = [k for s in sol.sequences for k in s]
            assert not set(flat) & set(sol.dropped) and len(set(sol.dropped)) == len(sol.dropped)
            assert set(flat) | set(sol.dropped) == set(range(T))
            for r, seq in enumerate(sol.sequences):
                assert all(g.types[k] == sol.modes[r] for k in seq)
                route = [g.end(r)] + seq
                assert all(g.dist[route[i], route[i + 1]] <= d_max for i in range(k0, len(seq)))
            if frozen is not None:
                assert sol.modes == frozen
            for seq, out, dist, start, dm, kk in calls:
                assert out == seq[:len(out)]
                if len(out) < len(seq):
                    truncated += 1
                    prev = out[-1] if out else start
                    assert len(out) >= kk and dist[prev][seq[len(out)]] > dm
        except AssertionError as exc:
            bad.append((call, repr(exc)))
        except assignment.InfeasibleSolution as exc:
            bad.append((call, repr(exc)))
    verdict(capsys, "constraint soundness", not bad,
            f"{1000 - len(bad)}/1000 calls sound, {truncated} truncations checked"
            + (f", first failure {bad[0]}" if bad else ""))


# -- 3. path oracles -----------------------------------------------------------

def euclid(pts):
    return np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))


def test_path_oracles(capsys):
    rng = np.random.default_rng(0)
    mism, pairs = 0, 0
    for _ in range(100):
        m = random_mask(rng)
        free = np.argwhere(m)
        nodes = [tuple(map(int, free[k])) for k in rng.choice(len(free), 10, replace=False)]
        for a in nodes:
            ref = dijkstra_counts(m, a)
            for b in nodes:
                want = (ref[b][0] + SQRT2 * ref[b][1]) * 0.1 if b in ref else math.inf
                mism += astar_distance(m, a, b, 0.1) != want
                pairs += 1
    rng = np.random.default_rng(3)
    tsp_bad = 0
    for _ in range(50):
        d = euclid(rng.uniform(0, 20, (9, 2)))
        nodes = list(range(1, 9))
        best = min(path_cost(d, 0, p) for p in itertools.permutations(nodes))
        _o, bf = brute_force_order(d, 0, tuple(nodes))
        hk = held_karp(d, 0, nodes)
        tsp_bad += not (sorted(hk) == nodes and math.isclose(path_cost(d, 0, hk), best, rel_tol=1e-12)
                        and math.isclose(bf, best, rel_tol=1e-12))
    verdict(capsys, "path oracles", mism == 0 and tsp_bad == 0,
            f"A* vs Dijkstra {pairs - mism}/{pairs} pairs equal, DP vs brute force {50 - tsp_bad}/50")


# -- 4. incompleteness scoring oracle ------------------------------------------

def test_scoring_oracle(capsys):
    rng = np.random.default_rng(0)
    equal = 0
    for _ in range(50):
        c = rng.normal(size=(int(rng.integers(1, 2049)), 3))
        p = rng.normal(size=(int(rng.integers(1, 2049)), 3))
        raw = np.sqrt(((c[:, None, :] - p[None, :, :]) ** 2).sum(-1)).min(axis=1)
        want = raw / raw.max() if raw.max() > 0 else np.zeros(len(c))
        equal += np.array_equal(incompleteness_scores(p, c), want)
    s = ObjectScanState(1)
    s.scores = np.array([0.0, 0, 0, 0, 1])
    below = ObjectScanState(1)
    below.scores = np.array([0.0, 0, 0, 0, 0.99])
    boundary = s.mean_score == 0.2 and not is_complete(s, 0.2) and is_complete(below, 0.2)
    verdict(capsys, "incompleteness scoring oracle", equal == 50 and boundary,
            f"{equal}/50 cloud pairs exactly equal, mean==tau is incomplete: {boundary}")


# -- 5. determinism ------------------------------------------------------------

def test_end_to_end_determinism(capsys, runs):
    names = [p.name.split(".")[0] for p in bundled_scenes()]
    same = []
    for name in names:
        a = runs.get(name).trace_text().encode()
        scene, cfg = runs.scene(name), RunConfig(seed=0)
        b = Simulation(scene, cfg).run().trace_text().encode()
        same.append(a == b)
    verdict(capsys, "end-to-end determinism", all(same) and len(names) >= 4,
            f"{sum(same)}/{len(names)} bundled scenes byte-identical")


# -- 6. termination and completeness -------------------------------------------

def test_termination_and_completeness(capsys, runs):
    cfg = RunConfig()
    bound = cfg.explorer_sigma0 + cfg.explorer_sigma1 * cfg.reconstructor_range
    rows, ok = [], True
    for name in SCENES:
        nf = runs.get(name, **NOISE_FREE)
        noisy = runs.get(name)
        comp = min(o["completeness"] for o in nf.metrics.per_object)
        fine = (max(nf.wall, noisy.wall) < 60.0 and nf.reason in ("no_tasks", "no_assignable_tasks")
                and nf.metrics.explored_frac == 1.0 and comp >= 0.95 and noisy.metrics.o_rms <= bound)
        ok &= fine
        rows.append(f"{name} {max(nf.wall, noisy.wall):.1f}s explored={nf.metrics.explored_frac:.3f} "
                    f"min_comp={comp:.3f} o_rms={noisy.metrics.o_rms:.4f}")
    verdict(capsys, "termination and completeness", ok, f"bound {bound:.4f}; " + "; ".join(rows))


# -- 7. task-flow ablation -----------------------------------------------------

def test_taskflow_ablation(capsys, runs):
    lb, tc = 0, 0
    for name, seed in PAIRS:
        flow = runs.get(name, seed).metrics
        sync = runs.get(name, seed, scheduling="synchronous").metrics
        lb += flow.t_lb < sync.t_lb
        tc += flow.t_c <= sync.t_c
    verdict(capsys, "task-flow ablation", lb >= 8 and tc >= 7,
            f"T-LB lower in {lb}/10 pairs, T-C lower or equal in {tc}/10")


# -- 8. mode ablation ----------------------------------------------------------

def test_mode_ablation(capsys, runs):
    nore, noex = 0, 0
    for name, seed in PAIRS:
        full = runs.get(name, seed).metrics
        re_ = runs.get(name, seed, profile_override="explorer").metrics
        ex = runs.get(name, seed, profile_override="reconstructor").metrics
        nore += re_.t_c < full.t_c and (re_.d_c > full.d_c or re_.o_comp < full.o_comp)
        noex += ex.t_c > full.t_c
    verdict(capsys, "mode ablation", nore >= 7 and noex >= 8,
            f"NoRe faster but worse in {nore}/10 pairs, NoEx slower in {noex}/10")


# -- 9. one-cover and append-only ----------------------------------------------

def test_one_cover_and_append_only(capsys, runs):
    rounds, covered = 0, 0
    for seed in range(200):
        grid, frontiers, tasks, coverage, cfg = generation_round(seed)
        rounds += bool(tasks)
        covered += audit_one_cover(grid, frontiers, tasks, coverage, cfg)
    wakes, violations = 0, []
    extra = iter([(n, s) for s in range(3, 50) for n in SCENES])
    for name, seed in PAIRS:
        rep = runs.get(name, seed)
        wakes += rep.audited
        violations += rep.violations
    while wakes < 200:
        rep = runs.get(*next(extra))
        wakes += rep.audited
        violations += rep.violations
    ok = covered == 200 and not violations
    verdict(capsys, "one-cover and append-only", ok,
            f"one-cover held in {covered}/200 rounds ({rounds} with tasks), "
            f"{wakes} audited wakes with {len(violations)} queue violations")
