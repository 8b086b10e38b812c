import math

import numpy as np
import pytest

from autoscan.config import RunConfig
from autoscan.pathfinding import NavIndex
from autoscan.reconstruction import (ArmEnvelope, ConeParams, GroundTruthOracle, ObjectScanState,
                                     candidate_viewpoints_for_point, generate_reconstruction_tasks,
                                     incompleteness_scores, is_complete, update_history, view_coverage)
from autoscan.scene import FREE, OCCUPIED, OccupancyGrid, default_profiles, frustum_visible
from autoscan.tasks import Mode
from helpers import angdiff, los_blocked


def rec_profile():
    return default_profiles(RunConfig())[Mode.RECONSTRUCTOR]


# -- scores --------------------------------------------------------------------

def test_scores_examples():
    c = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]])
    assert incompleteness_scores(c[:1], c).tolist() == [0.0, 0.5, 1.0]
    assert incompleteness_scores(c, c).tolist() == [0.0, 0.0, 0.0]
    assert incompleteness_scores(np.zeros((0, 3)), c).tolist() == [1.0, 1.0, 1.0]


def test_scores_match_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(50):
        c = rng.normal(size=(int(rng.integers(1, 2049)), 3))
        p = rng.normal(size=(int(rng.integers(1, 2049)), 3))
        raw = np.sqrt(((c[:, None, :] - p[None, :, :]) ** 2).sum(-1)).min(axis=1)
        want = raw / raw.max() if raw.max() > 0 else np.zeros(len(c))
        assert np.array_equal(incompleteness_scores(p, c), want)


def state_with(scores, oid=1):
    s = ObjectScanState(oid)
    s.scores = np.asarray(scores, dtype=float)
    return s


def test_is_complete_boundary():
    assert is_complete(state_with([0, 0, 0]), 0.2)
    assert not is_complete(state_with([1, 1, 1]), 0.2)
    s = state_with([0, 0, 0, 0, 1])
    assert s.mean_score == 0.2
    assert not is_complete(s, 0.2)


# -- candidate viewpoints ------------------------------------------------------

def free_grid(w=40, h=40, res=0.1):
    g = OccupancyGrid(w, h, res)
    g.cells[:] = FREE
    return g


def test_upward_point_keeps_every_candidate():
    g = free_grid()
    nav = NavIndex(np.ones(g.shape, dtype=bool), 0.1)
    cone = ConeParams()
    out = candidate_viewpoints_for_point((2.0, 2.0, 0.2), (0.0, 0.0, 1.0), g, ArmEnvelope(), nav, cone)
    assert len(out) == cone.count
    z = 0.2 + cone.d_view * math.cos(cone.beta)
    assert all(c[2] == pytest.approx(z) for c in out)


def test_point_facing_into_wall_has_no_candidates():
    g = free_grid()
    g.cells[20:] = OCCUPIED
    nav = NavIndex(g.cells == FREE, 0.1)
    assert candidate_viewpoints_for_point((1.99, 2.0, 0.5), (1.0, 0.0, 0.0), g, ArmEnvelope(), nav) == []


def gt_world(scene):
    g = OccupancyGrid.for_scene(scene)
    g.cells[:] = np.where(scene.occupied, OCCUPIED, FREE)
    return g, g.navigation_mask(0.2)


def test_candidates_match_reachability_oracle(studio):
    g, nav = gt_world(studio)
    index = NavIndex(nav, 0.1)
    arm, cone = ArmEnvelope(), ConeParams()
    obj = studio.obj(3)
    navc = (np.argwhere(nav) + 0.5) * 0.1
    rng = np.random.default_rng(0)
    total = 0
    for k in rng.choice(len(obj.points), 25, replace=False):
        q, n = obj.points[k], obj.normals[k]
        got = candidate_viewpoints_for_point(q, n, g, arm, index, cone, owner=studio.owner, self_id=3)
        total += len(got)
        # independent: ring of positions at angle beta around n, then the three filters
        helper = np.array([0, 0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0, 0])
        u = np.cross(n, helper)
        u /= np.linalg.norm(u)
        w = np.cross(n, u)
        want = []
        for m in range(cone.count):
            a = 2 * math.pi * m / cone.count
            c = q + cone.d_view * (math.cos(cone.beta) * n + math.sin(cone.beta) * (math.cos(a) * u + math.sin(a) * w))
            if not (arm.z_min - 1e-9 <= c[2] <= arm.z_max + 1e-9):
                continue
            if not (0 <= c[0] < 4.0 and 0 <= c[1] < 4.0):
                continue
            if np.hypot(*(navc - c[:2]).T).min() > arm.radius:
                continue
            if los_blocked(c[0], c[1], q[0], q[1], g.cells == OCCUPIED, 0.1, ignore=studio.owner == 3):
                continue
            want.append(c)
        assert len(got) == len(want)
        for a, b in zip(got, want):
            assert np.allclose(a[:3], b)
            v = np.array(a[:3]) - q
            assert np.linalg.norm(v) == pytest.approx(cone.d_view)
            assert math.acos(np.clip(v @ n / cone.d_view, -1, 1)) == pytest.approx(cone.beta)
    assert total > 0


# -- view coverage -------------------------------------------------------------

def test_zero_scores_zero_coverage():
    g = free_grid()
    pts = np.array([[2.0, 2.0, 0.5]])
    nrm = np.array([[-1.0, 0, 0]])
    cov, _ = view_coverage((1.0, 2.0, 0.5, 0.0, 0.0), pts, nrm, np.zeros(1), rec_profile(), g)
    assert cov == 0.0


def test_on_axis_point_coverage_equals_score():
    g = free_grid()
    pts = np.array([[2.0, 2.0, 0.5]])
    nrm = np.array([[-1.0, 0, 0]])
    cov, mask = view_coverage((1.0, 2.0, 0.5, 0.0, 0.0), pts, nrm, np.array([0.7]), rec_profile(), g)
    assert cov == 0.7 and mask.tolist() == [True]


def brute_visible(c, pts, nrm, prof, blocking, ignore):
    x, y, z, th, ph = c[:5]
    out = np.zeros(len(pts), dtype=bool)
    for k, (p, n) in enumerate(zip(pts, nrm)):
        v = p - np.array([x, y, z])
        d = np.linalg.norm(v)
        if not 0 < d <= prof.range or angdiff(math.atan2(v[1], v[0]), th) > prof.fov / 2:
            continue
        if abs(math.atan2(v[2], math.hypot(v[0], v[1])) - ph) > prof.elevation or n @ -v <= 0:
            continue
        out[k] = not los_blocked(x, y, p[0], p[1], blocking, 0.1, ignore=ignore)
    return out


def holed_state(scene, oid, n=512):
    obj = scene.obj(oid)
    comp, cn = GroundTruthOracle(scene, n).complete(None, oid)
    # hole: the face pointing toward -x is unobserved
    seen = obj.points[obj.normals[:, 0] > -0.5]
    st = ObjectScanState(oid, seen, comp, cn, incompleteness_scores(seen, comp))
    return st


def test_best_candidate_matches_exhaustive(studio):
    g, nav = gt_world(studio)
    prof = rec_profile()
    st = holed_state(studio, 3)
    tasks = generate_reconstruction_tasks({3: st}, g, NavIndex(nav, 0.1), prof, tau=0.0, cap=1,
                                          owner=studio.owner)
    assert len(tasks) == 1
    t = tasks[0]
    k = int(np.argmax(st.scores))
    cands = candidate_viewpoints_for_point(st.completion[k], st.completion_normals[k], g, ArmEnvelope(),
                                           NavIndex(nav, 0.1), ConeParams(), 2 * prof.range,
                                           owner=studio.owner, self_id=3)
    blocking, own = g.cells == OCCUPIED, studio.owner == 3
    covs = [st.scores[brute_visible(c, st.completion, st.completion_normals, prof, blocking, own)].sum()
            for c in cands]
    mine = st.scores[brute_visible((t.x, t.y, t.z, t.theta, t.phi), st.completion, st.completion_normals,
                                   prof, blocking, own)].sum()
    assert mine == pytest.approx(max(covs))
    # the chosen view sees the worst point
    idx, _ = frustum_visible(st.completion[k:k + 1], st.completion_normals[k:k + 1], (t.x, t.y, t.z), t.theta,
                             t.phi, prof, blocking, 0.1, owner=studio.owner, self_id=3)
    assert len(idx) == 1


def test_complete_objects_give_no_tasks(studio):
    g, nav = gt_world(studio)
    states = {o.instance_id: state_with(np.zeros(10), o.instance_id) for o in studio.objects}
    assert generate_reconstruction_tasks(states, g, NavIndex(nav, 0.1), rec_profile()) == []


def test_tasks_ordered_by_mean_score(studio):
    g, nav = gt_world(studio)
    a, b = holed_state(studio, 1), holed_state(studio, 3)
    a.scores = np.full(len(a.scores), 0.3)
    b.scores = np.full(len(b.scores), 0.6)
    tasks = generate_reconstruction_tasks({1: a, 3: b}, g, NavIndex(nav, 0.1), rec_profile(), owner=studio.owner)
    ids = [t.target_instance for t in tasks]
    assert set(ids) == {1, 3}
    assert ids == sorted(ids, key=lambda i: i != 3)


def test_history_rule():
    s = ObjectScanState(1)
    v = (1.0, 1.0, 0.8)
    assert not update_history(s, v, 0.5, 0.5)
    assert not update_history(s, v, 0.5, 0.5)
    assert update_history(s, (1.1, 1.0, 0.8), 0.5, 0.5)
    assert len(s.blacklist) == 1
    s = ObjectScanState(1)
    update_history(s, v, 0.5, 0.5)
    update_history(s, v, 0.5, 0.6)
    assert not update_history(s, v, 0.6, 0.6)
    assert s.blacklist == []
