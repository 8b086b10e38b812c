"""Per-object completeness analysis and cone-constrained reconstruction viewpoints."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .pathfinding import NavIndex
from .scene import OCCUPIED, OccupancyGrid, SensorProfile, frustum_visible
from .geometry import segments_blocked
from .tasks import ReconstructionTask, wrap_angle


@dataclass(frozen=True)
class ArmEnvelope:
    z_min: float = 0.3
    z_max: float = 1.2
    radius: float = 0.9


@dataclass(frozen=True)
class ConeParams:
    beta: float = math.radians(35.0)
    d_view: float = 0.8
    count: int = 12


@dataclass
class ObjectScanState:
    instance_id: int
    observed_cloud: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    completion: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    completion_normals: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))
    history: list = field(default_factory=list)
    blacklist: list = field(default_factory=list)

    @property
    def mean_score(self) -> float:
        return float(self.scores.mean()) if len(self.scores) else 0.0


class GroundTruthOracle:
    """Completion stand-in: the object's true surface resampled to N points."""

    def __init__(self, scene, n: int = 2048):
        self.scene = scene
        self.n = n
        self._cache = {}

    def _resample(self, instance_id: int):
        if instance_id not in self._cache:
            obj = self.scene.obj(instance_id)
            m = len(obj.points)
            rng = np.random.default_rng(instance_id)
            if m >= self.n:
                idx = np.sort(rng.choice(m, self.n, replace=False))
            else:
                idx = np.concatenate([np.arange(m), np.sort(rng.choice(m, self.n - m, replace=True))])
            self._cache[instance_id] = (obj.points[idx].copy(), obj.normals[idx].copy())
        return self._cache[instance_id]

    def complete(self, observed_cloud, instance_id: int):
        return self._resample(instance_id)


class NoisyOracle(GroundTruthOracle):
    """Ground-truth resample with isotropic Gaussian jitter on positions."""

    def __init__(self, scene, n: int = 2048, jitter: float = 0.02, seed: int = 0):
        super().__init__(scene, n)
        self.jitter = jitter
        self.seed = seed
        self._noisy = {}

    def complete(self, observed_cloud, instance_id: int):
        if instance_id not in self._noisy:
            pts, nrm = self._resample(instance_id)
            rng = np.random.default_rng([self.seed, instance_id])
            self._noisy[instance_id] = (pts + rng.normal(0.0, self.jitter, pts.shape), nrm)
        return self._noisy[instance_id]


def make_oracle(scene, config):
    if config.oracle == "noisy":
        return NoisyOracle(scene, config.n_completion, config.oracle_jitter, config.seed)
    return GroundTruthOracle(scene, config.n_completion)


def incompleteness_scores(observed, completion) -> np.ndarray:
    """Nearest distance from each completion point to the observed cloud, divided by the max."""
    completion = np.asarray(completion, dtype=float)
    observed = np.asarray(observed, dtype=float).reshape(-1, 3)
    if len(observed) == 0:
        return np.ones(len(completion))
    _d, idx = cKDTree(observed).query(completion)
    raw = np.sqrt(((completion - observed[idx]) ** 2).sum(axis=1))
    top = raw.max()
    if top == 0:
        return np.zeros(len(completion))
    return raw / top


def is_complete(state: ObjectScanState, tau: float = 0.2) -> bool:
    return state.mean_score < tau


def observed_cloud(obj, accepted: np.ndarray, n: int) -> np.ndarray:
    pts = obj.points[accepted]
    if len(pts) > n:
        pts = pts[np.linspace(0, len(pts) - 1, n).astype(np.int64)]
    return pts


def refresh_state(state: ObjectScanState, obj, accepted: np.ndarray, oracle, n: int):
    state.observed_cloud = observed_cloud(obj, accepted, n)
    state.completion, state.completion_normals = oracle.complete(state.observed_cloud, obj.instance_id)
    state.scores = incompleteness_scores(state.observed_cloud, state.completion)
    return state


def _perp_basis(n):
    n = np.asarray(n, dtype=float)
    helper = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(n, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(n, u)


def look_at(frm, to):
    d = np.asarray(to, dtype=float) - np.asarray(frm, dtype=float)
    theta = wrap_angle(math.atan2(d[1], d[0]))
    phi = math.atan2(d[2], math.hypot(d[0], d[1]))
    return theta, phi


def cone_positions(q, n, cone: ConeParams) -> np.ndarray:
    """Viewpoint positions on the base circle of the optic cone at ``q`` around ``n``."""
    u, w = _perp_basis(n)
    a = 2 * np.pi * np.arange(cone.count) / cone.count
    ring = np.cos(a)[:, None] * u + np.sin(a)[:, None] * w
    return np.asarray(q) + cone.d_view * (math.cos(cone.beta) * np.asarray(n) + math.sin(cone.beta) * ring)


def candidate_viewpoints_for_point(q, n, grid: OccupancyGrid, arm: ArmEnvelope, nav_index: NavIndex,
                                   cone: ConeParams = ConeParams(), max_base_dist: float = math.inf,
                                   owner=None, self_id=None):
    """Reachable viewpoints ``(x, y, z, theta, phi, base_cell)`` looking at ``q``.

    Kept when the height is inside the arm envelope, a navigable cell lies
    within arm reach (and within ``max_base_dist`` of ``q``), and the 2D
    segment to ``q`` crosses no known obstacle other than the target itself.
    """
    q = np.asarray(q, dtype=float)
    pos = cone_positions(q, n, cone)
    res = grid.resolution
    w, h = grid.shape
    out = []
    blocking = grid.cells == OCCUPIED
    for c in pos:
        if not (arm.z_min - 1e-9 <= c[2] <= arm.z_max + 1e-9):
            continue
        if not (0 <= c[0] < w * res and 0 <= c[1] < h * res):
            continue
        base, dist = nav_index.nearest(c[0], c[1])
        if base is None or dist > arm.radius:
            continue
        bx, by = (base[0] + 0.5) * res, (base[1] + 0.5) * res
        if math.hypot(bx - q[0], by - q[1]) > max_base_dist:
            continue
        if segments_blocked(c[0], c[1], q[0], q[1], res, blocking, owner=owner, self_id=self_id)[0]:
            continue
        theta, phi = look_at(c, q)
        out.append((float(c[0]), float(c[1]), float(c[2]), theta, phi, base))
    return out


def view_coverage(v, completion, normals, scores, profile: SensorProfile, grid: OccupancyGrid,
                  owner=None, self_id=None):
    """Sum of scores of completion points visible from viewpoint ``v``; also the mask."""
    x, y, z, theta, phi = v[:5]
    idx, _ = frustum_visible(completion, normals, (x, y, z), theta, phi, profile,
                             grid.cells == OCCUPIED, grid.resolution, owner=owner, self_id=self_id)
    mask = np.zeros(len(completion), dtype=bool)
    mask[idx] = True
    return float(scores[mask].sum()), mask


def in_blacklist(p, blacklist) -> bool:
    return any(math.dist(p, c) <= r for c, r in blacklist)


def generate_reconstruction_tasks(states: dict, grid: OccupancyGrid, nav_index: NavIndex, profile: SensorProfile,
                                  arm: ArmEnvelope = ArmEnvelope(), cone: ConeParams = ConeParams(),
                                  tau: float = 0.2, cap: int = 4, attempts: int = 8,
                                  owner=None, pending=(), fail_radius: float = 0.0):
    """Viewpoints for every incomplete object, most incomplete object first.

    Per object: take the highest-scoring point outside blacklisted regions,
    build its optic-cone candidates, keep the one with the largest view
    coverage and zero the scores it covers; repeat up to ``cap`` times or
    until the residual mean score drops below ``tau``. Points covered by
    ``pending`` (already queued) tasks are zeroed up front. When a point
    has no reachable viewpoint, similar-facing points within ``fail_radius``
    are skipped too.
    """
    max_base = 2.0 * profile.range
    ordered = sorted((s for s in states.values() if len(s.scores) and not is_complete(s, tau)),
                     key=lambda s: (-s.mean_score, s.instance_id))
    tasks = []
    for st in ordered:
        scores = st.scores.copy()
        for t in pending:
            if t.target_instance == st.instance_id:
                _cov, mask = view_coverage((t.x, t.y, t.z, t.theta, t.phi), st.completion,
                                           st.completion_normals, scores, profile, grid, owner, st.instance_id)
                scores[mask] = 0.0
        excluded = np.zeros(len(scores), dtype=bool)
        for k in range(len(scores)):
            if st.blacklist and in_blacklist(st.completion[k], st.blacklist):
                excluded[k] = True
        made = tries = 0
        while made < cap and tries < attempts and scores.mean() >= tau:
            live = np.where(excluded | (scores <= 0), -1.0, scores)
            k = int(np.argmax(live))
            if live[k] <= 0:
                break
            q, n = st.completion[k], st.completion_normals[k]
            cands = candidate_viewpoints_for_point(q, n, grid, arm, nav_index, cone, max_base,
                                                   owner, st.instance_id)
            cands = [c for c in cands if not in_blacklist(c[:3], st.blacklist)]
            best, best_cov, best_mask = None, 0.0, None
            for c in cands:
                cov, mask = view_coverage(c, st.completion, st.completion_normals, scores, profile, grid,
                                          owner, st.instance_id)
                if cov > best_cov:
                    best, best_cov, best_mask = c, cov, mask
            if best is None:
                excluded[k] = True
                if fail_radius > 0:
                    near = np.linalg.norm(st.completion - q, axis=1) <= fail_radius
                    excluded |= near & (st.completion_normals @ n > 0.9)
                tries += 1
                continue
            x, y, z, theta, phi, base = best
            tasks.append(ReconstructionTask(x, y, z, theta, phi, st.instance_id, cell=base,
                                            source=tuple(float(v) for v in q)))
            scores[best_mask] = 0.0
            made += 1
    return tasks


def update_history(state: ObjectScanState, viewpoint, completeness_before: float, completeness_after: float,
                   rho: float = 0.5, eps: float = 0.01) -> bool:
    """Record a finished scan; blacklist the neighbourhood after three fruitless nearby scans."""
    state.history.append((tuple(float(v) for v in viewpoint[:3]), completeness_before, completeness_after))
    if len(state.history) < 3:
        return False
    last = state.history[-3:]
    pts = [np.array(h[0]) for h in last]
    close = all(np.linalg.norm(a - b) <= rho for a in pts for b in pts)
    stalled = all(after - before < eps for _v, before, after in last)
    if close and stalled:
        centre = tuple(float(v) for v in np.mean(pts, axis=0))
        state.blacklist.append((centre, rho))
        return True
    return False
