"""Ground-truth scene, shared occupancy belief and the raycast sensor."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import generators
from .geometry import angle_diff, segments_blocked, traverse
from .tasks import Mode, RobotState

UNKNOWN, FREE, OCCUPIED = 0, 1, 2

SCENE_DIR = Path(__file__).parent / "scenes"


class ParseError(Exception):
    pass


class ValidationError(Exception):
    pass


@dataclass
class GroundTruthObject:
    instance_id: int
    class_label: str
    points: np.ndarray
    normals: np.ndarray
    footprint_cells: set = field(default_factory=set)


@dataclass
class SceneModel:
    grid_width: int
    grid_height: int
    resolution: float
    occupied_cells: set
    objects: list
    robot_starts: list
    name: str = "scene"

    def __post_init__(self):
        self.validate()
        w, h = self.grid_width, self.grid_height
        self.occupied = np.zeros((w, h), dtype=bool)
        for i, j in self.occupied_cells:
            self.occupied[i, j] = True
        # instance id owning each occupied cell, -1 for walls and free space
        self.owner = np.full((w, h), -1, dtype=np.int64)
        for obj in self.objects:
            for i, j in obj.footprint_cells:
                self.owner[i, j] = obj.instance_id
        self._by_id = {o.instance_id: o for o in self.objects}

    def validate(self):
        w, h, res = self.grid_width, self.grid_height, self.resolution
        if not res > 0:
            raise ValidationError(f"resolution must be > 0, got {res}")
        if w <= 0 or h <= 0:
            raise ValidationError(f"grid size must be positive, got {w}x{h}")
        for i, j in sorted(self.occupied_cells):
            if not (0 <= i < w and 0 <= j < h):
                raise ValidationError(f"occupied cell {(i, j)} out of bounds")
        seen = set()
        for obj in self.objects:
            if obj.instance_id in seen:
                raise ValidationError(f"duplicate object id {obj.instance_id}")
            seen.add(obj.instance_id)
            if len(obj.points) != len(obj.normals):
                raise ValidationError(f"object {obj.instance_id}: points/normals length mismatch")
            if len(obj.points):
                norms = np.linalg.norm(obj.normals, axis=1)
                if np.any(np.abs(norms - 1.0) > 1e-6):
                    raise ValidationError(f"object {obj.instance_id}: normals must have unit length")
                p = obj.points
                if (p[:, 2] < 0).any():
                    raise ValidationError(f"object {obj.instance_id}: point below the floor (z < 0)")
                if (p[:, 0] < 0).any() or (p[:, 1] < 0).any() or (p[:, 0] > w * res).any() or (p[:, 1] > h * res).any():
                    raise ValidationError(f"object {obj.instance_id}: point outside the scene bounds")
            for c in sorted(obj.footprint_cells):
                if c not in self.occupied_cells:
                    raise ValidationError(
                        f"object {obj.instance_id}: footprint cell {c} is not occupied (objects are obstacles)"
                    )
        for k, (x, y, _th) in enumerate(self.robot_starts):
            c = (int(math.floor(x / res)), int(math.floor(y / res)))
            if not (0 <= c[0] < w and 0 <= c[1] < h):
                raise ValidationError(f"robot {k} start {(x, y)} out of bounds")
            if c in self.occupied_cells:
                raise ValidationError(f"robot {k} start cell {c} is occupied")

    def obj(self, instance_id: int) -> GroundTruthObject:
        return self._by_id[instance_id]

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return int(math.floor(x / self.resolution)), int(math.floor(y / self.resolution))

    def center(self, cell) -> tuple[float, float]:
        return (cell[0] + 0.5) * self.resolution, (cell[1] + 0.5) * self.resolution


class OccupancyGrid:
    """Trinary belief map indexed ``cells[i, j]`` with i along x."""

    def __init__(self, width: int, height: int, resolution: float):
        self.cells = np.full((width, height), UNKNOWN, dtype=np.int8)
        self.resolution = resolution

    @classmethod
    def for_scene(cls, scene: SceneModel) -> "OccupancyGrid":
        return cls(scene.grid_width, scene.grid_height, scene.resolution)

    @property
    def shape(self):
        return self.cells.shape

    def copy(self) -> "OccupancyGrid":
        g = OccupancyGrid.__new__(OccupancyGrid)
        g.cells = self.cells.copy()
        g.resolution = self.resolution
        return g

    def count(self, state: int) -> int:
        return int((self.cells == state).sum())

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return int(math.floor(x / self.resolution)), int(math.floor(y / self.resolution))

    def center(self, cell) -> tuple[float, float]:
        return (cell[0] + 0.5) * self.resolution, (cell[1] + 0.5) * self.resolution

    def in_bounds(self, cell) -> bool:
        return 0 <= cell[0] < self.cells.shape[0] and 0 <= cell[1] < self.cells.shape[1]

    def navigation_mask(self, robot_radius: float) -> np.ndarray:
        """Free cells farther than ``robot_radius`` from any known obstacle."""
        occ = self.cells == OCCUPIED
        if not occ.any():
            return self.cells == FREE
        dist = ndimage.distance_transform_edt(~occ) * self.resolution
        return (self.cells == FREE) & (dist > robot_radius + 1e-9)


class ObservationRecord:
    """Per object point: lowest observation noise so far and observation count."""

    def __init__(self, scene: SceneModel):
        self.best_sigma = {o.instance_id: np.full(len(o.points), np.inf) for o in scene.objects}
        self.count = {o.instance_id: np.zeros(len(o.points), dtype=np.int64) for o in scene.objects}

    def observe(self, instance_id: int, idx: np.ndarray, sigma: np.ndarray):
        bs = self.best_sigma[instance_id]
        np.minimum.at(bs, idx, sigma)
        np.add.at(self.count[instance_id], idx, 1)

    def observed(self, instance_id: int) -> np.ndarray:
        return self.count[instance_id] > 0

    def accepted(self, instance_id: int, accept_sigma: float) -> np.ndarray:
        return self.best_sigma[instance_id] <= accept_sigma

    def copy(self) -> "ObservationRecord":
        r = ObservationRecord.__new__(ObservationRecord)
        r.best_sigma = {k: v.copy() for k, v in self.best_sigma.items()}
        r.count = {k: v.copy() for k, v in self.count.items()}
        return r


@dataclass(frozen=True)
class SensorProfile:
    mode: Mode
    fov: float
    range: float
    speed: float
    noise_sigma0: float
    noise_sigma1: float
    # half aperture around the pitch angle; None leaves elevation unrestricted
    elevation: float | None = None

    def __post_init__(self):
        if not 0 < self.fov < math.pi:
            raise ValidationError(f"fov must be in (0, pi), got {self.fov}")
        if not self.range > 0 or not self.speed > 0:
            raise ValidationError("range and speed must be positive")
        if self.noise_sigma0 < 0 or self.noise_sigma1 < 0:
            raise ValidationError("noise parameters must be non-negative")

    def sigma(self, distance):
        return self.noise_sigma0 + self.noise_sigma1 * distance


def default_profiles(config=None) -> dict:
    """Explorer/Reconstructor profiles from a RunConfig (defaults when None)."""
    if config is None:
        from .config import RunConfig
        config = RunConfig()
    e = SensorProfile(Mode.EXPLORER, math.radians(config.explorer_fov_deg), config.explorer_range,
                      config.explorer_speed, config.explorer_sigma0, config.explorer_sigma1, None)
    r = SensorProfile(Mode.RECONSTRUCTOR, math.radians(config.reconstructor_fov_deg),
                      config.reconstructor_range, config.reconstructor_speed, config.rec_sigma0,
                      config.rec_sigma1, math.radians(config.reconstructor_elevation_deg))
    check_profile_pair(e, r)
    return {Mode.EXPLORER: e, Mode.RECONSTRUCTOR: r}


def check_profile_pair(explorer: SensorProfile, reconstructor: SensorProfile):
    if not explorer.range > reconstructor.range:
        raise ValidationError("Explorer range must exceed Reconstructor range")
    if not explorer.speed > reconstructor.speed:
        raise ValidationError("Explorer speed must exceed Reconstructor speed")


@dataclass
class ScanResult:
    newly_freed: int
    newly_occupied: int
    observed_points: list


def frustum_visible(points, normals, sensor, theta: float, phi: float, profile: SensorProfile,
                    blocking: np.ndarray, resolution: float, owner=None, self_id=None):
    """Indices and distances of ``points`` the sensor sees.

    A point is seen when it is within range, inside the horizontal fov (and
    the elevation aperture when the profile has one), its surface faces the
    sensor, and the 2D segment to it crosses no blocking cell other than
    cells owned by ``self_id``.
    """
    sx, sy, sz = sensor
    if len(points) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    v = points - np.array([sx, sy, sz])
    dist = np.linalg.norm(v, axis=1)
    ok = (dist <= profile.range) & (dist > 0)
    ok &= np.abs(angle_diff(np.arctan2(v[:, 1], v[:, 0]), theta)) <= profile.fov / 2
    if profile.elevation is not None:
        horiz = np.hypot(v[:, 0], v[:, 1])
        ok &= np.abs(np.arctan2(v[:, 2], horiz) - phi) <= profile.elevation
    ok &= np.einsum("ij,ij->i", normals, -v) > 0
    idx = np.flatnonzero(ok)
    if len(idx):
        blocked = segments_blocked(sx, sy, points[idx, 0], points[idx, 1], resolution, blocking,
                                   owner=owner, self_id=self_id)
        idx = idx[~blocked]
    return idx, dist[idx]


def visible_points(scene: SceneModel, obj: GroundTruthObject, sensor, theta: float, phi: float,
                   profile: SensorProfile):
    """Ground-truth points of ``obj`` seen from ``sensor`` (physical occlusion)."""
    return frustum_visible(obj.points, obj.normals, sensor, theta, phi, profile, scene.occupied,
                           scene.resolution, owner=scene.owner, self_id=obj.instance_id)


def raycast_scan(scene: SceneModel, grid: OccupancyGrid, records: ObservationRecord, pose,
                 profile: SensorProfile) -> ScanResult:
    """One depth scan from ``pose = (x, y, z, theta, phi)``.

    Updates the belief grid along horizontal rays spread over the fov and
    records every object point the sensor sees.
    """
    x, y, z, theta, phi = pose
    res = scene.resolution
    step = math.atan(res / profile.range)
    n = int(math.ceil(profile.fov / step)) + 1
    angles = theta + np.linspace(-profile.fov / 2, profile.fov / 2, n)
    ex = x + profile.range * np.cos(angles)
    ey = y + profile.range * np.sin(angles)
    ci, cj, valid = traverse(np.full(n, x), np.full(n, y), ex, ey, res)

    w, h = grid.shape
    inside = (ci >= 0) & (ci < w) & (cj >= 0) & (cj < h)
    # a ray ends at the first cell outside the map
    alive = np.cumprod(inside | ~valid, axis=1).astype(bool) & valid & inside
    cic, cjc = np.clip(ci, 0, w - 1), np.clip(cj, 0, h - 1)
    hit = alive & scene.occupied[cic, cjc]
    before_hit = np.cumsum(hit, axis=1) - hit == 0
    free_mask = alive & before_hit & ~hit
    first_hit = hit & (np.cumsum(hit, axis=1) == 1)

    cells = grid.cells
    fi, fj = cic[free_mask], cjc[free_mask]
    oi, oj = cic[first_hit], cjc[first_hit]
    newly_free = np.zeros((w, h), dtype=bool)
    newly_free[fi, fj] = True
    newly_free &= cells == UNKNOWN
    newly_occ = np.zeros((w, h), dtype=bool)
    newly_occ[oi, oj] = True
    newly_occ &= cells == UNKNOWN
    cells[newly_free] = FREE
    cells[newly_occ] = OCCUPIED

    observed = []
    for obj in scene.objects:
        idx, dist = visible_points(scene, obj, (x, y, z), theta, phi, profile)
        if len(idx):
            sigma = profile.sigma(dist)
            records.observe(obj.instance_id, idx, sigma)
            observed.extend(zip([obj.instance_id] * len(idx), idx.tolist(), sigma.tolist()))
    return ScanResult(int(newly_free.sum()), int(newly_occ.sum()), observed)


def initial_turnaround(scene: SceneModel, grid: OccupancyGrid, records: ObservationRecord,
                       robot: RobotState, profile: SensorProfile, head_height: float = 1.2,
                       headings: int = 8) -> list[ScanResult]:
    """Spin in place, scanning with the Explorer profile at evenly spaced headings."""
    out = []
    for k in range(headings):
        th = robot.theta + 2 * math.pi * k / headings
        out.append(raycast_scan(scene, grid, records, (robot.x, robot.y, head_height, th, 0.0), profile))
    return out


# -- scene files ---------------------------------------------------------------

def _rect_cells(rect, w, h, what):
    if len(rect) != 4:
        raise ParseError(f"{what}: rectangle must be [i0, j0, i1, j1], got {rect}")
    i0, j0, i1, j1 = (int(v) for v in rect)
    return {(i, j) for i in range(min(i0, i1), max(i0, i1) + 1) for j in range(min(j0, j1), max(j0, j1) + 1)}


def footprint_from_outline(outline, points, w, h, res) -> set:
    cells = set()
    if outline is not None:
        sub = (np.arange(4) + 0.5) / 4
        ii, jj = np.meshgrid(np.arange(w), np.arange(h), indexing="ij")
        hit = np.zeros((w, h), dtype=bool)
        for a in sub:
            for b in sub:
                hit |= outline((ii + a) * res, (jj + b) * res)
    else:
        hit = np.zeros((w, h), dtype=bool)
        ci = np.clip(np.floor(points[:, 0] / res).astype(int), 0, w - 1)
        cj = np.clip(np.floor(points[:, 1] / res).astype(int), 0, h - 1)
        hit[ci, cj] = True
        hit = ndimage.binary_fill_holes(hit)
    for i, j in np.argwhere(hit):
        cells.add((int(i), int(j)))
    return cells


def parse_scene(doc: dict, base_dir: Path | None = None, name: str = "scene") -> SceneModel:
    try:
        res = float(doc["resolution"])
        w, h = (int(v) for v in doc["size"])
        walls = doc.get("walls", [])
        objs = doc.get("objects", [])
        robots = doc["robots"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed scene: {exc!r}") from exc
    if not res > 0:
        raise ValidationError(f"resolution must be > 0, got {res}")

    occupied = set()
    for k, rect in enumerate(walls):
        occupied |= _rect_cells(rect, w, h, f"walls[{k}]")

    objects = []
    for k, o in enumerate(objs):
        try:
            gen = o.get("generator")
            if gen is None and "points_file" in o:
                gen = {"type": "points_file", "path": o["points_file"]}
            pts, nrm, outline = generators.build(gen, base_dir)
            oid = int(o["id"])
            label = str(o.get("class", "object"))
        except (KeyError, TypeError, ValueError, OSError) as exc:
            raise ParseError(f"objects[{k}]: {exc}") from exc
        fp = footprint_from_outline(outline, pts, w, h, res)
        if o.get("solid", True):
            occupied |= fp
        objects.append(GroundTruthObject(oid, label, pts, nrm, fp))

    try:
        starts = [(float(r[0]), float(r[1]), float(r[2]) if len(r) > 2 else 0.0) for r in robots]
    except (TypeError, ValueError, IndexError) as exc:
        raise ParseError(f"robots: {exc!r}") from exc
    return SceneModel(w, h, res, occupied, objects, starts, name=doc.get("name", name))


def resolve_scene_path(path: str | Path) -> Path:
    """Accept a file path or the name of a bundled scene."""
    p = Path(path)
    if p.exists():
        return p
    for cand in (SCENE_DIR / p.name, SCENE_DIR / f"{p.name}.scene"):
        if cand.exists():
            return cand
    raise FileNotFoundError(str(path))


def load_scene(path: str | Path) -> SceneModel:
    p = resolve_scene_path(path)
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{p}: {exc}") from exc
    return parse_scene(doc, base_dir=p.parent, name=p.stem)


def bundled_scenes() -> list[Path]:
    return sorted(SCENE_DIR.glob("*.scene"))
