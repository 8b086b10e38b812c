"""Evaluation metrics: object completeness/accuracy, distance, time and load balance."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .scene import FREE

RUN_COLUMNS = ["scene", "seed", "scheduling", "mode_policy", "profile_override", "o_comp", "o_rms", "d_c",
               "t_c", "d_lb", "t_lb", "explored_frac", "n_exp_tasks", "n_rec_tasks", "mode_switches",
               "wakes", "reason"]


class EmptyReconstruction(ValueError):
    pass


@dataclass
class MetricsReport:
    o_comp: float
    o_rms: float
    d_c: float
    t_c: float
    d_lb: float
    t_lb: float
    explored_frac: float = 1.0
    per_object: list = field(default_factory=list)
    per_robot: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def object_completeness(recon, gt, tau_d: float = 0.02) -> float:
    """Fraction of ground-truth points within ``tau_d`` of the reconstruction."""
    gt = np.asarray(gt, dtype=float).reshape(-1, 3)
    recon = np.asarray(recon, dtype=float).reshape(-1, 3)
    if len(gt) == 0:
        raise ValueError("empty ground truth")
    if len(recon) == 0:
        return 0.0
    d, _ = cKDTree(recon).query(gt)
    return float((d <= tau_d).mean())


def object_accuracy(recon, gt) -> float:
    """Mean nearest distance from reconstructed points to the ground truth."""
    recon = np.asarray(recon, dtype=float).reshape(-1, 3)
    if len(recon) == 0:
        raise EmptyReconstruction("no reconstructed points")
    d, _ = cKDTree(np.asarray(gt, dtype=float).reshape(-1, 3)).query(recon)
    return float(d.mean())


def reconstructed_cloud(obj, best_sigma: np.ndarray, seed: int) -> np.ndarray:
    """Observed points displaced along their normal by best-sigma times a fixed normal draw."""
    seen = np.isfinite(best_sigma)
    z = np.random.default_rng([seed, obj.instance_id]).standard_normal(len(obj.points))
    pts = obj.points[seen] + (best_sigma[seen] * z[seen])[:, None] * obj.normals[seen]
    return pts


def load_balance(distances) -> float:
    d = np.asarray(distances, dtype=float)
    if len(d) <= 1 or d.mean() == 0:
        return 0.0
    return float(d.std() / d.mean())


def efficiency_and_balance(robots, t_c: float):
    dists = [r.odometer for r in robots]
    d_c = float(sum(dists))
    d_lb = load_balance(dists)
    wait = sum(r.wait_time for r in robots)
    t_lb = float(wait / (len(robots) * t_c)) if t_c > 0 else 0.0
    return d_c, t_c, d_lb, min(max(t_lb, 0.0), 1.0)


def reachable_cells(scene, robot_radius: float) -> np.ndarray:
    """Ground-truth navigable cells connected to any robot start (8-connected)."""
    from scipy import ndimage
    free = ~scene.occupied
    dist = ndimage.distance_transform_edt(free) * scene.resolution
    nav = free & (dist > robot_radius + 1e-9)
    lab, _n = ndimage.label(nav, structure=np.ones((3, 3), dtype=bool))
    keep = set()
    for x, y, _ in scene.robot_starts:
        c = scene.cell_of(x, y)
        if lab[c] > 0:
            keep.add(lab[c])
    return np.isin(lab, sorted(keep)) if keep else np.zeros_like(nav)


def explored_fraction(scene, grid, robot_radius: float) -> float:
    reach = reachable_cells(scene, robot_radius)
    if not reach.any():
        return 1.0
    return float((grid.cells[reach] == FREE).mean())


def compute_metrics(scene, report, config) -> MetricsReport:
    per_obj = []
    comps, rms = [], []
    for obj in scene.objects:
        bs = report.records.best_sigma[obj.instance_id]
        cloud = reconstructed_cloud(obj, bs, config.seed)
        c = object_completeness(cloud, obj.points, config.tau_d)
        comps.append(c)
        row = {"id": obj.instance_id, "class": obj.class_label, "completeness": c,
               "observed_points": int(len(cloud)), "rms": None}
        if len(cloud):
            row["rms"] = object_accuracy(cloud, obj.points)
            rms.append(row["rms"])
        per_obj.append(row)
    d_c, t_c, d_lb, t_lb = efficiency_and_balance(report.robots, report.t_end)
    per_robot = [{"id": r.id, "distance": r.odometer, "busy": r.busy_time, "wait": r.wait_time,
                  "mode_switches": r.mode_switches} for r in report.robots]
    return MetricsReport(
        o_comp=float(np.mean(comps)) if comps else 0.0,
        o_rms=float(np.mean(rms)) if rms else 0.0,
        d_c=d_c, t_c=t_c, d_lb=d_lb, t_lb=t_lb,
        explored_frac=explored_fraction(scene, report.grid, config.robot_radius),
        per_object=per_obj, per_robot=per_robot,
    )


def run_row(scene_name: str, config, report) -> dict:
    m = report.metrics
    return {
        "scene": scene_name, "seed": config.seed, "scheduling": config.scheduling,
        "mode_policy": config.mode_policy, "profile_override": config.profile_override,
        "o_comp": m.o_comp, "o_rms": m.o_rms, "d_c": m.d_c, "t_c": m.t_c, "d_lb": m.d_lb, "t_lb": m.t_lb,
        "explored_frac": m.explored_frac, "n_exp_tasks": report.executed.get("exploration", 0),
        "n_rec_tasks": report.executed.get("reconstruction", 0),
        "mode_switches": report.executed.get("mode_switches", 0), "wakes": report.wakes, "reason": report.reason,
    }


def format_row(row: dict) -> dict:
    return {k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()}


def write_csv(rows, fh, columns=RUN_COLUMNS):
    w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(format_row(r))


def csv_text(rows, columns=RUN_COLUMNS) -> str:
    buf = io.StringIO()
    write_csv(rows, buf, columns)
    return buf.getvalue()
