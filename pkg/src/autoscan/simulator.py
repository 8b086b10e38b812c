"""Discrete-event simulation of the task-flow multi-robot scanning loop."""
from __future__ import annotations

import heapq
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import exploration, reconstruction
from .assignment import assign
from .config import RunConfig
from .pathfinding import NavIndex, astar_path, connected_to, escape_path
from .reconstruction import ArmEnvelope, ConeParams, ObjectScanState
from .scene import (FREE, ObservationRecord, OccupancyGrid, SceneModel, default_profiles, initial_turnaround,
                    raycast_scan)
from .tasks import ExplorationTask, Mode, ReconstructionTask, RobotState, wrap_angle

log = logging.getLogger(__name__)

KINDS = ("ArriveWaypoint", "ScanTick", "TaskDone", "QueueLow", "CenterWake", "Terminate")
RANK = {k: i for i, k in enumerate(KINDS)}


class DeadlockDetected(RuntimeError):
    pass


def _round(obj):
    if isinstance(obj, float):
        return round(obj, 6) if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return _round(float(obj))
    return obj


def trace_line(t, kind, robot, data) -> str:
    rec = {"t": _round(float(t)), "kind": kind, "robot": robot, "data": _round(data or {})}
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def rle_encode(cells: np.ndarray) -> list:
    """Run-length pairs [value, count] of the grid flattened in (i, j) order."""
    flat = cells.ravel()
    if len(flat) == 0:
        return []
    change = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [len(flat)]])
    return [[int(flat[s]), int(e - s)] for s, e in zip(starts, ends)]


def rle_decode(runs, shape) -> np.ndarray:
    flat = np.concatenate([np.full(n, v, dtype=np.int8) for v, n in runs]) if runs else np.zeros(0, np.int8)
    return flat.reshape(shape)


@dataclass
class RunReport:
    trace: list
    robots: list
    grid: OccupancyGrid
    records: ObservationRecord
    states: dict
    t_end: float
    reason: str
    wakes: int
    executed: dict = field(default_factory=dict)
    metrics: object = None

    def trace_text(self) -> str:
        return "".join(line + "\n" for line in self.trace)


class Simulation:
    def __init__(self, scene: SceneModel, config: RunConfig):
        self.scene = scene
        self.config = config
        self.res = scene.resolution
        self.profiles = default_profiles(config)
        self.grid = OccupancyGrid.for_scene(scene)
        self.records = ObservationRecord(scene)
        self.oracle = reconstruction.make_oracle(scene, config)
        self.states: dict[int, ObjectScanState] = {}
        self.rng = np.random.default_rng(config.seed)
        self.arm = ArmEnvelope(config.arm_zmin, config.arm_zmax, config.arm_radius)
        self.cone = ConeParams(math.radians(config.cone_beta_deg), config.d_view, config.n_cone)

        R = len(scene.robot_starts)
        self.frozen = config.frozen_modes(R)
        self.robots = []
        for k, (x, y, th) in enumerate(scene.robot_starts):
            mode = self.frozen[k] if self.frozen else Mode.EXPLORER
            self.robots.append(RobotState(k, x, y, wrap_angle(th), mode=mode, idle_since=0.0))

        self.heap = []
        self.seq = 0
        self.trace = []
        self.t = 0.0
        self.last_wake = -math.inf
        self.wake_pending = False
        self.wakes = 0
        self.next_tid = 0
        self.done = False
        self.reason = ""
        self.task_start = {}
        self.arm_result = {}
        self.frontier_fail = {}
        self.frontier_exclude = set()
        self.executed = {"exploration": 0, "reconstruction": 0, "path_lost": 0, "mode_switches": 0}
        self._nav = None
        self._nav_version = -1
        self._grid_version = 0

    # -- helpers ---------------------------------------------------------------

    def profile_for(self, mode: Mode):
        o = self.config.profile_override
        if o == "explorer":
            return self.profiles[Mode.EXPLORER]
        if o == "reconstructor":
            return self.profiles[Mode.RECONSTRUCTOR]
        return self.profiles[mode]

    def nav_mask(self):
        if self._nav_version != self._grid_version:
            self._nav = self.grid.navigation_mask(self.config.robot_radius)
            self._nav_version = self._grid_version
        return self._nav

    def push(self, t, kind, robot=None, data=None):
        rid = -1 if robot is None else robot
        heapq.heappush(self.heap, (t, RANK[kind], rid, self.seq, kind, robot, data or {}))
        self.seq += 1

    def log(self, kind, robot, data):
        self.trace.append(trace_line(self.t, kind, robot, data))

    def scan(self, pose, profile):
        res = raycast_scan(self.scene, self.grid, self.records, pose, profile)
        if res.newly_freed or res.newly_occupied:
            self._grid_version += 1
        return res

    # -- task execution --------------------------------------------------------

    def start_next(self, robot: RobotState, t: float):
        while robot.queue:
            task = robot.queue.pop(0)
            if self._start_task(robot, task, t):
                return
        self._become_idle(robot, t)

    def _become_idle(self, robot, t):
        robot.current = None
        if robot.idle_since is None:
            robot.idle_since = t
        self.push(t, "QueueLow", robot.id, {"idle": True})

    def _plan(self, robot, goal):
        nav = self.nav_mask()
        start = self.grid.cell_of(robot.x, robot.y)
        prefix = []
        if not (self.grid.in_bounds(start) and nav[start]):
            esc = escape_path(self.grid.cells == FREE, nav, start) if self.grid.in_bounds(start) else None
            if esc is None:
                return None
            prefix, start = esc[:-1], esc[-1]
        found = astar_path(nav, start, goal)
        if found is None:
            return None
        return prefix + found[0]

    def _start_task(self, robot: RobotState, task, t: float) -> bool:
        if robot.idle_since is not None:
            robot.wait_time += t - robot.idle_since
            robot.idle_since = None
        path = self._plan(robot, tuple(task.cell))
        if path is None:
            self.executed["path_lost"] += 1
            self.t = t
            self.log("TaskDone", robot.id, {"task": task.to_dict(), "status": "path_lost"})
            return False
        robot.current = task
        self.task_start[robot.id] = t
        if not robot.queue:
            self.push(t, "QueueLow", robot.id, {"idle": False})

        t0 = t
        if task.mode != robot.mode:
            if self.config.profile_override == "none":
                t0 += self.config.t_switch
                robot.mode_switches += 1
                self.executed["mode_switches"] += 1
            robot.mode = task.mode
        profile = self.profile_for(task.mode)
        speed = profile.speed

        # waypoints along the grid path (first entry is the current cell)
        pts = [(robot.x, robot.y)] + [((i + 0.5) * self.res, (j + 0.5) * self.res) for i, j in path[1:]]
        seg = [math.dist(a, b) for a, b in zip(pts, pts[1:])]
        cum = np.concatenate([[0.0], np.cumsum(seg)]) if seg else np.zeros(1)
        for k in range(1, len(pts)):
            self.push(t0 + cum[k] / speed, "ArriveWaypoint", robot.id,
                      {"cell": list(path[k]), "x": pts[k][0], "y": pts[k][1], "step": seg[k - 1]})
        total = float(cum[-1])
        t_arrive = t0 + total / speed
        if task.mode == Mode.EXPLORER:
            n_ticks = int(math.floor(total / self.config.d_scan + 1e-9)) if total > 0 else 0
            for m in range(1, n_ticks + 1):
                s = m * self.config.d_scan
                k = int(np.searchsorted(cum, s - 1e-12))
                k = min(max(k, 1), len(pts) - 1)
                a, b = np.array(pts[k - 1]), np.array(pts[k])
                f = (s - cum[k - 1]) / seg[k - 1] if seg[k - 1] > 0 else 1.0
                p = a + min(max(f, 0.0), 1.0) * (b - a)
                heading = math.atan2(b[1] - a[1], b[0] - a[0])
                self.push(t0 + s / speed, "ScanTick", robot.id,
                          {"pose": [float(p[0]), float(p[1]), self.config.head_height, wrap_angle(heading), 0.0],
                           "sweep": False})
            self.push(t_arrive, "ScanTick", robot.id,
                      {"pose": [task.x, task.y, self.config.head_height, task.theta, 0.0], "sweep": True})
            self.push(t_arrive + self.config.t_sweep, "TaskDone", robot.id, {"tid": task.tid})
        else:
            self.push(t_arrive, "ScanTick", robot.id,
                      {"pose": [task.x, task.y, task.z, task.theta, task.phi], "arm": True,
                       "instance": task.target_instance})
            self.push(t_arrive + self.config.t_rec, "TaskDone", robot.id, {"tid": task.tid})
        return True

    # -- event handlers --------------------------------------------------------

    def on_arrive(self, robot, data):
        robot.odometer += data["step"]
        prev = (robot.x, robot.y)
        robot.x, robot.y = data["x"], data["y"]
        if (robot.x, robot.y) != prev:
            robot.theta = wrap_angle(math.atan2(robot.y - prev[1], robot.x - prev[0]))
        self.log("ArriveWaypoint", robot.id, {"cell": data["cell"]})

    def on_scan(self, robot, data):
        pose = data["pose"]
        out = {"pose": pose}
        if data.get("arm"):
            oid = data["instance"]
            acc = self.config.accept_sigma
            before = float(self.records.accepted(oid, acc).mean())
            res = self.scan(pose, self.profile_for(Mode.RECONSTRUCTOR))
            after = float(self.records.accepted(oid, acc).mean())
            robot.arm_z, robot.arm_phi = pose[2], pose[4]
            data["before"], data["after"] = before, after
            out.update({"arm": True, "instance": oid, "before": before, "after": after})
        else:
            res = self.scan(pose, self.profile_for(robot.mode))
            robot.theta = pose[3]
            out["sweep"] = bool(data.get("sweep"))
            robot.arm_z = robot.arm_phi = None
        out.update({"new_free": res.newly_freed, "new_occ": res.newly_occupied, "points": len(res.observed_points)})
        self.log("ScanTick", robot.id, out)
        if data.get("arm"):
            self.arm_result[robot.id] = (before, after)

    def on_task_done(self, robot, t, data):
        task = robot.current
        robot.busy_time += t - self.task_start.pop(robot.id)
        robot.current = None
        if isinstance(task, ReconstructionTask):
            self.executed["reconstruction"] += 1
            before, after = self.arm_result.pop(robot.id, (0.0, 0.0))
            st = self.states.get(task.target_instance)
            if st is not None:
                if reconstruction.update_history(st, (task.x, task.y, task.z), before, after,
                                                 self.config.history_radius, self.config.history_eps):
                    centre, radius = st.blacklist[-1]
                    self.log("TaskDone", robot.id, {"task": task.to_dict(), "status": "done",
                                                    "blacklist": [centre[0], centre[1], centre[2], radius]})
                    self.start_next(robot, t)
                    return
        else:
            self.executed["exploration"] += 1
            self._frontier_feedback(task)
        self.log("TaskDone", robot.id, {"task": task.to_dict(), "status": "done"})
        self.start_next(robot, t)

    def _frontier_feedback(self, task: ExplorationTask):
        """Count visits that left the targeted frontier unresolved; give up after a few."""
        f = task.frontier
        if f is None:
            return
        raw = {tuple(map(int, c)) for c in exploration.raw_frontier_cells(self.grid.cells)}
        if f in raw:
            self.frontier_fail[f] = self.frontier_fail.get(f, 0) + 1
            if self.frontier_fail[f] >= self.config.frontier_retry:
                # only the stubborn cell; its neighbours still get their own tries
                self.frontier_exclude.add(f)

    def on_queue_low(self, robot, t, data):
        self.log("QueueLow", robot.id, data)
        self.request_wake(t, robot.idle)

    def request_wake(self, t, idle: bool):
        if self.wake_pending:
            return
        if self.config.scheduling == "synchronous" and not all(r.idle for r in self.robots):
            return
        if t - self.last_wake >= self.config.wake_cooldown:
            self.wake_pending = True
            self.push(t, "CenterWake")
        elif idle:
            self.wake_pending = True
            self.push(self.last_wake + self.config.wake_cooldown, "CenterWake", data={"deferred": True})

    def refresh_objects(self):
        acc = self.config.accept_sigma
        for obj in self.scene.objects:
            if not self.records.observed(obj.instance_id).any():
                continue
            st = self.states.setdefault(obj.instance_id, ObjectScanState(obj.instance_id))
            reconstruction.refresh_state(st, obj, self.records.accepted(obj.instance_id, acc), self.oracle,
                                         self.config.n_completion)

    def generate(self):
        cfg = self.config
        nav = self.nav_mask()
        pending = [t for r in self.robots for t in r.rest]
        pend_exp = [t for t in pending if isinstance(t, ExplorationTask)]
        pend_rec = [t for t in pending if isinstance(t, ReconstructionTask)]
        tasks_exp, frontiers = exploration.exploration_round(self.grid, self.robots, nav, cfg,
                                                             exclude=self.frontier_exclude, pending=pend_exp)
        tasks_rec = []
        if cfg.profile_override != "explorer":
            # base cells only where the fleet can actually drive
            index = NavIndex(nav, self.res)
            here = exploration.robot_cells(self.robots, index, self.grid)
            reach = connected_to(nav, here)
            self.refresh_objects()
            tasks_rec = reconstruction.generate_reconstruction_tasks(
                self.states, self.grid, NavIndex(reach, self.res), self.profile_for(Mode.RECONSTRUCTOR),
                self.arm, self.cone, cfg.tau, cfg.rec_cap, cfg.point_attempts, owner=self.scene.owner,
                pending=pend_rec, fail_radius=cfg.fail_radius)
        return tasks_exp, tasks_rec, frontiers

    def on_center_wake(self, t, data):
        self.wake_pending = False
        self.last_wake = t
        self.wakes += 1
        if self.wakes > self.config.max_wakes:
            self.log("CenterWake", None, {"aborted": True})
            self.push(t, "Terminate", data={"reason": "max_wakes"})
            return
        tasks_exp, tasks_rec, frontiers = self.generate()
        tasks_exp = [self._tag(x) for x in tasks_exp]
        tasks_rec = [self._tag(x) for x in tasks_rec]
        info = {"n_exp": len(tasks_exp), "n_rec": len(tasks_rec), "frontiers": len(frontiers)}
        if not tasks_exp and not tasks_rec:
            self.log("CenterWake", None, info)
            if all(r.idle for r in self.robots):
                self.push(t, "Terminate", data={"reason": "no_tasks"})
            return
        sol, g = assign(tasks_exp, tasks_rec, self.robots, self.nav_mask(), self.res, self.config, self.rng,
                        frozen_modes=self.frozen)
        assigned = {}
        for r, robot in enumerate(self.robots):
            new = sol.tasks_for(g, r)
            robot.queue.extend(new)
            assigned[str(r)] = [x.tid for x in new]
        info.update({"assigned": assigned, "dropped": [g.payload[k].tid for k in sol.dropped],
                     "modes": [m.short for m in sol.modes], "energy": sol.energy.total if sol.energy else None})
        self.log("CenterWake", None, info)
        any_new = any(assigned.values())
        start_t = t + self.config.assign_latency
        for robot in self.robots:
            if robot.current is None and robot.queue:
                self.start_next(robot, start_t)
        if not any_new and all(r.idle for r in self.robots):
            self.push(t, "Terminate", data={"reason": "no_assignable_tasks"})

    def _tag(self, task):
        from dataclasses import replace
        task = replace(task, tid=self.next_tid)
        self.next_tid += 1
        return task

    def on_terminate(self, t, data):
        for r in self.robots:
            if r.idle_since is not None:
                r.wait_time += t - r.idle_since
                r.idle_since = t
        self.done = True
        self.reason = data.get("reason", "")
        self.log("Terminate", None, {"reason": self.reason, "shape": list(self.grid.shape),
                                     "resolution": self.res, "grid": rle_encode(self.grid.cells)})

    # -- main loop -------------------------------------------------------------

    def run(self) -> RunReport:
        for robot in self.robots:
            profile = self.profile_for(robot.mode) if self.config.profile_override != "none" \
                else self.profiles[Mode.EXPLORER]
            scans = initial_turnaround(self.scene, self.grid, self.records, robot, profile,
                                       self.config.head_height, self.config.turnaround_headings)
            self._grid_version += 1
            self.log("ScanTick", robot.id, {"turnaround": True,
                                            "new_free": sum(s.newly_freed for s in scans),
                                            "new_occ": sum(s.newly_occupied for s in scans)})
        self.wake_pending = True
        self.push(0.0, "CenterWake", data={"bootstrap": True})
        while self.heap and not self.done:
            t, _rank, _rid, _seq, kind, rid, data = heapq.heappop(self.heap)
            self.t = t
            robot = self.robots[rid] if rid is not None else None
            if kind == "ArriveWaypoint":
                self.on_arrive(robot, data)
            elif kind == "ScanTick":
                self.on_scan(robot, data)
            elif kind == "TaskDone":
                self.on_task_done(robot, t, data)
            elif kind == "QueueLow":
                self.on_queue_low(robot, t, data)
            elif kind == "CenterWake":
                self.on_center_wake(t, data)
            elif kind == "Terminate":
                self.on_terminate(t, data)
        if not self.done:
            busy = [r.id for r in self.robots if not r.idle]
            raise DeadlockDetected(f"event queue drained at t={self.t:.3f} with busy robots {busy}")
        return RunReport(self.trace, self.robots, self.grid, self.records, self.states, self.t, self.reason,
                         self.wakes, dict(self.executed))


def run(scene: SceneModel, config: RunConfig) -> RunReport:
    """Simulate one mission; metrics are attached to the report."""
    from .metrics import compute_metrics
    rep = Simulation(scene, config).run()
    rep.metrics = compute_metrics(scene, rep, config)
    return rep
