"""Task and mode types shared by the generators, the solver and the simulator."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum


class Mode(str, Enum):
    EXPLORER = "explorer"
    RECONSTRUCTOR = "reconstructor"

    @property
    def short(self) -> str:
        return "E" if self is Mode.EXPLORER else "R"

    @classmethod
    def from_short(cls, s: str) -> "Mode":
        s = s.strip()
        if s in ("E", "exp", "explorer"):
            return cls.EXPLORER
        if s in ("R", "rec", "reconstructor"):
            return cls.RECONSTRUCTOR
        raise ValueError(f"unknown mode {s!r}")


def wrap_angle(a: float) -> float:
    """Map an angle to [0, 2*pi)."""
    a = math.fmod(a, 2.0 * math.pi)
    if a < 0.0:
        a += 2.0 * math.pi
    if a >= 2.0 * math.pi:
        a = 0.0
    return a


@dataclass(frozen=True)
class ExplorationTask:
    x: float
    y: float
    theta: float
    cell: tuple[int, int] = (0, 0)
    frontier: tuple[int, int] | None = None
    tid: int = -1

    mode = Mode.EXPLORER

    @property
    def kind(self) -> str:
        return "exploration"

    def to_dict(self) -> dict:
        return {
            "tid": self.tid,
            "type": self.kind,
            "x": round(self.x, 6),
            "y": round(self.y, 6),
            "theta": round(self.theta, 6),
            "cell": list(self.cell),
        }


@dataclass(frozen=True)
class ReconstructionTask:
    x: float
    y: float
    z: float
    theta: float
    phi: float
    target_instance: int
    # navigable cell the base drives to before the arm scan
    cell: tuple[int, int] = (0, 0)
    source: tuple[float, float, float] = (0.0, 0.0, 0.0)
    tid: int = -1

    mode = Mode.RECONSTRUCTOR

    @property
    def kind(self) -> str:
        return "reconstruction"

    def to_dict(self) -> dict:
        return {
            "tid": self.tid,
            "type": self.kind,
            "x": round(self.x, 6),
            "y": round(self.y, 6),
            "z": round(self.z, 6),
            "theta": round(self.theta, 6),
            "phi": round(self.phi, 6),
            "instance": self.target_instance,
            "cell": list(self.cell),
        }


Task = ExplorationTask | ReconstructionTask


@dataclass
class RobotState:
    """Mutable per-robot bookkeeping owned by the simulator."""

    id: int
    x: float
    y: float
    theta: float
    mode: Mode = Mode.EXPLORER
    arm_z: float | None = None
    arm_phi: float | None = None
    current: Task | None = None
    queue: list = field(default_factory=list)
    odometer: float = 0.0
    busy_time: float = 0.0
    wait_time: float = 0.0
    mode_switches: int = 0
    idle_since: float | None = 0.0

    @property
    def rest(self) -> list:
        """Unfinished tasks, the one in progress first."""
        return ([self.current] if self.current is not None else []) + list(self.queue)

    @property
    def idle(self) -> bool:
        return self.current is None and not self.queue
