"""Run configuration: one flat table of parameters, all overridable."""
from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .tasks import Mode

SCHEDULING = ("taskflow", "synchronous")
PROFILE_OVERRIDES = ("none", "explorer", "reconstructor")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    scheduling: str = "taskflow"
    # "dynamic" or a frozen split such as "3E1R"
    mode_policy: str = "dynamic"
    # "explorer" realizes NoRe, "reconstructor" realizes NoEx
    profile_override: str = "none"

    # sensing
    explorer_fov_deg: float = 70.0
    explorer_range: float = 4.5
    explorer_speed: float = 1.0
    explorer_sigma0: float = 0.004
    explorer_sigma1: float = 0.006
    head_height: float = 1.2
    reconstructor_fov_deg: float = 50.0
    reconstructor_range: float = 1.5
    reconstructor_elevation_deg: float = 30.0
    reconstructor_speed: float = 0.25
    # negative means "half of the explorer value"
    reconstructor_sigma0: float = -1.0
    reconstructor_sigma1: float = -1.0
    accept_sigma: float = 0.008
    robot_radius: float = 0.2
    turnaround_headings: int = 8

    # exploration tasks
    frontier_max: int = 40
    frontier_spacing: float = 2.0
    view_dmin: float = 1.0
    view_dmax: float = 4.0
    k_max: int = 6
    validity_sign: str = "obstacle_minus_robot"
    frontier_retry: int = 2

    # reconstruction tasks
    n_completion: int = 2048
    tau: float = 0.03
    cone_beta_deg: float = 35.0
    d_view: float = 0.8
    n_cone: int = 12
    arm_zmin: float = 0.3
    arm_zmax: float = 1.2
    arm_radius: float = 0.9
    rec_cap: int = 4
    history_radius: float = 0.5
    history_eps: float = 0.01
    point_attempts: int = 8
    # on a point without viewpoints, also skip similar-facing points this close
    fail_radius: float = 0.1
    oracle: str = "gt"
    oracle_jitter: float = 0.02

    # assignment
    sigma_g: float = 2.0
    lambda_c: float = 0.5
    gmm_iters: int = 10
    kmeans_iters: int = 20
    sa_iters: int = 300
    sa_cool: float = 0.95
    w_c: float = 1.0
    d_max: float = 8.0
    k0: int = 1
    tsp_exact_max: int = 12
    refine: bool = True
    polish_starts: int = 4

    # scheduling
    t_switch: float = 3.0
    t_rec: float = 4.0
    t_sweep: float = 1.0
    d_scan: float = 1.0
    wake_cooldown: float = 1.0
    assign_latency: float = 0.0
    max_wakes: int = 400

    # metrics
    tau_d: float = 0.02

    def __post_init__(self):
        if self.scheduling not in SCHEDULING:
            raise ConfigError(f"scheduling must be one of {SCHEDULING}, got {self.scheduling!r}")
        if self.profile_override not in PROFILE_OVERRIDES:
            raise ConfigError(
                f"profile_override must be one of {PROFILE_OVERRIDES}, got {self.profile_override!r}"
            )
        if self.mode_policy != "dynamic" and parse_split(self.mode_policy) is None:
            raise ConfigError(f"mode_policy must be 'dynamic' or like '3E1R', got {self.mode_policy!r}")
        if self.validity_sign not in ("obstacle_minus_robot", "robot_minus_obstacle"):
            raise ConfigError(f"unknown validity_sign {self.validity_sign!r}")
        if self.oracle not in ("gt", "noisy"):
            raise ConfigError(f"unknown oracle {self.oracle!r}")

    # derived values ------------------------------------------------------

    @property
    def rec_sigma0(self) -> float:
        return self.explorer_sigma0 / 2 if self.reconstructor_sigma0 < 0 else self.reconstructor_sigma0

    @property
    def rec_sigma1(self) -> float:
        return self.explorer_sigma1 / 2 if self.reconstructor_sigma1 < 0 else self.reconstructor_sigma1

    def frozen_modes(self, n_robots: int) -> list[Mode] | None:
        """Per-robot modes for a frozen policy, None when dynamic."""
        if self.mode_policy == "dynamic":
            return None
        n_e, n_r = parse_split(self.mode_policy)
        if n_e + n_r != n_robots:
            raise ConfigError(f"{self.mode_policy} needs {n_e + n_r} robots, scene has {n_robots}")
        if n_e < 1 or n_r < 1:
            raise ConfigError("a frozen policy needs at least one robot per mode")
        return [Mode.EXPLORER] * n_e + [Mode.RECONSTRUCTOR] * n_r

    def with_params(self, **params) -> "RunConfig":
        return replace(self, **coerce_params(params))

    def to_dict(self) -> dict:
        return asdict(self)


def parse_split(policy: str):
    m = re.fullmatch(r"(\d+)E(\d+)R", policy)
    if m is None:
        return None
    return int(m.group(1)), int(m.group(2))


def coerce_params(params: dict) -> dict:
    """Convert string values (from ``--set key=value``) to the field types."""
    types = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    for key, value in params.items():
        if key not in types:
            raise ConfigError(f"unknown parameter {key!r}")
        t = types[key]
        if isinstance(value, str) and t != "str":
            if t == "bool":
                value = value.strip().lower() in ("1", "true", "yes", "on")
            elif t == "int":
                value = int(value)
            elif t == "float":
                value = math.inf if value.strip().lower() in ("inf", "infinity") else float(value)
        elif t == "float" and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        out[key] = value
    return out


def parse_set_args(items: list[str] | None) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Read a JSON document with a flat ``params`` table, then apply overrides."""
    params: dict = {}
    if path is not None:
        doc = json.loads(Path(path).read_text())
        params.update(doc.get("params", doc))
    if overrides:
        params.update(overrides)
    return RunConfig(**coerce_params(params))
