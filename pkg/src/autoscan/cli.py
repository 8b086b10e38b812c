"""Command line harness: single runs, ablation sweeps, solver benchmarking, SVG rendering."""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config, parse_set_args
from .metrics import RUN_COLUMNS, csv_text, run_row
from .scene import ParseError, ValidationError, load_scene, resolve_scene_path

log = logging.getLogger("autoscan")

SWEEP_SCHEDULING = ("taskflow", "synchronous")
SWEEP_POLICIES = ("dynamic", "3E1R", "2E2R", "1E3R")
SWEEP_OVERRIDES = ("none", "reconstructor", "explorer")  # default, NoEx, NoRe
SWEEP_METRICS = ("o_comp", "o_rms", "d_c", "t_c", "d_lb", "t_lb", "explored_frac")


class UsageError(Exception):
    """Bad invocation; exit code 2."""


# -- helpers -------------------------------------------------------------------

def parse_seeds(seed, seeds) -> list[int]:
    if seeds:
        out = []
        for part in seeds.split(","):
            part = part.strip()
            if "-" in part:
                a, b = part.split("-", 1)
                out.extend(range(int(a), int(b) + 1))
            elif part:
                out.append(int(part))
    else:
        out = [0 if seed is None else int(seed)]
    if len(set(out)) != len(out):
        raise UsageError(f"seeds must be distinct, got {out}")
    return out


def output_dir(out, overwrite: bool) -> Path:
    """The requested directory, or a fresh timestamped one inside it when it already holds results."""
    out = Path(out)
    if out.exists() and any(out.iterdir()) and not overwrite:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        cand, k = out / stamp, 1
        while cand.exists():
            cand, k = out / f"{stamp}-{k}", k + 1
        out = cand
    out.mkdir(parents=True, exist_ok=True)
    return out


def base_config(args) -> RunConfig:
    over = parse_set_args(getattr(args, "set", None))
    for flag, key in (("scheduling", "scheduling"), ("mode_policy", "mode_policy"),
                      ("profile_override", "profile_override")):
        v = getattr(args, flag, None)
        if v is not None:
            over[key] = v
    return load_config(getattr(args, "config", None), over)


def resolve_scene(arg) -> Path:
    try:
        return resolve_scene_path(arg)
    except FileNotFoundError:
        raise UsageError(f"scene file not found: {arg}") from None


def report_doc(scene_name: str, config: RunConfig, rep) -> dict:
    return {"scene": scene_name, "seed": config.seed, "config": config.to_dict(), "reason": rep.reason,
            "t_end": rep.t_end, "wakes": rep.wakes, "executed": rep.executed, "metrics": rep.metrics.to_dict()}


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(type(o).__name__)


def _finite(o):
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    return o


def dump_json(doc) -> str:
    return json.dumps(_finite(doc), indent=2, sort_keys=True, default=_json_default) + "\n"


# -- run -----------------------------------------------------------------------

def execute(scene_path: str, config: RunConfig):
    from .simulator import run
    scene = load_scene(scene_path)
    return scene, run(scene, config)


def cmd_run(args) -> int:
    path = resolve_scene(args.scene)
    seeds = parse_seeds(args.seed, args.seeds)
    cfg = base_config(args)
    out = output_dir(args.out, args.overwrite)
    rows = []
    for seed in seeds:
        c = cfg.with_params(seed=seed)
        scene, rep = execute(str(path), c)
        d = out / f"seed_{seed}" if len(seeds) > 1 else out
        d.mkdir(parents=True, exist_ok=True)
        (d / "events.jsonl").write_text(rep.trace_text())
        (d / "metrics.json").write_text(dump_json(report_doc(scene.name, c, rep)))
        row = run_row(scene.name, c, rep)
        (d / "runs.csv").write_text(csv_text([row]))
        rows.append(row)
        m = rep.metrics
        print(f"{scene.name} seed={seed} reason={rep.reason} o_comp={m.o_comp:.4f} o_rms={m.o_rms:.5f} "
              f"t_c={m.t_c:.1f} d_c={m.d_c:.1f} t_lb={m.t_lb:.3f} explored={m.explored_frac:.4f}")
    if len(seeds) > 1:
        (out / "runs.csv").write_text(csv_text(rows))
    print(f"wrote {out}")
    return 0


# -- sweep ---------------------------------------------------------------------

def sweep_grid():
    return list(itertools.product(SWEEP_SCHEDULING, SWEEP_POLICIES, SWEEP_OVERRIDES))


def _sweep_one(job):
    scene_path, params = job
    cfg = RunConfig(**params)
    try:
        scene, rep = execute(scene_path, cfg)
        row = run_row(scene.name, cfg, rep)
        row["status"] = "ok"
        row["error"] = ""
    except Exception as exc:  # recorded, the sweep goes on
        row = {"scene": Path(scene_path).stem, "seed": cfg.seed, "scheduling": cfg.scheduling,
               "mode_policy": cfg.mode_policy, "profile_override": cfg.profile_override,
               "status": "failed", "error": f"{type(exc).__name__}: {exc}"}
    return row


def aggregate(rows) -> list[dict]:
    cells = {}
    for r in rows:
        key = (r["scene"], r["scheduling"], r["mode_policy"], r["profile_override"])
        cells.setdefault(key, []).append(r)
    out = []
    for key in sorted(cells):
        grp = cells[key]
        ok = [r for r in grp if r.get("status") == "ok"]
        row = dict(zip(("scene", "scheduling", "mode_policy", "profile_override"), key))
        row["runs"], row["failed"] = len(grp), len(grp) - len(ok)
        for m in SWEEP_METRICS:
            row[m] = float(np.mean([r[m] for r in ok])) if ok else math.nan
        out.append(row)
    return out


def cmd_sweep(args) -> int:
    scenes = [str(resolve_scene(s)) for s in args.scene]
    seeds = parse_seeds(args.seed, args.seeds)
    cfg = base_config(args)
    out = output_dir(args.out, args.overwrite)
    jobs = []
    for sp, seed, (sch, pol, ovr) in itertools.product(scenes, seeds, sweep_grid()):
        c = cfg.with_params(seed=seed, scheduling=sch, mode_policy=pol, profile_override=ovr)
        jobs.append((sp, c.to_dict()))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            rows = list(ex.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    cols = RUN_COLUMNS + ["status", "error"]
    (out / "runs.csv").write_text(csv_text(rows, cols))
    agg_cols = ["scene", "scheduling", "mode_policy", "profile_override", "runs", "failed", *SWEEP_METRICS]
    (out / "aggregate.csv").write_text(csv_text(aggregate(rows), agg_cols))
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} runs, {failed} failed; wrote {out}")
    return 0


# -- solve-instance ------------------------------------------------------------

def solution_doc(sol, g) -> dict:
    e = sol.energy
    return {"sequences": sol.sequences, "modes": [m.short for m in sol.modes], "dropped": sol.dropped,
            "energy": {"e_d": e.e_d, "e_c": e.e_c, "c_avg": e.c_avg, "total": e.total}}


def cmd_solve_instance(args) -> int:
    from .assignment import assign_graph, load_instance
    from .oracle import OracleTooLarge, exhaustive_optimum
    path = Path(args.instance)
    if not path.exists():
        raise UsageError(f"instance file not found: {path}")
    try:
        g = load_instance(path)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed instance file {path}: {exc!r}") from None
    cfg = base_config(args).with_params(seed=args.seed if args.seed is not None else 0)
    rng = np.random.default_rng(cfg.seed)
    t0 = time.perf_counter()
    sol = assign_graph(g, cfg, rng)
    doc = {"instance": str(path), "robots": g.n_robots, "tasks": g.n_tasks, "solver": solution_doc(sol, g),
           "seconds": round(time.perf_counter() - t0, 6)}
    if args.oracle:
        try:
            ref = exhaustive_optimum(g, cfg.w_c, args.oracle_max_robots, args.oracle_max_tasks)
        except OracleTooLarge as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        opt = ref.energy.total
        doc["oracle"] = solution_doc(ref, g)
        doc["gap"] = 0.0 if opt == sol.energy.total else (sol.energy.total - opt) / opt if opt > 0 else math.inf
    sys.stdout.write(dump_json(doc))
    return 0


# -- render --------------------------------------------------------------------

def cmd_render(args) -> int:
    from .render import render_file
    path = resolve_scene(args.scene)
    trace = Path(args.trace)
    if trace.is_dir():
        trace = trace / "events.jsonl"
    out = Path(args.out) if args.out else trace.with_suffix(".svg")
    render_file(load_scene(path), trace, out)
    print(f"wrote {out}")
    return 0


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="autoscan", description="Multi-robot autoscanning simulator and solver.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more log output (repeatable)")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, scene_nargs=None):
        sp.add_argument("--config", help="JSON file with a flat 'params' table")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one parameter")
        if scene_nargs is not None:
            sp.add_argument("--scene", required=True, nargs=scene_nargs,
                            help="scene file or bundled scene name")

    r = sub.add_parser("run", help="simulate one scene for one or more seeds")
    common(r)
    r.add_argument("--scene", required=True, help="scene file or bundled scene name")
    r.add_argument("--seed", type=int)
    r.add_argument("--seeds", help="comma list or ranges, e.g. 0-4,9")
    r.add_argument("--out", default="out")
    r.add_argument("--overwrite", action="store_true", help="write into --out even if it has results")
    r.add_argument("--scheduling", choices=SWEEP_SCHEDULING)
    r.add_argument("--mode-policy", dest="mode_policy", help="dynamic or a frozen split like 3E1R")
    r.add_argument("--profile-override", dest="profile_override", choices=SWEEP_OVERRIDES)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="ablation grid over scheduling x mode policy x profile override")
    common(s, scene_nargs="+")
    s.add_argument("--seed", type=int)
    s.add_argument("--seeds", help="comma list or ranges")
    s.add_argument("--out", default="sweep")
    s.add_argument("--overwrite", action="store_true")
    s.add_argument("--jobs", type=int, default=1, help="worker processes")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("solve-instance", help="run the task assignment solver on an instance file")
    common(v)
    v.add_argument("instance")
    v.add_argument("--seed", type=int)
    v.add_argument("--oracle", action="store_true", help="also enumerate exhaustively and print the gap")
    v.add_argument("--oracle-max-robots", type=int, default=3)
    v.add_argument("--oracle-max-tasks", type=int, default=7)
    v.set_defaults(func=cmd_solve_instance)

    d = sub.add_parser("render", help="overhead SVG of a run trace")
    d.add_argument("--scene", required=True)
    d.add_argument("--trace", required=True, help="events.jsonl or a run directory")
    d.add_argument("--out")
    d.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
