"""Overhead SVG of a run: belief grid, walls, objects, robot paths and viewpoints."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .scene import FREE, OCCUPIED, SceneModel
from .simulator import rle_decode

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"]
CELL_PX = 12.0  # pixels per grid cell


def read_trace(path) -> list[dict]:
    text = Path(path).read_text() if Path(path).exists() else ""
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def render_svg(scene: SceneModel, events: list[dict]) -> str:
    w, h = scene.grid_width, scene.grid_height
    cs = CELL_PX
    W, H = w * cs, h * cs

    def px(x, y):
        # y axis points up in the world, down in SVG
        return x / scene.resolution * cs, H - y / scene.resolution * cs

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" height="{H:.0f}" '
           f'viewBox="0 0 {W:.0f} {H:.0f}">',
           f'<rect x="0" y="0" width="{W:.0f}" height="{H:.0f}" fill="#bdbdbd"/>']

    grid = None
    for ev in events:
        if ev["kind"] == "Terminate" and "grid" in ev["data"]:
            grid = rle_decode(ev["data"]["grid"], tuple(ev["data"]["shape"]))
    out.append('<g id="grid">')
    if grid is not None:
        for i, j in np.argwhere(grid == FREE):
            out.append(f'<rect class="free" x="{i * cs:.1f}" y="{H - (j + 1) * cs:.1f}" width="{cs:.1f}" '
                       f'height="{cs:.1f}" fill="#ffffff"/>')
        for i, j in np.argwhere(grid == OCCUPIED):
            out.append(f'<rect class="occ" x="{i * cs:.1f}" y="{H - (j + 1) * cs:.1f}" width="{cs:.1f}" '
                       f'height="{cs:.1f}" fill="#636363"/>')
    out.append('</g>')

    walls = scene.occupied & (scene.owner < 0)
    out.append('<g id="walls">')
    for i, j in np.argwhere(walls):
        out.append(f'<rect class="wall" x="{i * cs:.1f}" y="{H - (j + 1) * cs:.1f}" width="{cs:.1f}" '
                   f'height="{cs:.1f}" fill="#252525"/>')
    out.append('</g><g id="objects">')
    for obj in scene.objects:
        for i, j in sorted(obj.footprint_cells):
            out.append(f'<rect class="object" data-id="{obj.instance_id}" x="{i * cs:.1f}" '
                       f'y="{H - (j + 1) * cs:.1f}" width="{cs:.1f}" height="{cs:.1f}" fill="#fdd0a2"/>')
    out.append('</g>')

    # one path per robot once the trace has anything in it
    paths = {k: [px(x, y)] for k, (x, y, _t) in enumerate(scene.robot_starts)} if events else {}
    markers, circles = [], []
    for ev in events:
        r = ev.get("robot")
        d = ev["data"]
        if ev["kind"] == "ArriveWaypoint" and r is not None:
            i, j = d["cell"]
            paths.setdefault(r, []).append(px((i + 0.5) * scene.resolution, (j + 0.5) * scene.resolution))
        elif ev["kind"] == "TaskDone" and d.get("status") == "done":
            t = d["task"]
            x, y = px(t["x"], t["y"])
            color = COLORS[(r or 0) % len(COLORS)]
            if t["type"] == "exploration":
                markers.append(f'<circle class="vp-exp" cx="{x:.1f}" cy="{y:.1f}" r="4" fill="{color}" '
                               f'stroke="#000" stroke-width="0.5"/>')
            else:
                markers.append(f'<rect class="vp-rec" x="{x - 3.5:.1f}" y="{y - 3.5:.1f}" width="7" height="7" '
                               f'fill="none" stroke="{color}" stroke-width="1.5"/>')
            if "blacklist" in d:
                bx, by, _bz, rad = d["blacklist"]
                cx, cy = px(bx, by)
                circles.append(f'<circle class="blacklist" cx="{cx:.1f}" cy="{cy:.1f}" '
                               f'r="{rad / scene.resolution * cs:.1f}" fill="none" stroke="#e31a1c" '
                               f'stroke-dasharray="4,2"/>')
    out.append('<g id="paths">')
    for r in sorted(paths):
        pts = " ".join(f"{x:.1f},{y:.1f}" for x, y in paths[r])
        out.append(f'<polyline class="path" data-robot="{r}" points="{pts}" fill="none" '
                   f'stroke="{COLORS[r % len(COLORS)]}" stroke-width="2"/>')
    out.append('</g><g id="viewpoints">')
    out.extend(markers)
    out.extend(circles)
    out.append('</g></svg>')
    return "\n".join(out) + "\n"


def render_file(scene: SceneModel, trace_path, out_path) -> Path:
    events = read_trace(trace_path)
    out_path = Path(out_path)
    out_path.write_text(render_svg(scene, events))
    return out_path
