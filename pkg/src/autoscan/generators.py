"""Primitive surface samplers for scene objects.

Every generator returns ``(points, normals, outline)`` where ``outline`` is
a callable testing whether (x, y) lies inside the object's ground
footprint. Bottom faces are never sampled: objects rest on the floor.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np


def _grid_on_rect(length: float, height: float, spacing: float):
    nu = max(1, round(length / spacing))
    nv = max(1, round(height / spacing))
    u = (np.arange(nu) + 0.5) * (length / nu)
    v = (np.arange(nv) + 0.5) * (height / nv)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    return uu.ravel(), vv.ravel()


def _inside_polygon(x, y, poly):
    """Even-odd rule point-in-polygon for arrays of points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = np.zeros(x.shape, dtype=bool)
    n = len(poly)
    for k in range(n):
        x1, y1 = poly[k]
        x2, y2 = poly[(k + 1) % n]
        cond = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (x2 - x1) * (y - y1) / (y2 - y1) + x1
        inside ^= cond & (x < xint)
    return inside


def _signed_area(poly):
    a = 0.0
    for k in range(len(poly)):
        x1, y1 = poly[k]
        x2, y2 = poly[(k + 1) % len(poly)]
        a += x1 * y2 - x2 * y1
    return 0.5 * a


def extruded_polygon(poly, z0: float, z1: float, samples: int):
    """Sample the side walls and top of a vertical prism over ``poly``."""
    poly = [tuple(map(float, p)) for p in poly]
    if _signed_area(poly) < 0:
        poly = poly[::-1]
    height = z1 - z0
    perim = sum(math.dist(poly[k], poly[(k + 1) % len(poly)]) for k in range(len(poly)))
    top_area = abs(_signed_area(poly))
    spacing = math.sqrt((perim * height + top_area) / max(samples, 1))

    pts, nrm = [], []
    for k in range(len(poly)):
        (x1, y1), (x2, y2) = poly[k], poly[(k + 1) % len(poly)]
        length = math.dist((x1, y1), (x2, y2))
        if length == 0:
            continue
        ux, uy = (x2 - x1) / length, (y2 - y1) / length
        # counter-clockwise polygon: outward normal is the right-hand side
        nx, ny = uy, -ux
        u, v = _grid_on_rect(length, height, spacing)
        pts.append(np.stack([x1 + u * ux, y1 + u * uy, z0 + v], axis=1))
        nrm.append(np.tile([nx, ny, 0.0], (len(u), 1)))

    xs = [p[0] for p in poly]
    ys = [p[1] for p in poly]
    gx = np.arange(min(xs) + spacing / 2, max(xs), spacing)
    gy = np.arange(min(ys) + spacing / 2, max(ys), spacing)
    tx, ty = np.meshgrid(gx, gy, indexing="ij")
    tx, ty = tx.ravel(), ty.ravel()
    keep = _inside_polygon(tx, ty, poly)
    tx, ty = tx[keep], ty[keep]
    pts.append(np.stack([tx, ty, np.full(len(tx), z1)], axis=1))
    nrm.append(np.tile([0.0, 0.0, 1.0], (len(tx), 1)))

    def outline(x, y):
        return _inside_polygon(x, y, poly)

    return np.concatenate(pts), np.concatenate(nrm), outline


def box(center, size, samples: int, z0: float = 0.0):
    cx, cy = center
    sx, sy, sz = size
    poly = [(cx - sx / 2, cy - sy / 2), (cx + sx / 2, cy - sy / 2),
            (cx + sx / 2, cy + sy / 2), (cx - sx / 2, cy + sy / 2)]
    return extruded_polygon(poly, z0, z0 + sz, samples)


def lshape(corner, legs, width: float, height: float, samples: int, z0: float = 0.0):
    """L-shaped prism: two legs of thickness ``width`` meeting at ``corner``.

    ``legs`` are signed lengths along +x and +y from the corner; negative
    values mirror the leg.
    """
    x0, y0 = corner
    lx, ly = legs
    sx = 1.0 if lx >= 0 else -1.0
    sy = 1.0 if ly >= 0 else -1.0
    poly = [
        (x0, y0),
        (x0 + lx, y0),
        (x0 + lx, y0 + sy * width),
        (x0 + sx * width, y0 + sy * width),
        (x0 + sx * width, y0 + ly),
        (x0, y0 + ly),
    ]
    return extruded_polygon(poly, z0, z0 + height, samples)


def cylinder(center, radius: float, height: float, samples: int, z0: float = 0.0):
    cx, cy = center
    area = 2 * math.pi * radius * height + math.pi * radius ** 2
    spacing = math.sqrt(area / max(samples, 1))
    u, v = _grid_on_rect(2 * math.pi * radius, height, spacing)
    ang = u / radius
    side = np.stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang), z0 + v], axis=1)
    side_n = np.stack([np.cos(ang), np.sin(ang), np.zeros_like(ang)], axis=1)

    top = []
    n_rings = max(1, round(radius / spacing))
    for r in range(n_rings):
        rad = (r + 0.5) * radius / n_rings
        n = max(1, round(2 * math.pi * rad / spacing))
        a = (np.arange(n) + 0.5) * 2 * math.pi / n
        top.append(np.stack([cx + rad * np.cos(a), cy + rad * np.sin(a), np.full(n, z0 + height)], axis=1))
    top = np.concatenate(top)
    top_n = np.tile([0.0, 0.0, 1.0], (len(top), 1))

    def outline(x, y):
        return (np.asarray(x) - cx) ** 2 + (np.asarray(y) - cy) ** 2 < radius ** 2

    return np.concatenate([side, top]), np.concatenate([side_n, top_n]), outline


def points_file(path: str | Path):
    """Read a whitespace table of ``x y z nx ny nz`` rows."""
    table = np.loadtxt(path, ndmin=2)
    if table.shape[1] != 6:
        raise ValueError(f"{path}: expected 6 columns, got {table.shape[1]}")
    pts = table[:, :3]
    nrm = table[:, 3:]
    nrm = nrm / np.linalg.norm(nrm, axis=1, keepdims=True)
    return pts, nrm, None


def build(doc: dict, base_dir: Path | None = None):
    kind = doc.get("type")
    z0 = float(doc.get("z0", 0.0))
    if kind == "box":
        return box(doc["center"], doc["size"], int(doc.get("samples", 600)), z0)
    if kind == "cylinder":
        return cylinder(doc["center"], float(doc["radius"]), float(doc["height"]),
                        int(doc.get("samples", 600)), z0)
    if kind == "lshape":
        return lshape(doc["corner"], doc["legs"], float(doc["width"]), float(doc["height"]),
                      int(doc.get("samples", 600)), z0)
    if kind == "points_file":
        path = Path(doc["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return points_file(path)
    raise ValueError(f"unknown generator type {kind!r}")
