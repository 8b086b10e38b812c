"""Exact segment/grid traversal, vectorized over many segments."""
from __future__ import annotations

import numpy as np


def traverse(ax, ay, bx, by, res: float):
    """Cells crossed by each segment A->B, in order from A.

    Returns ``(ci, cj, valid)`` arrays of shape (K, L). Only cells whose
    interior the segment passes through with positive length are listed;
    passing exactly through a grid corner does not enter the diagonal
    neighbours.
    """
    ax, ay, bx, by = (np.atleast_1d(v).astype(float) for v in np.broadcast_arrays(ax, ay, bx, by))
    k = ax.shape[0]
    if k == 0:
        z = np.zeros((0, 1), dtype=np.int64)
        return z, z, np.zeros((0, 1), dtype=bool)

    gx0, gy0 = ax / res, ay / res
    gx1, gy1 = bx / res, by / res
    i0, j0 = np.floor(gx0), np.floor(gy0)
    i1, j1 = np.floor(gx1), np.floor(gy1)
    nx = np.abs(i1 - i0).astype(np.int64)
    ny = np.abs(j1 - j0).astype(np.int64)
    mx, my = int(nx.max(initial=0)), int(ny.max(initial=0))

    dx, dy = gx1 - gx0, gy1 - gy0
    with np.errstate(divide="ignore", invalid="ignore"):
        # parameters where the segment crosses vertical grid lines
        step = np.arange(1, mx + 1)[None, :]
        sx = np.sign(dx)[:, None]
        xline = np.where(sx > 0, i0[:, None] + step, i0[:, None] + 1 - step)
        tx = (xline - gx0[:, None]) / dx[:, None]
        tx = np.where(step <= nx[:, None], tx, np.inf)
        step = np.arange(1, my + 1)[None, :]
        sy = np.sign(dy)[:, None]
        yline = np.where(sy > 0, j0[:, None] + step, j0[:, None] + 1 - step)
        ty = (yline - gy0[:, None]) / dy[:, None]
        ty = np.where(step <= ny[:, None], ty, np.inf)

    t = np.concatenate([np.zeros((k, 1)), tx, ty, np.ones((k, 1))], axis=1)
    t = np.sort(t, axis=1)
    t = np.where(np.isfinite(t), t, 1.0)
    lo, hi = t[:, :-1], t[:, 1:]
    mid = 0.5 * (lo + hi)
    ci = np.floor(gx0[:, None] + mid * dx[:, None]).astype(np.int64)
    cj = np.floor(gy0[:, None] + mid * dy[:, None]).astype(np.int64)
    valid = (hi - lo) > 1e-12

    # degenerate (zero-length) segments still occupy their own cell
    point = ~valid.any(axis=1)
    if point.any():
        valid[point, 0] = True
        ci[point, 0] = i0[point].astype(np.int64)
        cj[point, 0] = j0[point].astype(np.int64)
    return ci, cj, valid


def segments_blocked(ax, ay, bx, by, res: float, blocking: np.ndarray, owner=None, self_id=None,
                     skip_start: bool = False, skip_end: bool = False) -> np.ndarray:
    """True where a segment crosses a blocking cell.

    ``blocking`` is a boolean (W, H) array; cells outside it block. When
    ``owner`` and ``self_id`` are given, blocking cells whose owner equals
    the segment's ``self_id`` are ignored (an object does not occlude
    itself).
    """
    ci, cj, valid = traverse(ax, ay, bx, by, res)
    w, h = blocking.shape
    inside = (ci >= 0) & (ci < w) & (cj >= 0) & (cj < h)
    cic = np.clip(ci, 0, w - 1)
    cjc = np.clip(cj, 0, h - 1)
    blk = np.where(inside, blocking[cic, cjc], True)
    if owner is not None and self_id is not None:
        sid = np.broadcast_to(np.asarray(self_id), ci.shape[:1])[:, None]
        blk &= ~(inside & (owner[cic, cjc] == sid))
    if skip_start or skip_end:
        keep = valid.copy()
        rows = np.arange(valid.shape[0])
        if skip_start:
            keep[rows, np.argmax(valid, axis=1)] = False
        if skip_end:
            keep[rows, valid.shape[1] - 1 - np.argmax(valid[:, ::-1], axis=1)] = False
        valid = keep
    return (blk & valid).any(axis=1)


def angle_diff(a, b):
    """Signed smallest difference a - b in (-pi, pi]."""
    d = np.mod(np.asarray(a) - np.asarray(b) + np.pi, 2 * np.pi) - np.pi
    return np.where(d == -np.pi, np.pi, d)
