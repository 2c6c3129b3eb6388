"""Hot geometry kernels: polyline projection and range-sensor ray marching.

These dominate simulator runtime, so they are compiled with numba when
available.  Set LEPUS_NUMBA=0 to force the pure-numpy fallback (used by the
benchmark in benchmarks/bench_kernels.py and as a safety hatch).  Both paths
implement identical arithmetic.

Track geometry is a closed polyline given as per-segment start points
(ax, ay), unit-length direction components implied by (vx, vy, seg_len),
and cumulative arc length cum_len (cum_len[i] = arc at start of segment i).
Lateral offsets are signed positive to the RIGHT of the travel direction.
"""

from __future__ import annotations

import os

import numpy as np

_env = os.environ.get("LEPUS_NUMBA", "1").strip().lower()
_want_numba = _env not in ("0", "false", "off", "no")

NUMBA_ENABLED = False
if _want_numba:
    try:
        from numba import njit
        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False

if not NUMBA_ENABLED:
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# numba / scalar-loop implementations


@njit(cache=True)
def _project_points_loop(px, py, ax, ay, vx, vy, seg_len, cum_len):
    n = px.shape[0]
    nseg = ax.shape[0]
    arc = np.empty(n)
    lat = np.empty(n)
    for q in range(n):
        best_d2 = 1e300
        best_arc = 0.0
        best_lat = 0.0
        for i in range(nseg):
            dx = px[q] - ax[i]
            dy = py[q] - ay[i]
            t = dx * vx[i] + dy * vy[i]
            if t < 0.0:
                t = 0.0
            elif t > seg_len[i]:
                t = seg_len[i]
            cx = ax[i] + t * vx[i]
            cy = ay[i] + t * vy[i]
            ex = px[q] - cx
            ey = py[q] - cy
            d2 = ex * ex + ey * ey
            if d2 < best_d2:
                best_d2 = d2
                best_arc = cum_len[i] + t
                # right-of-direction normal is (vy, -vx)
                best_lat = ex * vy[i] - ey * vx[i]
        arc[q] = best_arc
        lat[q] = best_lat
    return arc, lat


@njit(cache=True)
def _ray_distances_loop(px, py, angles, max_range, step,
                        ax, ay, vx, vy, seg_len, cum_len, half_width):
    k = angles.shape[0]
    nseg = ax.shape[0]
    n_samples = int(np.floor(max_range / step))
    out = np.full(k, max_range)
    for r in range(k):
        ca = np.cos(angles[r])
        sa = np.sin(angles[r])
        for s in range(1, n_samples + 1):
            d = step * s
            qx = px + d * ca
            qy = py + d * sa
            best_d2 = 1e300
            best_lat = 0.0
            for i in range(nseg):
                dx = qx - ax[i]
                dy = qy - ay[i]
                t = dx * vx[i] + dy * vy[i]
                if t < 0.0:
                    t = 0.0
                elif t > seg_len[i]:
                    t = seg_len[i]
                ex = dx - t * vx[i]
                ey = dy - t * vy[i]
                d2 = ex * ex + ey * ey
                if d2 < best_d2:
                    best_d2 = d2
                    best_lat = ex * vy[i] - ey * vx[i]
            if best_lat > half_width or best_lat < -half_width:
                out[r] = d
                break
    return out


# ---------------------------------------------------------------------------
# vectorized numpy fallback


def _project_points_numpy(px, py, ax, ay, vx, vy, seg_len, cum_len):
    dx = px[:, None] - ax[None, :]
    dy = py[:, None] - ay[None, :]
    t = np.clip(dx * vx[None, :] + dy * vy[None, :], 0.0, seg_len[None, :])
    ex = dx - t * vx[None, :]
    ey = dy - t * vy[None, :]
    d2 = ex * ex + ey * ey
    best = np.argmin(d2, axis=1)
    rows = np.arange(px.shape[0])
    arc = cum_len[best] + t[rows, best]
    lat = ex[rows, best] * vy[best] - ey[rows, best] * vx[best]
    return arc, lat


def _ray_distances_numpy(px, py, angles, max_range, step,
                         ax, ay, vx, vy, seg_len, cum_len, half_width):
    n_samples = int(np.floor(max_range / step))
    dists = step * np.arange(1, n_samples + 1)
    ca, sa = np.cos(angles), np.sin(angles)
    qx = (px + dists[None, :] * ca[:, None]).ravel()
    qy = (py + dists[None, :] * sa[:, None]).ravel()
    _, lat = _project_points_numpy(qx, qy, ax, ay, vx, vy, seg_len, cum_len)
    off = (np.abs(lat) > half_width).reshape(len(angles), n_samples)
    out = np.full(len(angles), max_range)
    hit_any = off.any(axis=1)
    first = np.argmax(off, axis=1)
    out[hit_any] = dists[first[hit_any]]
    return out


# ---------------------------------------------------------------------------
# public dispatch


def project_points(px, py, ax, ay, vx, vy, seg_len, cum_len):
    """Nearest-point projection of (px, py) onto a closed polyline.

    Returns (arc, lat): arc position along the polyline and signed lateral
    offset (positive right of the travel direction).
    """
    if NUMBA_ENABLED:
        return _project_points_loop(px, py, ax, ay, vx, vy, seg_len, cum_len)
    return _project_points_numpy(px, py, ax, ay, vx, vy, seg_len, cum_len)


def ray_distances(px, py, angles, max_range, step,
                  ax, ay, vx, vy, seg_len, cum_len, half_width):
    """Marched distance along each ray until the track edge, capped at max_range."""
    if NUMBA_ENABLED:
        return _ray_distances_loop(px, py, angles, max_range, step,
                                   ax, ay, vx, vy, seg_len, cum_len, half_width)
    return _ray_distances_numpy(px, py, angles, max_range, step,
                                ax, ay, vx, vy, seg_len, cum_len, half_width)
