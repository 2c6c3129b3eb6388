"""Closed-track geometry: polyline centerline with arc-length lookup."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels


@dataclass
class TrackSpec:
    """Closed centerline (control points, implicitly wrapped) plus half width."""

    points: np.ndarray          # (N, 2), last point connects back to first
    half_width: float
    name: str = "track"
    # derived segment arrays, filled in __post_init__
    ax: np.ndarray = field(init=False, repr=False)
    ay: np.ndarray = field(init=False, repr=False)
    vx: np.ndarray = field(init=False, repr=False)
    vy: np.ndarray = field(init=False, repr=False)
    seg_len: np.ndarray = field(init=False, repr=False)
    cum_len: np.ndarray = field(init=False, repr=False)
    lap_length: float = field(init=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
            raise ValueError("centerline needs at least 3 planar points")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        self.points = pts
        nxt = np.roll(pts, -1, axis=0)
        d = nxt - pts
        lens = np.hypot(d[:, 0], d[:, 1])
        if np.any(lens <= 0):
            raise ValueError("degenerate (zero-length) centerline segment")
        self.ax = pts[:, 0].copy()
        self.ay = pts[:, 1].copy()
        self.vx = d[:, 0] / lens
        self.vy = d[:, 1] / lens
        self.seg_len = lens
        self.cum_len = np.concatenate([[0.0], np.cumsum(lens)[:-1]])
        self.lap_length = float(lens.sum())

    # -- geometry queries ---------------------------------------------------

    def project(self, px, py):
        """(arc, lateral) for query points; lateral positive right of axis."""
        px = np.atleast_1d(np.asarray(px, dtype=np.float64))
        py = np.atleast_1d(np.asarray(py, dtype=np.float64))
        return kernels.project_points(px, py, self.ax, self.ay,
                                      self.vx, self.vy, self.seg_len, self.cum_len)

    def pose_at(self, arc):
        """Centerline position and tangent direction at arc (wrapped)."""
        s = float(arc) % self.lap_length
        i = int(np.searchsorted(self.cum_len, s, side="right")) - 1
        t = s - self.cum_len[i]
        x = self.ax[i] + t * self.vx[i]
        y = self.ay[i] + t * self.vy[i]
        heading = float(np.arctan2(self.vy[i], self.vx[i]))
        return x, y, heading

    def direction_at(self, arc):
        s = float(arc) % self.lap_length
        i = int(np.searchsorted(self.cum_len, s, side="right")) - 1
        return float(np.arctan2(self.vy[i], self.vx[i]))

    def ray_distances(self, px, py, angles, max_range, step):
        return kernels.ray_distances(float(px), float(py),
                                     np.asarray(angles, dtype=np.float64),
                                     float(max_range), float(step),
                                     self.ax, self.ay, self.vx, self.vy,
                                     self.seg_len, self.cum_len, self.half_width)

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {"name": self.name, "half_width": self.half_width,
                "points": self.points.tolist()}

    @classmethod
    def from_json_dict(cls, d: dict) -> "TrackSpec":
        return cls(points=np.asarray(d["points"], dtype=np.float64),
                   half_width=float(d["half_width"]),
                   name=d.get("name", "track"))

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def load_json(cls, path) -> "TrackSpec":
        with open(path) as f:
            return cls.from_json_dict(json.load(f))


def oval_track(lap_length: float = 400.0, half_width: float = 6.0,
               straight_fraction: float = 0.5, points_per_arc: int = 64,
               name: str = "oval") -> TrackSpec:
    """Stadium oval: two straights joined by semicircular arcs, counterclockwise."""
    if not (0.0 < straight_fraction < 1.0):
        raise ValueError("straight_fraction must be in (0, 1)")
    straight = lap_length * straight_fraction / 2.0
    r = lap_length * (1.0 - straight_fraction) / (2.0 * np.pi)
    pts = [(0.0, 0.0), (straight, 0.0)]
    # right-end semicircle from bottom to top (CCW), center (straight, r)
    for a in np.linspace(-np.pi / 2, np.pi / 2, points_per_arc, endpoint=False)[1:]:
        pts.append((straight + r * np.cos(a), r + r * np.sin(a)))
    pts.append((straight, 2 * r))
    pts.append((0.0, 2 * r))
    # left-end semicircle from top to bottom, center (0, r)
    for a in np.linspace(np.pi / 2, 3 * np.pi / 2, points_per_arc, endpoint=False)[1:]:
        pts.append((r * np.cos(a), r + r * np.sin(a)))
    return TrackSpec(points=np.asarray(pts), half_width=half_width, name=name)


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w) if np.ndim(w) else (np.pi if w == -np.pi else float(w))
