"""Timing comparison of the geometry kernels' numba and numpy backends.

Run both backends (the flag is read at import time, so two processes):

    LEPUS_NUMBA=1 python benchmarks/bench_kernels.py
    LEPUS_NUMBA=0 python benchmarks/bench_kernels.py

Workloads mirror simulator usage: projecting a handful of car positions per
tick, and marching the 19-ray range sensor per car per tick.
"""

import time

import numpy as np

from lepus import kernels
from lepus.track import oval_track


def bench(fn, *args, repeat=200, warmup=3):
    for _ in range(warmup):
        fn(*args)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def main():
    track = oval_track(lap_length=400.0, half_width=6.0)
    geo = (track.ax, track.ay, track.vx, track.vy, track.seg_len, track.cum_len)
    rng = np.random.default_rng(0)

    print(f"backend: {kernels.backend_name()}  "
          f"(set LEPUS_NUMBA=0/1 to switch; requires a fresh process)")
    print(f"track: {len(track.ax)} segments, lap {track.lap_length:.2f} m")
    print()

    for n_points in (4, 64, 1024):
        px = rng.uniform(-50, 250, n_points)
        py = rng.uniform(-20, 80, n_points)
        dt = bench(kernels.project_points, px, py, *geo)
        print(f"project_points  n={n_points:5d}: {dt * 1e6:10.1f} us/call")

    angles = np.linspace(-np.pi / 2, np.pi / 2, 19)
    for max_range in (50.0, 100.0):
        dt = bench(kernels.ray_distances, 100.0, 1.0, angles, max_range, 2.0,
                   *geo, track.half_width)
        print(f"ray_distances   19 rays, range {max_range:5.0f} m: "
              f"{dt * 1e6:10.1f} us/call")


if __name__ == "__main__":
    main()
