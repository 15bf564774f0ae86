"""Compare the compiled and pure-Python kernel backends.

Times the three hot kernels on representative workloads, then measures
end-to-end ground-truth throughput (50 boxes/frame at 320x240) per backend
by re-running itself in a subprocess with CUBEGT_BACKEND forced.

Usage: python benchmarks/bench_backends.py
"""

import os
import subprocess
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), os.pardir, "tests"))


def perf_scene():
    from conftest import make_camera, random_rotation
    from cubegt.decode import DepthMap
    from cubegt.geometry import Box3D
    from cubegt.pipeline import PipelineParams, SceneAnnotations

    rng = np.random.default_rng(3)
    camera = make_camera(fx=250.0, fy=250.0, cx=160.0, cy=120.0, width=320,
                         height=240, gravity=np.eye(3), far=5.0)
    boxes = tuple(
        (
            f"b{i:02d}",
            Box3D(
                np.array([rng.uniform(-1.5, 1.5), rng.uniform(-1.1, 1.1),
                          rng.uniform(1.2, 4.2)]),
                rng.uniform(0.15, 0.6, 3),
                random_rotation(rng),
                frame="world",
            ),
        )
        for i in range(50)
    )
    ann = SceneAnnotations("bench", boxes)
    depth = DepthMap(np.full((120, 160), camera.far))
    return ann, camera, depth, PipelineParams()


def bench(fn, repeats=20):
    fn()  # warm up
    started = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - started) / repeats


def kernel_benchmarks():
    from conftest import random_rotation
    from cubegt._kernels import available_backends

    backends = available_backends()
    rng = np.random.default_rng(0)

    # Small triangles comparable to a subdivided box face on screen.
    anchors = rng.uniform(0, 320, (768, 1, 2)) * np.array([1.0, 0.75])
    tri_uv = np.ascontiguousarray(anchors + rng.uniform(-6, 6, (768, 3, 2)))
    tri_z = np.ascontiguousarray(rng.uniform(0.5, 5.0, (768, 1)) * np.ones((768, 3)))

    dirs = np.ascontiguousarray(
        np.column_stack([rng.uniform(-0.6, 0.6, 5000), rng.uniform(-0.45, 0.45, 5000),
                         np.ones(5000)])
    )
    t_hi = rng.uniform(2.0, 6.0, 5000)
    rot = random_rotation(rng)
    center = np.array([0.1, -0.05, 2.4])
    half = np.array([0.3, 0.25, 0.2])

    unit = rng.random((1_000_000, 3))
    lo = np.array([-1.0, -1.0, -1.0])
    scale = np.array([2.0, 2.5, 2.2])
    off = center @ rot

    print(f"{'kernel':<28}" + "".join(f"{name:>14}" for name in backends))
    rows = [
        ("fill_triangles 768 tris",
         lambda impl: impl.fill_triangles(tri_uv, tri_z, 320, 240)),
        ("clip_cut_rays 5k rays",
         lambda impl: impl.clip_cut_rays(dirs, 0.1, t_hi, rot, center, half)),
        ("count_box_pair 1M samples",
         lambda impl: impl.count_box_pair(unit, lo, scale, rot, off, half, rot, off, half)),
    ]
    for label, runner in rows:
        cells = []
        for impl in backends.values():
            dt = bench(lambda: runner(impl), repeats=10)
            cells.append(f"{dt * 1e3:>11.2f} ms")
        print(f"{label:<28}" + "".join(cells))
    return list(backends)


def end_to_end():
    from cubegt._kernels import BACKEND_NAME
    from cubegt.pipeline import render_frame_gt

    ann, camera, depth, params = perf_scene()
    dt = bench(lambda: render_frame_gt(ann, camera, depth, params, "bench"), repeats=20)
    print(f"render_frame_gt [{BACKEND_NAME:>8}]: {dt * 1e3:7.1f} ms/frame "
          f"({1.0 / dt:5.1f} frames/s, 50 boxes, 320x240)")


def main():
    if os.environ.get("CUBEGT_BACKEND"):
        end_to_end()
        return
    names = kernel_benchmarks()
    print(flush=True)
    for name in names:
        env = dict(os.environ, CUBEGT_BACKEND=name)
        subprocess.run([sys.executable, os.path.abspath(__file__)], env=env, check=True)


if __name__ == "__main__":
    main()
