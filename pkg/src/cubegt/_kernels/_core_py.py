"""Numpy fallback for the hot kernels (triangle fill, Monte Carlo box-pair
counting, fused ray clipping).

Every kernel mirrors its compiled twin expression for expression; both
paths keep identical operation order in double precision so either backend
produces bit-identical results (the extension is compiled with FP
contraction off for the same reason). Rotations are therefore applied with
explicitly ordered elementwise arithmetic, never BLAS, whose summation
order is unspecified.
"""

import numpy as np

BACKEND_NAME = "python"

MC_CHUNK = 131072  # keep per-chunk temporaries inside the L2/L3 caches


def _rotate_rows(points, rotation):
    """points @ rotation with the compiled kernels' exact summation order."""
    out = np.empty_like(points)
    for j in range(3):
        out[:, j] = (
            points[:, 0] * rotation[0, j]
            + points[:, 1] * rotation[1, j]
            + points[:, 2] * rotation[2, j]
        )
    return out


def _rotate_vec(v, rotation):
    return np.array(
        [
            v[0] * rotation[0, j] + v[1] * rotation[1, j] + v[2] * rotation[2, j]
            for j in range(3)
        ]
    )


def _top_left(dx, dy):
    # Edge of a positively wound triangle (y-down pixel space): a pixel
    # center exactly on the edge is covered only for top or left edges.
    return (dy == 0.0 and dx > 0.0) or dy < 0.0


def fill_triangles(xy, z, width, height, depth=None):
    """Rasterize triangles into a nearest-depth buffer.

    xy: (T, 3, 2) pixel-space vertices; z: (T, 3) camera-space depths (> 0).
    Coverage is a pixel-center test with the top-left fill rule; depth is
    perspective-correct (screen-linear 1/z). Returns the (height, width)
    float64 depth buffer, +inf where uncovered.
    """
    if depth is None:
        depth = np.full((height, width), np.inf)
    xs = np.arange(width) + 0.5
    ys = np.arange(height) + 0.5

    for t in range(len(xy)):
        x0, y0 = xy[t, 0, 0], xy[t, 0, 1]
        x1, y1 = xy[t, 1, 0], xy[t, 1, 1]
        x2, y2 = xy[t, 2, 0], xy[t, 2, 1]
        z0, z1, z2 = z[t, 0], z[t, 1], z[t, 2]

        area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area2 == 0.0:
            continue
        if area2 < 0.0:
            x1, y1, x2, y2 = x2, y2, x1, y1
            z1, z2 = z2, z1
            area2 = -area2

        ix0 = max(int(np.ceil(min(x0, x1, x2) - 0.5)), 0)
        ix1 = min(int(np.floor(max(x0, x1, x2) - 0.5)), width - 1)
        iy0 = max(int(np.ceil(min(y0, y1, y2) - 0.5)), 0)
        iy1 = min(int(np.floor(max(y0, y1, y2) - 0.5)), height - 1)
        if ix0 > ix1 or iy0 > iy1:
            continue

        tl0 = _top_left(x2 - x1, y2 - y1)
        tl1 = _top_left(x0 - x2, y0 - y2)
        tl2 = _top_left(x1 - x0, y1 - y0)

        px = xs[ix0 : ix1 + 1][None, :]
        py = ys[iy0 : iy1 + 1][:, None]
        e0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        e1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
        e2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
        covered = (
            ((e0 > 0.0) | ((e0 == 0.0) & tl0))
            & ((e1 > 0.0) | ((e1 == 0.0) & tl1))
            & ((e2 > 0.0) | ((e2 == 0.0) & tl2))
        )
        if not covered.any():
            continue

        iz0, iz1, iz2 = 1.0 / z0, 1.0 / z1, 1.0 / z2
        zinv = (e0 / area2) * iz0 + (e1 / area2) * iz1 + (e2 / area2) * iz2
        with np.errstate(divide="ignore"):
            zpix = 1.0 / zinv

        window = depth[iy0 : iy1 + 1, ix0 : ix1 + 1]
        better = covered & (zpix < window)
        window[better] = zpix[better]
    return depth


def count_box_pair(unit, lo, scale, rot_a, off_a, half_a, rot_b, off_b, half_b):
    """Count samples inside box A, box B, and both.

    Samples are ``lo + unit * scale`` (the affine is folded in so callers can
    pass raw uniform draws). Membership of p is tested as
    |p @ rot - off| <= half per axis, where off = center @ rot.
    Returns (n_a, n_b, n_both).
    """
    n_a = n_b = n_both = 0
    for start in range(0, len(unit), MC_CHUNK):
        chunk = lo + unit[start : start + MC_CHUNK] * scale
        loc = _rotate_rows(chunk, rot_a)
        loc -= off_a
        np.abs(loc, out=loc)
        in_a = (loc <= half_a).all(axis=1)
        loc = _rotate_rows(chunk, rot_b)
        loc -= off_b
        np.abs(loc, out=loc)
        in_b = (loc <= half_b).all(axis=1)
        n_a += int(np.count_nonzero(in_a))
        n_b += int(np.count_nonzero(in_b))
        n_both += int(np.count_nonzero(in_a & in_b))
    return n_a, n_b, n_both


def clip_cut_rays(dirs, t_lo, t_hi, rotation, center, half):
    """Clip origin-anchored depth-parameterized rays to an oriented box and
    reduce the surviving segment endpoints to their box-local extents.

    dirs is (N, 3); each ray i is pre-clipped to [t_lo, t_hi[i]]. Returns
    (n_hit, lo (3,), hi (3,)) where lo/hi bound the endpoint coordinates in
    the box frame; lo/hi are None when nothing hits.
    """
    local_d = _rotate_rows(dirs, rotation)
    off = _rotate_vec(center, rotation)
    t0 = np.full(len(dirs), t_lo)
    t1 = np.asarray(t_hi, dtype=np.float64).copy()
    for axis in range(3):
        d = local_d[:, axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (-half[axis] + off[axis]) / d
            tb = (half[axis] + off[axis]) / d
        lo_t = np.minimum(ta, tb)
        hi_t = np.maximum(ta, tb)
        parallel = np.abs(d) <= 1e-15
        inside = np.abs(off[axis]) <= half[axis]
        lo_t = np.where(parallel, np.where(inside, -np.inf, np.inf), lo_t)
        hi_t = np.where(parallel, np.where(inside, np.inf, -np.inf), hi_t)
        t0 = np.maximum(t0, lo_t)
        t1 = np.minimum(t1, hi_t)
    hit = t0 <= t1
    n_hit = int(np.count_nonzero(hit))
    if n_hit == 0:
        return 0, None, None
    ld = local_d[hit]
    ends = np.empty((2 * n_hit, 3))
    np.multiply(ld, t0[hit, None], out=ends[:n_hit])
    np.multiply(ld, t1[hit, None], out=ends[n_hit:])
    ends -= off
    return n_hit, ends.min(axis=0), ends.max(axis=0)
