# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: triangle fill, Monte Carlo box-pair counting and
fused ray clipping.

Keep every floating-point expression textually in step with the numpy
fallback (_core_py); the build disables FP contraction so both backends
produce bit-identical results.
"""

from libc.math cimport ceil, floor, INFINITY

import numpy as np

BACKEND_NAME = "compiled"


cdef inline bint _top_left(double dx, double dy) nogil:
    return (dy == 0.0 and dx > 0.0) or dy < 0.0


def fill_triangles(double[:, :, ::1] xy, double[:, ::1] z, int width, int height,
                   depth=None):
    """See _core_py.fill_triangles; identical contract and arithmetic."""
    if depth is None:
        depth = np.full((height, width), np.inf)
    cdef double[:, ::1] buf = depth
    cdef Py_ssize_t t, i, j, ix0, ix1, iy0, iy1
    cdef double x0, y0, x1, y1, x2, y2, z0, z1, z2, tmp
    cdef double area2, xmin, xmax, ymin, ymax, bx0, bx1, by0, by1
    cdef double px, py, e0, e1, e2, iz0, iz1, iz2, zinv, zpix
    cdef bint tl0, tl1, tl2

    with nogil:
        for t in range(xy.shape[0]):
            x0 = xy[t, 0, 0]; y0 = xy[t, 0, 1]
            x1 = xy[t, 1, 0]; y1 = xy[t, 1, 1]
            x2 = xy[t, 2, 0]; y2 = xy[t, 2, 1]
            z0 = z[t, 0]; z1 = z[t, 1]; z2 = z[t, 2]

            area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
            if area2 == 0.0:
                continue
            if area2 < 0.0:
                tmp = x1; x1 = x2; x2 = tmp
                tmp = y1; y1 = y2; y2 = tmp
                tmp = z1; z1 = z2; z2 = tmp
                area2 = -area2

            xmin = min(x0, min(x1, x2)); xmax = max(x0, max(x1, x2))
            ymin = min(y0, min(y1, y2)); ymax = max(y0, max(y1, y2))
            # Clamp in double space before the integer cast; projected
            # coordinates can exceed the Py_ssize_t range for tiny z.
            bx0 = ceil(xmin - 0.5); bx1 = floor(xmax - 0.5)
            by0 = ceil(ymin - 0.5); by1 = floor(ymax - 0.5)
            if bx0 < 0.0: bx0 = 0.0
            if by0 < 0.0: by0 = 0.0
            if bx1 > width - 1.0: bx1 = width - 1.0
            if by1 > height - 1.0: by1 = height - 1.0
            if bx0 > bx1 or by0 > by1:
                continue
            ix0 = <Py_ssize_t>bx0; ix1 = <Py_ssize_t>bx1
            iy0 = <Py_ssize_t>by0; iy1 = <Py_ssize_t>by1

            tl0 = _top_left(x2 - x1, y2 - y1)
            tl1 = _top_left(x0 - x2, y0 - y2)
            tl2 = _top_left(x1 - x0, y1 - y0)
            iz0 = 1.0 / z0; iz1 = 1.0 / z1; iz2 = 1.0 / z2

            for j in range(iy0, iy1 + 1):
                py = j + 0.5
                for i in range(ix0, ix1 + 1):
                    px = i + 0.5
                    e0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
                    if not (e0 > 0.0 or (e0 == 0.0 and tl0)):
                        continue
                    e1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
                    if not (e1 > 0.0 or (e1 == 0.0 and tl1)):
                        continue
                    e2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
                    if not (e2 > 0.0 or (e2 == 0.0 and tl2)):
                        continue
                    zinv = (e0 / area2) * iz0 + (e1 / area2) * iz1 + (e2 / area2) * iz2
                    zpix = 1.0 / zinv
                    if zpix < buf[j, i]:
                        buf[j, i] = zpix
    return depth


def count_box_pair(double[:, ::1] unit, double[:] lo, double[:] scale,
                   double[:, ::1] rot_a, double[:] off_a, double[:] half_a,
                   double[:, ::1] rot_b, double[:] off_b, double[:] half_b):
    """See _core_py.count_box_pair; identical contract."""
    cdef Py_ssize_t i, j, n = unit.shape[0]
    cdef long n_a = 0, n_b = 0, n_both = 0
    cdef bint in_a, in_b
    cdef double p0, p1, p2, v
    with nogil:
        for i in range(n):
            p0 = lo[0] + unit[i, 0] * scale[0]
            p1 = lo[1] + unit[i, 1] * scale[1]
            p2 = lo[2] + unit[i, 2] * scale[2]
            in_a = True
            for j in range(3):
                v = p0 * rot_a[0, j] + p1 * rot_a[1, j] + p2 * rot_a[2, j] - off_a[j]
                if v < 0.0:
                    v = -v
                if v > half_a[j]:
                    in_a = False
                    break
            in_b = True
            for j in range(3):
                v = p0 * rot_b[0, j] + p1 * rot_b[1, j] + p2 * rot_b[2, j] - off_b[j]
                if v < 0.0:
                    v = -v
                if v > half_b[j]:
                    in_b = False
                    break
            if in_a:
                n_a += 1
            if in_b:
                n_b += 1
            if in_a and in_b:
                n_both += 1
    return n_a, n_b, n_both


def clip_cut_rays(double[:, ::1] dirs, double t_lo, double[:] t_hi,
                  double[:, ::1] rotation, double[:] center, double[:] half):
    """See _core_py.clip_cut_rays; identical contract."""
    cdef Py_ssize_t i, a, n = dirs.shape[0]
    cdef long n_hit = 0
    cdef double off0, off1, off2, h0, h1, h2
    cdef double d0, d1, d2, ld0, ld1, ld2, t0, t1, ta, tb, tmp, v
    cdef double lo0, lo1, lo2, hi0, hi1, hi2
    cdef double e0, e1, e2
    cdef bint miss

    off0 = center[0] * rotation[0, 0] + center[1] * rotation[1, 0] + center[2] * rotation[2, 0]
    off1 = center[0] * rotation[0, 1] + center[1] * rotation[1, 1] + center[2] * rotation[2, 1]
    off2 = center[0] * rotation[0, 2] + center[1] * rotation[1, 2] + center[2] * rotation[2, 2]
    h0 = half[0]; h1 = half[1]; h2 = half[2]
    lo0 = lo1 = lo2 = INFINITY
    hi0 = hi1 = hi2 = -INFINITY

    with nogil:
        for i in range(n):
            d0 = dirs[i, 0]; d1 = dirs[i, 1]; d2 = dirs[i, 2]
            ld0 = d0 * rotation[0, 0] + d1 * rotation[1, 0] + d2 * rotation[2, 0]
            ld1 = d0 * rotation[0, 1] + d1 * rotation[1, 1] + d2 * rotation[2, 1]
            ld2 = d0 * rotation[0, 2] + d1 * rotation[1, 2] + d2 * rotation[2, 2]
            t0 = t_lo; t1 = t_hi[i]
            miss = False

            if ld0 > 1e-15 or ld0 < -1e-15:
                ta = (-h0 + off0) / ld0; tb = (h0 + off0) / ld0
                if ta > tb: tmp = ta; ta = tb; tb = tmp
                if ta > t0: t0 = ta
                if tb < t1: t1 = tb
            elif off0 > h0 or off0 < -h0:
                miss = True
            if not miss and (ld1 > 1e-15 or ld1 < -1e-15):
                ta = (-h1 + off1) / ld1; tb = (h1 + off1) / ld1
                if ta > tb: tmp = ta; ta = tb; tb = tmp
                if ta > t0: t0 = ta
                if tb < t1: t1 = tb
            elif not miss and (off1 > h1 or off1 < -h1):
                miss = True
            if not miss and (ld2 > 1e-15 or ld2 < -1e-15):
                ta = (-h2 + off2) / ld2; tb = (h2 + off2) / ld2
                if ta > tb: tmp = ta; ta = tb; tb = tmp
                if ta > t0: t0 = ta
                if tb < t1: t1 = tb
            elif not miss and (off2 > h2 or off2 < -h2):
                miss = True

            if miss or t0 > t1:
                continue
            n_hit += 1
            e0 = t0 * ld0 - off0; e1 = t0 * ld1 - off1; e2 = t0 * ld2 - off2
            if e0 < lo0: lo0 = e0
            if e0 > hi0: hi0 = e0
            if e1 < lo1: lo1 = e1
            if e1 > hi1: hi1 = e1
            if e2 < lo2: lo2 = e2
            if e2 > hi2: hi2 = e2
            e0 = t1 * ld0 - off0; e1 = t1 * ld1 - off1; e2 = t1 * ld2 - off2
            if e0 < lo0: lo0 = e0
            if e0 > hi0: hi0 = e0
            if e1 < lo1: lo1 = e1
            if e1 > hi1: hi1 = e1
            if e2 < lo2: lo2 = e2
            if e2 > hi2: hi2 = e2

    if n_hit == 0:
        return 0, None, None
    return n_hit, np.array([lo0, lo1, lo2]), np.array([hi0, hi1, hi2])
