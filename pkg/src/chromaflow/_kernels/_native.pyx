# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_numpy_impl.py``.

Same contracts, same tie-breaking; see the numpy module for full
docstrings.
"""

import numpy as np

cimport numpy as cnp

BACKEND = "native"


def block_search(double[:, :] ref, double[:, :] mov,
                 long[:, :] base_u, long[:, :] base_v,
                 long[:, :] offsets, long block,
                 long[:] grid_y, long[:] grid_x):
    cdef Py_ssize_t h = ref.shape[0]
    cdef Py_ssize_t w = ref.shape[1]
    cdef Py_ssize_t nby = grid_y.shape[0]
    cdef Py_ssize_t nbx = grid_x.shape[0]
    cdef Py_ssize_t n_cand = offsets.shape[0]

    out_u = np.zeros((nby, nbx), dtype=np.int64)
    out_v = np.zeros((nby, nbx), dtype=np.int64)
    cdef long[:, :] ou = out_u
    cdef long[:, :] ov = out_v

    cdef Py_ssize_t bi, bj, k, py, px, ry, rx
    cdef long y0, x0, u, v, mag
    cdef long best_u, best_v, best_mag
    cdef double sad, best_sad
    cdef bint better

    for bi in range(nby):
        y0 = grid_y[bi]
        for bj in range(nbx):
            x0 = grid_x[bj]
            best_sad = -1.0
            best_mag = 0
            best_u = 0
            best_v = 0
            for k in range(n_cand):
                u = base_u[bi, bj] + offsets[k, 0]
                v = base_v[bi, bj] + offsets[k, 1]
                sad = 0.0
                for py in range(block):
                    ry = y0 + py + v
                    if ry < 0:
                        ry = 0
                    elif ry > h - 1:
                        ry = h - 1
                    for px in range(block):
                        rx = x0 + px + u
                        if rx < 0:
                            rx = 0
                        elif rx > w - 1:
                            rx = w - 1
                        sad += abs(ref[y0 + py, x0 + px] - mov[ry, rx])
                mag = u * u + v * v
                if best_sad < 0.0:
                    better = True
                elif sad < best_sad:
                    better = True
                elif sad == best_sad:
                    if mag < best_mag:
                        better = True
                    elif mag == best_mag and (u < best_u or (u == best_u and v < best_v)):
                        better = True
                    else:
                        better = False
                else:
                    better = False
                if better:
                    best_sad = sad
                    best_mag = mag
                    best_u = u
                    best_v = v
            ou[bi, bj] = best_u
            ov[bi, bj] = best_v
    return out_u, out_v


def splat_hist(double[:, :] gray, double[:, :] a, double[:, :] b,
               long cells, long l_bins, long a_bins, long b_bins):
    cdef Py_ssize_t h = gray.shape[0]
    cdef Py_ssize_t w = gray.shape[1]
    cdef long ab_bins = a_bins * b_bins

    grid = np.zeros((cells, cells, l_bins, ab_bins))
    cdef double[:, :, :, :] g = grid

    cdef Py_ssize_t y, x
    cdef double cx, cy, lz, wx1, wy1, wl1, wgt
    cdef long x0, y0, k0, ia, ib, iab, dx, dy, dk, gx, gy, gk

    for y in range(h):
        for x in range(w):
            cx = (x + 0.5) / w * cells - 0.5
            cy = (y + 0.5) / h * cells - 0.5
            lz = gray[y, x] * l_bins - 0.5
            x0 = <long>(cx // 1.0)
            y0 = <long>(cy // 1.0)
            k0 = <long>(lz // 1.0)
            wx1 = cx - x0
            wy1 = cy - y0
            wl1 = lz - k0

            ia = <long>(((a[y, x] + 1.0) * 0.5 * a_bins) // 1.0)
            if ia < 0:
                ia = 0
            elif ia > a_bins - 1:
                ia = a_bins - 1
            ib = <long>(((b[y, x] + 1.0) * 0.5 * b_bins) // 1.0)
            if ib < 0:
                ib = 0
            elif ib > b_bins - 1:
                ib = b_bins - 1
            iab = ia * b_bins + ib

            for dx in range(2):
                gx = x0 + dx
                if gx < 0:
                    gx = 0
                elif gx > cells - 1:
                    gx = cells - 1
                for dy in range(2):
                    gy = y0 + dy
                    if gy < 0:
                        gy = 0
                    elif gy > cells - 1:
                        gy = cells - 1
                    for dk in range(2):
                        gk = k0 + dk
                        if gk < 0:
                            gk = 0
                        elif gk > l_bins - 1:
                            gk = l_bins - 1
                        wgt = (wx1 if dx else 1.0 - wx1) \
                            * (wy1 if dy else 1.0 - wy1) \
                            * (wl1 if dk else 1.0 - wl1)
                        g[gy, gx, gk, iab] += wgt
    return grid
