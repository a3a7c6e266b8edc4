# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors ``_kernels_py`` function for function."""
import numpy as np
from libc.math cimport cos, sin, ceil, lround, INFINITY

cdef enum:
    FREE = -1
    WALL = -2


def conv_valid(const double[:, :, ::1] xp, const double[:, :, :, ::1] w):
    cdef Py_ssize_t cin = xp.shape[0], hp = xp.shape[1], wp = xp.shape[2]
    cdef Py_ssize_t cout = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    if w.shape[1] != cin:
        raise ValueError(f"channel mismatch: input {cin}, kernel {w.shape[1]}")
    cdef Py_ssize_t ho = hp - kh + 1, wo = wp - kw + 1
    out_arr = np.zeros((cout, ho, wo))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t o, x, y, c, i, j
    cdef double wv
    with nogil:
        # row-wise accumulation vectorizes over y; every output still receives
        # its terms in (c, i, j) order, matching the numpy twin bit for bit
        for o in range(cout):
            for c in range(cin):
                for i in range(kh):
                    for j in range(kw):
                        wv = w[o, c, i, j]
                        for x in range(ho):
                            for y in range(wo):
                                out[o, x, y] = out[o, x, y] + xp[c, x + i, y + j] * wv
    return out_arr


def conv_valid_grad_input(const double[:, :, ::1] dout, const double[:, :, :, ::1] w):
    cdef Py_ssize_t cout = dout.shape[0], ho = dout.shape[1], wo = dout.shape[2]
    cdef Py_ssize_t cin = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    dxp_arr = np.zeros((cin, ho + kh - 1, wo + kw - 1))
    cdef double[:, :, ::1] dxp = dxp_arr
    cdef Py_ssize_t o, x, y, c, i, j
    cdef double wv
    with nogil:
        for o in range(cout):
            for c in range(cin):
                for i in range(kh):
                    for j in range(kw):
                        wv = w[o, c, i, j]
                        if wv == 0.0:
                            continue
                        for x in range(ho):
                            for y in range(wo):
                                dxp[c, x + i, y + j] += dout[o, x, y] * wv
    return dxp_arr


def conv_valid_grad_weight(const double[:, :, ::1] xp, const double[:, :, ::1] dout,
                           Py_ssize_t kh, Py_ssize_t kw):
    cdef Py_ssize_t cout = dout.shape[0], ho = dout.shape[1], wo = dout.shape[2]
    cdef Py_ssize_t cin = xp.shape[0]
    dw_arr = np.zeros((cout, cin, kh, kw))
    row_arr = np.empty(wo)
    cdef double[:, :, :, ::1] dw = dw_arr
    cdef double[::1] row = row_arr
    cdef Py_ssize_t o, x, y, c, i, j
    cdef double acc
    with nogil:
        for o in range(cout):
            for c in range(cin):
                for i in range(kh):
                    for j in range(kw):
                        # one partial sum per column keeps the inner loop independent
                        for y in range(wo):
                            row[y] = 0.0
                        for x in range(ho):
                            for y in range(wo):
                                row[y] = row[y] + dout[o, x, y] * xp[c, x + i, y + j]
                        acc = 0.0
                        for y in range(wo):
                            acc = acc + row[y]
                        dw[o, c, i, j] = acc
    return dw_arr


def trace_rays(const long long[:, ::1] ids, double ox, double oy,
               const double[::1] angles, double max_range):
    cdef Py_ssize_t H = ids.shape[0], W = ids.shape[1], n = angles.shape[0]
    cdef Py_ssize_t cap = <Py_ssize_t>(2 * ceil(max_range)) + 4
    cells_arr = np.zeros((n, cap, 2), dtype=np.int64)
    t_in_arr = np.zeros((n, cap))
    t_out_arr = np.zeros((n, cap))
    count_arr = np.zeros(n, dtype=np.int64)
    cdef long long[:, :, ::1] cells = cells_arr
    cdef double[:, ::1] t_in = t_in_arr
    cdef double[:, ::1] t_out = t_out_arr
    cdef long long[::1] count = count_arr
    cdef Py_ssize_t k, m, cx, cy, step_x, step_y
    cdef Py_ssize_t cx0 = lround(ox), cy0 = lround(oy)
    cdef double dx, dy, tmax_x, tmax_y, tdelta_x, tdelta_y, t_enter
    cdef long long cid
    with nogil:
        for k in range(n):
            dx = cos(angles[k])
            dy = sin(angles[k])
            cx = cx0
            cy = cy0
            if dx > 0:
                step_x = 1
                tmax_x = (cx + 0.5 - ox) / dx
                tdelta_x = 1.0 / dx
            elif dx < 0:
                step_x = -1
                tmax_x = (ox - (cx - 0.5)) / -dx
                tdelta_x = -1.0 / dx
            else:
                step_x = 0
                tmax_x = INFINITY
                tdelta_x = INFINITY
            if dy > 0:
                step_y = 1
                tmax_y = (cy + 0.5 - oy) / dy
                tdelta_y = 1.0 / dy
            elif dy < 0:
                step_y = -1
                tmax_y = (oy - (cy - 0.5)) / -dy
                tdelta_y = -1.0 / dy
            else:
                step_y = 0
                tmax_y = INFINITY
                tdelta_y = INFINITY
            m = 0
            while True:
                if tmax_x < tmax_y:
                    t_enter = tmax_x
                    cx += step_x
                    tmax_x += tdelta_x
                elif tmax_y < tmax_x:
                    t_enter = tmax_y
                    cy += step_y
                    tmax_y += tdelta_y
                else:
                    t_enter = tmax_x
                    cx += step_x
                    cy += step_y
                    tmax_x += tdelta_x
                    tmax_y += tdelta_y
                if t_enter > max_range or cx < 0 or cx >= H or cy < 0 or cy >= W:
                    break
                cid = ids[cx, cy]
                if cid != FREE:
                    if m < cap:
                        cells[k, m, 0] = cx
                        cells[k, m, 1] = cy
                        t_in[k, m] = t_enter
                        t_out[k, m] = tmax_x if tmax_x < tmax_y else tmax_y
                        m += 1
                    if cid == WALL:
                        break
            count[k] = m
    return cells_arr, t_in_arr, t_out_arr, count_arr
